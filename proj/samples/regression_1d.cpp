// Fits a GP to noisy 1-D data with each covariance mode and compares the
// held-out error against the dense Cholesky reference.

#include <cstdio>

#include "bbmm/bbmm.hpp"

int main() {
  using namespace bbmm;
  const Dataset raw = synthetic_rbf_data(300, 0.2, 1.0, 0.01, 7);
  const Split split = train_test_split(raw, 0.8, 7);
  const Dataset train_set = standardize(split.train);
  const Standardization& rec = *train_set.standardization();
  const DenseMatrix x_test = apply_standardization(rec, split.test.x());
  const Vector y_test = standardize_targets(rec, split.test.y());

  TrainConfig cfg;
  cfg.iterations = 60;
  const auto init = Hyperparameters::from_natural(0.7, 0.7, 0.7);

  for (const Mode mode : {Mode::exact(), Mode::sor(120, 7), Mode::ski(200)}) {
    GpModel model(train_set, KernelKind::rbf, init, mode, cfg.precond_rank);
    Rng rng(7);
    const TrainReport report = train(model, cfg, rng);
    const PredictiveOutput pred = predict(model, x_test, cfg.cg);
    const Hyperparameters& hp = model.hyperparameters();
    std::printf("%-5s nll %8.3f -> %8.3f  lengthscale %.3f  noise %.4f  test MAE %.4f\n",
                std::string(to_string(mode.kind)).c_str(), report.nll_trace.front(),
                report.nll_trace.back(), hp.lengthscale(), hp.noise_variance(),
                mean_absolute_error(pred.mean, y_test));
  }

  GpModel reference(train_set, KernelKind::rbf, init);
  train_dense(reference, cfg);
  const DenseOracle oracle = dense_oracle(reference);
  std::printf("dense reference test MAE %.4f\n",
              mean_absolute_error(oracle.predict(x_test).mean, y_test));
  return 0;
}
