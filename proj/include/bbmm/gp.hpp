#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/inference.hpp"
#include "bbmm/kernels.hpp"
#include "bbmm/mbcg.hpp"
#include "bbmm/operators.hpp"
#include "bbmm/precond.hpp"

namespace bbmm {

struct AdamConfig {
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t iterations = 100;
  McbgConfig cg;
  std::size_t probes = 10;
  std::size_t precond_rank = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("train: Adam moments must lie in [0, 1)");
    }
    if (!(adam.epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be positive");
    if (probes < 1) throw ConfigError("train: need at least one probe vector");
    cg.validate();
  }
};

/// GP regression model. The operator bundle and preconditioner are rebuilt
/// every time the hyperparameters are written.
class GpModel {
 public:
  GpModel(Dataset data, KernelKind kind, Hyperparameters hp, Mode mode = Mode::exact(),
          std::size_t precond_rank = 5)
      : data_(std::move(data)), kind_(kind), hp_(hp), mode_(mode), rank_(precond_rank) {
    if (data_.n() == 0) throw DataError("GpModel: empty dataset");
    rebuild();
  }

  const Dataset& data() const noexcept { return data_; }
  KernelKind kernel() const noexcept { return kind_; }
  const Mode& mode() const noexcept { return mode_; }
  const Hyperparameters& hyperparameters() const noexcept { return hp_; }
  std::size_t precond_rank() const noexcept { return rank_; }

  void set_hyperparameters(const Hyperparameters& hp) {
    hp_ = hp;
    rebuild();
  }
  void set_precond_rank(std::size_t rank) {
    rank_ = rank;
    rebuild();
  }

  const SymmetricOperator& covariance() const { return *bundle_.covariance; }
  const OperatorBundle& operators() const noexcept { return bundle_; }
  const Preconditioner& preconditioner() const { return *precond_; }

 private:
  void rebuild() {
    for (double v : hp_.as_array()) {
      if (!std::isfinite(v)) throw NumericError("GpModel: non-finite hyperparameter");
    }
    bundle_ = build_operator_bundle(mode_, kind_, hp_, data_);
    precond_ = make_preconditioner(*bundle_.covariance, hp_.noise_variance(), rank_);
  }

  Dataset data_;
  KernelKind kind_;
  Hyperparameters hp_;
  Mode mode_;
  std::size_t rank_;
  OperatorBundle bundle_;
  PreconditionerPtr precond_;
};

struct NllResult {
  double nll = 0.0;
  Vector grad;  // d nll / d (log lengthscale, log outputscale, log noise)
  InferenceTerms terms;
};

namespace detail {

inline NllResult assemble_nll(const GpModel& model, InferenceTerms terms) {
  const Vector& y = model.data().y();
  const auto n = static_cast<double>(y.size());
  NllResult out;
  out.nll = 0.5 * (dot(y, terms.solve_y) + terms.logdet + n * std::log(2.0 * std::numbers::pi));
  const DenseMatrix u = DenseMatrix::column(terms.solve_y);
  const auto& derivs = model.operators().derivatives;
  out.grad.resize(derivs.size());
  for (std::size_t i = 0; i < derivs.size(); ++i) {
    const double quad = dot(terms.solve_y, derivs[i]->matmul(u).values());
    out.grad[i] = 0.5 * (terms.trace_terms[i] - quad);
  }
  out.terms = std::move(terms);
  return out;
}

}  // namespace detail

/// Negative log marginal likelihood and its gradient from one mbcg call.
inline NllResult nll_and_grad(const GpModel& model, const TrainConfig& cfg, Rng& rng) {
  const auto& b = model.operators();
  return detail::assemble_nll(
      model, infer_terms(*b.covariance, b.derivatives, model.data().y(), model.preconditioner(),
                         cfg.cg, rng, cfg.probes));
}

/// Same with caller-supplied probes drawn for `precond`. Probes sqrt(n) * I
/// with the identity preconditioner and p = n give the exact trace.
inline NllResult nll_and_grad_with_probes(const GpModel& model, const McbgConfig& cg,
                                          const Preconditioner& precond, const DenseMatrix& z) {
  const auto& b = model.operators();
  return detail::assemble_nll(
      model, infer_terms_with_probes(*b.covariance, b.derivatives, model.data().y(), precond, cg, z));
}

inline DenseMatrix exact_trace_probes(std::size_t n) {
  DenseMatrix z(n, n);
  const double s = std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) z(i, i) = s;
  return z;
}

struct TrainReport {
  Vector nll_trace;     // nll at the start of each step
  Vector step_seconds;
  double total_seconds = 0.0;
  Hyperparameters initial;
  Hyperparameters final;
};

using GradientFn = std::function<std::pair<double, Vector>(const GpModel&)>;

/// Adam on the log-hyperparameters driven by an arbitrary nll/gradient source.
inline TrainReport adam_train(GpModel& model, const TrainConfig& cfg, const GradientFn& grad_fn) {
  cfg.validate();
  TrainReport report;
  report.initial = model.hyperparameters();
  auto theta = model.hyperparameters().as_array();
  std::array<double, kNumHyperparameters> m1{}, m2{};
  const auto& a = cfg.adam;
  double b1t = 1.0, b2t = 1.0;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t step = 0; step < cfg.iterations; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [nll, grad] = grad_fn(model);
    if (!std::isfinite(nll)) {
      std::ostringstream msg;
      msg << "train: non-finite nll at step " << step << " (log_lengthscale=" << theta[0]
          << ", log_outputscale=" << theta[1] << ", log_noise=" << theta[2] << ")";
      throw NumericError(msg.str());
    }
    b1t *= a.beta1;
    b2t *= a.beta2;
    for (std::size_t i = 0; i < kNumHyperparameters; ++i) {
      m1[i] = a.beta1 * m1[i] + (1.0 - a.beta1) * grad[i];
      m2[i] = a.beta2 * m2[i] + (1.0 - a.beta2) * grad[i] * grad[i];
      const double mhat = m1[i] / (1.0 - b1t);
      const double vhat = m2[i] / (1.0 - b2t);
      theta[i] -= a.learning_rate * mhat / (std::sqrt(vhat) + a.epsilon);
    }
    model.set_hyperparameters(Hyperparameters::from_array(theta));
    report.nll_trace.push_back(nll);
    report.step_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.final = model.hyperparameters();
  return report;
}

/// Adam with stochastic BBMM gradients, fresh probes every step.
inline TrainReport train(GpModel& model, const TrainConfig& cfg, Rng& rng) {
  if (model.precond_rank() != cfg.precond_rank) model.set_precond_rank(cfg.precond_rank);
  return adam_train(model, cfg, [&](const GpModel& m) {
    NllResult r = nll_and_grad(m, cfg, rng);
    return std::make_pair(r.nll, std::move(r.grad));
  });
}

struct PredictiveOutput {
  Vector mean;
  Vector variance;
  std::size_t clamped = 0;  // variances in [-1e-8, 0) set to zero
};

namespace detail {

inline Vector clamp_variance(Vector v, std::size_t& clamped) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) {
      if (v[i] < -1e-8) {
        throw NumericError("predict: variance " + std::to_string(v[i]) + " at test point " +
                           std::to_string(i) + " is below -1e-8");
      }
      v[i] = 0.0;
      ++clamped;
    }
  }
  return v;
}

}  // namespace detail

/// Predictive mean and pointwise variance; the training solve and all n*
/// variance solves share one batched mbcg call.
inline PredictiveOutput predict(const GpModel& model, const DenseMatrix& x_star,
                                const McbgConfig& cg) {
  const Dataset& data = model.data();
  const DenseMatrix k_xs =
      cross_covariance(model.mode(), model.kernel(), model.hyperparameters(), data, x_star);
  const Vector prior =
      prior_variance(model.mode(), model.kernel(), model.hyperparameters(), data, x_star);
  const std::size_t n = data.n();
  const std::size_t ns = x_star.rows();

  DenseMatrix b(n, ns + 1);
  for (std::size_t i = 0; i < n; ++i) {
    b(i, 0) = data.y()[i];
    for (std::size_t j = 0; j < ns; ++j) b(i, j + 1) = k_xs(i, j);
  }
  const McbgOutput run = mbcg(model.covariance(), b, model.preconditioner(), cg);

  PredictiveOutput out;
  out.mean.assign(ns, 0.0);
  Vector var = prior;
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = run.solutions(i, 0);
    for (std::size_t j = 0; j < ns; ++j) {
      out.mean[j] += k_xs(i, j) * alpha;
      var[j] -= k_xs(i, j) * run.solutions(i, j + 1);
    }
  }
  out.variance = detail::clamp_variance(std::move(var), out.clamped);
  return out;
}

/// Exact Cholesky-based reference for the same (possibly approximate) prior.
struct DenseOracle {
  double nll = 0.0;
  Vector grad;
  double logdet = 0.0;
  Vector alpha;  // K^{-1} y
  std::function<PredictiveOutput(const DenseMatrix&)> predict;
};

inline DenseMatrix materialize(const SymmetricOperator& op) {
  if (const auto* dense = dynamic_cast<const DenseSymmetricOperator*>(&op)) return dense->matrix();
  return op.to_dense();
}

inline constexpr std::size_t kDefaultOracleCap = 4000;

inline DenseOracle dense_oracle(const GpModel& model, std::size_t cap = kDefaultOracleCap) {
  const Dataset& data = model.data();
  const std::size_t n = data.n();
  if (n > cap) {
    throw ConfigError("dense_oracle: n=" + std::to_string(n) + " exceeds cap " +
                      std::to_string(cap));
  }
  const DenseMatrix khat = materialize(model.covariance());
  auto chol = std::make_shared<CholeskyFactor>([&] {
    try {
      return CholeskyFactor(khat);
    } catch (const NotPositiveDefiniteError&) {
      return cholesky_with_jitter(khat);
    }
  }());

  DenseOracle o;
  const Vector& y = data.y();
  o.alpha = chol->solve(DenseMatrix::column(y)).col(0);
  o.logdet = chol->logdet();
  o.nll = 0.5 * (dot(y, o.alpha) + o.logdet +
                 static_cast<double>(n) * std::log(2.0 * std::numbers::pi));

  const auto kinv = chol->solve(DenseMatrix::identity(n));
  for (const auto& dk_op : model.operators().derivatives) {
    const DenseMatrix dk = materialize(*dk_op);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += dot(kinv.row(i), dk.row(i));  // symmetric
    const double quad = dot(o.alpha, dense_matmul(dk, DenseMatrix::column(o.alpha)).values());
    o.grad.push_back(0.5 * (trace - quad));
  }

  const Mode mode = model.mode();
  const KernelKind kind = model.kernel();
  const Hyperparameters hp = model.hyperparameters();
  o.predict = [chol, alpha = o.alpha, mode, kind, hp, data](const DenseMatrix& x_star) {
    const DenseMatrix k_xs = cross_covariance(mode, kind, hp, data, x_star);
    const DenseMatrix solved = chol->solve(k_xs);
    PredictiveOutput out;
    out.mean.assign(x_star.rows(), 0.0);
    out.variance = prior_variance(mode, kind, hp, data, x_star);
    for (std::size_t i = 0; i < k_xs.rows(); ++i) {
      for (std::size_t j = 0; j < k_xs.cols(); ++j) {
        out.mean[j] += k_xs(i, j) * alpha[i];
        out.variance[j] -= k_xs(i, j) * solved(i, j);
      }
    }
    out.variance = detail::clamp_variance(std::move(out.variance), out.clamped);
    return out;
  };
  return o;
}

/// Adam with exact dense gradients; the Cholesky arm of the benchmarks.
inline TrainReport train_dense(GpModel& model, const TrainConfig& cfg,
                               std::size_t cap = kDefaultOracleCap) {
  return adam_train(model, cfg, [cap](const GpModel& m) {
    DenseOracle o = dense_oracle(m, cap);
    return std::make_pair(o.nll, std::move(o.grad));
  });
}

/// z-score every feature and the target. Constant columns are flagged and
/// only centred.
inline Dataset standardize(const Dataset& data) {
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  if (n < 2) throw DataError("standardize: need at least two rows");
  Standardization rec;
  rec.x_mean.assign(d, 0.0);
  rec.x_scale.assign(d, 1.0);
  rec.constant_columns.assign(d, false);

  auto moments = [n](auto&& value) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += value(i);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (value(i) - mean) * (value(i) - mean);
    return std::make_pair(mean, std::sqrt(var / static_cast<double>(n)));
  };

  for (std::size_t j = 0; j < d; ++j) {
    auto [mean, sd] = moments([&](std::size_t i) { return data.x()(i, j); });
    rec.x_mean[j] = mean;
    if (sd > 0.0) {
      rec.x_scale[j] = sd;
    } else {
      rec.constant_columns[j] = true;
    }
  }
  auto [ymean, ysd] = moments([&](std::size_t i) { return data.y()[i]; });
  rec.y_mean = ymean;
  if (ysd > 0.0) {
    rec.y_scale = ysd;
  } else {
    rec.constant_target = true;
  }

  DenseMatrix x(n, d);
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = (data.x()(i, j) - rec.x_mean[j]) / rec.x_scale[j];
    y[i] = (data.y()[i] - rec.y_mean) / rec.y_scale;
  }
  Dataset out(std::move(x), std::move(y));
  out.set_standardization(std::move(rec));
  return out;
}

inline DenseMatrix apply_standardization(const Standardization& rec, const DenseMatrix& x) {
  if (x.cols() != rec.x_mean.size()) throw ShapeError("apply_standardization: feature mismatch");
  DenseMatrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = (x(i, j) - rec.x_mean[j]) / rec.x_scale[j];
    }
  }
  return out;
}

inline Vector standardize_targets(const Standardization& rec, const Vector& y) {
  Vector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - rec.y_mean) / rec.y_scale;
  return out;
}

inline Vector destandardize_targets(const Standardization& rec, const Vector& y) {
  Vector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * rec.y_scale + rec.y_mean;
  return out;
}

inline Vector destandardize_variance(const Standardization& rec, const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * rec.y_scale * rec.y_scale;
  return out;
}

inline double mean_absolute_error(const Vector& pred, const Vector& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ShapeError("mae: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

}  // namespace bbmm
