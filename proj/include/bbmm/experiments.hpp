#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bbmm/bessel.hpp"
#include "bbmm/gp.hpp"
#include "bbmm/io.hpp"
#include "bbmm/kernels.hpp"
#include "bbmm/mbcg.hpp"
#include "bbmm/precond.hpp"

namespace bbmm {

using Json = nlohmann::ordered_json;

struct RunConfig {
  std::string subcommand = "benchmark";
  std::string data_path;
  Mode::Kind mode = Mode::Kind::exact;
  KernelKind kernel = KernelKind::rbf;
  std::size_t m = 300;
  std::size_t rank = 5;
  std::size_t cg_iters = 20;
  std::size_t probes = 10;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  double split = 0.8;
  std::string out_path;
  std::size_t iterations = 100;
  double learning_rate = 0.1;
  std::size_t oracle_cap = kDefaultOracleCap;
  bool timing = true;
  std::optional<std::size_t> feature;  // keep only this input column
  // Initial (train, benchmark, predict) or fixed (residuals, verify) values.
  double lengthscale = std::log(2.0);
  double outputscale = std::log(2.0);
  double noise = std::log(2.0);

  void validate() const {
    if (m == 0 || cg_iters == 0 || probes == 0 || oracle_cap == 0) {
      throw ConfigError("counts (m, cg-iters, probes, oracle-cap) must be positive");
    }
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must lie in (0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("lr must be positive");
    if (!(lengthscale > 0.0) || !(outputscale > 0.0) || !(noise > 0.0)) {
      throw ConfigError("lengthscale, outputscale and noise must be positive");
    }
  }

  Hyperparameters hyperparameters() const {
    return Hyperparameters::from_natural(lengthscale, outputscale, noise);
  }
  Mode resolved_mode() const {
    switch (mode) {
      case Mode::Kind::exact: return Mode::exact();
      case Mode::Kind::sor: return Mode::sor(m, seed);
      case Mode::Kind::ski: return Mode::ski(m);
    }
    return Mode::exact();
  }
  McbgConfig cg() const { return {cg_iters, tol, 1}; }
  TrainConfig train_config() const {
    TrainConfig t;
    t.adam.learning_rate = learning_rate;
    t.iterations = iterations;
    t.cg = cg();
    t.probes = probes;
    t.precond_rank = rank;
    t.seed = seed;
    return t;
  }
};

inline Json to_json(const RunConfig& c) {
  Json j;
  j["subcommand"] = c.subcommand;
  j["data"] = c.data_path;
  j["mode"] = std::string(to_string(c.mode));
  j["kernel"] = std::string(to_string(c.kernel));
  j["m"] = c.m;
  j["rank"] = c.rank;
  j["cg_iters"] = c.cg_iters;
  j["probes"] = c.probes;
  j["tol"] = c.tol;
  j["seed"] = c.seed;
  j["split"] = c.split;
  j["out"] = c.out_path;
  j["iterations"] = c.iterations;
  j["lr"] = c.learning_rate;
  j["oracle_cap"] = c.oracle_cap;
  j["timing"] = c.timing;
  j["feature"] = c.feature ? Json(*c.feature) : Json(nullptr);
  j["lengthscale"] = c.lengthscale;
  j["outputscale"] = c.outputscale;
  j["noise"] = c.noise;
  return j;
}

inline Json to_json(const Hyperparameters& hp) {
  return Json{{"lengthscale", hp.lengthscale()},
              {"outputscale", hp.outputscale()},
              {"noise", hp.noise_variance()}};
}

/// 1-D inputs uniform on [0, 1] with targets drawn from a zero-mean GP with
/// an RBF kernel plus Gaussian noise.
inline Dataset synthetic_rbf_data(std::size_t n, double lengthscale, double outputscale,
                                  double noise_variance, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  DenseMatrix x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = unif(rng);
  const auto hp = Hyperparameters::from_natural(lengthscale, outputscale, noise_variance);
  const CholeskyFactor chol = cholesky_with_jitter(kernel_matrix(KernelKind::rbf, hp, x, x));
  DenseMatrix lower(n, n);
  {
    // Rebuild L explicitly so f = L w.
    Eigen::MatrixXd k = kernel_matrix(KernelKind::rbf, hp, x, x).map();
    k.diagonal().array() += chol.jitter();
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    lower = DenseMatrix::from_eigen(Eigen::MatrixXd(llt.matrixL()));
  }
  Vector w(n);
  for (double& v : w) v = normal(rng);
  Vector y(n, 0.0);
  const double sd = std::sqrt(noise_variance);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k <= i; ++k) y[i] += lower(i, k) * w[k];
  }
  for (double& v : y) v += sd * normal(rng);
  return Dataset(std::move(x), std::move(y));
}

struct Split {
  Dataset train;
  Dataset test;
};

/// Seeded shuffle, then the first round(fraction * n) rows train.
inline Split train_test_split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split must lie in (0, 1)");
  const std::size_t n = data.n();
  if (n < 3) throw DataError("train_test_split: need at least three rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(idx[i], idx[pick(rng)]);
  }
  auto n_train = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 2, n - 1);
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return {data.subset(tr), data.subset(te)};
}

inline Dataset select_feature(const Dataset& data, std::size_t feature) {
  if (feature >= data.d()) {
    throw ConfigError("feature " + std::to_string(feature) + " out of range (d=" +
                      std::to_string(data.d()) + ")");
  }
  DenseMatrix x(data.n(), 1);
  x.set_col(0, data.x().col(feature));
  return Dataset(std::move(x), data.y());
}

struct ArmReport {
  std::string name;
  Vector nll_trace;
  double mae = 0.0;
  double wall_time_s = 0.0;
  Hyperparameters hyperparameters;
};

struct BenchmarkReport {
  RunConfig config;
  std::vector<ArmReport> arms;
  bool oracle_skipped = false;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

inline Json to_json(const BenchmarkReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  Json arms = Json::array();
  for (const auto& a : r.arms) {
    Json arm;
    arm["name"] = a.name;
    arm["nll_trace"] = a.nll_trace;
    arm["mae"] = a.mae;
    arm["wall_time_s"] = r.config.timing ? Json(a.wall_time_s) : Json(nullptr);
    arm["hyperparameters"] = to_json(a.hyperparameters);
    arms.push_back(std::move(arm));
  }
  j["arms"] = std::move(arms);
  j["seed"] = r.config.seed;
  j["oracle_skipped"] = r.oracle_skipped;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  return j;
}

/// Standardized train/test data prepared from the config's dataset.
struct PreparedData {
  Dataset train;
  DenseMatrix test_x;
  Vector test_y;  // standardized with the training record
};

inline PreparedData prepare_data(const Dataset& raw, const RunConfig& cfg) {
  Dataset data = cfg.feature ? select_feature(raw, *cfg.feature) : raw;
  if (cfg.mode == Mode::Kind::ski && data.d() != 1) {
    throw UnsupportedModeError("ski mode requires one input column; pass --feature");
  }
  Split s = train_test_split(data, cfg.split, cfg.seed);
  Dataset train = standardize(s.train);
  const Standardization rec = *train.standardization();
  DenseMatrix test_x = apply_standardization(rec, s.test.x());
  Vector test_y = standardize_targets(rec, s.test.y());
  return {std::move(train), std::move(test_x), std::move(test_y)};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline ArmReport run_bbmm_arm(const PreparedData& d, const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  GpModel model(d.train, cfg.kernel, cfg.hyperparameters(), cfg.resolved_mode(), cfg.rank);
  Rng rng(cfg.seed);
  ArmReport arm;
  arm.name = "bbmm";
  arm.nll_trace = train(model, cfg.train_config(), rng).nll_trace;
  arm.mae = mean_absolute_error(predict(model, d.test_x, cfg.cg()).mean, d.test_y);
  arm.wall_time_s = seconds_since(t0);
  arm.hyperparameters = model.hyperparameters();
  return arm;
}

inline ArmReport run_dense_arm(const PreparedData& d, const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  GpModel model(d.train, cfg.kernel, cfg.hyperparameters(), cfg.resolved_mode(), 0);
  ArmReport arm;
  arm.name = "dense";
  arm.nll_trace = train_dense(model, cfg.train_config(), cfg.oracle_cap).nll_trace;
  arm.mae = mean_absolute_error(dense_oracle(model, cfg.oracle_cap).predict(d.test_x).mean,
                                d.test_y);
  arm.wall_time_s = seconds_since(t0);
  arm.hyperparameters = model.hyperparameters();
  return arm;
}

/// Trains the BBMM arm and, when n fits under the cap, the dense Cholesky arm
/// from the same initialization; MAE is on standardized held-out targets.
inline BenchmarkReport run_benchmark(const RunConfig& cfg, const Dataset& raw) {
  cfg.validate();
  const PreparedData d = prepare_data(raw, cfg);
  BenchmarkReport report;
  report.config = cfg;
  report.n_train = d.train.n();
  report.n_test = d.test_x.rows();
  report.arms.push_back(run_bbmm_arm(d, cfg));
  if (d.train.n() <= cfg.oracle_cap) {
    report.arms.push_back(run_dense_arm(d, cfg));
  } else {
    report.oracle_skipped = true;
  }
  return report;
}

inline BenchmarkReport run_benchmark(const RunConfig& cfg) {
  return run_benchmark(cfg, load_csv(cfg.data_path));
}

struct ResidualRow {
  std::size_t rank = 0;
  std::size_t iteration = 0;
  double relative_residual = 0.0;
};

/// True relative residual ||K u_j - y|| / ||y|| of PCG per iteration for each
/// preconditioner rank, at fixed hyperparameters.
inline std::vector<ResidualRow> residual_curve(const GpModel& model, const McbgConfig& cg,
                                               const std::vector<std::size_t>& ranks) {
  const SymmetricOperator& op = model.covariance();
  const Vector& y = model.data().y();
  const double ynorm = norm2(y);
  std::vector<ResidualRow> rows;
  for (std::size_t k : ranks) {
    const PreconditionerPtr pc = make_preconditioner(op, model.hyperparameters().noise_variance(), k);
    pcg(op, y, *pc, cg, [&](std::size_t it, const Vector& u) {
      Vector r = op.matmul(DenseMatrix::column(u)).col(0);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
      rows.push_back({k, it, norm2(r) / ynorm});
    });
  }
  return rows;
}

inline const std::vector<std::size_t>& default_residual_ranks() {
  static const std::vector<std::size_t> ranks{0, 2, 5, 9};
  return ranks;
}

inline std::vector<ResidualRow> residual_curve(const RunConfig& cfg, const Dataset& raw) {
  cfg.validate();
  Dataset data = cfg.feature ? select_feature(raw, *cfg.feature) : raw;
  GpModel model(standardize(data), cfg.kernel, cfg.hyperparameters(), cfg.resolved_mode(), 0);
  return residual_curve(model, cfg.cg(), default_residual_ranks());
}

inline void write_residual_csv(const std::string& path, const std::vector<ResidualRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "rank,iteration,relative_residual\n";
  out << std::setprecision(17);
  for (const auto& r : rows) out << r.rank << ',' << r.iteration << ',' << r.relative_residual << '\n';
}

/// kappa(P_k^{-1} K) from the dense generalized eigenproblem K v = lambda P v.
inline double preconditioned_condition_number(const GpModel& model, std::size_t rank) {
  const DenseMatrix k = materialize(model.covariance());
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k.rows()),
                                                static_cast<Eigen::Index>(k.rows()));
  if (rank > 0) {
    const PivotedCholeskyPreconditioner pc(
        pivoted_cholesky(model.covariance(), model.hyperparameters().noise_variance(),
                         std::min(rank, k.rows())),
        model.hyperparameters().noise_variance());
    p = pc.to_dense().map();
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(k.map()), p,
                                                                Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("condition number: eigensolver failed");
  const auto& ev = es.eigenvalues();
  if (!(ev(0) > 0.0)) throw NotPositiveDefiniteError("condition number: operator not PD");
  return ev(ev.size() - 1) / ev(0);
}

inline double cg_error_bound(double kappa, std::size_t p) {
  const double s = std::sqrt(kappa);
  return 2.0 * std::pow((s - 1.0) / (s + 1.0), static_cast<double>(p));
}

struct CgBoundRow {
  std::size_t iteration = 0;
  double error_ratio = 0.0;  // ||e_p||_A / ||e_0||_A
  double bound = 0.0;
};

/// Unpreconditioned CG on K u = y, A-norm error against a dense solve.
inline std::vector<CgBoundRow> cg_error_decay(const GpModel& model, std::size_t iterations,
                                              double& kappa_out) {
  const DenseMatrix k = materialize(model.covariance());
  const Eigen::Map<const RowMajorMatrix> km = k.map();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(km), Eigen::EigenvaluesOnly);
  kappa_out = es.eigenvalues()(es.eigenvalues().size() - 1) / es.eigenvalues()(0);

  const Vector& y = model.data().y();
  const Eigen::VectorXd ystar =
      Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(km)).solve(
          Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
  auto a_norm = [&](const Eigen::VectorXd& e) { return std::sqrt(e.dot(km * e)); };
  const double e0 = a_norm(ystar);

  std::vector<CgBoundRow> rows;
  const IdentityPreconditioner id(k.rows());
  const double kappa = kappa_out;
  pcg(model.covariance(), y, id, McbgConfig{iterations, 1e-300, iterations},
      [&](std::size_t it, const Vector& u) {
        const Eigen::VectorXd e =
            Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())) -
            ystar;
        rows.push_back({it, a_norm(e) / e0, cg_error_bound(kappa, it)});
      });
  return rows;
}

struct EigenBoundRow {
  std::size_t l = 0;
  double eigenvalue = 0.0;       // lambda_{2l+1}, 1-based descending order
  double next_eigenvalue = 0.0;  // lambda_{2l+2}; 0 past the end
  double bound = 0.0;
};

/// Eigenvalues of K_ij = exp(-gamma (x_i - x_j)^2) against
/// 2 n exp(-gamma/4) I_{l+1}(gamma/4).
inline std::vector<EigenBoundRow> eigenvalue_bound_rows(const Vector& x, double gamma) {
  const std::size_t n = x.size();
  Eigen::MatrixXd k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x[i] - x[j];
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-gamma * d * d);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  Vector desc(es.eigenvalues().data(), es.eigenvalues().data() + n);
  std::sort(desc.begin(), desc.end(), std::greater<>());
  std::vector<EigenBoundRow> rows;
  for (std::size_t l = 0; 2 * l < n; ++l) {
    const double bound = 2.0 * static_cast<double>(n) * std::exp(-gamma / 4.0) *
                         bessel_i(static_cast<int>(l + 1), gamma / 4.0);
    rows.push_back({l, desc[2 * l], 2 * l + 1 < n ? desc[2 * l + 1] : 0.0, bound});
  }
  return rows;
}

inline Vector uniform_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector x(n);
  for (double& v : x) v = unif(rng);
  return x;
}

/// Dense diagnostics for the convergence theory: condition number against
/// preconditioner rank, CG error decay against its bound, and kernel
/// eigenvalue decay against the Bessel bound.
inline Json verify_theory(const GpModel& model, std::size_t cg_iterations, std::uint64_t seed,
                          std::size_t cap = kDefaultOracleCap) {
  if (model.data().n() > cap) throw ConfigError("verify: n exceeds dense cap");
  Json out;
  Json kappas = Json::array();
  bool kappa_monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k : default_residual_ranks()) {
    const double kappa = preconditioned_condition_number(model, k);
    kappa_monotone = kappa_monotone && kappa <= prev * (1.0 + 1e-9);
    prev = kappa;
    kappas.push_back(Json{{"rank", k}, {"kappa", kappa}});
  }
  out["condition_numbers"] = Json{{"rows", kappas}, {"non_increasing", kappa_monotone}};

  double kappa = 0.0;
  const auto cg_rows = cg_error_decay(model, cg_iterations, kappa);
  Json cg = Json::array();
  bool within = true;
  for (const auto& r : cg_rows) {
    within = within && r.error_ratio <= r.bound + 1e-9;
    cg.push_back(Json{{"iteration", r.iteration}, {"error_ratio", r.error_ratio}, {"bound", r.bound}});
  }
  out["cg_error"] = Json{{"kappa", kappa}, {"rows", cg}, {"within_bound", within}};

  const Vector x = uniform_points(100, seed);
  Json eig = Json::array();
  for (double gamma : {1.0, 10.0}) {
    Json rows = Json::array();
    bool ok = true, shifted_ok = true;
    for (const auto& r : eigenvalue_bound_rows(x, gamma)) {
      if (r.bound >= 1e-13) {
        ok = ok && r.eigenvalue <= r.bound;
        shifted_ok = shifted_ok && r.next_eigenvalue <= r.bound;
      }
      rows.push_back(Json{{"l", r.l},
                          {"eigenvalue", r.eigenvalue},
                          {"next_eigenvalue", r.next_eigenvalue},
                          {"bound", r.bound}});
    }
    // A degree-2l polynomial kernel has rank up to 2l+1, so the argument
    // behind the bound controls lambda_{2l+2}; both readings are reported.
    eig.push_back(Json{{"gamma", gamma},
                       {"rows", rows},
                       {"within_bound", ok},
                       {"within_bound_shifted", shifted_ok}});
  }
  out["eigenvalue_bound"] = eig;
  return out;
}

inline Json verify_theory(const RunConfig& cfg, const Dataset& raw) {
  cfg.validate();
  Dataset data = cfg.feature ? select_feature(raw, *cfg.feature) : raw;
  GpModel model(standardize(data), cfg.kernel, cfg.hyperparameters(), Mode::exact(), 0);
  Json out;
  out["config"] = to_json(cfg);
  out["seed"] = cfg.seed;
  Json diag = verify_theory(model, std::min(cfg.cg_iters, data.n()), cfg.seed, cfg.oracle_cap);
  for (auto& [key, value] : diag.items()) out[key] = value;
  return out;
}

}  // namespace bbmm
