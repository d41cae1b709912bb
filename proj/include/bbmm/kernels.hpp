#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/interpolation.hpp"
#include "bbmm/operators.hpp"
#include "bbmm/toeplitz.hpp"

namespace bbmm {

enum class KernelKind { rbf, matern52 };

inline std::string_view to_string(KernelKind k) {
  return k == KernelKind::rbf ? "rbf" : "matern52";
}

inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "rbf") return KernelKind::rbf;
  if (s == "matern52") return KernelKind::matern52;
  throw ConfigError("unknown kernel '" + std::string(s) + "' (expected rbf|matern52)");
}

inline constexpr std::size_t kNumHyperparameters = 3;

// All positive quantities are stored as logs; gradients are taken with
// respect to these log parameters, in this order.
struct Hyperparameters {
  double log_lengthscale = 0.0;
  double log_outputscale = 0.0;
  double log_noise = 0.0;  // sigma^2 = exp(2 * log_noise)

  double lengthscale() const { return std::exp(log_lengthscale); }
  double outputscale() const { return std::exp(log_outputscale); }
  double noise_variance() const { return std::exp(2.0 * log_noise); }

  static Hyperparameters from_natural(double lengthscale, double outputscale,
                                      double noise_variance) {
    if (!(lengthscale > 0.0) || !(outputscale > 0.0) || !(noise_variance > 0.0)) {
      throw DomainError("Hyperparameters: natural parameters must be positive");
    }
    return {std::log(lengthscale), std::log(outputscale), 0.5 * std::log(noise_variance)};
  }

  std::array<double, kNumHyperparameters> as_array() const {
    return {log_lengthscale, log_outputscale, log_noise};
  }
  static Hyperparameters from_array(const std::array<double, kNumHyperparameters>& a) {
    return {a[0], a[1], a[2]};
  }
};

/// Affine maps applied by standardization, kept so predictions can be mapped
/// back to the original units.
struct Standardization {
  Vector x_mean;
  Vector x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
  std::vector<bool> constant_columns;  // left unscaled
  bool constant_target = false;
};

class Dataset {
 public:
  Dataset() = default;

  Dataset(DenseMatrix x, Vector y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.empty()) throw DataError("Dataset: no rows");
    if (x_.rows() != y_.size()) {
      throw DataError("Dataset: " + std::to_string(x_.rows()) + " input rows but " +
                      std::to_string(y_.size()) + " targets");
    }
    if (!x_.all_finite()) throw DataError("Dataset: non-finite input");
    for (double v : y_) {
      if (!std::isfinite(v)) throw DataError("Dataset: non-finite target");
    }
  }

  std::size_t n() const noexcept { return x_.rows(); }
  std::size_t d() const noexcept { return x_.cols(); }
  const DenseMatrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }

  const std::optional<Standardization>& standardization() const noexcept { return record_; }
  void set_standardization(Standardization s) { record_ = std::move(s); }

  /// Rows selected by index, carrying the standardization record along.
  Dataset subset(std::span<const std::size_t> rows) const {
    if (rows.empty()) throw DataError("Dataset::subset: empty selection");
    DenseMatrix xs(rows.size(), d());
    Vector ys(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= n()) throw IndexError("Dataset::subset: row out of range");
      auto src = x_.row(rows[r]);
      std::copy(src.begin(), src.end(), xs.row(r).begin());
      ys[r] = y_[rows[r]];
    }
    Dataset out(std::move(xs), std::move(ys));
    out.record_ = record_;
    return out;
  }

 private:
  DenseMatrix x_;
  Vector y_;
  std::optional<Standardization> record_;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

}  // namespace detail

/// Kernel value as a function of the squared distance.
inline double kernel_from_sqdist(KernelKind kind, const Hyperparameters& hp, double r2) {
  const double ell = hp.lengthscale();
  const double s = hp.outputscale();
  if (kind == KernelKind::rbf) return s * std::exp(-r2 / (2.0 * ell * ell));
  const double a = std::sqrt(5.0 * r2) / ell;
  return s * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

/// d k / d(log lengthscale) as a function of the squared distance.
inline double kernel_dloglengthscale_from_sqdist(KernelKind kind, const Hyperparameters& hp,
                                                 double r2) {
  const double ell = hp.lengthscale();
  const double s = hp.outputscale();
  if (kind == KernelKind::rbf) {
    return s * std::exp(-r2 / (2.0 * ell * ell)) * r2 / (ell * ell);
  }
  const double a = std::sqrt(5.0 * r2) / ell;
  return s * std::exp(-a) * a * a * (1.0 + a) / 3.0;
}

inline double kernel_eval(KernelKind kind, const Hyperparameters& hp, std::span<const double> x,
                          std::span<const double> x2) {
  if (x.size() != x2.size()) throw ShapeError("kernel_eval: dimension mismatch");
  return kernel_from_sqdist(kind, hp, detail::squared_distance(x, x2));
}

namespace detail {

template <typename Fn>
DenseMatrix pairwise(const DenseMatrix& x1, const DenseMatrix& x2, Fn fn) {
  if (x1.cols() != x2.cols()) {
    throw ShapeError("kernel_matrix: inputs have " + std::to_string(x1.cols()) + " and " +
                     std::to_string(x2.cols()) + " features");
  }
  DenseMatrix out(x1.rows(), x2.rows());
  const auto n1 = static_cast<std::ptrdiff_t>(x1.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n1; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < x2.rows(); ++j) {
      out(row, j) = fn(squared_distance(x1.row(row), x2.row(j)));
    }
  }
  return out;
}

}  // namespace detail

inline DenseMatrix kernel_matrix(KernelKind kind, const Hyperparameters& hp, const DenseMatrix& x1,
                                 const DenseMatrix& x2) {
  return detail::pairwise(x1, x2, [&](double r2) { return kernel_from_sqdist(kind, hp, r2); });
}

inline DenseMatrix kernel_dloglengthscale_matrix(KernelKind kind, const Hyperparameters& hp,
                                                 const DenseMatrix& x1, const DenseMatrix& x2) {
  return detail::pairwise(
      x1, x2, [&](double r2) { return kernel_dloglengthscale_from_sqdist(kind, hp, r2); });
}

/// Which covariance the operator represents.
struct Mode {
  enum class Kind { exact, sor, ski };

  Kind kind = Kind::exact;
  std::size_t m = 0;                // inducing points (sor) or grid nodes (ski)
  std::uint64_t inducing_seed = 0;  // sor subset selection

  static Mode exact() { return {}; }
  static Mode sor(std::size_t m, std::uint64_t seed = 0) { return {Kind::sor, m, seed}; }
  static Mode ski(std::size_t m) { return {Kind::ski, m, 0}; }
};

inline std::string_view to_string(Mode::Kind k) {
  switch (k) {
    case Mode::Kind::exact: return "exact";
    case Mode::Kind::sor: return "sor";
    case Mode::Kind::ski: return "ski";
  }
  return "exact";
}

inline Mode::Kind parse_mode_kind(std::string_view s) {
  if (s == "exact") return Mode::Kind::exact;
  if (s == "sor") return Mode::Kind::sor;
  if (s == "ski") return Mode::Kind::ski;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected exact|sor|ski)");
}

/// Seeded uniform subset of m distinct rows, returned in ascending order.
inline std::vector<std::size_t> select_inducing_indices(std::size_t n, std::size_t m,
                                                        std::uint64_t seed) {
  if (m == 0 || m > n) {
    throw DomainError("sor: need 1 <= m <= n inducing points, got m=" + std::to_string(m) +
                      ", n=" + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline DenseMatrix select_rows(const DenseMatrix& x, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = x.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

namespace detail {

inline Vector first_column(const DenseMatrix& x) { return x.col(0); }

inline void require_ski_compatible(const Mode& mode, const Dataset& data) {
  if (data.d() != 1) {
    throw UnsupportedModeError("ski mode requires one-dimensional inputs, got d=" +
                               std::to_string(data.d()));
  }
  if (mode.m < 4) throw DomainError("ski mode needs m >= 4 grid nodes");
}

inline ToeplitzColumn grid_column(const UniformGrid& grid, KernelKind kind,
                                  const Hyperparameters& hp, bool dloglengthscale) {
  Vector c(grid.size);
  for (std::size_t j = 0; j < grid.size; ++j) {
    const double dist = grid.spacing * static_cast<double>(j);
    c[j] = dloglengthscale ? kernel_dloglengthscale_from_sqdist(kind, hp, dist * dist)
                           : kernel_from_sqdist(kind, hp, dist * dist);
  }
  return ToeplitzColumn(std::move(c));
}

}  // namespace detail

/// Structures shared by the ski operators and ski predictions.
struct SkiGeometry {
  UniformGrid grid;
  SparseInterpolation interpolation;
};

inline SkiGeometry ski_geometry(const Dataset& data, std::size_t m) {
  Vector x = detail::first_column(data.x());
  UniformGrid grid = make_interpolation_grid(x, m);
  return {grid, cubic_interpolation(grid, x)};
}

/// K-hat operator and its derivatives with respect to
/// (log lengthscale, log outputscale, log noise).
struct OperatorBundle {
  OperatorPtr covariance;
  OperatorList derivatives;
};

inline OperatorBundle build_operator_bundle(const Mode& mode, KernelKind kind,
                                            const Hyperparameters& hp, const Dataset& data) {
  const double sigma2 = hp.noise_variance();
  const std::size_t n = data.n();
  OperatorBundle b;
  auto noise_derivative = std::make_shared<ScaledIdentityOperator>(n, 2.0 * sigma2);

  switch (mode.kind) {
    case Mode::Kind::exact: {
      DenseMatrix k = kernel_matrix(kind, hp, data.x(), data.x());
      DenseMatrix khat = k;
      for (std::size_t i = 0; i < n; ++i) khat(i, i) += sigma2;
      b.covariance = std::make_shared<DenseSymmetricOperator>(std::move(khat));
      b.derivatives = {std::make_shared<DenseSymmetricOperator>(
                           kernel_dloglengthscale_matrix(kind, hp, data.x(), data.x())),
                       std::make_shared<DenseSymmetricOperator>(std::move(k)), noise_derivative};
      break;
    }
    case Mode::Kind::sor: {
      const auto idx = select_inducing_indices(n, mode.m, mode.inducing_seed);
      const DenseMatrix u = select_rows(data.x(), idx);
      DenseMatrix k_xu = kernel_matrix(kind, hp, data.x(), u);
      DenseMatrix k_uu = kernel_matrix(kind, hp, u, u);
      auto cov = std::make_shared<SorOperator>(k_xu, k_uu, sigma2);
      const CholeskyFactor& factor = cov->inducing_factor();
      // The jitter scales with mean(diag K_UU), so K_UU + jitter*I is linear in
      // the outputscale and the log-outputscale derivative is the noiseless SoR
      // covariance itself.
      DenseMatrix k_uu_jittered = k_uu;
      for (std::size_t i = 0; i < k_uu.rows(); ++i) k_uu_jittered(i, i) += factor.jitter();
      b.derivatives = {
          std::make_shared<SorDerivativeOperator>(
              k_xu, kernel_dloglengthscale_matrix(kind, hp, data.x(), u), factor,
              kernel_dloglengthscale_matrix(kind, hp, u, u)),
          std::make_shared<SorDerivativeOperator>(k_xu, k_xu, factor, k_uu_jittered),
          noise_derivative};
      b.covariance = std::move(cov);
      break;
    }
    case Mode::Kind::ski: {
      detail::require_ski_compatible(mode, data);
      SkiGeometry geo = ski_geometry(data, mode.m);
      ToeplitzColumn c = detail::grid_column(geo.grid, kind, hp, false);
      b.covariance = std::make_shared<SkiOperator>(geo.interpolation, c, sigma2);
      b.derivatives = {
          std::make_shared<SkiOperator>(geo.interpolation,
                                        detail::grid_column(geo.grid, kind, hp, true), 0.0),
          std::make_shared<SkiOperator>(geo.interpolation, c, 0.0), noise_derivative};
      break;
    }
  }
  return b;
}

/// K-hat = K + sigma^2 I under the chosen approximation.
inline OperatorPtr build_operator(const Mode& mode, KernelKind kind, const Hyperparameters& hp,
                                  const Dataset& data) {
  return build_operator_bundle(mode, kind, hp, data).covariance;
}

/// d K-hat / d theta for theta = (log lengthscale, log outputscale, log noise).
inline OperatorList build_derivative_operators(const Mode& mode, KernelKind kind,
                                               const Hyperparameters& hp, const Dataset& data) {
  return build_operator_bundle(mode, kind, hp, data).derivatives;
}

/// Train/test covariance block (n x n*) consistent with the mode's
/// approximation of the prior.
inline DenseMatrix cross_covariance(const Mode& mode, KernelKind kind, const Hyperparameters& hp,
                                    const Dataset& data, const DenseMatrix& x_star) {
  if (x_star.cols() != data.d()) throw ShapeError("cross_covariance: feature count mismatch");
  switch (mode.kind) {
    case Mode::Kind::exact:
      return kernel_matrix(kind, hp, data.x(), x_star);
    case Mode::Kind::sor: {
      const auto idx = select_inducing_indices(data.n(), mode.m, mode.inducing_seed);
      const DenseMatrix u = select_rows(data.x(), idx);
      const CholeskyFactor factor = cholesky_with_jitter(kernel_matrix(kind, hp, u, u));
      return dense_matmul(kernel_matrix(kind, hp, data.x(), u),
                          factor.solve(kernel_matrix(kind, hp, u, x_star)));
    }
    case Mode::Kind::ski: {
      detail::require_ski_compatible(mode, data);
      SkiGeometry geo = ski_geometry(data, mode.m);
      SparseInterpolation w_star = cubic_interpolation(geo.grid, x_star.col(0));
      CirculantEmbedding t(detail::grid_column(geo.grid, kind, hp, false));
      return geo.interpolation.apply(t.apply(transpose(w_star.to_dense())));
    }
  }
  throw UnsupportedModeError("cross_covariance: unknown mode");
}

/// Prior variance k(x*, x*) at each test point under the mode's approximation.
inline Vector prior_variance(const Mode& mode, KernelKind kind, const Hyperparameters& hp,
                             const Dataset& data, const DenseMatrix& x_star) {
  if (x_star.cols() != data.d()) throw ShapeError("prior_variance: feature count mismatch");
  Vector out(x_star.rows());
  switch (mode.kind) {
    case Mode::Kind::exact:
      std::fill(out.begin(), out.end(), hp.outputscale());
      return out;
    case Mode::Kind::sor: {
      const auto idx = select_inducing_indices(data.n(), mode.m, mode.inducing_seed);
      const DenseMatrix u = select_rows(data.x(), idx);
      const CholeskyFactor factor = cholesky_with_jitter(kernel_matrix(kind, hp, u, u));
      const DenseMatrix white = factor.solve_lower(kernel_matrix(kind, hp, u, x_star));
      for (std::size_t j = 0; j < out.size(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < white.rows(); ++k) s += white(k, j) * white(k, j);
        out[j] = s;
      }
      return out;
    }
    case Mode::Kind::ski: {
      detail::require_ski_compatible(mode, data);
      SkiGeometry geo = ski_geometry(data, mode.m);
      SparseInterpolation w_star = cubic_interpolation(geo.grid, x_star.col(0));
      ToeplitzColumn c = detail::grid_column(geo.grid, kind, hp, false);
      for (std::size_t j = 0; j < out.size(); ++j) {
        double s = 0.0;
        for (const auto& a : w_star.row(j)) {
          for (const auto& b : w_star.row(j)) s += a.weight * b.weight * c.entry(a.col, b.col);
        }
        out[j] = s;
      }
      return out;
    }
  }
  throw UnsupportedModeError("prior_variance: unknown mode");
}

}  // namespace bbmm
