#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bbmm/errors.hpp"

namespace bbmm {

using Vector = std::vector<double>;

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-major dense matrix of doubles. A default-constructed matrix is the
// empty 0x0 placeholder; every sized matrix has rows >= 1 and cols >= 1.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("DenseMatrix: dimensions must be positive, got " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  DenseMatrix(std::size_t rows, std::size_t cols, Vector values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("DenseMatrix: dimensions must be positive");
    }
    if (values_.size() != rows * cols) {
      throw ShapeError("DenseMatrix: value count " +
                       std::to_string(values_.size()) + " does not match " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
  }

  static DenseMatrix column(std::span<const double> v) {
    return DenseMatrix(v.size(), 1, Vector(v.begin(), v.end()));
  }

  template <typename Derived>
  static DenseMatrix from_eigen(const Eigen::MatrixBase<Derived>& m) {
    DenseMatrix out(static_cast<std::size_t>(m.rows()),
                    static_cast<std::size_t>(m.cols()));
    out.map() = m;
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return values_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return values_[i * cols_ + j];
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<double> row(std::size_t i) noexcept {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * cols_, cols_};
  }

  Vector col(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  void set_col(std::size_t j, std::span<const double> v) {
    if (v.size() != rows_) throw ShapeError("set_col: length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
  }

  Eigen::Map<RowMajorMatrix> map() noexcept {
    return {values_.data(), static_cast<Eigen::Index>(rows_),
            static_cast<Eigen::Index>(cols_)};
  }
  Eigen::Map<const RowMajorMatrix> map() const noexcept {
    return {values_.data(), static_cast<Eigen::Index>(rows_),
            static_cast<Eigen::Index>(cols_)};
  }

  DenseMatrix& operator+=(const DenseMatrix& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& other) {
    require_same_shape(other, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }
  DenseMatrix& operator*=(double a) noexcept {
    for (double& v : values_) v *= a;
    return *this;
  }

  /// this += a * other
  void axpy(double a, const DenseMatrix& other) {
    require_same_shape(other, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * other.values_[i];
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

 private:
  void require_same_shape(const DenseMatrix& other, const char* what) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
      throw ShapeError(std::string(what) + ": shape mismatch " +
                       std::to_string(rows_) + "x" + std::to_string(cols_) +
                       " vs " + std::to_string(other.rows_) + "x" +
                       std::to_string(other.cols_));
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector values_;
};

inline DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
inline DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
inline DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

/// C = A * B. Delegates to Eigen's blocked GEMM (which is OpenMP-parallel
/// when built with OpenMP); row partitioning keeps results reproducible for a
/// fixed thread count.
inline DenseMatrix dense_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.empty() || b.empty() || a.cols() != b.rows()) {
    throw ShapeError("dense_matmul: cannot multiply " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " by " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  c.map().noalias() = a.map() * b.map();
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  out.map() = a.map().transpose();
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Column-wise inner products <A[:,j], B[:,j]>.
inline Vector column_dots(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("column_dots: shape mismatch");
  }
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ra = a.row(i);
    auto rb = b.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += ra[j] * rb[j];
  }
  return out;
}

inline void require_finite(const DenseMatrix& m, const char* what) {
  if (!m.all_finite()) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite entry");
  }
}

/// Dense Cholesky factor of an SPD matrix, optionally with diagonal jitter.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  /// Factors A + jitter*I; throws NotPositiveDefiniteError on failure.
  explicit CholeskyFactor(const DenseMatrix& a, double jitter = 0.0) {
    if (a.rows() != a.cols()) throw ShapeError("CholeskyFactor: matrix not square");
    Eigen::MatrixXd m = a.map();
    if (jitter != 0.0) m.diagonal().array() += jitter;
    llt_.compute(m);
    if (llt_.info() != Eigen::Success || !llt_.matrixLLT().allFinite()) {
      throw NotPositiveDefiniteError("Cholesky factorization failed");
    }
    jitter_ = jitter;
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(llt_.rows()); }
  double jitter() const noexcept { return jitter_; }

  DenseMatrix solve(const DenseMatrix& b) const {
    if (b.rows() != size()) throw ShapeError("CholeskyFactor::solve: row mismatch");
    return DenseMatrix::from_eigen(llt_.solve(b.map()));
  }

  /// L^{-1} B for the lower factor L.
  DenseMatrix solve_lower(const DenseMatrix& b) const {
    if (b.rows() != size()) throw ShapeError("CholeskyFactor::solve_lower: row mismatch");
    Eigen::MatrixXd x = b.map();
    llt_.matrixL().solveInPlace(x);
    return DenseMatrix::from_eigen(x);
  }

  double logdet() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Cholesky with the escalating jitter schedule used for inducing-point
/// covariances: try the matrix as is, then add 1e-8 * mean(diag) and multiply
/// by ten per failure, giving up past 1e-4 * mean(diag).
inline CholeskyFactor cholesky_with_jitter(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("cholesky_with_jitter: matrix not square");
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) mean_diag += a(i, i);
  mean_diag /= static_cast<double>(a.rows());
  if (!(mean_diag > 0.0)) {
    throw NotPositiveDefiniteError("cholesky_with_jitter: non-positive mean diagonal");
  }
  try {
    return CholeskyFactor(a);
  } catch (const NotPositiveDefiniteError&) {
  }
  for (double rel = 1e-8; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    try {
      return CholeskyFactor(a, rel * mean_diag);
    } catch (const NotPositiveDefiniteError&) {
    }
  }
  throw NotPositiveDefiniteError(
      "cholesky_with_jitter: factorization failed with jitter up to 1e-4*mean(diag)");
}

}  // namespace bbmm
