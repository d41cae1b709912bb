#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/interpolation.hpp"
#include "bbmm/toeplitz.hpp"

namespace bbmm {

// The blackbox: a symmetric n x n matrix known only through products with
// tall dense matrices, plus row and diagonal access. Implementations are
// immutable after construction, so every method is safe to call concurrently.
class SymmetricOperator {
 public:
  virtual ~SymmetricOperator() = default;

  virtual std::size_t size() const = 0;

  virtual DenseMatrix matmul(const DenseMatrix& m) const = 0;

  // Fallback: one product with a unit vector.
  virtual Vector row(std::size_t i) const {
    DenseMatrix e(size(), 1);
    e(i, 0) = 1.0;
    return matmul(e).col(0);
  }

  virtual Vector diag() const {
    Vector d(size());
    for (std::size_t i = 0; i < size(); ++i) d[i] = row(i)[i];
    return d;
  }

  /// Dense materialization via matmul(I); for tests and small oracles.
  DenseMatrix to_dense() const { return matmul(DenseMatrix::identity(size())); }

 protected:
  void check_rows(const DenseMatrix& m, const char* who) const {
    if (m.rows() != size()) {
      throw ShapeError(std::string(who) + ": operator is " + std::to_string(size()) +
                       "x" + std::to_string(size()) + ", operand has " +
                       std::to_string(m.rows()) + " rows");
    }
  }
};

using OperatorPtr = std::shared_ptr<const SymmetricOperator>;
using OperatorList = std::vector<OperatorPtr>;

/// Row i of the operator, with range checking.
inline Vector operator_row(const SymmetricOperator& op, std::size_t i) {
  if (i >= op.size()) {
    throw IndexError("operator_row: index " + std::to_string(i) + " out of range for size " +
                     std::to_string(op.size()));
  }
  return op.row(i);
}

class DenseSymmetricOperator final : public SymmetricOperator {
 public:
  explicit DenseSymmetricOperator(DenseMatrix a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw ShapeError("DenseSymmetricOperator: matrix not square");
    require_finite(a_, "DenseSymmetricOperator");
  }

  std::size_t size() const override { return a_.rows(); }
  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "DenseSymmetricOperator::matmul");
    return dense_matmul(a_, m);
  }
  Vector row(std::size_t i) const override {
    auto r = a_.row(i);
    return {r.begin(), r.end()};
  }
  Vector diag() const override {
    Vector d(size());
    for (std::size_t i = 0; i < size(); ++i) d[i] = a_(i, i);
    return d;
  }
  const DenseMatrix& matrix() const noexcept { return a_; }

 private:
  DenseMatrix a_;
};

/// c * I
class ScaledIdentityOperator final : public SymmetricOperator {
 public:
  ScaledIdentityOperator(std::size_t n, double c) : n_(n), c_(c) {
    if (n == 0) throw ShapeError("ScaledIdentityOperator: empty");
  }
  std::size_t size() const override { return n_; }
  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "ScaledIdentityOperator::matmul");
    return c_ * m;
  }
  Vector row(std::size_t i) const override {
    Vector r(n_, 0.0);
    r[i] = c_;
    return r;
  }
  Vector diag() const override { return Vector(n_, c_); }
  double scale() const noexcept { return c_; }

 private:
  std::size_t n_;
  double c_;
};

/// F F^T + shift * I, e.g. Bayesian linear regression with features F.
class LowRankPlusDiagonalOperator final : public SymmetricOperator {
 public:
  LowRankPlusDiagonalOperator(DenseMatrix factor, double shift)
      : f_(std::move(factor)), shift_(shift) {
    if (f_.empty()) throw ShapeError("LowRankPlusDiagonalOperator: empty factor");
  }
  std::size_t size() const override { return f_.rows(); }
  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "LowRankPlusDiagonalOperator::matmul");
    DenseMatrix proj(f_.cols(), m.cols());
    proj.map().noalias() = f_.map().transpose() * m.map();
    DenseMatrix out = dense_matmul(f_, proj);
    out.axpy(shift_, m);
    return out;
  }
  Vector row(std::size_t i) const override {
    Eigen::VectorXd r = f_.map() * f_.map().row(static_cast<Eigen::Index>(i)).transpose();
    Vector out(r.data(), r.data() + r.size());
    out[i] += shift_;
    return out;
  }
  Vector diag() const override {
    Vector d(size());
    for (std::size_t i = 0; i < size(); ++i) d[i] = dot(f_.row(i), f_.row(i)) + shift_;
    return d;
  }

 private:
  DenseMatrix f_;
  double shift_;
};

class ToeplitzOperator final : public SymmetricOperator {
 public:
  explicit ToeplitzOperator(ToeplitzColumn c) : c_(std::move(c)), embedding_(c_) {}
  std::size_t size() const override { return c_.size(); }
  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "ToeplitzOperator::matmul");
    return embedding_.apply(m);
  }
  Vector row(std::size_t i) const override {
    Vector r(size());
    for (std::size_t j = 0; j < size(); ++j) r[j] = c_.entry(i, j);
    return r;
  }
  Vector diag() const override { return Vector(size(), c_[0]); }

 private:
  ToeplitzColumn c_;
  CirculantEmbedding embedding_;
};

/// W T(c) W^T + sigma2 * I with sparse W and Toeplitz grid covariance T(c).
class SkiOperator final : public SymmetricOperator {
 public:
  SkiOperator(SparseInterpolation w, ToeplitzColumn c, double sigma2)
      : w_(std::move(w)), c_(std::move(c)), embedding_(c_), sigma2_(sigma2) {
    if (w_.cols() != c_.size()) {
      throw ShapeError("SkiOperator: interpolation has " + std::to_string(w_.cols()) +
                       " columns but grid has " + std::to_string(c_.size()) + " nodes");
    }
    if (!(sigma2 >= 0.0)) throw DomainError("SkiOperator: sigma2 must be non-negative");
  }

  std::size_t size() const override { return w_.rows(); }

  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "SkiOperator::matmul");
    DenseMatrix out = w_.apply(embedding_.apply(w_.apply_transpose(m)));
    if (sigma2_ != 0.0) out.axpy(sigma2_, m);
    return out;
  }

  // w_i T(c) is four grid columns summed (O(m)); then W scatters it (O(n)).
  Vector row(std::size_t i) const override {
    const std::size_t m = c_.size();
    Vector v(m, 0.0);
    for (const auto& e : w_.row(i)) {
      for (std::size_t b = 0; b < m; ++b) v[b] += e.weight * c_.entry(e.col, b);
    }
    Vector r(size(), 0.0);
    for (std::size_t j = 0; j < size(); ++j) {
      double s = 0.0;
      for (const auto& e : w_.row(j)) s += e.weight * v[e.col];
      r[j] = s;
    }
    r[i] += sigma2_;
    return r;
  }

  Vector diag() const override {
    Vector d(size());
    for (std::size_t i = 0; i < size(); ++i) {
      double s = 0.0;
      for (const auto& a : w_.row(i)) {
        for (const auto& b : w_.row(i)) s += a.weight * b.weight * c_.entry(a.col, b.col);
      }
      d[i] = s + sigma2_;
    }
    return d;
  }

  const SparseInterpolation& interpolation() const noexcept { return w_; }
  const ToeplitzColumn& grid_column() const noexcept { return c_; }
  double sigma2() const noexcept { return sigma2_; }

 private:
  SparseInterpolation w_;
  ToeplitzColumn c_;
  CirculantEmbedding embedding_;
  double sigma2_;
};

/// Subset-of-regressors covariance K_XU K_UU^{-1} K_XU^T + sigma2 * I.
/// K_UU is factored once (with the escalating jitter schedule); the
/// whitened cross covariance L^{-1} K_XU^T is cached for O(nm) rows.
class SorOperator final : public SymmetricOperator {
 public:
  SorOperator(DenseMatrix k_xu, const DenseMatrix& k_uu, double sigma2)
      : k_xu_(std::move(k_xu)), chol_(cholesky_with_jitter(k_uu)), sigma2_(sigma2) {
    if (k_uu.rows() != k_uu.cols() || k_uu.rows() != k_xu_.cols()) {
      throw ShapeError("SorOperator: K_UU must be m x m with m = K_XU columns");
    }
    if (!(sigma2 >= 0.0)) throw DomainError("SorOperator: sigma2 must be non-negative");
    whitened_ = chol_.solve_lower(transpose(k_xu_));
  }

  std::size_t size() const override { return k_xu_.rows(); }

  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "SorOperator::matmul");
    DenseMatrix proj(k_xu_.cols(), m.cols());
    proj.map().noalias() = k_xu_.map().transpose() * m.map();
    DenseMatrix out = dense_matmul(k_xu_, chol_.solve(proj));
    if (sigma2_ != 0.0) out.axpy(sigma2_, m);
    return out;
  }

  Vector row(std::size_t i) const override {
    Eigen::VectorXd r = whitened_.map().transpose() *
                        whitened_.map().col(static_cast<Eigen::Index>(i));
    Vector out(r.data(), r.data() + r.size());
    out[i] += sigma2_;
    return out;
  }

  Vector diag() const override {
    Vector d(size(), sigma2_);
    for (std::size_t k = 0; k < whitened_.rows(); ++k) {
      auto r = whitened_.row(k);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += r[i] * r[i];
    }
    return d;
  }

  const CholeskyFactor& inducing_factor() const noexcept { return chol_; }
  const DenseMatrix& cross_covariance() const noexcept { return k_xu_; }

 private:
  DenseMatrix k_xu_;
  CholeskyFactor chol_;
  DenseMatrix whitened_;
  double sigma2_;
};

/// Derivative of the SoR covariance given derivatives of K_XU and K_UU:
/// dK_XU A^{-1} K_UX + K_XU A^{-1} dK_UX - K_XU A^{-1} dK_UU A^{-1} K_UX.
class SorDerivativeOperator final : public SymmetricOperator {
 public:
  SorDerivativeOperator(DenseMatrix k_xu, DenseMatrix dk_xu, CholeskyFactor k_uu_factor,
                        DenseMatrix dk_uu)
      : k_xu_(std::move(k_xu)),
        dk_xu_(std::move(dk_xu)),
        chol_(std::move(k_uu_factor)),
        dk_uu_(std::move(dk_uu)) {
    if (k_xu_.rows() != dk_xu_.rows() || k_xu_.cols() != dk_xu_.cols() ||
        dk_uu_.rows() != k_xu_.cols() || dk_uu_.cols() != k_xu_.cols()) {
      throw ShapeError("SorDerivativeOperator: inconsistent shapes");
    }
  }

  std::size_t size() const override { return k_xu_.rows(); }

  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "SorDerivativeOperator::matmul");
    DenseMatrix ut_m(k_xu_.cols(), m.cols());
    ut_m.map().noalias() = k_xu_.map().transpose() * m.map();
    DenseMatrix dut_m(k_xu_.cols(), m.cols());
    dut_m.map().noalias() = dk_xu_.map().transpose() * m.map();

    DenseMatrix g = chol_.solve(ut_m);              // A^{-1} K_UX M
    DenseMatrix inner = chol_.solve(dut_m);         // A^{-1} dK_UX M
    inner -= chol_.solve(dense_matmul(dk_uu_, g));  // - A^{-1} dK_UU A^{-1} K_UX M

    DenseMatrix out = dense_matmul(dk_xu_, g);
    out += dense_matmul(k_xu_, inner);
    return out;
  }

 private:
  DenseMatrix k_xu_;
  DenseMatrix dk_xu_;
  CholeskyFactor chol_;
  DenseMatrix dk_uu_;
};

/// sum_i a_i A_i
class SumOperator final : public SymmetricOperator {
 public:
  struct Term {
    double coefficient;
    OperatorPtr op;
  };

  explicit SumOperator(std::vector<Term> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw ShapeError("SumOperator: no terms");
    for (const Term& t : terms_) {
      if (!t.op || t.op->size() != terms_.front().op->size()) {
        throw ShapeError("SumOperator: terms must share a size");
      }
    }
  }

  std::size_t size() const override { return terms_.front().op->size(); }

  DenseMatrix matmul(const DenseMatrix& m) const override {
    check_rows(m, "SumOperator::matmul");
    DenseMatrix out = terms_.front().coefficient * terms_.front().op->matmul(m);
    for (std::size_t k = 1; k < terms_.size(); ++k) {
      out.axpy(terms_[k].coefficient, terms_[k].op->matmul(m));
    }
    return out;
  }

  Vector row(std::size_t i) const override {
    Vector out(size(), 0.0);
    for (const Term& t : terms_) {
      Vector r = t.op->row(i);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += t.coefficient * r[j];
    }
    return out;
  }

  Vector diag() const override {
    Vector out(size(), 0.0);
    for (const Term& t : terms_) {
      Vector d = t.op->diag();
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += t.coefficient * d[j];
    }
    return out;
  }

 private:
  std::vector<Term> terms_;
};

inline OperatorPtr scaled(double a, OperatorPtr op) {
  return std::make_shared<SumOperator>(std::vector<SumOperator::Term>{{a, std::move(op)}});
}

/// a * A + B
inline OperatorPtr axpy(double a, OperatorPtr x, OperatorPtr y) {
  return std::make_shared<SumOperator>(
      std::vector<SumOperator::Term>{{a, std::move(x)}, {1.0, std::move(y)}});
}

/// (W T(c) W^T + sigma2 I) M. sigma2 = 0 is allowed (noiseless grid kernel).
inline DenseMatrix ski_matmul(const SparseInterpolation& w, const ToeplitzColumn& c,
                              double sigma2, const DenseMatrix& m) {
  if (!(sigma2 >= 0.0)) throw DomainError("ski_matmul: sigma2 must be non-negative");
  return SkiOperator(w, c, sigma2).matmul(m);
}

/// (K_XU K_UU^{-1} K_XU^T + sigma2 I) M, evaluated right to left.
inline DenseMatrix sor_matmul(const DenseMatrix& k_xu, const DenseMatrix& k_uu, double sigma2,
                              const DenseMatrix& m) {
  if (!(sigma2 >= 0.0)) throw DomainError("sor_matmul: sigma2 must be non-negative");
  return SorOperator(k_xu, k_uu, sigma2).matmul(m);
}

}  // namespace bbmm
