#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/operators.hpp"

namespace bbmm {

using Rng = std::mt19937_64;

enum class ProbeDistribution { rademacher, gaussian_preconditioned };

struct ProbeSample {
  DenseMatrix z;
  ProbeDistribution distribution = ProbeDistribution::rademacher;
};

/// Rank-k pivoted Cholesky factor of a PSD matrix K, K ~ L L^T.
struct PivotedCholesky {
  DenseMatrix factor;                // n x rank, empty when rank == 0
  std::vector<std::size_t> pivots;   // in selection order
  double residual_trace = 0.0;       // tr(K - L L^T)
  Vector residual_diag;              // diag(K - L L^T)

  std::size_t rank() const noexcept { return pivots.size(); }
  std::size_t size() const noexcept { return residual_diag.size(); }
};

using RowAccessor = std::function<Vector(std::size_t)>;

/// Greedy pivoted Cholesky reading one row of K per step. Stops early once the
/// largest remaining Schur-complement diagonal drops below 1e-12 times the
/// largest initial diagonal.
inline PivotedCholesky pivoted_cholesky(const RowAccessor& row_of, const Vector& diag,
                                        std::size_t k) {
  const std::size_t n = diag.size();
  if (n == 0) throw ShapeError("pivoted_cholesky: empty diagonal");
  if (k < 1 || k > n) {
    throw DomainError("pivoted_cholesky: rank must satisfy 1 <= k <= n (k=" + std::to_string(k) +
                      ", n=" + std::to_string(n) + ")");
  }
  for (double v : diag) {
    if (!std::isfinite(v)) throw NumericError("pivoted_cholesky: non-finite diagonal");
    if (v < -1e-8) throw NotPositiveDefiniteError("pivoted_cholesky: negative diagonal entry");
  }

  Vector d = diag;
  const double initial_max = *std::max_element(d.begin(), d.end());
  std::vector<Vector> cols;
  std::vector<std::size_t> pivots;
  cols.reserve(k);
  pivots.reserve(k);

  for (std::size_t m = 0; m < k; ++m) {
    const auto it = std::max_element(d.begin(), d.end());  // first max = lowest index
    const double pivot_value = *it;
    if (pivot_value < -1e-8) {
      throw NotPositiveDefiniteError("pivoted_cholesky: negative pivot " +
                                     std::to_string(pivot_value));
    }
    if (!(pivot_value > 0.0) || pivot_value < 1e-12 * initial_max) break;
    const auto piv = static_cast<std::size_t>(it - d.begin());

    Vector row = row_of(piv);
    if (row.size() != n) throw ShapeError("pivoted_cholesky: row accessor returned wrong length");
    for (std::size_t l = 0; l < m; ++l) {
      const double lp = cols[l][piv];
      const Vector& cl = cols[l];
      for (std::size_t i = 0; i < n; ++i) row[i] -= lp * cl[i];
    }
    const double root = std::sqrt(pivot_value);
    for (double& v : row) v /= root;
    for (std::size_t i = 0; i < n; ++i) d[i] -= row[i] * row[i];
    d[piv] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(d[i])) throw NumericError("pivoted_cholesky: non-finite Schur diagonal");
      if (d[i] < -1e-8 * std::max(1.0, initial_max)) {
        throw NotPositiveDefiniteError("pivoted_cholesky: Schur complement not PSD at row " +
                                       std::to_string(i));
      }
    }
    cols.push_back(std::move(row));
    pivots.push_back(piv);
  }

  PivotedCholesky out;
  out.pivots = std::move(pivots);
  if (!cols.empty()) {
    out.factor = DenseMatrix(n, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) out.factor.set_col(j, cols[j]);
  }
  out.residual_trace = 0.0;
  for (double v : d) out.residual_trace += v;
  out.residual_diag = std::move(d);
  return out;
}

/// Pivoted Cholesky of the noiseless part op - shift*I of an operator.
inline PivotedCholesky pivoted_cholesky(const SymmetricOperator& op, double shift, std::size_t k) {
  Vector diag = op.diag();
  for (double& v : diag) v = std::max(v - shift, 0.0);
  return pivoted_cholesky(
      [&op, shift](std::size_t i) {
        Vector r = op.row(i);
        r[i] -= shift;
        return r;
      },
      diag, k);
}

namespace detail {

/// Cholesky of the k x k core I + sigma^-2 L^T L shared by solve and logdet.
inline CholeskyFactor woodbury_core(const DenseMatrix& l, double sigma2) {
  DenseMatrix core(l.cols(), l.cols());
  core.map().noalias() = l.map().transpose() * l.map();
  core *= 1.0 / sigma2;
  for (std::size_t i = 0; i < core.rows(); ++i) core(i, i) += 1.0;
  try {
    return CholeskyFactor(core);
  } catch (const NotPositiveDefiniteError&) {
    throw NumericError("precond: Woodbury core factorization failed");
  }
}

inline void require_positive_sigma2(double sigma2, const char* who) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw DomainError(std::string(who) + ": sigma2 must be positive");
  }
}

inline DenseMatrix woodbury_solve(const DenseMatrix& l, const CholeskyFactor* core, double sigma2,
                                  const DenseMatrix& m) {
  DenseMatrix out = m;
  out *= 1.0 / sigma2;
  if (l.empty()) return out;
  DenseMatrix proj(l.cols(), m.cols());
  proj.map().noalias() = l.map().transpose() * m.map();
  DenseMatrix inner = core->solve(proj);
  out.axpy(-1.0 / (sigma2 * sigma2), dense_matmul(l, inner));
  return out;
}

}  // namespace detail

/// (L L^T + sigma2 I)^{-1} M by the Woodbury identity.
inline DenseMatrix precond_solve(const PivotedCholesky& pc, double sigma2, const DenseMatrix& m) {
  detail::require_positive_sigma2(sigma2, "precond_solve");
  if (m.rows() != pc.size()) throw ShapeError("precond_solve: row mismatch");
  if (pc.factor.empty()) return detail::woodbury_solve(pc.factor, nullptr, sigma2, m);
  const CholeskyFactor core = detail::woodbury_core(pc.factor, sigma2);
  return detail::woodbury_solve(pc.factor, &core, sigma2, m);
}

/// log|L L^T + sigma2 I| by the matrix determinant lemma.
inline double precond_logdet(const PivotedCholesky& pc, double sigma2) {
  detail::require_positive_sigma2(sigma2, "precond_logdet");
  const double base = static_cast<double>(pc.size()) * std::log(sigma2);
  if (pc.factor.empty()) return base;
  return detail::woodbury_core(pc.factor, sigma2).logdet() + base;
}

inline DenseMatrix rademacher_probes(Rng& rng, std::size_t n, std::size_t t) {
  DenseMatrix z(n, t);
  for (double& v : z.values()) v = (rng() >> 63) != 0 ? 1.0 : -1.0;
  return z;
}

/// Probes with E[z z^T] = I (no factor) or = L L^T + sigma2 I.
inline ProbeSample sample_probes(const PivotedCholesky* pc, double sigma2, Rng& rng,
                                 std::size_t t, std::size_t n) {
  if (t == 0) throw DomainError("sample_probes: need t >= 1");
  if (pc == nullptr) return {rademacher_probes(rng, n, t), ProbeDistribution::rademacher};
  detail::require_positive_sigma2(sigma2, "sample_probes");
  if (pc->size() != n) throw ShapeError("sample_probes: factor size mismatch");

  std::normal_distribution<double> normal;
  const std::size_t k = pc->factor.empty() ? 0 : pc->factor.cols();
  const double sigma = std::sqrt(sigma2);
  DenseMatrix z(n, t);
  Vector w1(k);
  for (std::size_t j = 0; j < t; ++j) {
    for (double& v : w1) v = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      double s = sigma * normal(rng);
      for (std::size_t l = 0; l < k; ++l) s += pc->factor(i, l) * w1[l];
      z(i, j) = s;
    }
  }
  return {std::move(z), ProbeDistribution::gaussian_preconditioned};
}

class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual std::size_t size() const = 0;
  virtual DenseMatrix solve(const DenseMatrix& m) const = 0;
  virtual double logdet() const = 0;
  virtual ProbeSample sample_probes(Rng& rng, std::size_t t) const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
 public:
  explicit IdentityPreconditioner(std::size_t n) : n_(n) {}
  std::size_t size() const override { return n_; }
  DenseMatrix solve(const DenseMatrix& m) const override {
    if (m.rows() != n_) throw ShapeError("IdentityPreconditioner::solve: row mismatch");
    return m;
  }
  double logdet() const override { return 0.0; }
  ProbeSample sample_probes(Rng& rng, std::size_t t) const override {
    return bbmm::sample_probes(nullptr, 0.0, rng, t, n_);
  }

 private:
  std::size_t n_;
};

/// P = L L^T + sigma2 I with the k x k Woodbury core factored once.
class PivotedCholeskyPreconditioner final : public Preconditioner {
 public:
  PivotedCholeskyPreconditioner(PivotedCholesky pc, double sigma2)
      : pc_(std::move(pc)), sigma2_(sigma2) {
    detail::require_positive_sigma2(sigma2, "PivotedCholeskyPreconditioner");
    if (!pc_.factor.empty()) core_.emplace(detail::woodbury_core(pc_.factor, sigma2_));
    logdet_ = static_cast<double>(pc_.size()) * std::log(sigma2_) +
              (core_ ? core_->logdet() : 0.0);
  }

  std::size_t size() const override { return pc_.size(); }
  DenseMatrix solve(const DenseMatrix& m) const override {
    if (m.rows() != size()) throw ShapeError("PivotedCholeskyPreconditioner::solve: row mismatch");
    return detail::woodbury_solve(pc_.factor, core_ ? &*core_ : nullptr, sigma2_, m);
  }
  double logdet() const override { return logdet_; }
  ProbeSample sample_probes(Rng& rng, std::size_t t) const override {
    return bbmm::sample_probes(&pc_, sigma2_, rng, t, size());
  }

  const PivotedCholesky& decomposition() const noexcept { return pc_; }
  double sigma2() const noexcept { return sigma2_; }

  /// Materialized L L^T + sigma2 I, for tests and dense diagnostics.
  DenseMatrix to_dense() const {
    DenseMatrix p(size(), size());
    if (!pc_.factor.empty()) p.map().noalias() = pc_.factor.map() * pc_.factor.map().transpose();
    for (std::size_t i = 0; i < size(); ++i) p(i, i) += sigma2_;
    return p;
  }

 private:
  PivotedCholesky pc_;
  double sigma2_;
  std::optional<CholeskyFactor> core_;
  double logdet_ = 0.0;
};

using PreconditionerPtr = std::shared_ptr<const Preconditioner>;

/// Rank-k preconditioner for op = K + sigma2 I; rank 0 gives the identity.
inline PreconditionerPtr make_preconditioner(const SymmetricOperator& op, double sigma2,
                                             std::size_t rank) {
  if (rank == 0) return std::make_shared<IdentityPreconditioner>(op.size());
  return std::make_shared<PivotedCholeskyPreconditioner>(
      pivoted_cholesky(op, sigma2, std::min(rank, op.size())), sigma2);
}

}  // namespace bbmm
