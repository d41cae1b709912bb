#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/operators.hpp"
#include "bbmm/precond.hpp"

namespace bbmm {

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
struct SymTridiagonal {
  Vector diag;
  Vector offdiag;

  std::size_t size() const noexcept { return diag.size(); }

  DenseMatrix to_dense() const {
    DenseMatrix t(size(), size());
    for (std::size_t i = 0; i < size(); ++i) t(i, i) = diag[i];
    for (std::size_t i = 0; i + 1 < size(); ++i) t(i, i + 1) = t(i + 1, i) = offdiag[i];
    return t;
  }
};

struct McbgConfig {
  std::size_t max_iters = 20;
  double tol = 1e-6;
  std::size_t min_iters = 1;

  void validate() const {
    if (max_iters < 1) throw ConfigError("cg: max_iters must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("cg: tol must be positive");
    if (min_iters > max_iters) throw ConfigError("cg: min_iters must not exceed max_iters");
  }
};

/// Lanczos tridiagonal from the CG step sizes alpha_1..alpha_p and direction
/// coefficients beta_1..beta_{p-1} (0-based arrays).
inline SymTridiagonal tridiag_from_coefficients(const Vector& alphas, const Vector& betas) {
  const std::size_t p = alphas.size();
  if (p == 0) return {};
  if (betas.size() + 1 < p) throw ShapeError("tridiag_from_coefficients: need p-1 betas");
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw IndefiniteOperatorError("tridiag_from_coefficients: non-positive alpha");
    }
  }
  for (std::size_t j = 0; j + 1 < p; ++j) {
    if (!(betas[j] >= 0.0) || !std::isfinite(betas[j])) {
      throw NumericError("tridiag_from_coefficients: negative beta");
    }
  }
  SymTridiagonal t;
  t.diag.resize(p);
  t.offdiag.resize(p - 1);
  t.diag[0] = 1.0 / alphas[0];
  for (std::size_t j = 1; j < p; ++j) t.diag[j] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1];
  for (std::size_t j = 0; j + 1 < p; ++j) t.offdiag[j] = std::sqrt(betas[j]) / alphas[j];
  return t;
}

struct PcgResult {
  Vector solution;
  Vector alphas;
  Vector betas;
  bool converged = false;
  std::size_t iterations = 0;
  Vector residual_history;  // relative recursive residual after each iteration
};

/// Called after each iteration with (iteration, current iterate).
using PcgObserver = std::function<void(std::size_t, const Vector&)>;

/// Preconditioned CG on a single right-hand side.
inline PcgResult pcg(const SymmetricOperator& op, const Vector& b, const Preconditioner& precond,
                     const McbgConfig& cfg, const PcgObserver& observer = {}) {
  cfg.validate();
  const std::size_t n = op.size();
  if (b.size() != n || precond.size() != n) throw ShapeError("pcg: size mismatch");
  const double bnorm = norm2(b);
  if (!(bnorm > 0.0)) throw DomainError("pcg: right-hand side is zero");

  PcgResult res;
  res.solution.assign(n, 0.0);
  Vector r = b;
  Vector z = precond.solve(DenseMatrix::column(r)).col(0);
  Vector d = z;
  double rz = dot(r, z);

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const Vector v = op.matmul(DenseMatrix::column(d)).col(0);
    const double dv = dot(d, v);
    if (!(dv > 0.0) || !std::isfinite(dv)) {
      throw IndefiniteOperatorError("pcg: non-positive curvature d^T A d at iteration " +
                                    std::to_string(it));
    }
    const double alpha = rz / dv;
    for (std::size_t i = 0; i < n; ++i) {
      res.solution[i] += alpha * d[i];
      r[i] -= alpha * v[i];
    }
    res.alphas.push_back(alpha);
    res.iterations = it;
    const double rel = norm2(r) / bnorm;
    res.residual_history.push_back(rel);
    if (observer) observer(it, res.solution);
    if ((rel <= cfg.tol && it >= cfg.min_iters) || rel == 0.0) {
      res.converged = true;
      break;
    }
    if (it == cfg.max_iters) break;
    z = precond.solve(DenseMatrix::column(r)).col(0);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) d[i] = z[i] + beta * d[i];
    res.betas.push_back(beta);
  }
  return res;
}

struct McbgOutput {
  DenseMatrix solutions;                    // n x (t+1)
  std::vector<SymTridiagonal> tridiags;     // columns 1..t
  std::size_t iterations_run = 0;
  Vector residual_norms;                    // final relative residual per column
  std::vector<bool> converged;
  Vector initial_weights;                   // r0^T P^{-1} r0 per column
  std::vector<std::size_t> column_iterations;
};

inline std::atomic<std::size_t>& mbcg_call_count() {
  static std::atomic<std::size_t> count{0};
  return count;
}

/// Modified batched CG: independent PCG runs on every column of B driven by
/// one operator matmul per iteration. Column 0 is the target solve; the
/// coefficient histories of columns 1..t yield their Lanczos tridiagonals.
inline McbgOutput mbcg(const SymmetricOperator& op, const DenseMatrix& b,
                       const Preconditioner& precond, const McbgConfig& cfg) {
  cfg.validate();
  ++mbcg_call_count();
  const std::size_t n = op.size();
  if (b.rows() != n || precond.size() != n) throw ShapeError("mbcg: size mismatch");
  const std::size_t cols = b.cols();

  McbgOutput out;
  out.solutions = DenseMatrix(n, cols);
  out.converged.assign(cols, false);
  out.column_iterations.assign(cols, 0);
  out.residual_norms.assign(cols, 0.0);

  DenseMatrix r = b;
  DenseMatrix z = precond.solve(r);
  DenseMatrix d = z;
  Vector rz = column_dots(r, z);
  out.initial_weights = rz;

  Vector bnorm(cols);
  std::vector<Vector> alphas(cols), betas(cols);
  std::size_t active = cols;
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += b(i, c) * b(i, c);
    bnorm[c] = std::sqrt(s);
    if (bnorm[c] == 0.0) {  // zero right-hand side: solution is zero
      out.converged[c] = true;
      --active;
    } else {
      out.residual_norms[c] = 1.0;
    }
  }

  for (std::size_t it = 1; it <= cfg.max_iters && active > 0; ++it) {
    out.iterations_run = it;
    const DenseMatrix v = op.matmul(d);
    const Vector dv = column_dots(d, v);
    Vector rnorm2(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
      if (out.converged[c]) continue;
      if (!(dv[c] > 0.0) || !std::isfinite(dv[c])) {
        throw IndefiniteOperatorError("mbcg: non-positive curvature in column " +
                                      std::to_string(c) + " at iteration " + std::to_string(it));
      }
      alphas[c].push_back(rz[c] / dv[c]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (out.converged[c]) continue;
        const double a = alphas[c].back();
        out.solutions(i, c) += a * d(i, c);
        r(i, c) -= a * v(i, c);
        rnorm2[c] += r(i, c) * r(i, c);
      }
    }
    std::vector<bool> continuing(cols, false);
    for (std::size_t c = 0; c < cols; ++c) {
      if (out.converged[c]) continue;
      const double rel = std::sqrt(rnorm2[c]) / bnorm[c];
      out.residual_norms[c] = rel;
      out.column_iterations[c] = it;
      if ((rel <= cfg.tol && it >= cfg.min_iters) || rel == 0.0) {
        out.converged[c] = true;
        --active;
      } else {
        continuing[c] = true;
      }
    }
    if (active == 0 || it == cfg.max_iters) break;

    z = precond.solve(r);
    const Vector rz_new = column_dots(r, z);
    for (std::size_t c = 0; c < cols; ++c) {
      if (!continuing[c]) continue;
      const double beta = rz_new[c] / rz[c];
      betas[c].push_back(beta);
      rz[c] = rz_new[c];
      for (std::size_t i = 0; i < n; ++i) d(i, c) = z(i, c) + beta * d(i, c);
    }
  }

  out.tridiags.reserve(cols > 0 ? cols - 1 : 0);
  for (std::size_t c = 1; c < cols; ++c) {
    out.tridiags.push_back(tridiag_from_coefficients(alphas[c], betas[c]));
  }
  return out;
}

}  // namespace bbmm
