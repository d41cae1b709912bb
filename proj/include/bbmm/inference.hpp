#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bbmm/dense.hpp"
#include "bbmm/mbcg.hpp"
#include "bbmm/operators.hpp"
#include "bbmm/precond.hpp"
#include "bbmm/tridiag_eig.hpp"

namespace bbmm {

struct InferenceTerms {
  Vector solve_y;           // K^{-1} y
  double logdet = 0.0;      // log |K|
  Vector trace_terms;       // tr(K^{-1} dK_i) estimates
  DenseMatrix probe_solves; // K^{-1} Z
  std::size_t iterations = 0;
  Vector residual_norms;
  bool y_converged = false;
};

/// Stochastic Lanczos quadrature:
///   (1/t) sum_i w_i * e1^T log(T_i) e1 + precond_logdet,
/// where w_i = z_i^T P^{-1} z_i rescales the unit-norm Lanczos start back to
/// the probe (w_i = ||z_i||^2 without a preconditioner).
inline double slq_logdet(const std::vector<SymTridiagonal>& tridiags, const Vector& weights,
                         double precond_logdet) {
  if (tridiags.empty()) throw DomainError("slq_logdet: no probes");
  if (weights.size() != tridiags.size()) throw ShapeError("slq_logdet: one weight per probe");
  double total = 0.0;
  for (std::size_t i = 0; i < tridiags.size(); ++i) {
    const TridiagEigen eig = tridiag_eig(tridiags[i]);
    double quad = 0.0;
    for (std::size_t j = 0; j < eig.eigenvalues.size(); ++j) {
      const double lambda = eig.eigenvalues[j];
      if (!(lambda > 0.0)) {
        throw IndefiniteOperatorError("slq_logdet: Ritz value " + std::to_string(lambda) +
                                      " <= 0 for probe " + std::to_string(i));
      }
      quad += eig.first_row[j] * eig.first_row[j] * std::log(lambda);
    }
    total += weights[i] * quad;
  }
  const double out = total / static_cast<double>(tridiags.size()) + precond_logdet;
  if (!std::isfinite(out)) throw NumericError("slq_logdet: non-finite estimate");
  return out;
}

/// (1/t) sum_i (K^{-1} z_i)^T (dK z_i) for each derivative operator.
inline Vector hutchinson_traces(const DenseMatrix& probe_solves, const OperatorList& dk_ops,
                                const DenseMatrix& z) {
  if (probe_solves.rows() != z.rows() || probe_solves.cols() != z.cols()) {
    throw ShapeError("hutchinson_traces: probe_solves and Z differ in shape");
  }
  const double t = static_cast<double>(z.cols());
  Vector out;
  out.reserve(dk_ops.size());
  for (const auto& dk : dk_ops) {
    if (dk->size() != z.rows()) throw ShapeError("hutchinson_traces: operator size mismatch");
    const Vector dots = column_dots(probe_solves, dk->matmul(z));
    double s = 0.0;
    for (double v : dots) s += v;
    out.push_back(s / t);
  }
  return out;
}

/// All inference terms from one mbcg call on [y, Z]. The probes must be drawn
/// from the preconditioner's probe distribution (covariance P, or I for the
/// identity preconditioner).
inline InferenceTerms infer_terms_with_probes(const SymmetricOperator& op,
                                              const OperatorList& dk_ops, const Vector& y,
                                              const Preconditioner& precond,
                                              const McbgConfig& cfg, const DenseMatrix& z) {
  const std::size_t n = op.size();
  if (y.size() != n || z.rows() != n) throw ShapeError("infer_terms: size mismatch");
  if (z.cols() == 0) throw DomainError("infer_terms: need t >= 1 probes");
  const std::size_t t = z.cols();

  DenseMatrix b(n, t + 1);
  for (std::size_t i = 0; i < n; ++i) {
    b(i, 0) = y[i];
    for (std::size_t j = 0; j < t; ++j) b(i, j + 1) = z(i, j);
  }
  const McbgOutput run = mbcg(op, b, precond, cfg);

  InferenceTerms terms;
  terms.solve_y = run.solutions.col(0);
  terms.probe_solves = DenseMatrix(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < t; ++j) terms.probe_solves(i, j) = run.solutions(i, j + 1);
  }
  const Vector weights(run.initial_weights.begin() + 1, run.initial_weights.end());
  terms.logdet = slq_logdet(run.tridiags, weights, precond.logdet());
  // With probes of covariance P, pairing K^{-1} z with dK P^{-1} z keeps the
  // estimator unbiased for tr(K^{-1} dK).
  terms.trace_terms = hutchinson_traces(terms.probe_solves, dk_ops, precond.solve(z));
  terms.iterations = run.iterations_run;
  terms.residual_norms = run.residual_norms;
  terms.y_converged = run.converged[0];
  return terms;
}

inline InferenceTerms infer_terms(const SymmetricOperator& op, const OperatorList& dk_ops,
                                  const Vector& y, const Preconditioner& precond,
                                  const McbgConfig& cfg, Rng& rng, std::size_t t) {
  if (t == 0) throw DomainError("infer_terms: need t >= 1 probes");
  const ProbeSample probes = precond.sample_probes(rng, t);
  return infer_terms_with_probes(op, dk_ops, y, precond, cfg, probes.z);
}

}  // namespace bbmm
