#pragma once

#include <cmath>
#include <string>

#include "bbmm/errors.hpp"

namespace bbmm {

/// Modified Bessel function of the first kind I_j(eta) from its power series
///   sum_m (eta/2)^(2m+j) / (m! (m+j)!),
/// summed until a term falls below 1e-18 of the partial sum or 200 terms.
inline double bessel_i(int j, double eta) {
  if (j < 0) throw DomainError("bessel_i: order must be non-negative");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("bessel_i: eta must be >= 0");
  if (eta == 0.0) return j == 0 ? 1.0 : 0.0;

  const double half = 0.5 * eta;
  const double log_term0 = j * std::log(half) - std::lgamma(j + 1.0);
  double term = std::exp(log_term0);
  if (!std::isfinite(term)) {
    throw RangeError("bessel_i: overflow for j=" + std::to_string(j) + ", eta=" +
                     std::to_string(eta));
  }
  double sum = term;
  const double q = half * half;
  for (int m = 1; m < 200; ++m) {
    term *= q / (static_cast<double>(m) * static_cast<double>(m + j));
    sum += term;
    if (!std::isfinite(sum)) {
      throw RangeError("bessel_i: overflow for j=" + std::to_string(j) + ", eta=" +
                       std::to_string(eta));
    }
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

}  // namespace bbmm
