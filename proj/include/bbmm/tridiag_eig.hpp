#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "bbmm/mbcg.hpp"

namespace bbmm {

struct TridiagEigen {
  Vector eigenvalues;  // ascending
  Vector first_row;    // e_1^T V, paired with eigenvalues
};

/// Implicit-shift QL on a symmetric tridiagonal. Only the first row of the
/// eigenvector matrix is accumulated, which is all quadrature needs.
inline TridiagEigen tridiag_eig(const SymTridiagonal& t) {
  const std::size_t p = t.size();
  if (p == 0) return {};
  if (t.offdiag.size() + 1 != p) throw ShapeError("tridiag_eig: offdiag must have p-1 entries");

  Vector d = t.diag;
  Vector e(p, 0.0);
  std::copy(t.offdiag.begin(), t.offdiag.end(), e.begin());
  Vector w(p, 0.0);
  w[0] = 1.0;
  for (double v : d) {
    if (!std::isfinite(v)) throw NumericError("tridiag_eig: non-finite entry");
  }

  const auto n = static_cast<std::ptrdiff_t>(p);
  const std::size_t max_sweeps = 30 * p;
  std::size_t sweeps = 0;
  constexpr double eps = std::numeric_limits<double>::epsilon();

  for (std::ptrdiff_t l = 0; l < n; ++l) {
    std::ptrdiff_t m = l;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m == l) break;
      if (++sweeps > max_sweeps) throw NumericError("tridiag_eig: QL iteration did not converge");

      double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
      double r = std::hypot(g, 1.0);
      g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, shift = 0.0;
      std::ptrdiff_t i = m - 1;
      bool deflated = false;
      for (; i >= l; --i) {
        double f = s * e[i];
        const double b = c * e[i];
        r = std::hypot(f, g);
        e[i + 1] = r;
        if (r == 0.0) {
          d[i + 1] -= shift;
          e[m] = 0.0;
          deflated = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[i + 1] - shift;
        r = (d[i] - g) * s + 2.0 * c * b;
        shift = s * r;
        d[i + 1] = g + shift;
        g = c * r - b;
        f = w[i + 1];
        w[i + 1] = s * w[i] + c * f;
        w[i] = c * w[i] - s * f;
      }
      if (deflated) continue;
      d[l] -= shift;
      e[l] = g;
      e[m] = 0.0;
    } while (m != l);
  }

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  TridiagEigen out;
  out.eigenvalues.reserve(p);
  out.first_row.reserve(p);
  for (std::size_t k : order) {
    out.eigenvalues.push_back(d[k]);
    out.first_row.push_back(w[k]);
  }
  return out;
}

}  // namespace bbmm
