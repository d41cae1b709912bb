#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include "bbmm/dense.hpp"

namespace bbmm {

/// Sparse n x m matrix with at most four nonzeros per row.
class SparseInterpolation {
 public:
  static constexpr std::size_t kMaxNonzeros = 4;

  struct Entry {
    std::size_t col = 0;
    double weight = 0.0;
  };

  SparseInterpolation(std::size_t rows, std::size_t cols) : cols_(cols), rows_(rows) {
    if (rows == 0 || cols == 0) throw ShapeError("SparseInterpolation: empty shape");
  }

  std::size_t rows() const noexcept { return rows_.size(); }
  std::size_t cols() const noexcept { return cols_; }

  void set_row(std::size_t i, std::span<const Entry> entries) {
    if (i >= rows_.size()) throw IndexError("SparseInterpolation::set_row: row out of range");
    if (entries.size() > kMaxNonzeros) {
      throw ShapeError("SparseInterpolation: more than four nonzeros in a row");
    }
    Row r;
    for (const Entry& e : entries) {
      if (e.col >= cols_) throw IndexError("SparseInterpolation: column index out of range");
      if (!std::isfinite(e.weight)) throw NumericError("SparseInterpolation: non-finite weight");
      r.entries[r.count++] = e;
    }
    rows_[i] = r;
  }

  std::span<const Entry> row(std::size_t i) const noexcept {
    return {rows_[i].entries.data(), rows_[i].count};
  }

  /// True when every row's weights sum to one within tol.
  bool partition_of_unity(double tol = 1e-12) const {
    return std::all_of(rows_.begin(), rows_.end(), [tol](const Row& r) {
      double s = 0.0;
      for (std::size_t k = 0; k < r.count; ++k) s += r.entries[k].weight;
      return std::abs(s - 1.0) <= tol;
    });
  }

  /// W * M, M is m x t.
  DenseMatrix apply(const DenseMatrix& m) const {
    if (m.rows() != cols_) throw ShapeError("SparseInterpolation::apply: row mismatch");
    DenseMatrix out(rows(), m.cols());
    for (std::size_t i = 0; i < rows(); ++i) {
      auto dst = out.row(i);
      for (const Entry& e : row(i)) {
        auto src = m.row(e.col);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += e.weight * src[j];
      }
    }
    return out;
  }

  /// W^T * M, M is n x t.
  DenseMatrix apply_transpose(const DenseMatrix& m) const {
    if (m.rows() != rows()) throw ShapeError("SparseInterpolation::apply_transpose: row mismatch");
    DenseMatrix out(cols_, m.cols());
    for (std::size_t i = 0; i < rows(); ++i) {
      auto src = m.row(i);
      for (const Entry& e : row(i)) {
        auto dst = out.row(e.col);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += e.weight * src[j];
      }
    }
    return out;
  }

  DenseMatrix to_dense() const {
    DenseMatrix out(rows(), cols_);
    for (std::size_t i = 0; i < rows(); ++i) {
      for (const Entry& e : row(i)) out(i, e.col) += e.weight;
    }
    return out;
  }

 private:
  struct Row {
    std::array<Entry, kMaxNonzeros> entries{};
    std::size_t count = 0;
  };

  std::size_t cols_;
  std::vector<Row> rows_;
};

/// Regular 1-D grid of `size` nodes at start + j * spacing.
struct UniformGrid {
  double start = 0.0;
  double spacing = 1.0;
  std::size_t size = 0;

  double node(std::size_t j) const noexcept { return start + spacing * static_cast<double>(j); }
};

/// m nodes covering [min x - h, max x + h] where h is the node spacing, so
/// every input has two grid neighbours on each side.
inline UniformGrid make_interpolation_grid(std::span<const double> x, std::size_t m) {
  if (m < 4) throw DomainError("interpolation grid needs at least 4 nodes");
  if (x.empty()) throw DataError("interpolation grid: no inputs");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  double h = (*hi - *lo) / static_cast<double>(m - 3);
  if (!(h > 0.0)) h = 1.0;  // all inputs coincide
  return UniformGrid{*lo - h, h, m};
}

/// Keys cubic-convolution kernel with a = -0.5.
inline double keys_cubic_weight(double s) {
  constexpr double a = -0.5;
  s = std::abs(s);
  if (s <= 1.0) return ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0;
  if (s < 2.0) return ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a;
  return 0.0;
}

/// Local cubic-convolution weights of each x onto the grid. Neighbours that
/// fall off the grid are clamped onto the edge node, and each row is
/// renormalized so its weights sum to one.
inline SparseInterpolation cubic_interpolation(const UniformGrid& grid,
                                               std::span<const double> x) {
  if (grid.size < 4) throw DomainError("cubic_interpolation: grid needs at least 4 nodes");
  SparseInterpolation w(x.size(), grid.size);
  const auto last = static_cast<std::ptrdiff_t>(grid.size) - 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericError("cubic_interpolation: non-finite input");
    const double u = (x[i] - grid.start) / grid.spacing;
    auto base = static_cast<std::ptrdiff_t>(std::floor(u));
    double s = u - static_cast<double>(base);
    // Snap inputs that sit on a node to exact one-hot rows.
    if (s < 1e-12) {
      s = 0.0;
    } else if (1.0 - s < 1e-12) {
      ++base;
      s = 0.0;
    }

    std::array<SparseInterpolation::Entry, 4> entries{};
    std::size_t count = 0;
    double total = 0.0;
    for (std::ptrdiff_t off = -1; off <= 2; ++off) {
      const double wgt = keys_cubic_weight(s - static_cast<double>(off));
      if (wgt == 0.0) continue;
      const auto col = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(base + off, 0, last));
      total += wgt;
      auto it = std::find_if(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(count),
                             [col](const auto& e) { return e.col == col; });
      if (it != entries.begin() + static_cast<std::ptrdiff_t>(count)) {
        it->weight += wgt;
      } else {
        entries[count++] = {col, wgt};
      }
    }
    for (std::size_t k = 0; k < count; ++k) entries[k].weight /= total;
    w.set_row(i, std::span<const SparseInterpolation::Entry>(entries.data(), count));
  }
  return w;
}

}  // namespace bbmm
