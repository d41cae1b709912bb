#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>

#include <fftw3.h>

#include "bbmm/dense.hpp"

namespace bbmm {

/// First column of a symmetric Toeplitz matrix; entry (i, j) is c[|i - j|].
class ToeplitzColumn {
 public:
  explicit ToeplitzColumn(Vector c) : c_(std::move(c)) {
    if (c_.empty()) throw ShapeError("ToeplitzColumn: empty column");
    require_finite(c_, "ToeplitzColumn");
  }

  std::size_t size() const noexcept { return c_.size(); }
  std::span<const double> values() const noexcept { return c_; }
  double operator[](std::size_t k) const noexcept { return c_[k]; }

  double entry(std::size_t i, std::size_t j) const noexcept {
    return c_[i > j ? i - j : j - i];
  }

  DenseMatrix materialize() const {
    DenseMatrix out(size(), size());
    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j = 0; j < size(); ++j) out(i, j) = entry(i, j);
    }
    return out;
  }

 private:
  Vector c_;
};

namespace detail {

// The FFTW planner is not re-entrant; execution with fresh arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using FftwPlan = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

template <typename T>
struct FftwFree {
  void operator()(T* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree<T>>;

template <typename T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

// Symmetric Toeplitz multiply through a circulant embedding of size
// next_pow2(2m). The circulant spectrum and the FFT plans are built once, so
// apply() is const and may be called concurrently.
class CirculantEmbedding {
 public:
  explicit CirculantEmbedding(const ToeplitzColumn& column)
      : m_(column.size()), fft_size_(detail::next_pow2(2 * column.size())) {
    const std::size_t n = fft_size_;
    const std::size_t half = n / 2 + 1;
    auto real = detail::fftw_alloc<double>(n);
    auto spec = detail::fftw_alloc<fftw_complex>(half);
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), real.get(), spec.get(),
                                          FFTW_ESTIMATE));
      inverse_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), spec.get(), real.get(),
                                          FFTW_ESTIMATE));
    }
    if (!forward_ || !inverse_) throw NumericError("CirculantEmbedding: FFT planning failed");

    std::fill(real.get(), real.get() + n, 0.0);
    for (std::size_t k = 0; k < m_; ++k) real[k] = column[k];
    for (std::size_t k = 1; k < m_; ++k) real[n - k] = column[k];
    fftw_execute_dft_r2c(forward_.get(), real.get(), spec.get());
    // A symmetric circulant has a real spectrum; fold in the 1/n of the
    // unnormalized inverse transform here.
    spectrum_.resize(half);
    for (std::size_t k = 0; k < half; ++k) spectrum_[k] = spec[k][0] / static_cast<double>(n);
  }

  std::size_t size() const noexcept { return m_; }
  std::size_t fft_size() const noexcept { return fft_size_; }

  DenseMatrix apply(const DenseMatrix& m) const {
    if (m.rows() != m_) {
      throw ShapeError("toeplitz multiply: expected " + std::to_string(m_) +
                       " rows, got " + std::to_string(m.rows()));
    }
    const std::size_t n = fft_size_;
    const std::size_t half = n / 2 + 1;
    auto real = detail::fftw_alloc<double>(n);
    auto spec = detail::fftw_alloc<fftw_complex>(half);
    DenseMatrix out(m_, m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::fill(real.get(), real.get() + n, 0.0);
      for (std::size_t i = 0; i < m_; ++i) real[i] = m(i, j);
      fftw_execute_dft_r2c(forward_.get(), real.get(), spec.get());
      for (std::size_t k = 0; k < half; ++k) {
        spec[k][0] *= spectrum_[k];
        spec[k][1] *= spectrum_[k];
      }
      fftw_execute_dft_c2r(inverse_.get(), spec.get(), real.get());
      for (std::size_t i = 0; i < m_; ++i) out(i, j) = real[i];
    }
    return out;
  }

 private:
  std::size_t m_;
  std::size_t fft_size_;
  Vector spectrum_;
  detail::FftwPlan forward_;
  detail::FftwPlan inverse_;
};

/// T(c) * M in O(t m log m).
inline DenseMatrix toeplitz_matmul(const ToeplitzColumn& c, const DenseMatrix& m) {
  return CirculantEmbedding(c).apply(m);
}

}  // namespace bbmm
