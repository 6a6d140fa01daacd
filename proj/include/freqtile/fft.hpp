// Thin RAII layer over FFTW's complex multi-dimensional transforms.

#ifndef FREQTILE_FFT_HPP
#define FREQTILE_FFT_HPP

#include <fftw3.h>

#include <map>
#include <mutex>

#include "freqtile/common.hpp"

namespace freqtile {

/// 16-byte aligned complex buffer from fftw_malloc.
class FftBuffer {
 public:
  explicit FftBuffer(std::size_t n) : n_(n), data_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data_) throw std::bad_alloc();
    std::fill_n(reinterpret_cast<double*>(data_), 2 * n, 0.0);
  }
  ~FftBuffer() { fftw_free(data_); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;

  std::size_t size() const { return n_; }
  Complex* data() { return reinterpret_cast<Complex*>(data_); }
  const Complex* data() const { return reinterpret_cast<const Complex*>(data_); }
  Complex& operator[](std::size_t i) { return data()[i]; }
  const Complex& operator[](std::size_t i) const { return data()[i]; }
  fftw_complex* raw() { return data_; }

 private:
  std::size_t n_;
  fftw_complex* data_;
};

/// In-place transform of an M^d row-major array: out[k] = sum_m in[m] exp(sign 2 pi i k.m / M).
/// Plans are created once per (M, d, sign) under a lock; execution is thread-safe.
inline void fft_inplace(FftBuffer& buf, int M, std::size_t d, int sign) {
  static std::mutex mutex;
  static std::map<std::tuple<int, std::size_t, int>, fftw_plan> plans;
  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) total *= static_cast<std::size_t>(M);
  if (buf.size() != total) throw DomainError("fft: buffer size does not match M^d");
  fftw_plan plan;
  {
    std::lock_guard lock(mutex);
    auto key = std::make_tuple(M, d, sign);
    auto it = plans.find(key);
    if (it == plans.end()) {
      std::vector<int> dims(d, M);
      FftBuffer scratch(total);
      plan = fftw_plan_dft(static_cast<int>(d), dims.data(), scratch.raw(), scratch.raw(),
                           sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
      plans.emplace(key, plan);
    } else {
      plan = it->second;
    }
  }
  fftw_execute_dft(plan, buf.raw(), buf.raw());
}

/// Row-major multi-index iteration over {0..M-1}^d.
inline void unravel(std::size_t flat, int M, std::size_t d, std::array<int, kMaxDim>& idx) {
  for (std::size_t i = d; i-- > 0;) {
    idx[i] = static_cast<int>(flat % static_cast<std::size_t>(M));
    flat /= static_cast<std::size_t>(M);
  }
}

}  // namespace freqtile

#endif  // FREQTILE_FFT_HPP
