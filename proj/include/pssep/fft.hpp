#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "pssep/error.hpp"

namespace pssep {

// Real-input DFT of a fixed length, backed by FFTW.
//
// forward() computes X[k] = sum_n x[n] exp(-2 pi i k n / N) for k = 0..N/2.
// inverse() computes the unnormalized Hermitian inverse, so
// inverse(forward(x)) == N * x.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    require(n >= 2, "FFT size must be at least 2");
    std::vector<double> real(n);
    std::vector<std::complex<double>> spec(n / 2 + 1);
    auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data(), cplx, flags);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real.data(), flags);
    require(forward_ != nullptr && inverse_ != nullptr, "FFTW planning failed");
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    require(in.size() == n_ && out.size() == bins(), "RealFft::forward size mismatch");
    // FFTW does not modify the input of an out-of-place r2c transform.
    fftw_execute_dft_r2c(forward_, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
  }

  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
    require(in.size() == bins() && out.size() == n_, "RealFft::inverse size mismatch");
    // c2r destroys its input.
    thread_local std::vector<std::complex<double>> scratch;
    scratch.assign(in.begin(), in.end());
    fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
  }

 private:
  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

// Process-wide plan cache. Planning is serialized; execution is thread-safe.
inline const RealFft& real_fft(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

}  // namespace pssep
