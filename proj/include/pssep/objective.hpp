#pragma once

// Multi-scale spectral reconstruction loss
//   L_c = ||M_c - M~_c||_1 + ||log M_c - log M~_c||_1,   L = sum_c L_c
// over Hann STFTs with 75 % overlap. Norms are sums over all bins and frames.

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"
#include "pssep/fft.hpp"

namespace pssep::objective {

inline const std::vector<std::size_t> kDefaultScales = {2048, 1024, 512, 256, 128, 64};

// Magnitudes are clamped to this floor before taking logarithms.
inline constexpr double kLogFloor = 1e-7;

struct ScaleLoss {
  double linear = 0.0;
  double log = 0.0;
};

struct LossBreakdown {
  std::map<std::size_t, ScaleLoss> per_scale;
  double total = 0.0;
};

inline dsp::StftConfig scale_config(std::size_t fft_size) {
  require(fft_size >= 4 && fft_size % 4 == 0, "loss FFT sizes must be multiples of 4");
  return dsp::StftConfig{fft_size, fft_size / 4, dsp::WindowType::hann};
}

namespace detail {

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace detail

// Loss against a fixed target; target spectrograms are computed once.
class MultiscaleLoss {
 public:
  explicit MultiscaleLoss(std::span<const double> target, std::vector<std::size_t> scales = kDefaultScales)
      : length_(target.size()), scales_(std::move(scales)) {
    require(!scales_.empty(), "at least one loss scale is required");
    for (std::size_t c : scales_) targets_.push_back(dsp::magnitude(dsp::stft(target, scale_config(c))));
  }

  std::size_t length() const { return length_; }
  const std::vector<std::size_t>& scales() const { return scales_; }

  // Evaluates the loss of `estimate`; when `grad` is non-empty the gradient
  // with respect to the estimate's samples is written into it.
  LossBreakdown evaluate(std::span<const double> estimate, std::span<double> grad = {}) const {
    require(estimate.size() == length_, "estimate and target differ in length");
    const bool want_grad = !grad.empty();
    if (want_grad) {
      require(grad.size() == length_, "gradient buffer has the wrong length");
      std::fill(grad.begin(), grad.end(), 0.0);
    }
    LossBreakdown out;
    for (std::size_t s = 0; s < scales_.size(); ++s) {
      const auto cfg = scale_config(scales_[s]);
      const auto& target = targets_[s];
      const auto window = dsp::make_window(cfg.window, cfg.fft_size);
      const RealFft& fft = real_fft(cfg.fft_size);
      std::vector<double> buf(cfg.fft_size);
      std::vector<std::complex<double>> spec(cfg.num_bins());
      ScaleLoss term;
      for (std::size_t n = 0; n < target.num_frames; ++n) {
        const std::size_t start = n * cfg.hop;
        for (std::size_t i = 0; i < cfg.fft_size; ++i) buf[i] = estimate[start + i] * window[i];
        fft.forward(buf, spec);
        const auto ref = target.frame(n);
        for (std::size_t k = 0; k < spec.size(); ++k) {
          const double mag = std::abs(spec[k]);
          const double diff = mag - ref[k];
          const double log_diff = std::log(std::max(mag, kLogFloor)) - std::log(std::max(ref[k], kLogFloor));
          term.linear += std::abs(diff);
          term.log += std::abs(log_diff);
          if (!want_grad) continue;
          double d_mag = detail::sign(diff);
          if (mag > kLogFloor) d_mag += detail::sign(log_diff) / mag;
          std::complex<double> g = mag > 0.0 ? spec[k] * (d_mag / mag) : std::complex<double>(0.0);
          // Pack for the Hermitian inverse so it yields Re sum_k g_k e^{+i theta}.
          if (k == 0 || 2 * k == cfg.fft_size)
            g = {g.real(), 0.0};
          else
            g *= 0.5;
          spec[k] = g;
        }
        if (!want_grad) continue;
        fft.inverse(spec, buf);
        for (std::size_t i = 0; i < cfg.fft_size; ++i) grad[start + i] += buf[i] * window[i];
      }
      out.per_scale[scales_[s]] = term;
      out.total += term.linear + term.log;
    }
    return out;
  }

 private:
  std::size_t length_;
  std::vector<std::size_t> scales_;
  std::vector<dsp::MagnitudeSpectrogram> targets_;
};

inline LossBreakdown multiscale_loss(std::span<const double> target, std::span<const double> estimate,
                                     const std::vector<std::size_t>& scales = kDefaultScales) {
  require(target.size() == estimate.size(), "signals differ in length");
  return MultiscaleLoss(target, scales).evaluate(estimate);
}

}  // namespace pssep::objective
