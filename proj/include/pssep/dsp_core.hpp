#pragma once

// Framing, STFT/iSTFT, overlap-add checks and frame-rate to sample-rate
// upsampling.
//
// Frames are left-aligned: frame n covers samples [n*hop, n*hop + fft_size).
// Parameter series at frame rate are anchored at frame centres, i.e. sample
// n*hop + hop for the 50 % overlap synthesis grid.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pssep/error.hpp"
#include "pssep/fft.hpp"

namespace pssep {

struct AudioBuffer {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  void validate() const {
    require(sample_rate > 0.0, "sample rate must be positive");
    for (double s : samples) require(std::isfinite(s), "audio contains non-finite samples");
  }
};

namespace dsp {

enum class WindowType { hann, rectangular };

// Periodic window of length n (periodic Hann gives exact COLA at hop n/2, n/4, ...).
inline std::vector<double> make_window(WindowType type, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (type == WindowType::hann) {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 256;
  WindowType window = WindowType::hann;

  std::size_t num_bins() const { return fft_size / 2 + 1; }

  // Number of complete frames in a signal of `length` samples.
  std::size_t num_frames(std::size_t length) const {
    if (length < fft_size) return 0;
    return (length - fft_size) / hop + 1;
  }

  void validate() const {
    require(fft_size >= 2, "fft_size must be at least 2");
    require(hop >= 1 && hop <= fft_size, "hop must be in [1, fft_size]");
  }
};

enum class SpectrumKind { complex, magnitude, log_magnitude };

// F x N time-frequency grid stored frame-major: values[frame * num_bins + bin].
template <typename T>
struct Spectrogram {
  StftConfig config;
  SpectrumKind kind = SpectrumKind::complex;
  std::size_t num_bins = 0;
  std::size_t num_frames = 0;
  std::vector<T> values;

  Spectrogram() = default;
  Spectrogram(const StftConfig& cfg, SpectrumKind k, std::size_t frames)
      : config(cfg), kind(k), num_bins(cfg.num_bins()), num_frames(frames), values(num_bins * frames) {}

  T& operator()(std::size_t bin, std::size_t frame) { return values[frame * num_bins + bin]; }
  const T& operator()(std::size_t bin, std::size_t frame) const { return values[frame * num_bins + bin]; }

  std::span<T> frame(std::size_t n) { return {values.data() + n * num_bins, num_bins}; }
  std::span<const T> frame(std::size_t n) const { return {values.data() + n * num_bins, num_bins}; }
};

using ComplexSpectrogram = Spectrogram<std::complex<double>>;
using MagnitudeSpectrogram = Spectrogram<double>;

inline ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
  cfg.validate();
  require(signal.size() >= cfg.fft_size, "input too short");
  const std::size_t frames = cfg.num_frames(signal.size());
  ComplexSpectrogram spec(cfg, SpectrumKind::complex, frames);
  const auto window = make_window(cfg.window, cfg.fft_size);
  const RealFft& fft = real_fft(cfg.fft_size);
  std::vector<double> buf(cfg.fft_size);
  for (std::size_t n = 0; n < frames; ++n) {
    const double* src = signal.data() + n * cfg.hop;
    for (std::size_t i = 0; i < cfg.fft_size; ++i) buf[i] = src[i] * window[i];
    fft.forward(buf, spec.frame(n));
  }
  return spec;
}

inline ComplexSpectrogram stft(const AudioBuffer& signal, const StftConfig& cfg) {
  return stft(std::span<const double>(signal.samples), cfg);
}

inline MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram out(spec.config, SpectrumKind::magnitude, spec.num_frames);
  std::transform(spec.values.begin(), spec.values.end(), out.values.begin(),
                 [](const std::complex<double>& z) { return std::abs(z); });
  return out;
}

// Interior sum of the window shifted by multiples of hop, one value per phase.
inline std::vector<double> overlap_sums(std::span<const double> window, std::size_t hop) {
  require(hop >= 1, "hop must be positive");
  std::vector<double> sums(hop, 0.0);
  for (std::size_t t = 0; t < hop; ++t)
    for (std::size_t i = t; i < window.size(); i += hop) sums[t] += window[i];
  return sums;
}

// True when the hop-shifted window sums to a constant (within 1e-10 relative).
inline bool check_cola(std::span<const double> window, std::size_t hop) {
  if (hop == 0 || hop > window.size()) return false;
  const auto sums = overlap_sums(window, hop);
  const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
  const double mean = (*lo + *hi) / 2.0;
  if (!(mean > 0.0)) return false;
  return (*hi - *lo) <= 1e-10 * mean;
}

inline bool check_cola(const StftConfig& cfg) {
  const auto w = make_window(cfg.window, cfg.fft_size);
  return check_cola(w, cfg.hop);
}

// Samples of a (num_frames)-frame signal that every overlapping frame covers.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline SampleRange interior_range(const StftConfig& cfg, std::size_t num_frames) {
  SampleRange r;
  r.begin = cfg.fft_size - cfg.hop;
  r.end = num_frames * cfg.hop;
  if (r.end < r.begin) r.end = r.begin;
  return r;
}

// Overlap-add inverse of stft(). Frames are inverse transformed and summed
// without a synthesis window; the result is divided by the COLA constant.
// Output has `length` samples (default: (N-1)*hop + fft_size).
inline std::vector<double> istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t length = 0) {
  cfg.validate();
  require(spec.num_bins == cfg.num_bins(), "spectrogram does not match STFT configuration");
  const auto window = make_window(cfg.window, cfg.fft_size);
  require(check_cola(window, cfg.hop), "STFT configuration does not satisfy constant overlap-add");
  const double cola = overlap_sums(window, cfg.hop).front();

  const std::size_t natural = spec.num_frames == 0 ? 0 : (spec.num_frames - 1) * cfg.hop + cfg.fft_size;
  if (length == 0) length = natural;
  std::vector<double> out(length, 0.0);
  const RealFft& fft = real_fft(cfg.fft_size);
  std::vector<double> buf(cfg.fft_size);
  const double scale = 1.0 / (static_cast<double>(cfg.fft_size) * cola);
  for (std::size_t n = 0; n < spec.num_frames; ++n) {
    fft.inverse(spec.frame(n), buf);
    const std::size_t start = n * cfg.hop;
    for (std::size_t i = 0; i < cfg.fft_size && start + i < length; ++i) out[start + i] += buf[i] * scale;
  }
  return out;
}

// Number of parameter frames on the synthesis grid for a signal of `length`
// samples: ceil(length / hop).
inline std::size_t model_frame_count(std::size_t length, std::size_t hop) {
  require(hop > 0, "hop must be positive");
  return (length + hop - 1) / hop;
}

// Piecewise-linear interpolation of a frame-rate series to `total_len`
// samples. Frame n sits at sample n*hop + center_offset; values are held
// constant before the first and after the last frame centre.
inline std::vector<double> linear_upsample(std::span<const double> frames, std::size_t hop, std::size_t total_len,
                                           std::size_t center_offset) {
  require(!frames.empty(), "cannot upsample an empty series");
  require(total_len > 0, "total length must be positive");
  require(hop > 0, "hop must be positive");
  std::vector<double> out(total_len);
  const std::size_t n_frames = frames.size();
  for (std::size_t t = 0; t < total_len; ++t) {
    const double pos = (static_cast<double>(t) - static_cast<double>(center_offset)) / static_cast<double>(hop);
    if (pos <= 0.0) {
      out[t] = frames.front();
    } else if (pos >= static_cast<double>(n_frames - 1)) {
      out[t] = frames.back();
    } else {
      const auto i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      out[t] = frames[i] + frac * (frames[i + 1] - frames[i]);
    }
  }
  return out;
}

inline std::vector<double> linear_upsample(std::span<const double> frames, std::size_t hop, std::size_t total_len) {
  return linear_upsample(frames, hop, total_len, hop);
}

namespace detail {

// Calls fn(frame_index, weight) for the (at most two) frames contributing to
// sample t of a Hann-window upsampled series.
template <typename Fn>
void hann_upsample_weights(std::size_t t, std::size_t n_frames, std::size_t hop, Fn&& fn) {
  const std::size_t first_center = hop;
  const std::size_t last_center = n_frames * hop;
  if (t < first_center) {
    fn(std::size_t{0}, 1.0);
    return;
  }
  if (t >= last_center) {
    fn(n_frames - 1, 1.0);
    return;
  }
  // Between centres of frames k and k+1; frame k's Hann bump (length 2*hop,
  // starting at k*hop) is on its falling half.
  const std::size_t k = t / hop - 1;
  const double u = static_cast<double>(t - (k + 1) * hop) / static_cast<double>(hop);
  const double rising = 0.5 - 0.5 * std::cos(std::numbers::pi * u);
  fn(k, 1.0 - rising);
  fn(k + 1, rising);
}

}  // namespace detail

// Upsamples with overlapping Hann windows of length 2*hop centred on each
// frame centre: out(t) = sum_n frames[n] * w(t - n*hop). Values are held
// before the first and after the last centre.
inline std::vector<double> hann_upsample(std::span<const double> frames, std::size_t hop, std::size_t total_len) {
  require(!frames.empty(), "cannot upsample an empty series");
  require(hop > 0, "hop must be positive");
  std::vector<double> out(total_len, 0.0);
  for (std::size_t t = 0; t < total_len; ++t)
    detail::hann_upsample_weights(t, frames.size(), hop, [&](std::size_t n, double w) { out[t] += w * frames[n]; });
  return out;
}

// Transpose of hann_upsample: maps a gradient at sample rate back to frames.
inline std::vector<double> hann_upsample_adjoint(std::span<const double> grad, std::size_t n_frames, std::size_t hop) {
  std::vector<double> out(n_frames, 0.0);
  for (std::size_t t = 0; t < grad.size(); ++t)
    detail::hann_upsample_weights(t, n_frames, hop, [&](std::size_t n, double w) { out[n] += w * grad[t]; });
  return out;
}

}  // namespace dsp
}  // namespace pssep
