#pragma once

// Harmonics-plus-noise excitation shaped by fixed FIR filters and a
// frame-wise all-pole filter:
//
//   e(n, t) = [alpha(t) h(t)] * r(t) + [w(t) * d(t)] g(n)
//   s(n, t) = e(n, t) - sum_k a_k(n) s(n, t - k)
//
// Frames are T' samples long with hop B = T'/2 and are Hann-windowed and
// overlap-added after filtering.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"
#include "pssep/fft.hpp"
#include "pssep/lsf_allpole.hpp"

namespace pssep::synth {

struct SynthConfig {
  double sample_rate = 16000.0;
  std::size_t frame_len = 512;      // T'
  std::size_t hop = 256;            // B
  std::size_t lpc_order = 20;       // K
  std::size_t num_harmonics = 80;   // I
  std::size_t noise_mag_len = 65;   // L
  std::size_t noise_ir_len = 128;
  std::size_t rolloff_mag_len = 129;
  std::size_t rolloff_ir_len = 256;
  double rolloff_ref_hz = 200.0;
  double rolloff_db_per_octave = 6.0;

  std::size_t fir_fft_size() const { return 2 * frame_len; }

  void validate() const {
    require(sample_rate > 0.0, "sample rate must be positive");
    require(frame_len >= 4 && frame_len == 2 * hop, "synthesis frames need hop = frame_len / 2");
    require(lpc_order >= 2 && lpc_order % 2 == 0, "LPC order must be even and >= 2");
    require(noise_mag_len >= 2 && rolloff_mag_len >= 2, "filter magnitude length must be >= 2");
    require(noise_ir_len >= 1 && noise_ir_len <= frame_len + 1, "noise IR must fit the FIR block size");
    require(rolloff_ir_len >= 1 && rolloff_ir_len <= frame_len + 1, "roll-off IR must fit the FIR block size");
  }
};

// Constrained per-source parameters at frame rate.
struct SourceParams {
  std::vector<double> alpha;      // harmonic amplitude per frame
  std::vector<double> gain;       // noise gain per frame
  std::vector<double> lsf;        // num_frames x order, row-major
  std::vector<double> noise_mag;  // single-sided magnitude samples of d(t)
  std::size_t order = 0;

  std::size_t num_frames() const { return alpha.size(); }
  std::span<const double> lsf_frame(std::size_t n) const { return {lsf.data() + n * order, order}; }

  void validate() const {
    const std::size_t n = alpha.size();
    require(gain.size() == n, "gain length does not match alpha");
    require(order > 0 && lsf.size() == n * order, "LSF array does not match frames x order");
    for (double v : alpha) require(std::isfinite(v) && v >= 0.0, "harmonic amplitudes must be >= 0");
    for (double v : gain) require(std::isfinite(v) && v >= 0.0, "noise gains must be >= 0");
    for (double v : noise_mag) require(std::isfinite(v) && v >= 0.0, "noise magnitudes must be >= 0");
    for (std::size_t f = 0; f < n; ++f) lsf::validate_lsf(lsf_frame(f));
  }
};

// F0 trajectory at frame rate in Hz; 0 marks silence.
struct F0Track {
  std::vector<double> f0;
  std::size_t source_index = 0;
};

// Sample-rate F0 from frame-rate values, anchored at frame centres.
inline std::vector<double> upsample_f0(std::span<const double> f0_frames, const SynthConfig& cfg, std::size_t length) {
  return dsp::linear_upsample(f0_frames, cfg.hop, length, cfg.frame_len / 2);
}

// h(t) = sum_i sin(phi_i(t)), phi_i(t) = 2 pi i sum_{v<t} f0(v) / fs.
// Harmonics above fs/2 at time t contribute nothing.
inline std::vector<double> harmonic_signal(std::span<const double> f0_samples, std::size_t num_harmonics, double fs) {
  std::vector<double> h(f0_samples.size(), 0.0);
  const double nyquist = fs / 2.0;
  const double two_pi = 2.0 * std::numbers::pi;
  double phase = 0.0;
  for (std::size_t t = 0; t < f0_samples.size(); ++t) {
    const double f0 = f0_samples[t];
    require(f0 >= 0.0, "F0 must be non-negative");
    if (f0 > 0.0) {
      double acc = 0.0;
      for (std::size_t i = 1; i <= num_harmonics; ++i) {
        if (static_cast<double>(i) * f0 > nyquist) break;
        acc += std::sin(static_cast<double>(i) * phase);
      }
      h[t] = acc;
    }
    phase = std::fmod(phase + two_pi * f0 / fs, two_pi);
  }
  return h;
}

// Matrix D (ir_len x L, row-major) with ir = D * mag for fir_from_magnitude.
inline std::vector<double> fir_design_matrix(std::size_t mag_len, std::size_t ir_len) {
  require(mag_len >= 2, "need at least two magnitude samples");
  const std::size_t n = 2 * (mag_len - 1);
  const auto window = dsp::make_window(dsp::WindowType::hann, ir_len);
  std::vector<double> d(ir_len * mag_len, 0.0);
  const auto centre = static_cast<long>(ir_len / 2);
  for (std::size_t j = 0; j < ir_len; ++j) {
    const long lag = static_cast<long>(j) - centre;
    if (std::labs(lag) > static_cast<long>(n / 2)) continue;
    const std::size_t tau = static_cast<std::size_t>((lag % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n));
    for (std::size_t l = 0; l < mag_len; ++l) {
      const double weight = (l == 0 || l == mag_len - 1) ? 1.0 : 2.0;
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(l * tau % n) / static_cast<double>(n);
      d[j * mag_len + l] = window[j] * weight * std::cos(phase) / static_cast<double>(n);
    }
  }
  return d;
}

// Zero-phase frequency-sampling design, made causal (delay ir_len/2) and
// Hann-windowed to ir_len taps.
inline std::vector<double> fir_from_magnitude(std::span<const double> mag, std::size_t ir_len) {
  require(mag.size() >= 2, "need at least two magnitude samples");
  for (double m : mag) require(m >= 0.0, "filter magnitudes must be non-negative");
  const auto d = fir_design_matrix(mag.size(), ir_len);
  std::vector<double> ir(ir_len, 0.0);
  for (std::size_t j = 0; j < ir_len; ++j)
    for (std::size_t l = 0; l < mag.size(); ++l) ir[j] += d[j * mag.size() + l] * mag[l];
  return ir;
}

// Flat below ref_hz, then falling at rate_db_per_octave (6 dB/octave is the
// 1/f law) on L bins spanning 0..fs/2.
inline std::vector<double> rolloff_response(std::size_t mag_len, double fs, double ref_hz = 200.0,
                                            double rate_db_per_octave = 6.0) {
  require(mag_len >= 2, "need at least two magnitude samples");
  std::vector<double> mag(mag_len);
  for (std::size_t l = 0; l < mag_len; ++l) {
    const double f = static_cast<double>(l) * fs / (2.0 * static_cast<double>(mag_len - 1));
    mag[l] = f <= ref_hz ? 1.0 : std::pow(ref_hz / f, rate_db_per_octave / 6.0);
  }
  return mag;
}

inline std::vector<double> rolloff_ir(const SynthConfig& cfg) {
  return fir_from_magnitude(
      rolloff_response(cfg.rolloff_mag_len, cfg.sample_rate, cfg.rolloff_ref_hz, cfg.rolloff_db_per_octave),
      cfg.rolloff_ir_len);
}

// Causal linear convolution truncated to x.size(), computed block-wise in
// the frequency domain (overlap-add) with the given FFT size.
inline std::vector<double> fir_filter(std::span<const double> x, std::span<const double> ir, std::size_t fft_size) {
  require(!ir.empty() && ir.size() <= fft_size, "impulse response longer than FFT");
  const std::size_t block = fft_size - ir.size() + 1;
  const RealFft& fft = real_fft(fft_size);
  std::vector<double> buf(fft_size, 0.0);
  std::copy(ir.begin(), ir.end(), buf.begin());
  std::vector<std::complex<double>> ir_spec(fft.bins()), spec(fft.bins());
  fft.forward(buf, ir_spec);
  std::vector<double> out(x.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(fft_size);
  for (std::size_t start = 0; start < x.size(); start += block) {
    const std::size_t count = std::min(block, x.size() - start);
    std::fill(buf.begin(), buf.end(), 0.0);
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(start), count, buf.begin());
    fft.forward(buf, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= ir_spec[k];
    fft.inverse(spec, buf);
    for (std::size_t i = 0; i < fft_size && start + i < x.size(); ++i) out[start + i] += buf[i] * scale;
  }
  return out;
}

// Gradient of fir_filter with respect to its input signal.
inline std::vector<double> fir_filter_adjoint_input(std::span<const double> grad_y, std::span<const double> ir,
                                                    std::size_t fft_size) {
  std::vector<double> rev(grad_y.rbegin(), grad_y.rend());
  auto out = fir_filter(rev, ir, fft_size);
  std::reverse(out.begin(), out.end());
  return out;
}

// Gradient of fir_filter with respect to the taps.
inline std::vector<double> fir_filter_adjoint_taps(std::span<const double> grad_y, std::span<const double> x,
                                                   std::size_t ir_len) {
  std::vector<double> g(ir_len, 0.0);
  for (std::size_t k = 0; k < ir_len; ++k) {
    double acc = 0.0;
    for (std::size_t t = k; t < grad_y.size(); ++t) acc += grad_y[t] * x[t - k];
    g[k] = acc;
  }
  return g;
}

// Per-source seed derived from a run seed (splitmix64 finalizer).
inline std::uint64_t source_seed(std::uint64_t seed, std::size_t source) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(source) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform white noise in [-1, 1); identical for identical seeds on any platform.
inline std::vector<double> white_noise(std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> w(length);
  for (auto& v : w) v = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
  return w;
}

// Frames the excitation: e(n, t) = x_harm(nB + t) + g(n) x_noise(nB + t),
// with x_harm = [alpha h] * r and x_noise = w * d.
inline lsf::FramedSignal frame_excitation(std::span<const double> x_harm, std::span<const double> x_noise,
                                          std::span<const double> gain_frames, const SynthConfig& cfg) {
  require(x_harm.size() == x_noise.size(), "harmonic and noise branches differ in length");
  lsf::FramedSignal e(cfg.frame_len, cfg.hop, gain_frames.size());
  const std::size_t len = x_harm.size();
  for (std::size_t n = 0; n < e.num_frames; ++n) {
    auto frame = e.frame(n);
    const std::size_t start = n * cfg.hop;
    for (std::size_t t = 0; t < cfg.frame_len && start + t < len; ++t)
      frame[t] = x_harm[start + t] + gain_frames[n] * x_noise[start + t];
  }
  return e;
}

inline lsf::FramedSignal excitation(std::span<const double> alpha_t, std::span<const double> h_t,
                                    std::span<const double> r_ir, std::span<const double> noise,
                                    std::span<const double> d_ir, std::span<const double> gain_frames,
                                    const SynthConfig& cfg) {
  require(alpha_t.size() == h_t.size() && noise.size() == h_t.size(), "excitation inputs differ in length");
  require(dsp::model_frame_count(h_t.size(), cfg.hop) == gain_frames.size(), "gain frames do not cover the signal");
  std::vector<double> harm(h_t.size());
  for (std::size_t t = 0; t < harm.size(); ++t) harm[t] = alpha_t[t] * h_t[t];
  const auto x_harm = fir_filter(harm, r_ir, cfg.fir_fft_size());
  const auto x_noise = fir_filter(noise, d_ir, cfg.fir_fft_size());
  return frame_excitation(x_harm, x_noise, gain_frames, cfg);
}

// LPC coefficients for every frame, row-major (num_frames x order).
inline std::vector<double> lpc_frames(const SourceParams& params) {
  std::vector<double> coeffs(params.lsf.size());
  for (std::size_t n = 0; n < params.num_frames(); ++n) {
    const auto a = lsf::lsf_to_lpc(params.lsf_frame(n));
    std::copy(a.begin(), a.end(), coeffs.begin() + static_cast<std::ptrdiff_t>(n * params.order));
  }
  return coeffs;
}

inline std::vector<double> synthesize_source(const SourceParams& params, const F0Track& f0, const SynthConfig& cfg,
                                             std::size_t length, std::uint64_t noise_seed) {
  cfg.validate();
  params.validate();
  require(params.order == cfg.lpc_order, "LSF order does not match configuration");
  require(params.noise_mag.size() == cfg.noise_mag_len, "noise magnitude length does not match configuration");
  require(f0.f0.size() == params.num_frames(), "F0 track and parameters differ in frame count");
  require(dsp::model_frame_count(length, cfg.hop) == params.num_frames(), "frame count does not match signal length");

  const auto f0_t = upsample_f0(f0.f0, cfg, length);
  const auto h = harmonic_signal(f0_t, cfg.num_harmonics, cfg.sample_rate);
  const auto alpha_t = dsp::hann_upsample(params.alpha, cfg.hop, length);
  const auto noise = white_noise(length, noise_seed);
  const auto d_ir = fir_from_magnitude(params.noise_mag, cfg.noise_ir_len);
  const auto e = excitation(alpha_t, h, rolloff_ir(cfg), noise, d_ir, params.gain, cfg);
  return lsf::allpole_filter_frames(e, lpc_frames(params), params.order, length);
}

// Synthesizes every source; source j uses noise seed source_seed(seed, j).
inline std::vector<std::vector<double>> synthesize_sources(std::span<const SourceParams> params,
                                                           std::span<const F0Track> f0s, const SynthConfig& cfg,
                                                           std::size_t length, std::uint64_t seed) {
  require(!params.empty(), "J must be >= 1");
  require(params.size() == f0s.size(), "one F0 track per source is required");
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (std::size_t j = 0; j < params.size(); ++j)
    out.push_back(synthesize_source(params[j], f0s[j], cfg, length, source_seed(seed, j)));
  return out;
}

inline std::vector<double> synthesize_mixture(std::span<const SourceParams> params, std::span<const F0Track> f0s,
                                              const SynthConfig& cfg, std::size_t length, std::uint64_t seed) {
  const auto sources = synthesize_sources(params, f0s, cfg, length, seed);
  std::vector<double> mix(length, 0.0);
  for (const auto& s : sources)
    for (std::size_t t = 0; t < length; ++t) mix[t] += s[t];
  return mix;
}

}  // namespace pssep::synth
