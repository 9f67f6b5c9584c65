#pragma once

// SI-SDR, frame-wise evaluation on non-overlapping 1 s frames, and a
// magnitude-domain ("spectral") variant of the SNR.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"

namespace pssep::metrics {

inline constexpr double kCapDb = 100.0;

// 10 log10(|a s|^2 / |a s - est|^2) with a = <est, s> / |s|^2, capped at +100 dB.
inline double si_sdr(std::span<const double> est, std::span<const double> ref) {
  require(est.size() == ref.size(), "signals differ in length");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    ref_energy += ref[i] * ref[i];
  }
  if (!(ref_energy > 0.0)) throw Error("silent reference");
  const double a = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = a * ref[i];
    target += s * s;
    residual += (s - est[i]) * (s - est[i]);
  }
  if (residual <= 0.0) return kCapDb;
  if (target <= 0.0) return -kCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kCapDb, kCapDb);
}

struct FrameResult {
  std::size_t index = 0;
  double start_s = 0.0;
  double ref_energy = 0.0;
  bool excluded = false;
  double si_sdr_db = std::numeric_limits<double>::quiet_NaN();
};

struct FramewiseReport {
  std::vector<FrameResult> frames;
  std::size_t retained = 0;
  std::size_t excluded = 0;
  double mean_db = std::numeric_limits<double>::quiet_NaN();
  double median_db = std::numeric_limits<double>::quiet_NaN();
};

// Non-overlapping frames of frame_len samples; a trailing partial frame is
// dropped. Frames whose reference energy (sum of squares) is below
// energy_thresh are excluded.
inline FramewiseReport framewise_eval(std::span<const double> est, std::span<const double> ref,
                                      std::size_t frame_len = 16000, double energy_thresh = 10.0,
                                      double sample_rate = 16000.0) {
  require(est.size() == ref.size(), "signals differ in length");
  require(frame_len > 0, "frame length must be positive");
  FramewiseReport rep;
  std::vector<double> values;
  const std::size_t count = ref.size() / frame_len;
  for (std::size_t f = 0; f < count; ++f) {
    FrameResult r;
    r.index = f;
    r.start_s = static_cast<double>(f * frame_len) / sample_rate;
    const auto e = est.subspan(f * frame_len, frame_len);
    const auto s = ref.subspan(f * frame_len, frame_len);
    for (double v : s) r.ref_energy += v * v;
    r.excluded = r.ref_energy < energy_thresh;
    if (r.excluded) {
      ++rep.excluded;
    } else {
      r.si_sdr_db = si_sdr(e, s);
      values.push_back(r.si_sdr_db);
      ++rep.retained;
    }
    rep.frames.push_back(r);
  }
  if (!values.empty()) {
    double sum = 0.0;
    for (double v : values) sum += v;
    rep.mean_db = sum / static_cast<double>(values.size());
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    rep.median_db = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  }
  return rep;
}

// 10 log10(sum |S|^2 / sum (|S| - |S^|)^2) over magnitude spectrograms.
inline double spectral_snr(std::span<const double> est, std::span<const double> ref,
                           const dsp::StftConfig& cfg = {2048, 256, dsp::WindowType::hann}) {
  require(est.size() == ref.size(), "signals differ in length");
  const auto s = dsp::magnitude(dsp::stft(ref, cfg));
  const auto e = dsp::magnitude(dsp::stft(est, cfg));
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < s.values.size(); ++c) {
    num += s.values[c] * s.values[c];
    den += (s.values[c] - e.values[c]) * (s.values[c] - e.values[c]);
  }
  if (!(num > 0.0)) throw Error("silent reference");
  if (den <= 0.0) return kCapDb;
  return std::min(10.0 * std::log10(num / den), kCapDb);
}

}  // namespace pssep::metrics
