#pragma once

// F0-informed NMF baseline. One harmonic template per pitch on a 0.1
// semitone grid; activations start at 1 where a track sits on that pitch,
// at a small floor within half a semitone of it, and at 0 elsewhere.
// Multiplicative KL updates keep those zeros, so the F0 tracks constrain
// the fit. Each activation is then handed to the source whose pitch is
// nearest and the per-source reconstructions drive soft masks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"
#include "pssep/f0_pipeline.hpp"
#include "pssep/separation.hpp"
#include "pssep/synth_model.hpp"

namespace pssep::nmf {

struct NmfConfig {
  dsp::StftConfig stft = sep::default_mask_config();
  double sample_rate = 16000.0;
  std::size_t partials = 20;
  double grid_semitones = 0.1;
  double blur_sigma_bins = 1.0;  // Gaussian over the nearest bin +-1
  double neighbour_semitones = 0.5;
  double activation_floor = 1e-4;
  std::size_t iters = 200;
  // Added to W*H everywhere so the divergence stays finite in bins no
  // template reaches. A constant component does not break monotonicity.
  double model_floor = 1e-12;
};

struct NmfModel {
  Eigen::MatrixXd W;  // F x R
  Eigen::MatrixXd H;  // R x N
  std::vector<double> template_pitch;  // MIDI, one per column of W
  std::vector<double> divergence;      // after init and after every iteration
};

inline double quantize_midi(double midi, double grid) { return std::round(midi / grid) * grid; }

// Harmonic comb with partial p at amplitude 1/p, normalized to unit sum.
inline Eigen::VectorXd harmonic_template(double midi, const NmfConfig& cfg) {
  const std::size_t bins = cfg.stft.num_bins();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bins));
  const double f0 = f0::midi_to_hz(midi);
  for (std::size_t p = 1; p <= cfg.partials; ++p) {
    const double hz = f0 * static_cast<double>(p);
    if (hz >= cfg.sample_rate / 2) break;
    const double k = hz * static_cast<double>(cfg.stft.fft_size) / cfg.sample_rate;
    const auto centre = static_cast<long>(std::lround(k));
    for (long b = centre - 1; b <= centre + 1; ++b) {
      if (b < 0 || b >= static_cast<long>(bins)) continue;
      const double d = (static_cast<double>(b) - k) / cfg.blur_sigma_bins;
      w[b] += std::exp(-0.5 * d * d) / static_cast<double>(p);
    }
  }
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

// Quantized MIDI pitch of each track at each STFT frame (NaN when silent).
// `tracks` are on the synthesis grid of `synth`; each STFT frame (on the
// padded signal layout) takes the nearest synthesis frame, with edge hold.
inline std::vector<std::vector<double>> frame_pitches(const std::vector<synth::F0Track>& tracks,
                                                      const synth::SynthConfig& synth, const NmfConfig& cfg,
                                                      const sep::PadLayout& layout, std::size_t stft_frames) {
  std::vector<std::vector<double>> out(tracks.size(),
                                       std::vector<double>(stft_frames, std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t j = 0; j < tracks.size(); ++j) {
    const auto& f = tracks[j].f0;
    if (f.empty()) continue;
    for (std::size_t m = 0; m < stft_frames; ++m) {
      const double centre = static_cast<double>(m * cfg.stft.hop + cfg.stft.fft_size / 2) -
                            static_cast<double>(layout.front);
      const double pos = (centre - static_cast<double>(synth.frame_len / 2)) / static_cast<double>(synth.hop);
      const double idx = std::clamp(std::round(pos), 0.0, static_cast<double>(f.size() - 1));
      const auto midi = f0::hz_to_midi(f[static_cast<std::size_t>(idx)]);
      if (midi) out[j][m] = quantize_midi(*midi, cfg.grid_semitones);
    }
  }
  return out;
}

// Generalized KL divergence D(V | W H + floor).
inline double kl_divergence(const Eigen::MatrixXd& V, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H,
                            double floor) {
  const Eigen::MatrixXd L = (W * H).array() + floor;
  double d = 0.0;
  for (Eigen::Index c = 0; c < V.cols(); ++c)
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
      const double v = V(r, c), l = L(r, c);
      d += (v > 0.0 ? v * std::log(v / l) : 0.0) - v + l;
    }
  return d;
}

inline Eigen::MatrixXd to_matrix(const dsp::MagnitudeSpectrogram& m) {
  // Spectrogram storage is frame-major, i.e. column-major F x N.
  return Eigen::Map<const Eigen::MatrixXd>(m.values.data(), static_cast<Eigen::Index>(m.num_bins),
                                           static_cast<Eigen::Index>(m.num_frames));
}

inline NmfModel init_from_f0(const std::vector<std::vector<double>>& pitches, const NmfConfig& cfg) {
  std::map<long, double> grid;  // grid index -> MIDI, sorted
  std::size_t frames = 0;
  for (const auto& p : pitches) {
    frames = std::max(frames, p.size());
    for (double m : p)
      if (std::isfinite(m)) grid.emplace(std::lround(m / cfg.grid_semitones), m);
  }
  require(!grid.empty(), "nothing to initialize");
  NmfModel model;
  for (const auto& [key, midi] : grid) model.template_pitch.push_back(static_cast<double>(key) * cfg.grid_semitones);
  const auto R = static_cast<Eigen::Index>(model.template_pitch.size());
  model.W.resize(static_cast<Eigen::Index>(cfg.stft.num_bins()), R);
  for (Eigen::Index r = 0; r < R; ++r) model.W.col(r) = harmonic_template(model.template_pitch[r], cfg);
  model.H = Eigen::MatrixXd::Zero(R, static_cast<Eigen::Index>(frames));
  const double tol = 1e-9;
  for (const auto& p : pitches)
    for (std::size_t n = 0; n < p.size(); ++n) {
      if (!std::isfinite(p[n])) continue;
      for (Eigen::Index r = 0; r < R; ++r) {
        const double d = std::abs(model.template_pitch[r] - p[n]);
        auto& h = model.H(r, static_cast<Eigen::Index>(n));
        if (d < tol) h = 1.0;
        else if (d <= cfg.neighbour_semitones + tol) h = std::max(h, cfg.activation_floor);
      }
    }
  return model;
}

// Multiplicative updates (H then W) for the generalized KL divergence.
inline void nmf_fit(const Eigen::MatrixXd& V, NmfModel& model, const NmfConfig& cfg) {
  require(V.rows() == model.W.rows() && V.cols() == model.H.cols(), "spectrogram does not match the NMF model");
  require((V.array() >= 0.0).all(), "NMF needs a nonnegative spectrogram");
  auto& W = model.W;
  auto& H = model.H;
  model.divergence.assign(1, kl_divergence(V, W, H, cfg.model_floor));
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    {
      const Eigen::MatrixXd ratio = V.array() / ((W * H).array() + cfg.model_floor);
      const Eigen::VectorXd col_sum = W.colwise().sum().transpose();
      const Eigen::MatrixXd num = W.transpose() * ratio;
      for (Eigen::Index r = 0; r < H.rows(); ++r)
        if (col_sum[r] > 0.0) H.row(r) = H.row(r).cwiseProduct(num.row(r)) / col_sum[r];
    }
    {
      const Eigen::MatrixXd ratio = V.array() / ((W * H).array() + cfg.model_floor);
      const Eigen::VectorXd row_sum = H.rowwise().sum();
      const Eigen::MatrixXd num = ratio * H.transpose();
      for (Eigen::Index r = 0; r < W.cols(); ++r)
        if (row_sum[r] > 0.0) W.col(r) = W.col(r).cwiseProduct(num.col(r)) / row_sum[r];
    }
    model.divergence.push_back(kl_divergence(V, W, H, cfg.model_floor));
  }
}

// H_j keeps the activations whose pitch is nearest to source j's pitch at
// that frame (lower index on ties); every nonzero entry goes to exactly one
// source.
inline std::vector<Eigen::MatrixXd> partition_activations(const NmfModel& model,
                                                          const std::vector<std::vector<double>>& pitches) {
  std::vector<Eigen::MatrixXd> parts(pitches.size(), Eigen::MatrixXd::Zero(model.H.rows(), model.H.cols()));
  for (Eigen::Index n = 0; n < model.H.cols(); ++n)
    for (Eigen::Index r = 0; r < model.H.rows(); ++r) {
      if (model.H(r, n) == 0.0) continue;
      std::size_t owner = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < pitches.size(); ++j) {
        const double p = static_cast<std::size_t>(n) < pitches[j].size() ? pitches[j][n] : std::nan("");
        if (!std::isfinite(p)) continue;
        const double d = std::abs(p - model.template_pitch[r]);
        if (d < best) {
          best = d;
          owner = j;
        }
      }
      parts[owner](r, n) = model.H(r, n);
    }
  return parts;
}

struct NmfResult {
  NmfModel model;
  sep::MaskSet masks;
  std::vector<std::vector<double>> estimates;
};

// Full baseline: padded mask-grid STFT, init from the tracks, fit, split,
// mask and Wiener-filter.
inline NmfResult nmf_separate(std::span<const double> mixture, const std::vector<synth::F0Track>& tracks,
                              const synth::SynthConfig& synth, const NmfConfig& cfg = {}) {
  require(!tracks.empty(), "J must be >= 1");
  require(dsp::check_cola(cfg.stft), "NMF STFT configuration does not satisfy constant overlap-add");
  const auto layout = sep::pad_layout(mixture.size(), cfg.stft);
  const auto mag = dsp::magnitude(dsp::stft(sep::pad(mixture, layout), cfg.stft));
  const Eigen::MatrixXd V = to_matrix(mag);
  const auto pitches = frame_pitches(tracks, synth, cfg, layout, mag.num_frames);
  NmfResult res;
  res.model = init_from_f0(pitches, cfg);
  nmf_fit(V, res.model, cfg);
  std::vector<dsp::MagnitudeSpectrogram> parts;
  for (const auto& Hj : partition_activations(res.model, pitches)) {
    dsp::MagnitudeSpectrogram s(cfg.stft, dsp::SpectrumKind::magnitude, mag.num_frames);
    Eigen::Map<Eigen::MatrixXd>(s.values.data(), V.rows(), V.cols()) = res.model.W * Hj;
    parts.push_back(std::move(s));
  }
  res.masks = sep::masks_from_magnitudes(parts, cfg.stft, layout);
  res.estimates = sep::wiener_separate(mixture, res.masks);
  return res;
}

}  // namespace pssep::nmf
