#pragma once

// Two-or-more voice test mixtures drawn from the model itself: each voice
// gets a vibrato F0 track, a slowly varying amplitude envelope, a fixed
// vowel-like LSF shape and a little breath noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "pssep/diff_engine.hpp"
#include "pssep/synth_model.hpp"

namespace pssep::synthetic {

struct VoiceSpec {
  double base_hz = 220.0;
  double vibrato_hz = 5.0;
  double vibrato_semitones = 0.5;
  double vibrato_phase = 0.0;
};

struct MixtureSpec {
  double duration_s = 2.0;
  double source_rms = 0.1;  // every voice is scaled to this level
  // Highest voice first, matching the F0 assignment convention.
  std::vector<VoiceSpec> voices = {{330.0, 6.0, 0.5, 1.3}, {220.0, 5.0, 0.5, 0.0}};
  std::uint64_t seed = 1;
};

struct Mixture {
  std::vector<double> mixture;
  std::vector<std::vector<double>> sources;
  std::vector<synth::F0Track> f0s;
  diff::RawParams truth;
  synth::SynthConfig config;
};

// F0 at each frame centre of the synthesis grid.
inline synth::F0Track vibrato_track(const VoiceSpec& v, std::size_t frames, const synth::SynthConfig& cfg,
                                    std::size_t index) {
  synth::F0Track t;
  t.source_index = index;
  for (std::size_t n = 0; n < frames; ++n) {
    const double time = static_cast<double>(n * cfg.hop + cfg.frame_len / 2) / cfg.sample_rate;
    const double semis = v.vibrato_semitones * std::sin(2.0 * std::numbers::pi * v.vibrato_hz * time + v.vibrato_phase);
    t.f0.push_back(v.base_hz * std::pow(2.0, semis / 12.0));
  }
  return t;
}

inline Mixture make_mixture(const MixtureSpec& spec, const synth::SynthConfig& cfg = {}) {
  Mixture m;
  m.config = cfg;
  const auto length = static_cast<std::size_t>(std::llround(spec.duration_s * cfg.sample_rate));
  const std::size_t frames = dsp::model_frame_count(length, cfg.hop);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  m.truth = diff::initial_raw_params(spec.voices.size(), frames, cfg);
  for (std::size_t j = 0; j < spec.voices.size(); ++j) {
    m.f0s.push_back(vibrato_track(spec.voices[j], frames, cfg, j));
    auto& raw = m.truth.sources[j];
    const double env_rate = 0.5 + 0.5 * (u(rng) + 1.0);
    const double env_phase = 3.0 * u(rng);
    for (std::size_t n = 0; n < frames; ++n) {
      const double time = static_cast<double>(n * cfg.hop) / cfg.sample_rate;
      raw.alpha[n] = -1.8 + 0.4 * std::sin(2.0 * std::numbers::pi * env_rate * time + env_phase);
      raw.gain[n] = -2.5;
    }
    std::vector<double> shape(cfg.lpc_order + 1);
    for (auto& s : shape) s = 1.2 * u(rng);
    for (std::size_t n = 0; n < frames; ++n)
      for (std::size_t k = 0; k <= cfg.lpc_order; ++k) raw.lsf[n * (cfg.lpc_order + 1) + k] = shape[k];
    for (std::size_t l = 0; l < cfg.noise_mag_len; ++l)
      raw.noise_mag[l] = -1.0 - 2.0 * static_cast<double>(l) / static_cast<double>(cfg.noise_mag_len);
  }
  // The model is linear in alpha and g, so rescaling both sets the level
  // exactly; the raw values are recomputed through the inverse mapping.
  auto params = diff::to_source_params(m.truth);
  m.sources = synth::synthesize_sources(params, m.f0s, cfg, length, spec.seed);
  for (std::size_t j = 0; j < params.size(); ++j) {
    double energy = 0.0;
    for (double v : m.sources[j]) energy += v * v;
    const double scale = spec.source_rms / std::sqrt(energy / static_cast<double>(length));
    auto& raw = m.truth.sources[j];
    for (std::size_t n = 0; n < frames; ++n) {
      raw.alpha[n] = lsf::exp_sigmoid_inverse(scale * (params[j].alpha[n] - lsf::kSigmoidFloor) + lsf::kSigmoidFloor,
                                              diff::kAmpYMax);
      raw.gain[n] = lsf::exp_sigmoid_inverse(scale * (params[j].gain[n] - lsf::kSigmoidFloor) + lsf::kSigmoidFloor,
                                             diff::kAmpYMax);
    }
  }
  params = diff::to_source_params(m.truth);
  m.sources = synth::synthesize_sources(params, m.f0s, cfg, length, spec.seed);
  m.mixture.assign(length, 0.0);
  for (const auto& s : m.sources)
    for (std::size_t t = 0; t < length; ++t) m.mixture[t] += s[t];
  return m;
}

}  // namespace pssep::synthetic
