#pragma once

// Soft masks from synthesized source estimates and Wiener filtering of the
// mixture with them.
//
// Every signal is zero-padded before the mask STFT (fft_size samples in
// front, at least fft_size behind, rounded to a whole hop) so each original
// sample is covered by the full set of overlapping frames; masked iSTFT
// output is then cropped back. Without this the first and last fft-hop
// samples would come back attenuated.

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"

namespace pssep::sep {

inline constexpr double kMaskEps = 1e-12;

inline dsp::StftConfig default_mask_config() { return {2048, 256, dsp::WindowType::hann}; }

struct PadLayout {
  std::size_t front = 0;
  std::size_t padded_len = 0;
  std::size_t length = 0;
};

inline PadLayout pad_layout(std::size_t length, const dsp::StftConfig& cfg) {
  PadLayout p;
  p.length = length;
  p.front = cfg.fft_size;
  std::size_t total = length + 2 * cfg.fft_size;
  total += (cfg.hop - total % cfg.hop) % cfg.hop;
  p.padded_len = total;
  return p;
}

inline std::vector<double> pad(std::span<const double> x, const PadLayout& layout) {
  require(x.size() == layout.length, "signal length does not match padding layout");
  std::vector<double> out(layout.padded_len, 0.0);
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(layout.front));
  return out;
}

struct MaskSet {
  dsp::StftConfig config;
  PadLayout layout;
  std::vector<dsp::MagnitudeSpectrogram> masks;

  std::size_t num_sources() const { return masks.size(); }
};

// mask_j = |S_j| / sum_i |S_i| on an existing padded grid; bins where the
// sum is below eps get 1/J.
inline MaskSet masks_from_magnitudes(const std::vector<dsp::MagnitudeSpectrogram>& mags, const dsp::StftConfig& cfg,
                                     const PadLayout& layout, double eps = kMaskEps) {
  require(!mags.empty(), "J must be >= 1");
  for (const auto& m : mags)
    require(m.num_bins == mags.front().num_bins && m.num_frames == mags.front().num_frames,
            "source spectrograms differ in shape");
  MaskSet set;
  set.config = cfg;
  set.layout = layout;
  set.masks = mags;
  const double uniform = 1.0 / static_cast<double>(mags.size());
  for (std::size_t c = 0; c < mags.front().values.size(); ++c) {
    double total = 0.0;
    for (const auto& m : mags) total += m.values[c];
    for (std::size_t j = 0; j < mags.size(); ++j)
      set.masks[j].values[c] = total > eps ? mags[j].values[c] / total : uniform;
  }
  return set;
}

inline MaskSet soft_masks(const std::vector<std::vector<double>>& sources,
                          const dsp::StftConfig& cfg = default_mask_config(), double eps = kMaskEps) {
  require(!sources.empty(), "J must be >= 1");
  const std::size_t len = sources.front().size();
  for (const auto& s : sources) require(s.size() == len, "synthesized sources differ in length");
  require(dsp::check_cola(cfg), "mask STFT configuration does not satisfy constant overlap-add");
  const auto layout = pad_layout(len, cfg);
  std::vector<dsp::MagnitudeSpectrogram> mags;
  for (const auto& s : sources) mags.push_back(dsp::magnitude(dsp::stft(pad(s, layout), cfg)));
  return masks_from_magnitudes(mags, cfg, layout, eps);
}

// s_j = istft(mask_j * stft(m)), cropped to the mixture length.
inline std::vector<std::vector<double>> wiener_separate(std::span<const double> mixture, const MaskSet& masks) {
  require(masks.num_sources() >= 1, "J must be >= 1");
  require(mixture.size() == masks.layout.length, "mask grid does not match mixture length");
  const auto spec = dsp::stft(pad(mixture, masks.layout), masks.config);
  for (const auto& m : masks.masks)
    require(m.num_bins == spec.num_bins && m.num_frames == spec.num_frames, "mask grid does not match mixture STFT");
  std::vector<std::vector<double>> out;
  for (const auto& m : masks.masks) {
    auto masked = spec;
    for (std::size_t c = 0; c < masked.values.size(); ++c) masked.values[c] *= m.values[c];
    const auto y = dsp::istft(masked, masks.config, masks.layout.padded_len);
    const auto first = y.begin() + static_cast<std::ptrdiff_t>(masks.layout.front);
    out.emplace_back(first, first + static_cast<std::ptrdiff_t>(mixture.size()));
  }
  return out;
}

// Largest |sum_j mask_j - 1| over bins where the synthesized magnitudes sum
// above `active`.
inline double partition_error(const std::vector<std::vector<double>>& sources, const MaskSet& masks,
                              double active = 1e-6) {
  std::vector<dsp::MagnitudeSpectrogram> mags;
  for (const auto& s : sources) mags.push_back(dsp::magnitude(dsp::stft(pad(s, masks.layout), masks.config)));
  double worst = 0.0;
  for (std::size_t c = 0; c < mags.front().values.size(); ++c) {
    double total = 0.0, mask_sum = 0.0;
    for (std::size_t j = 0; j < mags.size(); ++j) {
      total += mags[j].values[c];
      mask_sum += masks.masks[j].values[c];
    }
    if (total > active) worst = std::max(worst, std::abs(mask_sum - 1.0));
  }
  return worst;
}

}  // namespace pssep::sep
