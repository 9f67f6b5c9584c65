#pragma once

// JSON files: run configuration, fitted parameters, evaluation reports.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pssep/diff_engine.hpp"
#include "pssep/error.hpp"
#include "pssep/separation.hpp"
#include "pssep/synth_model.hpp"

namespace pssep::io {

using nlohmann::json;

// Everything a `separate` run is parameterized by, besides steps and seed.
struct RunConfig {
  diff::FitConfig fit;
  dsp::StftConfig mask = sep::default_mask_config();
};

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open JSON file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write JSON file: " + path.string());
  out << j.dump(2) << '\n';
}

inline json config_to_json(const RunConfig& c) {
  const auto& s = c.fit.synth;
  return {
      {"fs", s.sample_rate},
      {"fft_size", s.frame_len},
      {"hop", s.hop},
      {"lpc_order", s.lpc_order},
      {"num_harmonics", s.num_harmonics},
      {"noise_mag_len", s.noise_mag_len},
      {"loss_scales", c.fit.loss_scales},
      {"mask_fft", c.mask.fft_size},
      {"mask_hop", c.mask.hop},
      {"adam",
       {{"lr", c.fit.adam.lr}, {"beta1", c.fit.adam.beta1}, {"beta2", c.fit.adam.beta2}, {"eps", c.fit.adam.eps}}},
  };
}

// Keys missing from `j` keep their defaults; unknown keys are an error so a
// typo cannot silently fall back to a default.
inline RunConfig config_from_json(const json& j, RunConfig c = {}) {
  require(j.is_object(), "config must be a JSON object");
  static const std::set<std::string> known = {"fs",          "fft_size",   "hop",      "lpc_order",
                                              "num_harmonics", "noise_mag_len", "loss_scales", "mask_fft",
                                              "mask_hop",    "adam"};
  for (const auto& [key, value] : j.items()) require(known.count(key) > 0, "unknown config key: " + key);
  try {
    auto& s = c.fit.synth;
    if (j.contains("fs")) s.sample_rate = j["fs"].get<double>();
    if (j.contains("fft_size")) s.frame_len = j["fft_size"].get<std::size_t>();
    if (j.contains("hop")) s.hop = j["hop"].get<std::size_t>();
    if (j.contains("lpc_order")) s.lpc_order = j["lpc_order"].get<std::size_t>();
    if (j.contains("num_harmonics")) s.num_harmonics = j["num_harmonics"].get<std::size_t>();
    if (j.contains("noise_mag_len")) s.noise_mag_len = j["noise_mag_len"].get<std::size_t>();
    if (j.contains("loss_scales")) c.fit.loss_scales = j["loss_scales"].get<std::vector<std::size_t>>();
    if (j.contains("mask_fft")) c.mask.fft_size = j["mask_fft"].get<std::size_t>();
    if (j.contains("mask_hop")) c.mask.hop = j["mask_hop"].get<std::size_t>();
    if (j.contains("adam")) {
      const auto& a = j["adam"];
      for (const auto& [key, value] : a.items())
        require(key == "lr" || key == "beta1" || key == "beta2" || key == "eps", "unknown adam key: " + key);
      if (a.contains("lr")) c.fit.adam.lr = a["lr"].get<double>();
      if (a.contains("beta1")) c.fit.adam.beta1 = a["beta1"].get<double>();
      if (a.contains("beta2")) c.fit.adam.beta2 = a["beta2"].get<double>();
      if (a.contains("eps")) c.fit.adam.eps = a["eps"].get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(std::string("bad config value: ") + e.what());
  }
  c.fit.synth.validate();
  require(c.fit.synth.sample_rate == 16000.0, "only 16 kHz audio is supported");
  require(!c.fit.loss_scales.empty(), "loss_scales must not be empty");
  for (std::size_t scale : c.fit.loss_scales) objective::scale_config(scale);
  c.mask.validate();
  require(dsp::check_cola(c.mask), "mask_fft / mask_hop do not satisfy constant overlap-add");
  require(c.fit.adam.lr > 0.0, "adam.lr must be positive");
  require(c.fit.adam.beta1 >= 0.0 && c.fit.adam.beta1 < 1.0 && c.fit.adam.beta2 >= 0.0 && c.fit.adam.beta2 < 1.0,
          "adam betas must be in [0, 1)");
  require(c.fit.adam.eps > 0.0, "adam.eps must be positive");
  return c;
}

// ---- parameters ------------------------------------------------------------

// Constrained parameters of a fitted (or hand-made) model, enough to
// resynthesize every source bit-for-bit.
struct ParamsFile {
  RunConfig config;
  std::uint64_t seed = 0;
  std::size_t num_samples = 0;
  std::vector<synth::SourceParams> sources;
  std::vector<synth::F0Track> f0s;
};

inline json params_to_json(const ParamsFile& p) {
  json sources = json::array();
  for (std::size_t j = 0; j < p.sources.size(); ++j) {
    const auto& s = p.sources[j];
    json lsf = json::array();
    for (std::size_t n = 0; n < s.num_frames(); ++n) {
      const auto row = s.lsf_frame(n);
      lsf.push_back(std::vector<double>(row.begin(), row.end()));
    }
    sources.push_back({{"alpha", s.alpha}, {"gain", s.gain}, {"lsf", lsf}, {"noise_mag", s.noise_mag},
                       {"f0", p.f0s[j].f0}});
  }
  return {{"config", config_to_json(p.config)},
          {"seed", p.seed},
          {"num_samples", p.num_samples},
          {"sources", sources}};
}

inline ParamsFile params_from_json(const json& j) {
  ParamsFile p;
  try {
    p.config = config_from_json(j.at("config"));
    p.seed = j.at("seed").get<std::uint64_t>();
    p.num_samples = j.at("num_samples").get<std::size_t>();
    const auto& cfg = p.config.fit.synth;
    const std::size_t frames = dsp::model_frame_count(p.num_samples, cfg.hop);
    const auto& sources = j.at("sources");
    require(sources.is_array() && !sources.empty(), "params need at least one source");
    for (std::size_t idx = 0; idx < sources.size(); ++idx) {
      const auto& src = sources[idx];
      const std::string where = "source " + std::to_string(idx) + ": ";
      synth::SourceParams s;
      s.order = cfg.lpc_order;
      s.alpha = src.at("alpha").get<std::vector<double>>();
      s.gain = src.at("gain").get<std::vector<double>>();
      s.noise_mag = src.at("noise_mag").get<std::vector<double>>();
      for (const auto& row : src.at("lsf")) {
        const auto r = row.get<std::vector<double>>();
        require(r.size() == cfg.lpc_order, where + "LSF rows must have lpc_order entries");
        s.lsf.insert(s.lsf.end(), r.begin(), r.end());
      }
      synth::F0Track f;
      f.source_index = idx;
      f.f0 = src.at("f0").get<std::vector<double>>();
      require(s.alpha.size() == frames && f.f0.size() == frames,
              where + "expected " + std::to_string(frames) + " frames for " + std::to_string(p.num_samples) +
                  " samples");
      require(s.noise_mag.size() == cfg.noise_mag_len, where + "noise_mag must have noise_mag_len entries");
      for (double v : f.f0) require(std::isfinite(v) && v >= 0.0, where + "F0 values must be >= 0");
      s.validate();
      p.sources.push_back(std::move(s));
      p.f0s.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("bad params file: ") + e.what());
  }
  return p;
}

}  // namespace pssep::io
