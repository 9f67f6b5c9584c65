#pragma once

// The end-to-end paths behind the CLI verbs.

#include <filesystem>
#include <string>
#include <vector>

#include "pssep/diff_engine.hpp"
#include "pssep/io.hpp"
#include "pssep/metrics.hpp"
#include "pssep/separation.hpp"
#include "pssep/wav.hpp"

namespace pssep {

struct SeparationResult {
  diff::FitResult fit;
  std::vector<std::vector<double>> synthesized;  // s~_j from the best parameters
  sep::MaskSet masks;
  std::vector<std::vector<double>> estimates;  // Wiener-filtered s^_j
  io::ParamsFile params;
};

inline SeparationResult separate(std::span<const double> mixture, const std::vector<synth::F0Track>& f0s,
                                 io::RunConfig cfg, std::uint64_t seed, const diff::ProgressFn& progress = {}) {
  cfg.fit.seed = seed;
  diff::FitProblem problem(mixture, f0s, cfg.fit);
  SeparationResult r;
  r.fit = diff::fit(problem, problem.initial_params(), progress);
  r.synthesized = problem.synthesize(r.fit.params);
  r.masks = sep::soft_masks(r.synthesized, cfg.mask);
  r.estimates = sep::wiener_separate(mixture, r.masks);
  r.params.config = cfg;
  r.params.seed = seed;
  r.params.num_samples = mixture.size();
  r.params.sources = diff::to_source_params(r.fit.params);
  r.params.f0s = f0s;
  return r;
}

inline std::vector<std::vector<double>> synthesize_params(const io::ParamsFile& p) {
  return synth::synthesize_sources(p.sources, p.f0s, p.config.fit.synth, p.num_samples, p.seed);
}

// ---- evaluation --------------------------------------------------------

inline std::filesystem::path source_path(const std::filesystem::path& dir, const std::string& stem, std::size_t j) {
  return dir / (stem + "_" + std::to_string(j) + ".wav");
}

inline io::json framewise_json(const metrics::FramewiseReport& rep) {
  io::json frames = io::json::array();
  io::json values = io::json::array();
  for (const auto& f : rep.frames) {
    io::json v = f.excluded ? io::json(nullptr) : io::json(f.si_sdr_db);
    frames.push_back({{"index", f.index},
                      {"start_s", f.start_s},
                      {"ref_energy", f.ref_energy},
                      {"excluded", f.excluded},
                      {"si_sdr_db", v}});
    values.push_back(v);
  }
  auto num = [](double x) { return std::isfinite(x) ? io::json(x) : io::json(nullptr); };
  return {{"frames", frames},
          {"si_sdr_db", values},
          {"retained", rep.retained},
          {"excluded", rep.excluded},
          {"mean_si_sdr_db", num(rep.mean_db)},
          {"median_si_sdr_db", num(rep.median_db)}};
}

struct EvalOptions {
  double frame_len_s = 1.0;
  double energy_thresh = 10.0;
};

// Compares est_dir/source_{j}.wav (and synth_{j}.wav when present) with
// ref_dir/source_{j}.wav for j = 0, 1, ... while the estimate exists.
inline io::json evaluate_dirs(const std::filesystem::path& est_dir, const std::filesystem::path& ref_dir,
                              const EvalOptions& opt) {
  require(opt.frame_len_s > 0.0, "frame length must be positive");
  const double fs = 16000.0;
  const auto frame_len = static_cast<std::size_t>(std::llround(opt.frame_len_s * fs));
  require(frame_len > 0, "frame length is shorter than one sample");
  io::json report;
  report["config"] = {{"frame_len_s", opt.frame_len_s},
                      {"frame_len_samples", frame_len},
                      {"energy_thresh", opt.energy_thresh},
                      {"sample_rate", fs},
                      {"est_dir", est_dir.string()},
                      {"ref_dir", ref_dir.string()}};
  report["seed"] = nullptr;
  const auto params_path = est_dir / "params.json";
  if (std::filesystem::exists(params_path)) {
    const auto p = io::read_json(params_path);
    if (p.contains("seed")) report["seed"] = p["seed"];
    if (p.contains("config")) report["run_config"] = p["config"];
  }
  io::json sources = io::json::array();
  for (std::size_t j = 0;; ++j) {
    const auto est_path = source_path(est_dir, "source", j);
    if (!std::filesystem::exists(est_path)) break;
    const auto ref_path = source_path(ref_dir, "source", j);
    require(std::filesystem::exists(ref_path), "missing reference " + ref_path.string());
    const auto est = wav::read(est_path, fs);
    const auto ref = wav::read(ref_path, fs);
    require(est.size() == ref.size(), "estimate and reference differ in length for source " + std::to_string(j));
    io::json entry = {{"source", j}};
    entry["wiener"] = framewise_json(metrics::framewise_eval(est.samples, ref.samples, frame_len, opt.energy_thresh, fs));
    entry["wiener"]["spectral_snr_db"] = metrics::spectral_snr(est.samples, ref.samples);
    const auto synth_path = source_path(est_dir, "synth", j);
    if (std::filesystem::exists(synth_path)) {
      const auto s = wav::read(synth_path, fs);
      require(s.size() == ref.size(), "synthesized source and reference differ in length");
      entry["synth"] = framewise_json(metrics::framewise_eval(s.samples, ref.samples, frame_len, opt.energy_thresh, fs));
      entry["synth"]["spectral_snr_db"] = metrics::spectral_snr(s.samples, ref.samples);
    }
    sources.push_back(entry);
  }
  require(!sources.empty(), "no source_0.wav in " + est_dir.string());
  report["sources"] = sources;
  return report;
}

}  // namespace pssep
