// pssep command line: separate, synthesize, nmf, evaluate, gradcheck, assign-f0.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "pssep/f0_pipeline.hpp"
#include "pssep/gradcheck.hpp"
#include "pssep/io.hpp"
#include "pssep/nmf.hpp"
#include "pssep/pipeline.hpp"
#include "pssep/wav.hpp"

namespace fs = std::filesystem;
using namespace pssep;

namespace {

void write_sources(const fs::path& dir, const std::string& stem, const std::vector<std::vector<double>>& signals) {
  for (std::size_t j = 0; j < signals.size(); ++j) wav::write(source_path(dir, stem, j), AudioBuffer{signals[j], 16000.0});
}

std::vector<synth::F0Track> load_tracks(const fs::path& csv, std::size_t sources, const synth::SynthConfig& cfg,
                                        std::size_t length) {
  return f0::to_frame_grid(f0::load_assigned(csv, sources), cfg, length);
}

struct SeparateArgs {
  std::string mixture, f0, out, config;
  std::size_t sources = 0;
  std::size_t steps = 2000;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  bool emit_synth = false, emit_params = false;
};

int run_separate(const SeparateArgs& a, bool lr_given) {
  io::RunConfig cfg;
  if (!a.config.empty()) cfg = io::config_from_json(io::read_json(a.config));
  if (lr_given || a.config.empty()) cfg.fit.adam.lr = a.lr;
  require(cfg.fit.adam.lr > 0.0, "--lr must be positive");
  cfg.fit.steps = a.steps;
  const auto mix = wav::read(a.mixture, cfg.fit.synth.sample_rate);
  const auto tracks = load_tracks(a.f0, a.sources, cfg.fit.synth, mix.size());
  fs::create_directories(a.out);

  const auto res = separate(mix.samples, tracks, cfg, a.seed, [&](std::size_t step, double loss) {
    if (step % 100 == 0) std::fprintf(stderr, "step %5zu  loss %.6g\n", step, loss);
  });
  write_sources(a.out, "source", res.estimates);
  if (a.emit_synth) write_sources(a.out, "synth", res.synthesized);
  if (a.emit_params) {
    auto j = io::params_to_json(res.params);
    j["fit"] = {{"steps", a.steps},
                {"best_step", res.fit.best_step},
                {"best_loss", res.fit.best_loss},
                {"loss_trace", res.fit.loss_trace}};
    io::write_json(fs::path(a.out) / "params.json", j);
  }
  std::printf("best loss %.6g at step %zu of %zu; wrote %zu sources to %s\n", res.fit.best_loss, res.fit.best_step,
              a.steps, res.estimates.size(), a.out.c_str());
  return 0;
}

int run_synthesize(const std::string& params, const std::string& out) {
  const auto p = io::params_from_json(io::read_json(params));
  const auto sources = synthesize_params(p);
  std::vector<double> mix(p.num_samples, 0.0);
  for (const auto& s : sources)
    for (std::size_t t = 0; t < mix.size(); ++t) mix[t] += s[t];
  wav::write(out, AudioBuffer{mix, p.config.fit.synth.sample_rate});
  return 0;
}

int run_nmf(const std::string& mixture, const std::string& f0_csv, std::size_t sources, const std::string& out,
            std::size_t iters) {
  const synth::SynthConfig synth;
  const auto mix = wav::read(mixture, synth.sample_rate);
  const auto tracks = load_tracks(f0_csv, sources, synth, mix.size());
  nmf::NmfConfig cfg;
  cfg.iters = iters;
  const auto res = nmf::nmf_separate(mix.samples, tracks, synth, cfg);
  fs::create_directories(out);
  write_sources(out, "source", res.estimates);
  std::printf("KL divergence %.6g -> %.6g over %zu iterations, %zu templates\n", res.model.divergence.front(),
              res.model.divergence.back(), iters, static_cast<std::size_t>(res.model.W.cols()));
  return 0;
}

int run_gradcheck(const diff::GradcheckOptions& opt) {
  const auto rep = diff::gradcheck(opt);
  for (const auto& c : rep.coords) {
    if (c.passed) continue;
    std::printf("FAIL %-9s src %zu idx %4zu  analytic % .6e  numeric % .6e  rel %.2e  (h=%g: % .6e, rel %.2e)\n",
                c.param_class.c_str(), c.source, c.index, c.analytic, c.numeric, c.rel_error, opt.fine_step,
                c.fine_numeric, c.fine_rel_error);
  }
  std::printf("gradcheck: %zu/%zu coordinates within %.1e (max relative error %.3e, loss %.6g)\n", rep.passed,
              rep.coords.size(), opt.tol, rep.max_rel_error, rep.loss);
  return rep.ok() ? 0 : 1;
}

int run_assign(const std::string& raw, std::size_t sources, const std::string& out) {
  f0::write_assigned_csv(out, f0::load_assigned(raw, sources));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source separation by fitting differentiable source-filter models"};
  app.require_subcommand(1);

  SeparateArgs sa;
  auto* sep_cmd = app.add_subcommand("separate", "Fit one source model per F0 track and Wiener-filter the mixture");
  sep_cmd->add_option("--mixture", sa.mixture, "Mono 16 kHz WAV")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--f0", sa.f0, "F0 CSV, raw or assigned layout")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--sources", sa.sources, "Number of sources J")->required()->check(CLI::PositiveNumber);
  sep_cmd->add_option("--out", sa.out, "Output directory")->required();
  sep_cmd->add_option("--steps", sa.steps, "ADAM steps")->capture_default_str();
  auto* lr_opt = sep_cmd->add_option("--lr", sa.lr, "Learning rate (overrides the config file)")->capture_default_str();
  sep_cmd->add_option("--seed", sa.seed, "Noise seed")->capture_default_str();
  sep_cmd->add_option("--config", sa.config, "Config JSON")->check(CLI::ExistingFile);
  sep_cmd->add_flag("--emit-synth", sa.emit_synth, "Also write synth_{j}.wav");
  sep_cmd->add_flag("--emit-params", sa.emit_params, "Also write params.json");

  std::string params, synth_out;
  auto* syn_cmd = app.add_subcommand("synthesize", "Render the mixture described by a params JSON");
  syn_cmd->add_option("--params", params, "Params JSON")->required()->check(CLI::ExistingFile);
  syn_cmd->add_option("--out", synth_out, "Output WAV")->required();

  std::string nmf_mix, nmf_f0, nmf_out;
  std::size_t nmf_sources = 0, nmf_iters = 200;
  auto* nmf_cmd = app.add_subcommand("nmf", "F0-informed NMF baseline");
  nmf_cmd->add_option("--mixture", nmf_mix)->required()->check(CLI::ExistingFile);
  nmf_cmd->add_option("--f0", nmf_f0)->required()->check(CLI::ExistingFile);
  nmf_cmd->add_option("--sources", nmf_sources)->required()->check(CLI::PositiveNumber);
  nmf_cmd->add_option("--out", nmf_out)->required();
  nmf_cmd->add_option("--iters", nmf_iters)->capture_default_str();

  std::string est_dir, ref_dir, report;
  EvalOptions eo;
  auto* eval_cmd = app.add_subcommand("evaluate", "Frame-wise SI-SDR of estimates against references");
  eval_cmd->add_option("--est-dir", est_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--ref-dir", ref_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--report", report)->required();
  eval_cmd->add_option("--frame-len", eo.frame_len_s, "Seconds")->capture_default_str();
  eval_cmd->add_option("--energy-thresh", eo.energy_thresh)->capture_default_str();

  diff::GradcheckOptions go;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc_cmd->add_option("--seed", go.seed)->capture_default_str();
  gc_cmd->add_option("--coords", go.coords)->capture_default_str()->check(CLI::PositiveNumber);
  gc_cmd->add_option("--tol", go.tol)->capture_default_str()->check(CLI::PositiveNumber);

  std::string raw_csv, assigned_csv;
  std::size_t assign_sources = 0;
  auto* as_cmd = app.add_subcommand("assign-f0", "Assign multi-F0 estimates to sources");
  as_cmd->add_option("--raw", raw_csv)->required()->check(CLI::ExistingFile);
  as_cmd->add_option("--sources", assign_sources)->required()->check(CLI::PositiveNumber);
  as_cmd->add_option("--out", assigned_csv)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sep_cmd) return run_separate(sa, lr_opt->count() > 0);
    if (*syn_cmd) return run_synthesize(params, synth_out);
    if (*nmf_cmd) return run_nmf(nmf_mix, nmf_f0, nmf_sources, nmf_out, nmf_iters);
    if (*eval_cmd) {
      io::write_json(report, evaluate_dirs(est_dir, ref_dir, eo));
      return 0;
    }
    if (*gc_cmd) return run_gradcheck(go);
    if (*as_cmd) return run_assign(raw_csv, assign_sources, assigned_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
