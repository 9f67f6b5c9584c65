// Writes a two-voice test mixture drawn from the synthesizer itself:
//   mixture.wav, source_{j}.wav, f0.csv (assigned), f0_raw.csv, truth.json

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pssep/f0_pipeline.hpp"
#include "pssep/io.hpp"
#include "pssep/synthetic.hpp"
#include "pssep/wav.hpp"

namespace fs = std::filesystem;
using namespace pssep;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic two-voice mixture"};
  std::string out;
  synthetic::MixtureSpec spec;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--seed", spec.seed)->capture_default_str();
  app.add_option("--duration", spec.duration_s, "Seconds")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--rms", spec.source_rms, "Per-source RMS")->capture_default_str()->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    const auto mx = synthetic::make_mixture(spec);
    fs::create_directories(out);
    wav::write(fs::path(out) / "mixture.wav", AudioBuffer{mx.mixture, mx.config.sample_rate});
    for (std::size_t j = 0; j < mx.sources.size(); ++j)
      wav::write(fs::path(out) / ("source_" + std::to_string(j) + ".wav"), AudioBuffer{mx.sources[j], mx.config.sample_rate});

    const auto assigned = f0::from_frame_grid(mx.f0s, mx.config);
    f0::write_assigned_csv(fs::path(out) / "f0.csv", assigned);
    // Same pitches as an estimator would report them: unlabelled, lowest first.
    std::ofstream raw(fs::path(out) / "f0_raw.csv");
    raw.precision(10);
    raw << "time,f0\n";
    for (std::size_t i = 0; i < assigned.times.size(); ++i) {
      raw << assigned.times[i];
      for (std::size_t j = assigned.num_sources(); j-- > 0;) raw << ',' << assigned.tracks[j][i];
      raw << '\n';
    }

    io::ParamsFile truth;
    truth.seed = spec.seed;
    truth.num_samples = mx.mixture.size();
    truth.sources = diff::to_source_params(mx.truth);
    truth.f0s = mx.f0s;
    io::write_json(fs::path(out) / "truth.json", io::params_to_json(truth));
    std::printf("wrote %zu-sample mixture of %zu voices to %s\n", mx.mixture.size(), mx.sources.size(), out.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
