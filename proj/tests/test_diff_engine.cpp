#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pssep/diff_engine.hpp"
#include "pssep/gradcheck.hpp"
#include "pssep/synthetic.hpp"

using namespace pssep;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

synthetic::Mixture short_mixture(std::size_t voices, double seconds, std::uint64_t seed) {
  synthetic::MixtureSpec spec;
  spec.duration_s = seconds;
  spec.seed = seed;
  spec.voices.resize(voices);
  if (voices == 1) spec.voices[0] = {220.0, 5.0, 0.5, 0.0};
  return synthetic::make_mixture(spec);
}

}  // namespace

TEST_CASE("raw parameter mapping", "[diff]") {
  const synth::SynthConfig cfg;
  const auto raw = diff::initial_raw_params(2, 10, cfg);
  REQUIRE(raw.sources.size() == 2);
  CHECK(raw.sources[0].lsf.size() == 10 * 21);
  const auto params = diff::to_source_params(raw);
  // Zero LSF raw values give equal increments, i.e. the flat filter.
  for (double a : lsf::lsf_to_lpc(params[0].lsf_frame(3))) CHECK_THAT(a, WithinAbs(0.0, 1e-10));
  CHECK_THAT(params[1].alpha[0], WithinRel(lsf::exp_sigmoid(-2.0, 1.0), 1e-15));
  CHECK_NOTHROW(params[1].validate());

  for (double y : {1e-5, 0.01, 0.3, 0.99})
    CHECK_THAT(lsf::exp_sigmoid(lsf::exp_sigmoid_inverse(y, 1.0), 1.0), WithinRel(y, 1e-9));
  CHECK_THROWS_AS(lsf::exp_sigmoid_inverse(1.5, 1.0), Error);
}

TEST_CASE("evaluate agrees with the synthesizer and the loss module", "[diff]") {
  const auto mx = short_mixture(2, 0.5, 3);
  diff::FitConfig cfg;
  diff::FitProblem problem(mx.mixture, mx.f0s, cfg);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto raw = problem.initial_params();
  for (auto b : raw.blocks())
    for (auto& v : b) v += u(rng);
  const auto sources = problem.synthesize(raw);
  const auto reference = synth::synthesize_sources(diff::to_source_params(raw), mx.f0s, cfg.synth,
                                                   mx.mixture.size(), cfg.seed);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t t = 0; t < mx.mixture.size(); t += 37) CHECK_THAT(sources[j][t], WithinAbs(reference[j][t], 1e-9));
  std::vector<double> mix(mx.mixture.size(), 0.0);
  for (const auto& s : reference)
    for (std::size_t t = 0; t < mix.size(); ++t) mix[t] += s[t];
  CHECK_THAT(problem.evaluate(raw, false).loss, WithinRel(objective::multiscale_loss(mx.mixture, mix).total, 1e-9));
}

TEST_CASE("gradients match central differences in every parameter class", "[diff][gradient]") {
  for (std::size_t voices : {1u, 2u}) {
    diff::GradcheckOptions opt;
    opt.num_sources = voices;
    opt.coords = 80;
    const auto rep = diff::gradcheck(opt);
    INFO("sources " << voices << ", max relative error " << rep.max_rel_error);
    CHECK(rep.coords.size() == 80);
    CHECK(rep.ok());
    for (const char* cls : diff::kParamClasses) {
      std::size_t n = 0;
      for (const auto& c : rep.coords) n += c.param_class == cls;
      CHECK(n >= 10);
    }
  }
}

TEST_CASE("gradients near the target agree with a fine-step difference", "[diff][gradient]") {
  // Close to the optimum the L1 kinks are dense, so compare against a very
  // small step instead.
  const auto mx = short_mixture(1, 0.25, 4);
  diff::FitConfig cfg;
  diff::FitProblem problem(mx.mixture, mx.f0s, cfg);
  auto raw = mx.truth;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto b : raw.blocks())
    for (auto& v : b) v += u(rng);
  const auto rec = problem.evaluate(raw);
  int ok = 0, total = 0;
  for (std::size_t cls = 0; cls < 4; ++cls) {
    auto& block = diff::param_block(raw.sources[0], cls);
    for (std::size_t i = 1; i < block.size(); i += block.size() / 5 + 1) {
      const double orig = block[i], h = 1e-6;
      block[i] = orig + h;
      const double up = problem.evaluate(raw, false).loss;
      block[i] = orig - h;
      const double down = problem.evaluate(raw, false).loss;
      block[i] = orig;
      const double g = diff::param_block(rec.gradient.sources[0], cls)[i];
      ++total;
      if (diff::relative_error((up - down) / (2 * h), g, 1e-3) < 1e-3) ++ok;
    }
  }
  CHECK(ok >= total - 1);
}

TEST_CASE("silent target and saturated amplitudes give vanishing amplitude gradients", "[diff]") {
  // The log term contributes d(log alpha)/d raw, which only dies out once
  // the sigmoid power falls well below the 1e-7 floor; at raw = -10 it is
  // already three orders of magnitude below its value at the default start.
  std::vector<double> silent(4000, 0.0);
  const synth::SynthConfig scfg;
  const std::size_t frames = dsp::model_frame_count(silent.size(), scfg.hop);
  std::vector<synth::F0Track> f0s = {{std::vector<double>(frames, 200.0), 0}};
  diff::FitConfig cfg;
  diff::FitProblem problem(silent, f0s, cfg);
  auto quiet = problem.initial_params();
  auto start = problem.initial_params();
  for (auto b : quiet.blocks()) std::fill(b.begin(), b.end(), -10.0);
  for (auto b : start.blocks()) std::fill(b.begin(), b.end(), -2.0);
  const auto gq = problem.evaluate(quiet).gradient.sources[0].alpha;
  const auto gs = problem.evaluate(start).gradient.sources[0].alpha;
  double max_quiet = 0.0, max_start = 0.0;
  for (double g : gq) max_quiet = std::max(max_quiet, std::abs(g));
  for (double g : gs) max_start = std::max(max_start, std::abs(g));
  INFO("max |grad| at raw -10: " << max_quiet << ", at raw -2: " << max_start);
  CHECK(max_quiet < 1e-3 * max_start);
}

TEST_CASE("adam_update examples", "[diff]") {
  diff::AdamConfig cfg;
  std::vector<double> x(5, 0.0), g(5, 1.0), m(5, 0.0), v(5, 0.0);
  diff::adam_update(x, g, m, v, 1, cfg);
  for (double xi : x) CHECK_THAT(xi, WithinAbs(-1e-4, 1e-11));

  std::vector<double> x0(3, 0.7), g0(3, 0.0), m0(3, 0.0), v0(3, 0.0);
  diff::adam_update(x0, g0, m0, v0, 1, cfg);
  for (double xi : x0) CHECK(xi == 0.7);

  std::vector<double> xa(1, 0.0), xb(1, 0.0), ga = {2.5}, gb = {-2.5}, ma(1), va(1), mb(1), vb(1);
  diff::adam_update(xa, ga, ma, va, 1, cfg);
  diff::adam_update(xb, gb, mb, vb, 1, cfg);
  CHECK(xa[0] == -xb[0]);
}

TEST_CASE("ADAM step on a quadratic converges", "[diff]") {
  // Minimize sum (x - 3)^2 through the RawParams block interface.
  const synth::SynthConfig cfg;
  auto raw = diff::initial_raw_params(1, 4, cfg);
  diff::AdamState state(raw);
  diff::AdamConfig adam;
  adam.lr = 0.05;
  for (int it = 0; it < 2000; ++it) {
    auto grad = raw.zeros_like();
    auto gb = grad.blocks();
    auto xb = raw.blocks();
    for (std::size_t b = 0; b < xb.size(); ++b)
      for (std::size_t i = 0; i < xb[b].size(); ++i) gb[b][i] = 2.0 * (xb[b][i] - 3.0);
    diff::adam_step(raw, state, grad, adam);
  }
  for (auto b : raw.blocks())
    for (double x : b) CHECK_THAT(x, WithinAbs(3.0, 1e-2));
}

TEST_CASE("starting at the generating parameters is near-stationary", "[diff]") {
  const auto mx = short_mixture(2, 0.5, 5);
  diff::FitConfig cfg;
  cfg.steps = 10;
  // Same noise draws as the generator, so the loss starts at zero.
  diff::FitProblem problem(mx.mixture, mx.f0s, cfg, diff::FitProblem::default_seeds(5, 2));
  const auto res = diff::fit(problem, mx.truth);
  REQUIRE(res.loss_trace.size() == 10);
  for (double l : res.loss_trace) CHECK(l <= 1.01 * res.loss_trace.front() + 1e-6);
  CHECK(res.best_loss <= res.loss_trace.front());
}

TEST_CASE("fitting reduces the loss well below its starting value", "[diff]") {
  const auto mx = short_mixture(1, 0.5, 6);
  diff::FitConfig cfg;
  cfg.steps = 1000;
  cfg.adam.lr = 0.02;
  cfg.seed = 3;
  std::vector<double> best_so_far;
  const auto a = diff::fit_mixture(mx.mixture, mx.f0s, cfg, [&](std::size_t, double loss) {
    best_so_far.push_back(best_so_far.empty() ? loss : std::min(best_so_far.back(), loss));
  });
  REQUIRE(best_so_far.size() == 1000);
  for (std::size_t i = 1; i < best_so_far.size(); ++i) CHECK(best_so_far[i] <= best_so_far[i - 1]);
  INFO("initial " << a.loss_trace.front() << ", best " << a.best_loss << " at step " << a.best_step);
  CHECK(a.best_loss < 0.1 * a.loss_trace.front());
}

TEST_CASE("fits are reproducible", "[diff]") {
  const auto mx = short_mixture(2, 0.5, 7);
  diff::FitConfig cfg;
  cfg.steps = 40;
  cfg.adam.lr = 0.02;
  const auto a = diff::fit_mixture(mx.mixture, mx.f0s, cfg);
  const auto b = diff::fit_mixture(mx.mixture, mx.f0s, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.best_loss == b.best_loss);
  for (std::size_t j = 0; j < 2; ++j) CHECK(a.params.sources[j].lsf == b.params.sources[j].lsf);
}

TEST_CASE("fit errors", "[diff]") {
  std::vector<double> mix(4000, 0.0);
  diff::FitConfig cfg;
  CHECK_THROWS_WITH(diff::fit_mixture(mix, {}, cfg), "J must be >= 1");
  std::vector<synth::F0Track> wrong = {{std::vector<double>(3, 100.0), 0}};
  CHECK_THROWS_AS(diff::FitProblem(mix, wrong, cfg), Error);
}
