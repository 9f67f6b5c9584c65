#pragma once

// Finite-difference check of FitProblem::evaluate gradients on a short
// synthetic problem. Used by the `gradcheck` CLI verb and the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pssep/diff_engine.hpp"
#include "pssep/synthetic.hpp"

namespace pssep::diff {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t coords = 200;
  double tol = 1e-3;
  double duration_s = 0.25;
  std::size_t num_sources = 1;
  std::vector<double> steps = {1e-3, 1e-4};
  // Below this magnitude both gradients count as zero.
  double abs_floor = 1e-6;
  double fine_step = 1e-6;
};

struct CoordResult {
  std::string param_class;
  std::size_t source = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;  // at the step that agreed best
  double rel_error = 0.0;
  bool passed = false;
  // Only for failed coordinates: a much smaller step, to tell a stencil
  // that straddles a kink of the loss from a wrong gradient.
  double fine_numeric = std::numeric_limits<double>::quiet_NaN();
  double fine_rel_error = std::numeric_limits<double>::quiet_NaN();
};

struct GradcheckReport {
  std::vector<CoordResult> coords;
  std::size_t passed = 0;
  double max_rel_error = 0.0;
  double loss = 0.0;

  bool ok() const { return passed == coords.size() && !coords.empty(); }
};

inline const std::array<const char*, 4> kParamClasses = {"alpha", "gain", "lsf", "noise_mag"};

inline std::vector<double>& param_block(SourceRaw& s, std::size_t cls) {
  switch (cls) {
    case 0: return s.alpha;
    case 1: return s.gain;
    case 2: return s.lsf;
    default: return s.noise_mag;
  }
}

inline const std::vector<double>& param_block(const SourceRaw& s, std::size_t cls) {
  return param_block(const_cast<SourceRaw&>(s), cls);
}

inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline GradcheckReport gradcheck(const GradcheckOptions& opt) {
  require(opt.num_sources >= 1 && opt.num_sources <= 2, "gradcheck supports one or two sources");
  synthetic::MixtureSpec spec;
  spec.duration_s = opt.duration_s;
  spec.seed = opt.seed + 1;
  spec.voices.resize(opt.num_sources);
  spec.source_rms = 1e-3;
  const auto target = synthetic::make_mixture(spec);

  FitConfig cfg;
  cfg.seed = opt.seed;
  FitProblem problem(target.mixture, target.f0s, cfg);

  // The L1 terms have kinks wherever an estimated magnitude crosses the
  // target's; with tens of thousands of bins a 1e-3 stencil often straddles
  // one. A target 40 dB below the evaluation point keeps almost every bin on
  // one side. LSFs are jittered around the flat filter: near-unit poles make
  // the loss so curved in the LSFs that O(h^2) stencil error alone exceeds
  // the tolerance.
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  RawParams point = problem.initial_params();
  for (auto& src : point.sources) {
    for (auto& v : src.alpha) v += 4.0;
    for (auto& v : src.gain) v += 4.0;
  }
  for (auto block : point.blocks())
    for (auto& v : block) v += jitter(rng);

  // Distinct coordinates: up to coords/4 from each class, the rest drawn
  // from whatever is left over.
  struct Coord {
    std::size_t cls, source, index;
  };
  std::vector<std::vector<Coord>> pools(kParamClasses.size());
  for (std::size_t j = 0; j < point.sources.size(); ++j)
    for (std::size_t cls = 0; cls < pools.size(); ++cls)
      for (std::size_t i = 0; i < param_block(point.sources[j], cls).size(); ++i) pools[cls].push_back({cls, j, i});
  std::vector<Coord> chosen, rest;
  for (auto& pool : pools) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(pool.size(), opt.coords / pools.size());
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    rest.insert(rest.end(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end());
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t i = 0; chosen.size() < opt.coords && i < rest.size(); ++i) chosen.push_back(rest[i]);

  const auto rec = problem.evaluate(point);
  GradcheckReport rep;
  rep.loss = rec.loss;
  for (const auto& c : chosen) {
    CoordResult r;
    r.param_class = kParamClasses[c.cls];
    r.source = c.source;
    r.index = c.index;
    auto& block = param_block(point.sources[c.source], c.cls);
    r.analytic = param_block(rec.gradient.sources[c.source], c.cls)[c.index];
    r.rel_error = std::numeric_limits<double>::infinity();
    const double orig = block[c.index];
    for (double h : opt.steps) {
      block[c.index] = orig + h;
      const double up = problem.evaluate(point, false).loss;
      block[c.index] = orig - h;
      const double down = problem.evaluate(point, false).loss;
      block[c.index] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double err = relative_error(fd, r.analytic, opt.abs_floor);
      if (err < r.rel_error) {
        r.rel_error = err;
        r.numeric = fd;
      }
    }
    r.passed = r.rel_error < opt.tol;
    if (r.passed) {
      ++rep.passed;
    } else {
      block[c.index] = orig + opt.fine_step;
      const double up = problem.evaluate(point, false).loss;
      block[c.index] = orig - opt.fine_step;
      const double down = problem.evaluate(point, false).loss;
      block[c.index] = orig;
      r.fine_numeric = (up - down) / (2.0 * opt.fine_step);
      r.fine_rel_error = relative_error(r.fine_numeric, r.analytic, opt.abs_floor);
    }
    rep.max_rel_error = std::max(rep.max_rel_error, r.rel_error);
    rep.coords.push_back(r);
  }
  return rep;
}

}  // namespace pssep::diff
