#pragma once

// Direct per-mixture fitting of the source models: unconstrained parameters
// are mapped through exp-sigmoid / LSF construction, all sources are
// synthesized, and the multi-scale loss against the mixture is
// differentiated in reverse mode through every stage by hand-written
// adjoints. The noise draw w(t) is fixed per fit and treated as a constant.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"
#include "pssep/lsf_allpole.hpp"
#include "pssep/objective.hpp"
#include "pssep/synth_model.hpp"

namespace pssep::diff {

// Upper bounds of the exp-sigmoid for each parameter class.
inline constexpr double kLsfYMax = 2.0;
inline constexpr double kAmpYMax = 1.0;

struct SourceRaw {
  std::vector<double> alpha;      // N
  std::vector<double> gain;       // N
  std::vector<double> lsf;        // N x (K + 1)
  std::vector<double> noise_mag;  // L
};

struct RawParams {
  std::vector<SourceRaw> sources;
  std::size_t num_frames = 0;
  std::size_t order = 0;  // K; each LSF row has K + 1 entries

  // Every parameter array, in a fixed order (sources, then classes).
  std::vector<std::span<double>> blocks() {
    std::vector<std::span<double>> out;
    for (auto& s : sources) {
      out.emplace_back(s.alpha);
      out.emplace_back(s.gain);
      out.emplace_back(s.lsf);
      out.emplace_back(s.noise_mag);
    }
    return out;
  }
  std::vector<std::span<const double>> blocks() const {
    std::vector<std::span<const double>> out;
    for (const auto& s : sources) {
      out.emplace_back(s.alpha);
      out.emplace_back(s.gain);
      out.emplace_back(s.lsf);
      out.emplace_back(s.noise_mag);
    }
    return out;
  }

  RawParams zeros_like() const {
    RawParams z = *this;
    for (auto b : z.blocks()) std::fill(b.begin(), b.end(), 0.0);
    return z;
  }
};

// Quiet, spectrally flat starting point.
inline RawParams initial_raw_params(std::size_t num_sources, std::size_t num_frames, const synth::SynthConfig& cfg) {
  RawParams raw;
  raw.num_frames = num_frames;
  raw.order = cfg.lpc_order;
  raw.sources.resize(num_sources);
  for (auto& s : raw.sources) {
    s.alpha.assign(num_frames, -2.0);
    s.gain.assign(num_frames, -2.0);
    s.lsf.assign(num_frames * (cfg.lpc_order + 1), 0.0);
    s.noise_mag.assign(cfg.noise_mag_len, -2.0);
  }
  return raw;
}

inline synth::SourceParams to_source_params(const SourceRaw& raw, std::size_t order) {
  synth::SourceParams p;
  p.order = order;
  p.alpha = lsf::exp_sigmoid(raw.alpha, kAmpYMax);
  p.gain = lsf::exp_sigmoid(raw.gain, kAmpYMax);
  p.noise_mag = lsf::exp_sigmoid(raw.noise_mag, kAmpYMax);
  const std::size_t frames = raw.alpha.size();
  p.lsf.resize(frames * order);
  for (std::size_t n = 0; n < frames; ++n) {
    const auto v = lsf::exp_sigmoid(std::span<const double>(raw.lsf).subspan(n * (order + 1), order + 1), kLsfYMax);
    const auto w = lsf::raw_to_lsf(v);
    std::copy(w.begin(), w.end(), p.lsf.begin() + static_cast<std::ptrdiff_t>(n * order));
  }
  return p;
}

inline std::vector<synth::SourceParams> to_source_params(const RawParams& raw) {
  std::vector<synth::SourceParams> out;
  for (const auto& s : raw.sources) out.push_back(to_source_params(s, raw.order));
  return out;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct FitConfig {
  synth::SynthConfig synth;
  std::vector<std::size_t> loss_scales = objective::kDefaultScales;
  AdamConfig adam;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
};

struct GradientRecord {
  double loss = 0.0;
  objective::LossBreakdown breakdown;
  RawParams gradient;
  std::size_t step = 0;
};

// A fixed mixture with its F0 tracks and noise draws. evaluate() is const
// and keeps no state between calls.
class FitProblem {
 public:
  FitProblem(std::span<const double> mixture, std::vector<synth::F0Track> f0s, FitConfig cfg)
      : FitProblem(mixture, f0s, cfg, default_seeds(cfg.seed, f0s.size())) {}

  FitProblem(std::span<const double> mixture, std::vector<synth::F0Track> f0s, FitConfig cfg,
             std::vector<std::uint64_t> noise_seeds)
      : cfg_(std::move(cfg)), f0s_(std::move(f0s)), loss_(mixture, cfg_.loss_scales) {
    require(!f0s_.empty(), "J must be >= 1");
    cfg_.synth.validate();
    require(noise_seeds.size() == f0s_.size(), "one noise seed per source is required");
    length_ = mixture.size();
    num_frames_ = dsp::model_frame_count(length_, cfg_.synth.hop);
    r_ir_ = synth::rolloff_ir(cfg_.synth);
    noise_design_ = synth::fir_design_matrix(cfg_.synth.noise_mag_len, cfg_.synth.noise_ir_len);
    window_ = dsp::make_window(dsp::WindowType::hann, cfg_.synth.frame_len);
    for (std::size_t j = 0; j < f0s_.size(); ++j) {
      require(f0s_[j].f0.size() == num_frames_,
              "F0 track " + std::to_string(j) + " has " + std::to_string(f0s_[j].f0.size()) + " frames, expected " +
                  std::to_string(num_frames_));
      const auto f0_t = synth::upsample_f0(f0s_[j].f0, cfg_.synth, length_);
      harmonics_.push_back(synth::harmonic_signal(f0_t, cfg_.synth.num_harmonics, cfg_.synth.sample_rate));
      noise_.push_back(synth::white_noise(length_, noise_seeds[j]));
    }
  }

  static std::vector<std::uint64_t> default_seeds(std::uint64_t seed, std::size_t count) {
    std::vector<std::uint64_t> s(count);
    for (std::size_t j = 0; j < count; ++j) s[j] = synth::source_seed(seed, j);
    return s;
  }

  const FitConfig& config() const { return cfg_; }
  std::size_t num_sources() const { return f0s_.size(); }
  std::size_t num_frames() const { return num_frames_; }
  std::size_t length() const { return length_; }
  const std::vector<synth::F0Track>& f0_tracks() const { return f0s_; }

  RawParams initial_params() const { return initial_raw_params(num_sources(), num_frames_, cfg_.synth); }

  // Synthesized source signals for the given parameters.
  std::vector<std::vector<double>> synthesize(const RawParams& raw) const {
    check_shape(raw);
    std::vector<std::vector<double>> out;
    for (std::size_t j = 0; j < num_sources(); ++j) out.push_back(forward(raw.sources[j], j).out);
    return out;
  }

  GradientRecord evaluate(const RawParams& raw, bool with_gradient = true) const {
    check_shape(raw);
    std::vector<SourceForward> fwd;
    std::vector<double> mix(length_, 0.0);
    for (std::size_t j = 0; j < num_sources(); ++j) {
      fwd.push_back(forward(raw.sources[j], j));
      for (std::size_t t = 0; t < length_; ++t) mix[t] += fwd.back().out[t];
    }
    GradientRecord rec;
    std::vector<double> grad_mix(with_gradient ? length_ : 0);
    rec.breakdown = loss_.evaluate(mix, grad_mix);
    rec.loss = rec.breakdown.total;
    if (!std::isfinite(rec.loss)) throw Error("non-finite value in multi-scale loss stage");
    if (!with_gradient) return rec;
    for (double g : grad_mix)
      if (!std::isfinite(g)) throw Error("non-finite value in loss gradient stage");
    rec.gradient = raw.zeros_like();
    for (std::size_t j = 0; j < num_sources(); ++j)
      backward(j, raw.sources[j], fwd[j], grad_mix, rec.gradient.sources[j]);
    return rec;
  }

 private:
  struct SourceForward {
    synth::SourceParams params;
    std::vector<double> increments;  // N x (K + 1), exp-sigmoid outputs
    std::vector<double> coeffs;      // N x K
    std::vector<double> x_noise;
    lsf::FramedSignal filtered;  // all-pole outputs before windowing
    std::vector<double> out;
  };

  void check_shape(const RawParams& raw) const {
    require(raw.sources.size() == num_sources(), "parameter set has the wrong number of sources");
    require(raw.num_frames == num_frames_ && raw.order == cfg_.synth.lpc_order, "parameter shape mismatch");
    for (const auto& s : raw.sources) {
      require(s.alpha.size() == num_frames_ && s.gain.size() == num_frames_ &&
                  s.lsf.size() == num_frames_ * (raw.order + 1) && s.noise_mag.size() == cfg_.synth.noise_mag_len,
              "parameter shape mismatch");
      for (const auto& b : {std::span<const double>(s.alpha), std::span<const double>(s.gain),
                            std::span<const double>(s.lsf), std::span<const double>(s.noise_mag)})
        for (double v : b) require(std::isfinite(v), "non-finite raw parameter");
    }
  }

  SourceForward forward(const SourceRaw& raw, std::size_t j) const {
    const auto& sc = cfg_.synth;
    const std::size_t order = sc.lpc_order;
    SourceForward f;
    f.params = to_source_params(raw, order);
    f.increments = lsf::exp_sigmoid(raw.lsf, kLsfYMax);
    f.coeffs = synth::lpc_frames(f.params);

    const auto alpha_t = dsp::hann_upsample(f.params.alpha, sc.hop, length_);
    std::vector<double> harm(length_);
    for (std::size_t t = 0; t < length_; ++t) harm[t] = alpha_t[t] * harmonics_[j][t];
    const auto x_harm = synth::fir_filter(harm, r_ir_, sc.fir_fft_size());
    const auto d_ir = design_noise_ir(f.params.noise_mag);
    f.x_noise = synth::fir_filter(noise_[j], d_ir, sc.fir_fft_size());
    const auto e = synth::frame_excitation(x_harm, f.x_noise, f.params.gain, sc);

    f.filtered = lsf::FramedSignal(sc.frame_len, sc.hop, num_frames_);
    f.out.assign(length_, 0.0);
    for (std::size_t n = 0; n < num_frames_; ++n) {
      auto y = f.filtered.frame(n);
      lsf::allpole_filter(e.frame(n), std::span<const double>(f.coeffs).subspan(n * order, order), y);
      const std::size_t start = n * sc.hop;
      for (std::size_t t = 0; t < sc.frame_len && start + t < length_; ++t) f.out[start + t] += window_[t] * y[t];
    }
    for (double v : f.out)
      if (!std::isfinite(v)) throw Error("non-finite value in all-pole synthesis stage (source " + std::to_string(j) + ")");
    return f;
  }

  std::vector<double> design_noise_ir(std::span<const double> mag) const {
    const std::size_t l_len = mag.size();
    std::vector<double> ir(cfg_.synth.noise_ir_len, 0.0);
    for (std::size_t k = 0; k < ir.size(); ++k)
      for (std::size_t l = 0; l < l_len; ++l) ir[k] += noise_design_[k * l_len + l] * mag[l];
    return ir;
  }

  void backward(std::size_t j, const SourceRaw& raw, const SourceForward& f, std::span<const double> grad_out,
                SourceRaw& g) const {
    const auto& sc = cfg_.synth;
    const std::size_t order = sc.lpc_order;
    const std::size_t frame_len = sc.frame_len;

    std::vector<double> grad_x_harm(length_, 0.0), grad_x_noise(length_, 0.0);
    std::vector<double> grad_y(frame_len), grad_e(frame_len), grad_a(order);
    for (std::size_t n = 0; n < num_frames_; ++n) {
      const std::size_t start = n * sc.hop;
      for (std::size_t t = 0; t < frame_len; ++t)
        grad_y[t] = start + t < length_ ? window_[t] * grad_out[start + t] : 0.0;
      std::fill(grad_a.begin(), grad_a.end(), 0.0);
      lsf::allpole_filter_adjoint(std::span<const double>(f.coeffs).subspan(n * order, order), f.filtered.frame(n),
                                  grad_y, grad_e, grad_a);

      // LPC -> LSF -> increments -> raw.
      const auto omegas = f.params.lsf_frame(n);
      const auto grad_omega = lsf::lsf_to_lpc_adjoint(omegas, grad_a);
      const auto incr = std::span<const double>(f.increments).subspan(n * (order + 1), order + 1);
      const auto grad_v = lsf::raw_to_lsf_adjoint(incr, grad_omega);
      for (std::size_t k = 0; k <= order; ++k) {
        const std::size_t idx = n * (order + 1) + k;
        g.lsf[idx] = grad_v[k] * lsf::exp_sigmoid_derivative(raw.lsf[idx], kLsfYMax);
      }

      // Excitation framing.
      double grad_gain = 0.0;
      for (std::size_t t = 0; t < frame_len && start + t < length_; ++t) {
        grad_x_harm[start + t] += grad_e[t];
        grad_x_noise[start + t] += f.params.gain[n] * grad_e[t];
        grad_gain += grad_e[t] * f.x_noise[start + t];
      }
      g.gain[n] = grad_gain * lsf::exp_sigmoid_derivative(raw.gain[n], kAmpYMax);
    }

    // Noise branch: x_noise = w * d, d = D mag.
    const auto grad_ir = synth::fir_filter_adjoint_taps(grad_x_noise, noise_[j], sc.noise_ir_len);
    const std::size_t l_len = sc.noise_mag_len;
    for (std::size_t l = 0; l < l_len; ++l) {
      double acc = 0.0;
      for (std::size_t k = 0; k < grad_ir.size(); ++k) acc += noise_design_[k * l_len + l] * grad_ir[k];
      g.noise_mag[l] = acc * lsf::exp_sigmoid_derivative(raw.noise_mag[l], kAmpYMax);
    }

    // Harmonic branch: x_harm = (alpha_t h) * r.
    auto grad_harm = synth::fir_filter_adjoint_input(grad_x_harm, r_ir_, sc.fir_fft_size());
    for (std::size_t t = 0; t < length_; ++t) grad_harm[t] *= harmonics_[j][t];
    const auto grad_alpha = dsp::hann_upsample_adjoint(grad_harm, num_frames_, sc.hop);
    for (std::size_t n = 0; n < num_frames_; ++n)
      g.alpha[n] = grad_alpha[n] * lsf::exp_sigmoid_derivative(raw.alpha[n], kAmpYMax);
  }

  FitConfig cfg_;
  std::vector<synth::F0Track> f0s_;
  objective::MultiscaleLoss loss_;
  std::size_t length_ = 0;
  std::size_t num_frames_ = 0;
  std::vector<double> r_ir_;
  std::vector<double> noise_design_;
  std::vector<double> window_;
  std::vector<std::vector<double>> harmonics_;
  std::vector<std::vector<double>> noise_;
};

// Bias-corrected ADAM update of one parameter array.
inline void adam_update(std::span<double> x, std::span<const double> g, std::span<double> m, std::span<double> v,
                        std::size_t step, const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    x[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
  }
}

struct AdamState {
  RawParams m;
  RawParams v;
  std::size_t step = 0;

  explicit AdamState(const RawParams& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

inline void adam_step(RawParams& params, AdamState& state, const RawParams& grad, const AdamConfig& cfg) {
  auto xs = params.blocks();
  auto gs = grad.blocks();
  auto ms = state.m.blocks();
  auto vs = state.v.blocks();
  require(xs.size() == gs.size() && xs.size() == ms.size(), "ADAM state does not match parameters");
  ++state.step;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    require(xs[b].size() == gs[b].size() && xs[b].size() == ms[b].size(), "ADAM state does not match parameters");
    adam_update(xs[b], gs[b], ms[b], vs[b], state.step, cfg);
  }
}

inline GradientRecord loss_and_gradient(const RawParams& raw, const std::vector<synth::F0Track>& f0s,
                                        std::span<const double> mixture, const FitConfig& cfg) {
  return FitProblem(mixture, f0s, cfg).evaluate(raw);
}

struct FitResult {
  RawParams params;                 // lowest-loss parameters seen
  std::vector<double> loss_trace;   // loss before each update
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

// Runs cfg.steps ADAM iterations from `init` and keeps the best parameters.
inline FitResult fit(const FitProblem& problem, RawParams init, const ProgressFn& progress = {}) {
  const auto& cfg = problem.config();
  FitResult result;
  result.loss_trace.reserve(cfg.steps);
  RawParams params = std::move(init);
  AdamState state(params);
  auto consider = [&](double loss, std::size_t step) {
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.best_step = step;
      result.params = params;
    }
  };
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    GradientRecord rec;
    try {
      rec = problem.evaluate(params);
    } catch (const Error& e) {
      throw Error("fit diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(rec.loss)) throw Error("fit diverged at step " + std::to_string(step) + ": loss is NaN");
    result.loss_trace.push_back(rec.loss);
    consider(rec.loss, step);
    if (progress) progress(step, rec.loss);
    adam_step(params, state, rec.gradient, cfg.adam);
  }
  double final_loss;
  try {
    final_loss = problem.evaluate(params, false).loss;
  } catch (const Error& e) {
    throw Error("fit diverged at step " + std::to_string(cfg.steps) + ": " + e.what());
  }
  consider(final_loss, cfg.steps);
  return result;
}

// Fits J source models (one per F0 track) to a mixture from the default
// initialization.
inline FitResult fit_mixture(std::span<const double> mixture, const std::vector<synth::F0Track>& f0s,
                             const FitConfig& cfg, const ProgressFn& progress = {}) {
  require(!f0s.empty(), "J must be >= 1");
  FitProblem problem(mixture, f0s, cfg);
  return fit(problem, problem.initial_params(), progress);
}

}  // namespace pssep::diff
