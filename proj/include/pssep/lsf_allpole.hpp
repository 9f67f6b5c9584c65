#pragma once

// Stable all-pole filters parameterized by line spectral frequencies.
//
// Convention: A(z) = 1 + sum_k a_k z^-k and the filter recursion is
//   y(t) = e(t) - sum_k a_k y(t - k).
// Uniformly spaced LSFs map to A(z) = 1.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"

namespace pssep::lsf {

inline constexpr double kSigmoidFloor = 1e-7;

namespace detail {

inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

// y = y_max * sigmoid(x)^ln(10) + 1e-7
inline double exp_sigmoid(double x, double y_max) {
  return y_max * std::exp(std::numbers::ln10 * detail::log_sigmoid(x)) + kSigmoidFloor;
}

inline double exp_sigmoid_derivative(double x, double y_max) {
  const double s_pow = std::exp(std::numbers::ln10 * detail::log_sigmoid(x));
  return y_max * std::numbers::ln10 * s_pow * (1.0 - detail::sigmoid(x));
}

// Raw value mapping to y; y must lie strictly inside (1e-7, y_max + 1e-7).
inline double exp_sigmoid_inverse(double y, double y_max) {
  require(y > kSigmoidFloor && y < y_max + kSigmoidFloor, "value outside the exp-sigmoid range");
  const double s = std::pow((y - kSigmoidFloor) / y_max, 1.0 / std::numbers::ln10);
  return std::log(s) - std::log1p(-s);
}

inline std::vector<double> exp_sigmoid(std::span<const double> x, double y_max) {
  require(y_max > 0.0, "y_max must be positive");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = exp_sigmoid(x[i], y_max);
  return y;
}

// Throws unless 0 < w_1 < ... < w_K < pi and K is even.
inline void validate_lsf(std::span<const double> omegas) {
  require(omegas.size() % 2 == 0, "LSF order must be even");
  double prev = 0.0;
  for (double w : omegas) {
    require(std::isfinite(w) && w > prev, "LSFs must be strictly increasing in (0, pi)");
    prev = w;
  }
  require(prev < std::numbers::pi, "LSFs must be strictly increasing in (0, pi)");
}

// K+1 positive increments -> K LSFs: normalize to sum pi, then cumulative sum.
inline std::vector<double> raw_to_lsf(std::span<const double> increments) {
  require(increments.size() >= 2, "need at least two LSF increments");
  double total = 0.0;
  for (double v : increments) {
    require(v > 0.0, "non-positive LSF increment");
    total += v;
  }
  const std::size_t order = increments.size() - 1;
  std::vector<double> omegas(order);
  double acc = 0.0;
  for (std::size_t k = 0; k < order; ++k) {
    acc += increments[k];
    omegas[k] = std::numbers::pi * acc / total;
  }
  return omegas;
}

// Gradient of raw_to_lsf with respect to its increments.
inline std::vector<double> raw_to_lsf_adjoint(std::span<const double> increments, std::span<const double> grad_omega) {
  const std::size_t order = increments.size() - 1;
  require(grad_omega.size() == order, "raw_to_lsf_adjoint: size mismatch");
  double total = 0.0;
  for (double v : increments) total += v;
  // omega_k = pi * c_k / S with c_k the partial sum; d omega_k / d v_i =
  // (pi * [i <= k] - omega_k) / S.
  double dot = 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < order; ++k) {
    acc += increments[k];
    dot += grad_omega[k] * std::numbers::pi * acc / total;
  }
  std::vector<double> grad(order + 1);
  double suffix = 0.0;
  for (std::size_t i = order + 1; i-- > 0;) {
    if (i < order) suffix += grad_omega[i];
    grad[i] = (std::numbers::pi * suffix - dot) / total;
  }
  return grad;
}

namespace detail {

// Builds the half-coefficient recursion of one of the two symmetric
// polynomials from the cosines of its LSFs. state[j + 1] holds p'_j for
// j = -1 .. half. Snapshots of the state before every outer step are
// appended to `history` when it is non-null.
template <typename T>
std::vector<T> lsf_half_poly(std::span<const T> cosines, std::size_t first, std::size_t half,
                             std::vector<std::vector<T>>* history) {
  std::vector<T> s(half + 2, T(0));
  s[0] = T(0);
  s[1] = T(1);
  s[2] = T(-2) * cosines[first];
  for (std::size_t k = 2; k <= half; ++k) {
    if (history) history->push_back(s);
    const T x = cosines[first + 2 * (k - 1)];
    s[k + 1] = T(-2) * s[k] * x + T(2) * s[k - 1];
    for (std::size_t i = k - 1; i >= 1; --i) s[i + 1] = s[i + 1] - T(2) * s[i] * x + s[i - 1];
  }
  return s;
}

// Reverse pass of lsf_half_poly. `grad` enters as the gradient of the final
// state and the cosine gradients are accumulated into grad_cos.
inline void lsf_half_poly_adjoint(std::span<const double> cosines, std::size_t first, std::size_t half,
                                  const std::vector<std::vector<double>>& history, std::vector<double> grad,
                                  std::span<double> grad_cos) {
  for (std::size_t k = half; k >= 2; --k) {
    const auto& old = history[k - 2];
    const std::size_t xi = first + 2 * (k - 1);
    const double x = cosines[xi];
    std::vector<double> g_old(grad);
    for (std::size_t i = 1; i <= k; ++i) g_old[i + 1] = 0.0;
    double gx = 0.0;
    for (std::size_t i = 1; i < k; ++i) {
      const double g = grad[i + 1];
      g_old[i + 1] += g;
      g_old[i] += -2.0 * x * g;
      g_old[i - 1] += g;
      gx += -2.0 * old[i] * g;
    }
    const double g = grad[k + 1];
    g_old[k - 1] += 2.0 * g;
    g_old[k] += -2.0 * x * g;
    gx += -2.0 * old[k] * g;
    grad_cos[xi] += gx;
    grad = std::move(g_old);
  }
  grad_cos[first] += -2.0 * grad[2];
}

}  // namespace detail

// LSFs -> LPC coefficients a_1..a_K (Kabal & Ramachandran style recursion).
// The recursion runs in extended precision and is rounded once at the end:
// with LSFs crowded near 0 or pi the polynomial is so ill-conditioned that
// the few ulps a 64-bit recursion loses can push a pole outside the unit
// circle, while the correctly rounded coefficients stay stable.
inline std::vector<double> lsf_to_lpc(std::span<const double> omegas) {
  using Wide = long double;
  validate_lsf(omegas);
  const std::size_t order = omegas.size();
  const std::size_t half = order / 2;
  std::vector<Wide> x(order);
  for (std::size_t k = 0; k < order; ++k) x[k] = std::cos(static_cast<Wide>(omegas[k]));
  const auto p = detail::lsf_half_poly<Wide>(x, 0, half, nullptr);
  const auto q = detail::lsf_half_poly<Wide>(x, 1, half, nullptr);
  std::vector<double> a(order);
  for (std::size_t k = 1; k <= half; ++k) {
    const Wide pk = p[k + 1] + p[k];
    const Wide qk = q[k + 1] - q[k];
    a[k - 1] = static_cast<double>(Wide(0.5) * (pk + qk));
  }
  for (std::size_t k = 1; k <= half; ++k) {
    const std::size_t m = half - k + 1;
    a[half + k - 1] = static_cast<double>(Wide(0.5) * ((p[m + 1] + p[m]) - (q[m + 1] - q[m])));
  }
  return a;
}

// Gradient of lsf_to_lpc with respect to the LSFs.
inline std::vector<double> lsf_to_lpc_adjoint(std::span<const double> omegas, std::span<const double> grad_a) {
  const std::size_t order = omegas.size();
  require(grad_a.size() == order, "lsf_to_lpc_adjoint: size mismatch");
  const std::size_t half = order / 2;
  std::vector<double> x(order);
  for (std::size_t k = 0; k < order; ++k) x[k] = std::cos(omegas[k]);
  std::vector<std::vector<double>> hist_p, hist_q;
  detail::lsf_half_poly<double>(x, 0, half, &hist_p);
  detail::lsf_half_poly<double>(x, 1, half, &hist_q);

  // Gradients of p_k = p'_k + p'_{k-1} and q_k = q'_k - q'_{k-1}.
  std::vector<double> gp(half + 1, 0.0), gq(half + 1, 0.0);
  for (std::size_t k = 1; k <= half; ++k) {
    gp[k] += 0.5 * grad_a[k - 1];
    gq[k] += 0.5 * grad_a[k - 1];
    const std::size_t m = half - k + 1;
    gp[m] += 0.5 * grad_a[half + k - 1];
    gq[m] -= 0.5 * grad_a[half + k - 1];
  }
  std::vector<double> gps(half + 2, 0.0), gqs(half + 2, 0.0);
  for (std::size_t k = 1; k <= half; ++k) {
    gps[k + 1] += gp[k];
    gps[k] += gp[k];
    gqs[k + 1] += gq[k];
    gqs[k] -= gq[k];
  }
  std::vector<double> grad_cos(order, 0.0);
  detail::lsf_half_poly_adjoint(x, 0, half, hist_p, std::move(gps), grad_cos);
  detail::lsf_half_poly_adjoint(x, 1, half, hist_q, std::move(gqs), grad_cos);
  std::vector<double> grad(order);
  for (std::size_t k = 0; k < order; ++k) grad[k] = -std::sin(omegas[k]) * grad_cos[k];
  return grad;
}

// Poles of 1/A(z), i.e. roots of z^K + a_1 z^(K-1) + ... + a_K.
inline std::vector<std::complex<double>> lpc_poles(std::span<const double> a) {
  const auto order = static_cast<Eigen::Index>(a.size());
  if (order == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(order, order);
  for (Eigen::Index k = 0; k < order; ++k) companion(0, k) = -a[static_cast<std::size_t>(k)];
  for (Eigen::Index k = 1; k < order; ++k) companion(k, k - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

// Largest pole modulus of 1/A(z); < 1 means stable.
inline double lpc_stability(std::span<const double> a) {
  double max_mod = 0.0;
  for (const auto& p : lpc_poles(a)) max_mod = std::max(max_mod, std::abs(p));
  return max_mod;
}

// Frames of T' samples taken every `hop` samples, stored frame-major.
struct FramedSignal {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t num_frames = 0;
  std::vector<double> data;

  FramedSignal() = default;
  FramedSignal(std::size_t len, std::size_t h, std::size_t n) : frame_len(len), hop(h), num_frames(n), data(len * n) {}

  std::span<double> frame(std::size_t n) { return {data.data() + n * frame_len, frame_len}; }
  std::span<const double> frame(std::size_t n) const { return {data.data() + n * frame_len, frame_len}; }
};

// y(t) = e(t) - sum_k a_k y(t-k) with zero initial state.
inline void allpole_filter(std::span<const double> e, std::span<const double> a, std::span<double> y) {
  const std::size_t order = a.size();
  for (std::size_t t = 0; t < e.size(); ++t) {
    double acc = e[t];
    const std::size_t kmax = std::min(order, t);
    for (std::size_t k = 1; k <= kmax; ++k) acc -= a[k - 1] * y[t - k];
    y[t] = acc;
  }
}

// Reverse-mode pass of allpole_filter. grad_a is accumulated, grad_e overwritten.
inline void allpole_filter_adjoint(std::span<const double> a, std::span<const double> y, std::span<const double> grad_y,
                                   std::span<double> grad_e, std::span<double> grad_a) {
  const std::size_t order = a.size();
  const std::size_t len = y.size();
  for (std::size_t t = len; t-- > 0;) {
    double lambda = grad_y[t];
    const std::size_t kmax = std::min(order, len - 1 - t);
    for (std::size_t k = 1; k <= kmax; ++k) lambda -= a[k - 1] * grad_e[t + k];
    grad_e[t] = lambda;
  }
  for (std::size_t k = 1; k <= order; ++k) {
    double acc = 0.0;
    for (std::size_t t = k; t < len; ++t) acc += grad_e[t] * y[t - k];
    grad_a[k - 1] -= acc;
  }
}

// Filters every frame independently (zero initial state), applies a periodic
// Hann window and overlap-adds. `coeffs` holds `order` values per frame.
inline std::vector<double> allpole_filter_frames(const FramedSignal& excitation, std::span<const double> coeffs,
                                                 std::size_t order, std::size_t out_len) {
  require(excitation.hop * 2 == excitation.frame_len, "all-pole synthesis requires hop = frame_len / 2");
  require(coeffs.size() == excitation.num_frames * order, "coefficient count does not match frame count");
  const auto window = dsp::make_window(dsp::WindowType::hann, excitation.frame_len);
  std::vector<double> out(out_len, 0.0);
  std::vector<double> y(excitation.frame_len);
  for (std::size_t n = 0; n < excitation.num_frames; ++n) {
    allpole_filter(excitation.frame(n), coeffs.subspan(n * order, order), y);
    const std::size_t start = n * excitation.hop;
    for (std::size_t t = 0; t < excitation.frame_len && start + t < out_len; ++t) out[start + t] += window[t] * y[t];
  }
  return out;
}

}  // namespace pssep::lsf
