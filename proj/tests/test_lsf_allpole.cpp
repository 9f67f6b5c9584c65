#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pssep/lsf_allpole.hpp"

using namespace pssep;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
constexpr double kPi = std::numbers::pi;

TEST_CASE("exp_sigmoid values and limits", "[lsf]") {
  const double expected = 2.0 * std::pow(0.5, std::log(10.0)) + 1e-7;
  CHECK_THAT(lsf::exp_sigmoid(0.0, 2.0), WithinRel(expected, 1e-14));
  CHECK_THAT(lsf::exp_sigmoid(0.0, 2.0), WithinAbs(0.4053993, 1e-6));
  CHECK_THAT(lsf::exp_sigmoid(-800.0, 2.0), WithinAbs(1e-7, 1e-20));
  CHECK_THAT(lsf::exp_sigmoid(800.0, 2.0), WithinAbs(2.0 + 1e-7, 1e-15));
}

TEST_CASE("exp_sigmoid is strictly increasing with a matching derivative", "[lsf][property]") {
  double prev = lsf::exp_sigmoid(-20.0, 1.0);
  for (double x = -19.9; x < 20.0; x += 0.1) {
    const double y = lsf::exp_sigmoid(x, 1.0);
    CHECK(y > prev);
    prev = y;
    const double h = 1e-5;
    const double fd = (lsf::exp_sigmoid(x + h, 1.0) - lsf::exp_sigmoid(x - h, 1.0)) / (2 * h);
    CHECK_THAT(lsf::exp_sigmoid_derivative(x, 1.0), WithinRel(fd, 1e-5) || WithinAbs(fd, 1e-10));
  }
}

TEST_CASE("raw_to_lsf builds normalized cumulative sums", "[lsf]") {
  const std::vector<double> uniform = {1.0, 1.0, 1.0};
  auto w = lsf::raw_to_lsf(uniform);
  REQUIRE(w.size() == 2);
  CHECK_THAT(w[0], WithinAbs(kPi / 3, 1e-15));
  CHECK_THAT(w[1], WithinAbs(2 * kPi / 3, 1e-15));

  const std::vector<double> skewed = {2.0, 1.0, 1.0};
  w = lsf::raw_to_lsf(skewed);
  CHECK_THAT(w[0], WithinAbs(kPi / 2, 1e-15));
  CHECK_THAT(w[1], WithinAbs(3 * kPi / 4, 1e-15));

  const std::vector<double> bad = {1.0, 0.0, 1.0};
  CHECK_THROWS_WITH(lsf::raw_to_lsf(bad), "non-positive LSF increment");
}

TEST_CASE("raw_to_lsf output is strictly increasing below pi", "[lsf][property]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> raw(21);
    for (auto& r : raw) r = u(rng);
    const auto w = lsf::raw_to_lsf(lsf::exp_sigmoid(raw, 2.0));
    CHECK_NOTHROW(lsf::validate_lsf(w));
  }
}

TEST_CASE("lsf_to_lpc hand-traced cases", "[lsf]") {
  const std::vector<double> flat = {kPi / 3, 2 * kPi / 3};
  auto a = lsf::lsf_to_lpc(flat);
  CHECK_THAT(a[0], WithinAbs(0.0, 1e-15));
  CHECK_THAT(a[1], WithinAbs(0.0, 1e-15));

  const std::vector<double> w = {kPi / 2, 2 * kPi / 3};
  a = lsf::lsf_to_lpc(w);
  CHECK_THAT(a[0], WithinAbs(0.5, 1e-15));
  CHECK_THAT(a[1], WithinAbs(0.5, 1e-15));
  // z^2 + 0.5 z + 0.5 has complex roots of modulus sqrt(0.5).
  CHECK_THAT(lsf::lpc_stability(a), WithinAbs(std::sqrt(0.5), 1e-5));
}

TEST_CASE("uniform LSFs give the flat filter at every order", "[lsf]") {
  for (std::size_t order : {2u, 4u, 10u, 20u}) {
    std::vector<double> w(order);
    for (std::size_t k = 0; k < order; ++k) w[k] = kPi * (k + 1) / (order + 1);
    for (double c : lsf::lsf_to_lpc(w)) CHECK_THAT(c, WithinAbs(0.0, 1e-10));
  }
}

TEST_CASE("lsf_to_lpc matches polynomials rebuilt from unit-circle roots", "[lsf][oracle]") {
  std::mt19937_64 rng(42);
  for (std::size_t order : {2u, 4u, 10u, 20u}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto w = oracle::random_lsf(rng, order);
      const auto a = lsf::lsf_to_lpc(w);
      const auto ref = oracle::lpc_from_lsf_roots(w);
      double err = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < order; ++k) {
        err = std::max(err, std::abs(a[k] - ref[k]));
        scale = std::max(scale, std::abs(ref[k]));
      }
      CHECK(err <= 1e-9 * std::max(scale, 1.0));
    }
  }
}

TEST_CASE("lsf_to_lpc rejects invalid input", "[lsf]") {
  const std::vector<double> odd = {0.5, 1.0, 1.5};
  CHECK_THROWS_AS(lsf::lsf_to_lpc(odd), Error);
  const std::vector<double> unsorted = {1.0, 0.5};
  CHECK_THROWS_AS(lsf::lsf_to_lpc(unsorted), Error);
  const std::vector<double> beyond = {1.0, kPi};
  CHECK_THROWS_AS(lsf::lsf_to_lpc(beyond), Error);
}

TEST_CASE("lpc_stability trivial cases", "[lsf]") {
  const std::vector<double> none = {0.0, 0.0};
  CHECK(lsf::lpc_stability(none) == 0.0);
  const std::vector<double> one_pole = {-0.9};
  CHECK_THAT(lsf::lpc_stability(one_pole), WithinAbs(0.9, 1e-12));
}

TEST_CASE("random raw parameters always give stable filters", "[lsf][property]") {
  // Raw values in [-2, 2]; see the diagnostic below for wider ranges.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> raw(21);
    for (auto& r : raw) r = u(rng);
    const auto a = lsf::lsf_to_lpc(lsf::raw_to_lsf(lsf::exp_sigmoid(raw, 2.0)));
    CHECK(lsf::lpc_stability(a) < 1.0);
  }
}

TEST_CASE("stability under 64-bit rounding for wide raw ranges", "[lsf][diagnostic]") {
  // Large |raw| squeezes neighbouring LSFs to 1e-4..1e-8 rad; the rounded
  // coefficients then put near-unit poles on either side of the circle.
  for (double range : {3.0, 5.0, 10.0}) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-range, range);
    int unstable = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> raw(21);
      for (auto& r : raw) r = u(rng);
      const auto a = lsf::lsf_to_lpc(lsf::raw_to_lsf(lsf::exp_sigmoid(raw, 2.0)));
      if (lsf::lpc_stability(a) >= 1.0) ++unstable;
    }
    WARN("raw range +-" << range << ": " << unstable << "/1000 with max pole modulus >= 1");
    CHECK(unstable <= 1000);
  }
}

TEST_CASE("LSF adjoints match finite differences", "[lsf][gradient]") {
  std::mt19937_64 rng(99);
  const auto w = oracle::random_lsf(rng, 20, 0.05);
  const auto g_a = oracle::random_signal(rng, 20);
  const auto grad = lsf::lsf_to_lpc_adjoint(w, g_a);
  auto objective = [&](const std::vector<double>& omega) {
    const auto a = lsf::lsf_to_lpc(omega);
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += g_a[k] * a[k];
    return acc;
  };
  for (std::size_t k = 0; k < w.size(); ++k) {
    auto plus = w, minus = w;
    const double h = 1e-6;
    plus[k] += h;
    minus[k] -= h;
    const double fd = (objective(plus) - objective(minus)) / (2 * h);
    CHECK_THAT(grad[k], WithinRel(fd, 1e-6) || WithinAbs(fd, 1e-8));
  }

  std::vector<double> v = {0.3, 1.2, 0.7, 0.9, 0.2};
  const auto g_w = oracle::random_signal(rng, 4);
  const auto grad_v = lsf::raw_to_lsf_adjoint(v, g_w);
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto plus = v, minus = v;
    const double h = 1e-6;
    plus[i] += h;
    minus[i] -= h;
    const auto wp = lsf::raw_to_lsf(plus), wm = lsf::raw_to_lsf(minus);
    double fd = 0.0;
    for (std::size_t k = 0; k < 4; ++k) fd += g_w[k] * (wp[k] - wm[k]) / (2 * h);
    CHECK_THAT(grad_v[i], WithinRel(fd, 1e-6) || WithinAbs(fd, 1e-9));
  }
}

TEST_CASE("allpole_filter recursion and adjoint", "[lsf]") {
  const std::vector<double> a = {0.5, 0.5};
  std::vector<double> e(8, 0.0), y(8);
  e[0] = 1.0;
  lsf::allpole_filter(e, a, y);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == -0.5);
  CHECK(y[2] == -0.25);

  std::mt19937_64 rng(4);
  const auto coeffs = lsf::lsf_to_lpc(oracle::random_lsf(rng, 6, 0.1));
  const auto exc = oracle::random_signal(rng, 64);
  const auto gy = oracle::random_signal(rng, 64);
  std::vector<double> out(64), ge(64), ga(6, 0.0);
  lsf::allpole_filter(exc, coeffs, out);
  lsf::allpole_filter_adjoint(coeffs, out, gy, ge, ga);
  auto objective = [&](const std::vector<double>& ee, const std::vector<double>& aa) {
    std::vector<double> yy(64);
    lsf::allpole_filter(ee, aa, yy);
    double acc = 0.0;
    for (std::size_t t = 0; t < 64; ++t) acc += gy[t] * yy[t];
    return acc;
  };
  const double h = 1e-6;
  for (std::size_t k = 0; k < 6; ++k) {
    auto p = coeffs, m = coeffs;
    p[k] += h;
    m[k] -= h;
    CHECK_THAT(ga[k], WithinRel((objective(exc, p) - objective(exc, m)) / (2 * h), 1e-6));
  }
  for (std::size_t t : {0u, 10u, 63u}) {
    auto p = exc, m = exc;
    p[t] += h;
    m[t] -= h;
    CHECK_THAT(ge[t], WithinRel((objective(p, coeffs) - objective(m, coeffs)) / (2 * h), 1e-6));
  }
}

TEST_CASE("allpole_filter_frames", "[lsf]") {
  const std::size_t frame_len = 16, hop = 8, frames = 5, order = 2;
  const std::size_t len = frames * hop;
  std::mt19937_64 rng(12);
  const auto signal = oracle::random_signal(rng, len);
  lsf::FramedSignal e(frame_len, hop, frames);
  for (std::size_t n = 0; n < frames; ++n)
    for (std::size_t t = 0; t < frame_len && n * hop + t < len; ++t) e.frame(n)[t] = signal[n * hop + t];

  SECTION("zero coefficients reproduce the Hann overlap-add of the excitation") {
    std::vector<double> zeros(frames * order, 0.0);
    const auto out = lsf::allpole_filter_frames(e, zeros, order, len);
    // Hann at 50 % overlap sums to one wherever two frames overlap.
    for (std::size_t t = hop; t < len; ++t) CHECK_THAT(out[t], WithinAbs(signal[t], 1e-12));
  }
  SECTION("zero excitation gives silence") {
    lsf::FramedSignal silent(frame_len, hop, frames);
    std::vector<double> coeffs(frames * order, 0.3);
    for (double v : lsf::allpole_filter_frames(silent, coeffs, order, len)) CHECK(v == 0.0);
  }
  SECTION("coefficient count must match frame count") {
    std::vector<double> coeffs((frames - 1) * order, 0.0);
    CHECK_THROWS_WITH(lsf::allpole_filter_frames(e, coeffs, order, len),
                      "coefficient count does not match frame count");
  }
}

TEST_CASE("silent frames do not influence other frames", "[lsf][property]") {
  const std::size_t frame_len = 32, hop = 16, frames = 8, order = 4;
  const std::size_t len = frames * hop;
  std::mt19937_64 rng(31);
  lsf::FramedSignal e(frame_len, hop, frames);
  const std::vector<std::size_t> active = {1, 4, 6};
  for (std::size_t n : active)
    for (auto& v : e.frame(n)) v = std::normal_distribution<double>()(rng);
  std::vector<double> coeffs;
  for (std::size_t n = 0; n < frames; ++n) {
    const auto a = lsf::lsf_to_lpc(oracle::random_lsf(rng, order, 0.1));
    coeffs.insert(coeffs.end(), a.begin(), a.end());
  }
  const auto base = lsf::allpole_filter_frames(e, coeffs, order, len);
  // Permute the coefficient sets of the silent frames.
  auto permuted = coeffs;
  const std::vector<std::size_t> silent = {0, 2, 3, 5, 7};
  for (std::size_t i = 0; i < silent.size(); ++i) {
    const std::size_t from = silent[(i + 2) % silent.size()];
    std::copy_n(coeffs.begin() + from * order, order, permuted.begin() + silent[i] * order);
  }
  const auto out = lsf::allpole_filter_frames(e, permuted, order, len);
  for (std::size_t t = 0; t < len; ++t) CHECK(out[t] == base[t]);
}

TEST_CASE("zero-state frame boundaries: deviation from continuous filtering", "[lsf][diagnostic]") {
  // With identical coefficients in every frame, continuous filtering of the
  // whole signal is the reference; the frame-wise zero-state scheme differs
  // only through the truncated history at each frame start.
  const std::size_t frame_len = 512, hop = 256, frames = 40, order = 20;
  const std::size_t len = frames * hop;
  std::mt19937_64 rng(2);
  const auto x = oracle::random_signal(rng, len + frame_len);
  std::vector<double> omegas(order);
  for (std::size_t k = 0; k < order; ++k) omegas[k] = kPi * (k + 1) / (order + 1);
  omegas[2] = omegas[1] + 0.02;  // one fairly sharp resonance
  const auto a = lsf::lsf_to_lpc(omegas);
  lsf::FramedSignal e(frame_len, hop, frames);
  for (std::size_t n = 0; n < frames; ++n)
    for (std::size_t t = 0; t < frame_len; ++t) e.frame(n)[t] = x[n * hop + t];
  std::vector<double> coeffs;
  for (std::size_t n = 0; n < frames; ++n) coeffs.insert(coeffs.end(), a.begin(), a.end());
  const auto framed = lsf::allpole_filter_frames(e, coeffs, order, len);
  std::vector<double> continuous(len);
  lsf::allpole_filter(std::span<const double>(x).first(len), a, continuous);
  double err = 0.0, ref = 0.0;
  for (std::size_t t = hop; t < len; ++t) {
    err += std::pow(framed[t] - continuous[t], 2);
    ref += continuous[t] * continuous[t];
  }
  const double ratio_db = 10.0 * std::log10(err / ref);
  WARN("zero-state boundary error: " << ratio_db << " dB (pole radius " << lsf::lpc_stability(a) << ")");
  CHECK(ratio_db < -10.0);
}
