#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "pssep/separation.hpp"
#include "pssep/synth_model.hpp"

using namespace pssep;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) { return synth::white_noise(n, seed); }

std::vector<double> tone(std::size_t n, double hz) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(t) / 16000.0);
  return x;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rms(const std::vector<double>& a) {
  double e = 0.0;
  for (double v : a) e += v * v;
  return std::sqrt(e / static_cast<double>(a.size()));
}

}  // namespace

TEST_CASE("padding layout", "[sep]") {
  const auto cfg = sep::default_mask_config();
  const auto p = sep::pad_layout(16000, cfg);
  CHECK(p.front == 2048);
  CHECK(p.padded_len % 256 == 0);
  CHECK(p.padded_len >= 16000 + 4096);
  const auto x = noise(16000, 1);
  const auto y = sep::pad(x, p);
  CHECK(y[2047] == 0.0);
  CHECK(y[2048] == x[0]);
  CHECK_THROWS_AS(sep::pad(noise(10, 1), p), Error);
}

TEST_CASE("mask examples", "[sep]") {
  const auto a = noise(12000, 2);
  SECTION("J=1 gives a unit mask") {
    const auto m = sep::soft_masks({a});
    for (double v : m.masks[0].values) CHECK(v == 1.0);
  }
  SECTION("identical sources share equally") {
    const auto m = sep::soft_masks({a, a});
    for (std::size_t j = 0; j < 2; ++j)
      for (double v : m.masks[j].values) CHECK_THAT(v, WithinAbs(0.5, 1e-12));
  }
  SECTION("silent bins fall back to 1/J") {
    const std::vector<double> z(5000, 0.0);
    const auto m = sep::soft_masks({z, z, z});
    for (double v : m.masks[2].values) CHECK(v == 1.0 / 3.0);
  }
  SECTION("disjoint bands") {
    // Low tone vs high tone; each mask should keep its own band.
    const auto lo = tone(12000, 300.0), hi = tone(12000, 5000.0);
    const auto m = sep::soft_masks({lo, hi});
    const auto spec = dsp::magnitude(dsp::stft(sep::pad(lo, m.layout), m.config));
    double in_band = 0.0, total = 0.0;
    for (std::size_t n = 0; n < spec.num_frames; ++n)
      for (std::size_t f = 0; f < spec.num_bins; ++f) {
        const double e = spec(f, n) * spec(f, n) * m.masks[0](f, n);
        total += e;
        if (f < 640) in_band += e;
      }
    CHECK(in_band / total > 0.95);
    // Near 5 kHz the second mask dominates.
    const auto mid = m.masks[0].num_frames / 2;
    CHECK(m.masks[1](640, mid) > 0.99);
    CHECK(m.masks[0](38, mid) > 0.99);
  }
  CHECK_THROWS_AS(sep::soft_masks({}), Error);
  CHECK_THROWS_AS(sep::soft_masks({a, noise(100, 3)}), Error);
  CHECK_THROWS_AS(sep::soft_masks({a}, {2048, 300, dsp::WindowType::hann}), Error);
}

TEST_CASE("wiener filtering examples", "[sep]") {
  const auto m = noise(10000, 4);
  SECTION("unit mask returns the mixture") {
    const auto out = sep::wiener_separate(m, sep::soft_masks({noise(10000, 5)}));
    std::vector<double> d(m.size());
    for (std::size_t t = 0; t < m.size(); ++t) d[t] = out[0][t] - m[t];
    CHECK(rms(d) < 1e-6);
  }
  SECTION("half masks halve the mixture") {
    const auto s = noise(10000, 6);
    const auto out = sep::wiener_separate(m, sep::soft_masks({s, s}));
    for (std::size_t t = 0; t < m.size(); ++t) CHECK_THAT(out[1][t], WithinAbs(0.5 * m[t], 1e-9));
  }
  SECTION("complementary binary masks sum to the mixture") {
    auto set = sep::soft_masks({noise(10000, 7), noise(10000, 8)});
    std::mt19937_64 rng(9);
    for (std::size_t c = 0; c < set.masks[0].values.size(); ++c) {
      const double b = static_cast<double>(rng() & 1);
      set.masks[0].values[c] = b;
      set.masks[1].values[c] = 1.0 - b;
    }
    const auto out = sep::wiener_separate(m, set);
    std::vector<double> sum(m.size());
    for (std::size_t t = 0; t < m.size(); ++t) sum[t] = out[0][t] + out[1][t];
    CHECK(max_abs_diff(sum, m) < 1e-9);
  }
  SECTION("shape mismatch") {
    const auto set = sep::soft_masks({noise(9000, 5)});
    CHECK_THROWS_AS(sep::wiener_separate(m, set), Error);
  }
}

TEST_CASE("partition of unity, boundedness and mixture consistency", "[sep][property]") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t J = 1 + rng() % 4;
    const std::size_t len = 3000 + rng() % 20000;
    std::vector<std::vector<double>> s;
    for (std::size_t j = 0; j < J; ++j) {
      auto x = noise(len, rng());
      // Sparse spectra so that some bins are nearly empty.
      x = synth::fir_filter(x, synth::fir_from_magnitude(std::vector<double>(65, 1e-3 * (j + 1)), 128), 1024);
      s.push_back(x);
    }
    const auto masks = sep::soft_masks(s);
    CHECK(sep::partition_error(s, masks) < 1e-6);
    for (const auto& m : masks.masks)
      for (double v : m.values) CHECK((v >= 0.0 && v <= 1.0));
    const auto mix = noise(len, rng());
    const auto out = sep::wiener_separate(mix, masks);
    std::vector<double> sum(len, 0.0);
    for (const auto& o : out)
      for (std::size_t t = 0; t < len; ++t) sum[t] += o[t];
    CHECK(max_abs_diff(sum, mix) < 1e-5);
  }
}
