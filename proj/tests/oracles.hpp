#pragma once

// Reference implementations used only by the tests. Each one is written
// from the textbook definition and shares no code with the library path it
// checks.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace oracle {

// X[k] = sum_n x[n] exp(-2 pi i k n / N) for k = 0..N/2, by direct summation.
inline std::vector<std::complex<double>> naive_rdft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// |H(e^{i w})| of an FIR filter, by direct evaluation.
inline double fir_response(std::span<const double> ir, double omega) {
  std::complex<double> acc = 0.0;
  for (std::size_t t = 0; t < ir.size(); ++t) acc += ir[t] * std::polar(1.0, -omega * static_cast<double>(t));
  return std::abs(acc);
}

// Coefficients (lowest power of z^-1 first) of the product of two polynomials.
inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
  return c;
}

// LPC coefficients a_1..a_K of A(z) = (P(z) + Q(z)) / 2 where P and Q are
// rebuilt from their unit-circle roots: P has the root z = -1 and the
// conjugate pairs at the odd-indexed LSFs, Q the root z = +1 and the pairs at
// the even-indexed LSFs.
inline std::vector<double> lpc_from_lsf_roots(std::span<const double> omegas) {
  std::vector<double> p = {1.0, 1.0};
  std::vector<double> q = {1.0, -1.0};
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    const std::vector<double> quad = {1.0, -2.0 * std::cos(omegas[k]), 1.0};
    if (k % 2 == 0)
      p = poly_mul(p, quad);
    else
      q = poly_mul(q, quad);
  }
  std::vector<double> a(omegas.size());
  for (std::size_t k = 1; k <= omegas.size(); ++k) a[k - 1] = 0.5 * (p[k] + q[k]);
  return a;
}

// Sorted random LSFs strictly inside (0, pi) with a minimum spacing.
inline std::vector<double> random_lsf(std::mt19937_64& rng, std::size_t order, double min_gap = 1e-3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> gaps(order + 1);
  double total = 0.0;
  for (auto& g : gaps) {
    g = min_gap + u(rng);
    total += g;
  }
  std::vector<double> w(order);
  double acc = 0.0;
  for (std::size_t k = 0; k < order; ++k) {
    acc += gaps[k];
    w[k] = std::numbers::pi * acc / total;
  }
  return w;
}

// SI-SDR in dB from its definition, without a cap.
inline double si_sdr_db(std::span<const double> est, std::span<const double> ref) {
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  const double alpha = dot / rr;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = alpha * ref[i];
    target += s * s;
    noise += (est[i] - s) * (est[i] - s);
  }
  return 10.0 * std::log10(target / noise);
}

inline std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

}  // namespace oracle
