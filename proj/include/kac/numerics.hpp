#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <vector>

#include "errors.hpp"

namespace kac {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kDensityFloor = 1e-300;

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream) pairs; replicas use stream = replica index.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

struct Quadrature {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

namespace detail {
inline Quadrature compute_gauss_legendre(int n) {
  Quadrature q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double pn = n == 1 ? z : p1;
      double pm = n == 1 ? 1.0 : p0;
      dp = n * (z * pn - pm) / (z * z - 1.0);
      double dz = pn / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    q.x[i] = -z;
    q.x[n - 1 - i] = z;
    q.w[i] = q.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return q;
}
}  // namespace detail

/// Gauss-Legendre rule on [-1, 1]; cached per order.
inline const Quadrature& gauss_legendre(int n) {
  require(n >= 1 && n <= 512, "gauss_legendre: order out of range");
  static std::mutex mu;
  static std::map<int, Quadrature> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
  return it->second;
}

/// Composite Gauss-Legendre on [a, b] with `panels` equal panels.
inline Quadrature composite_gl(double a, double b, int panels, int order = 8) {
  require(panels >= 1 && b >= a, "composite_gl: bad interval");
  const Quadrature& g = gauss_legendre(order);
  Quadrature q;
  q.x.reserve(panels * order);
  q.w.reserve(panels * order);
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    double mid = a + (p + 0.5) * h;
    for (int i = 0; i < order; ++i) {
      q.x.push_back(mid + 0.5 * h * g.x[i]);
      q.w.push_back(0.5 * h * g.w[i]);
    }
  }
  return q;
}

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_sum_exp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_line: need at least two points");
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LineFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

inline double relative_change(double a, double b) {
  double d = std::max(std::abs(a), std::abs(b));
  return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Four-point Lagrange interpolation on a uniform grid; zero outside [x0, x0 + (n-1) h].
inline double cubic_uniform(const double* y, std::size_t n, double x0, double h, double x) {
  double t = (x - x0) / h;
  if (!(t >= 0.0) || t > static_cast<double>(n - 1)) return 0.0;
  auto i = static_cast<std::ptrdiff_t>(std::floor(t));
  auto last = static_cast<std::ptrdiff_t>(n) - 1;
  if (i >= last) return y[last];
  std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i - 1, 0, std::max<std::ptrdiff_t>(last - 3, 0));
  if (last < 3) {
    double u = t - i;
    return (1 - u) * y[i] + u * y[i + 1];
  }
  double u = t - j;
  double l0 = -(u - 1) * (u - 2) * (u - 3) / 6.0;
  double l1 = u * (u - 2) * (u - 3) / 2.0;
  double l2 = -u * (u - 1) * (u - 3) / 2.0;
  double l3 = u * (u - 1) * (u - 2) / 6.0;
  return l0 * y[j] + l1 * y[j + 1] + l2 * y[j + 2] + l3 * y[j + 3];
}

}  // namespace kac
