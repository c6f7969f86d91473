#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "densities.hpp"
#include "numerics.hpp"

namespace kac {

/// Values of g(phi) = f(rho cos phi) f(rho sin phi) on K equispaced angles.
struct CircleSamples {
  std::vector<double> g;
  std::vector<double> logg;
  double h = 0.0;  // 2 pi / K
};

/// Smallest length scale of f, used to pick angular resolution.
inline double density_scale(const GridDensity1D& f) {
  if (f.analytic()) {
    double s = 1e300;
    for (const auto& c : f.components()) s = std::min(s, std::sqrt(c.variance));
    return s;
  }
  return std::max(0.25, 8.0 * f.dv());
}

/// Angular node count for radius rho: about `per_scale` nodes per density scale of arc length.
inline std::size_t angular_nodes(double rho, double scale, double per_scale,
                                 std::size_t k_min = 64, std::size_t k_max = 16384) {
  double want = per_scale * kTwoPi * rho / scale;
  std::size_t k = next_pow2(static_cast<std::size_t>(std::max(1.0, want)));
  return std::clamp(k, k_min, k_max);
}

inline CircleSamples sample_circle(const GridDensity1D& f, double rho, std::size_t K) {
  CircleSamples c;
  c.h = kTwoPi / static_cast<double>(K);
  c.g.resize(K);
  c.logg.resize(K);
  for (std::size_t a = 0; a < K; ++a) {
    double ph = a * c.h;
    double l = f.log_at(rho * std::cos(ph)) + f.log_at(rho * std::sin(ph));
    l = std::max(l, std::log(kDensityFloor));
    c.logg[a] = l;
    c.g[a] = std::exp(l);
  }
  return c;
}

/// A(rho^2) = integral over [0, 2 pi) of f(rho cos phi) f(rho sin phi).
inline double circle_integral(const GridDensity1D& f, double rho, std::size_t K) {
  const double h = kTwoPi / static_cast<double>(K);
  double s = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    double ph = a * h;
    s += f(rho * std::cos(ph)) * f(rho * std::sin(ph));
  }
  return s * h;
}

inline double circle_integral(const CircleSamples& c) {
  double s = 0.0;
  for (double x : c.g) s += x;
  return s * c.h;
}

/// Double angular integral of psi(g(phi), g(phi')): an O(K) identity for the discrete sum.
inline double circle_psi(const CircleSamples& c) {
  const std::size_t K = c.g.size();
  double lbar = 0.0;
  for (double l : c.logg) lbar += l;
  lbar /= static_cast<double>(K);
  double s = 0.0;
  for (std::size_t a = 0; a < K; ++a) s += c.g[a] * (c.logg[a] - lbar);
  return std::max(0.0, s * 2.0 * K * c.h * c.h);
}

/// Double angular integral of psi_beta(g(phi), g(phi')).
inline double circle_psi_beta(const CircleSamples& c, double beta) {
  const std::size_t K = c.g.size();
  const double p = 1.0 + beta;
  double s = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    double ga = c.g[a], la = c.logg[a];
    double row = 0.0;
    for (std::size_t b = a + 1; b < K; ++b) {
      double d = std::abs(la - c.logg[b]);
      if (d == 0.0) continue;
      double q = beta == 1.0 ? d * d : std::pow(d, p);
      row += std::abs(ga - c.g[b]) * q;
    }
    s += row;
  }
  return 2.0 * s * c.h * c.h;
}

}  // namespace kac
