#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "numerics.hpp"

namespace kac {

/// A point on Kac's sphere S^{N-1}(sqrt N).
class VelocityEnsemble {
 public:
  static constexpr double kEnergyTolerance = 1e-10;

  explicit VelocityEnsemble(std::vector<double> v) : v_(std::move(v)) {
    require(v_.size() >= 2, "VelocityEnsemble: need at least two velocities");
    double e = energy();
    double n = static_cast<double>(v_.size());
    if (std::abs(e - n) > kEnergyTolerance * n)
      throw ArgumentError("VelocityEnsemble: sum of squares " + std::to_string(e) +
                          " differs from N = " + std::to_string(v_.size()));
  }

  std::size_t n() const { return v_.size(); }
  const std::vector<double>& velocities() const { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }

  double energy() const {
    double e = 0.0;
    for (double x : v_) e += x * x;
    return e;
  }

 private:
  std::vector<double> v_;
};

struct RotationSpec {
  std::size_t i = 0;
  std::size_t j = 1;
  double theta = 0.0;
};

/// In-place rotation of coordinates (i, j); no validation.
inline void rotate_pair(double& a, double& b, double c, double s) {
  double x = a * c + b * s;
  double y = -a * s + b * c;
  a = x;
  b = y;
}

inline void rotate_pair(double& a, double& b, double theta) {
  rotate_pair(a, b, std::cos(theta), std::sin(theta));
}

inline VelocityEnsemble apply_rotation(const VelocityEnsemble& v, const RotationSpec& r) {
  if (r.i >= v.n() || r.j >= v.n() || r.i == r.j)
    throw ArgumentError("apply_rotation: indices out of range or equal");
  std::vector<double> w = v.velocities();
  rotate_pair(w[r.i], w[r.j], r.theta);
  return VelocityEnsemble(std::move(w));
}

/// Rescale to radius sqrt(n) in place.
inline void renormalize_energy(std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  double s = std::sqrt(static_cast<double>(v.size()) / e);
  for (double& x : v) x *= s;
}

inline VelocityEnsemble uniform_sphere_sample(int n, Rng& rng) {
  require(n >= 2, "uniform_sphere_sample: n must be >= 2");
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  double e = 0.0;
  do {
    e = 0.0;
    for (double& x : v) {
      x = z(rng);
      e += x * x;
    }
  } while (e == 0.0);
  renormalize_energy(v);
  return VelocityEnsemble(std::move(v));
}

/// log |S^{n-1}| = log(2 pi^{n/2} / Gamma(n/2)).
inline double log_sphere_area(int n) {
  require(n >= 1, "sphere_area: n must be >= 1");
  return std::log(2.0) + 0.5 * n * std::log(kPi) - std::lgamma(0.5 * n);
}

inline double sphere_area(int n) { return std::exp(log_sphere_area(n)); }

/// log of (|S^{n-k-1}|/|S^{n-1}|) n^{-(n-2)/2} (n-s)_+^{(n-k-2)/2}.
inline double log_marginal_kernel(int n, int k, double s) {
  require(k >= 1 && k <= n - 2, "marginal_kernel: k must satisfy 1 <= k <= n-2");
  if (s >= n) return kNegInf;
  return log_sphere_area(n - k) - log_sphere_area(n) - 0.5 * (n - 2) * std::log(double(n)) +
         0.5 * (n - k - 2) * std::log(n - s);
}

inline double marginal_kernel(int n, int k, double s) {
  return std::exp(log_marginal_kernel(n, k, s));
}

}  // namespace kac
