#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "errors.hpp"

namespace kac {

namespace detail {

using Exponents = std::vector<int>;

inline void enumerate_monomials(int n, int degree, Exponents& cur, int pos, int left,
                                std::vector<Exponents>& out) {
  if (pos == n) {
    out.push_back(cur);
    return;
  }
  for (int a = 0; a <= left; ++a) {
    cur[pos] = a;
    enumerate_monomials(n, degree, cur, pos + 1, left - a, out);
  }
  cur[pos] = 0;
}

inline double double_factorial_odd(int k) {  // (k - 1)!! for even k
  double r = 1.0;
  for (int j = k - 1; j > 1; j -= 2) r *= j;
  return r;
}

/// E[prod x_i^{a_i}] under the uniform law on the sphere of radius sqrt(n).
inline double sphere_monomial_moment(const Exponents& a) {
  const int n = static_cast<int>(a.size());
  int total = 0;
  double prod = 1.0;
  for (int k : a) {
    if (k % 2) return 0.0;
    total += k;
    prod *= double_factorial_odd(k) / std::pow(2.0, k / 2);
  }
  double lg = std::lgamma(0.5 * n) - std::lgamma(0.5 * (n + total));
  return std::pow(double(n), 0.5 * total) * std::exp(lg) * prod;
}

/// Average over theta of cos^m sin^k.
inline double trig_average(int m, int k) {
  if (m % 2 || k % 2) return 0.0;
  double r = double_factorial_odd(m) * double_factorial_odd(k);
  for (int j = m + k; j > 1; j -= 2) r /= j;
  return r;
}

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

/// Q m for a monomial m, as a sparse polynomial.
inline std::map<Exponents, double> apply_q(const Exponents& e) {
  const int n = static_cast<int>(e.size());
  std::map<Exponents, double> out;
  const double pairs = 0.5 * n * (n - 1);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const int a = e[i], b = e[j];
      // (c x_i + s x_j)^a (-s x_i + c x_j)^b averaged over theta
      for (int p = 0; p <= a; ++p)
        for (int q = 0; q <= b; ++q) {
          int cpow = (a - p) + q, spow = p + (b - q);
          double avg = trig_average(cpow, spow);
          if (avg == 0.0) continue;
          double coef = binomial(a, p) * binomial(b, q) * avg * ((b - q) % 2 ? -1.0 : 1.0);
          Exponents t = e;
          t[i] = (a - p) + (b - q);
          t[j] = p + q;
          out[t] += coef / pairs;
        }
    }
  return out;
}

}  // namespace detail

struct GeneratorSpectrum {
  int N = 0;
  int degree = 0;
  std::size_t basis_size = 0;
  std::size_t rank = 0;
  std::vector<double> eigenvalues;  // ascending; includes 0 for constants

  double gap(double tol = 1e-8) const {
    for (double e : eigenvalues)
      if (e > tol) return e;
    throw StateError("GeneratorSpectrum: no nonzero eigenvalue");
  }
};

/// Spectrum of -L_N = N (I - Q) on polynomials of total degree <= degree restricted to the sphere.
inline GeneratorSpectrum generator_matrix_smallN(int N, int degree) {
  require(N >= 3 && N <= 6, "generator_matrix_smallN: N must lie in 3..6");
  require(degree >= 1, "generator_matrix_smallN: degree must be >= 1");
  if (degree > 6)
    throw ConditioningError("generator_matrix_smallN: degree " + std::to_string(degree) +
                            " exceeds 6; monomial Gram matrix too ill-conditioned");
  std::vector<detail::Exponents> basis;
  detail::Exponents cur(N, 0);
  detail::enumerate_monomials(N, degree, cur, 0, degree, basis);
  const auto m = static_cast<Eigen::Index>(basis.size());

  auto add = [](const detail::Exponents& a, const detail::Exponents& b) {
    detail::Exponents c(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) c[k] = a[k] + b[k];
    return c;
  };

  Eigen::MatrixXd G(m, m), QG(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a; b < m; ++b)
      G(a, b) = G(b, a) = detail::sphere_monomial_moment(add(basis[a], basis[b]));
  for (Eigen::Index b = 0; b < m; ++b) {
    auto qb = detail::apply_q(basis[b]);
    for (Eigen::Index a = 0; a < m; ++a) {
      double s = 0.0;
      for (const auto& [e, c] : qb) s += c * detail::sphere_monomial_moment(add(basis[a], e));
      QG(a, b) = s;
    }
  }
  Eigen::MatrixXd K = N * (G - QG);
  double asym = (K - K.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * std::max(1.0, K.cwiseAbs().maxCoeff()))
    throw ConditioningError("generator_matrix_smallN: assembled form is not symmetric");
  K = 0.5 * (K + K.transpose());

  // Jacobi scaling, then whitening of the Gram matrix
  Eigen::VectorXd d = G.diagonal().cwiseSqrt().cwiseInverse();
  G = d.asDiagonal() * G * d.asDiagonal();
  K = d.asDiagonal() * K * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gs(G);
  const auto& lam = gs.eigenvalues();
  const double cut = 1e-10 * lam.maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < m; ++k)
    if (lam(k) > cut) keep.push_back(k);
  Eigen::MatrixXd B(m, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    B.col(static_cast<Eigen::Index>(k)) = gs.eigenvectors().col(keep[k]) / std::sqrt(lam(keep[k]));
  Eigen::MatrixXd Kt = B.transpose() * K * B;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ks(0.5 * (Kt + Kt.transpose()));

  GeneratorSpectrum out;
  out.N = N;
  out.degree = degree;
  out.basis_size = basis.size();
  out.rank = keep.size();
  for (Eigen::Index k = 0; k < ks.eigenvalues().size(); ++k) {
    double e = ks.eigenvalues()(k);
    out.eigenvalues.push_back(std::abs(e) < 1e-9 ? 0.0 : e);
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  return out;
}

/// Delta_N = (N + 2) / (2 (N - 1)).
inline double spectral_gap_formula(int N) { return (N + 2.0) / (2.0 * (N - 1.0)); }

}  // namespace kac
