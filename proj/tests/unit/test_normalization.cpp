#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "kac/normalization.hpp"

using namespace kac;

namespace {

const NormalizationLadder& gaussian_ladder() {
  static const NormalizationLadder L = build_ladder(gaussian(1.0), 64);
  return L;
}

}  // namespace

TEST(Ladder, ChiSquareAtMean) {
  const auto& L = gaussian_ladder();
  for (int n : {4, 16, 64}) {
    double exact = boost::math::pdf(boost::math::chi_squared(n), double(n));
    EXPECT_NEAR(L.hconv(n, n) / exact, 1.0, 1e-6) << n;
  }
}

TEST(Ladder, MassAndMean) {
  const auto& L = gaussian_ladder();
  for (int n = 2; n <= 64; ++n) {
    EXPECT_NEAR(L.level_mass(n), 1.0, 1e-5) << n;
    auto [m0, m1] = L.stored_moments(n);
    if (n >= 4) {
      EXPECT_NEAR(m0, 1.0, 1e-5) << n;
    }
    EXPECT_NEAR(m1 / n, 1.0, 1e-4) << n;
  }
}

TEST(Ladder, ConvolutionConsistency) {
  auto L = build_ladder(mixture({0.25}), 16);
  for (int m : {2, 4, 8}) {
    std::vector<double> a(L.nodes()), c(L.nodes());
    for (std::size_t j = 0; j < a.size(); ++j) {
      a[j] = std::exp(L.log_table(m)[j]);
      c[j] = std::exp(L.log_table(2 * m)[j]);
    }
    auto conv = convolve_truncated(a, a, a.size(), L.du());
    // trapezoid end corrections
    for (std::size_t j = 0; j < a.size(); ++j) conv[j] -= L.du() * a[0] * a[j];
    double l1 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) l1 += std::abs(conv[j] - c[j]) * L.du();
    EXPECT_LT(l1, 1e-6) << m;
  }
}

TEST(Ladder, SecondLevelMatchesDirectQuadrature) {
  auto f = mixture({0.25});
  auto L = build_ladder(f, 4);
  for (double u : {0.01, 0.5, 2.0, 9.0, 30.0}) {
    // h2(u) = integral over x in (0, u) of h(x) h(u - x), with x = u sin^2 t
    auto q = composite_gl(0.0, kPi / 2, 64, 16);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double a = std::sqrt(u) * std::sin(q.x[i]), b = std::sqrt(u) * std::cos(q.x[i]);
      s += q.w[i] * (f(a) * f(b) + f(-a) * f(b) + f(a) * f(-b) + f(-a) * f(-b)) / 2.0;
    }
    EXPECT_NEAR(L.hconv(2, u) / s, 1.0, 1e-6) << u;
  }
}

TEST(Ladder, LeakageDetected) {
  LadderOptions o;
  o.u_max = 20.0;
  EXPECT_THROW(build_ladder(gaussian(1.0), 16, o), ConfigurationError);
  EXPECT_THROW(build_ladder(gaussian(1.0), 1), ArgumentError);
}

TEST(Ladder, MissingLevelIsStateError) {
  LadderOptions o;
  o.keep = {8};
  auto L = build_ladder(gaussian(1.0), 8, o);
  EXPECT_THROW(L.log_hconv(4, 4.0), StateError);
  EXPECT_THROW(L.log_hconv(8, -1.0), RangeError);
  EXPECT_THROW(L.log_hconv(8, 2 * L.u_max()), RangeError);
}

TEST(ZValue, GaussianRadialClosedForm) {
  const auto& L = gaussian_ladder();
  for (int n = 2; n <= 64; ++n)
    for (double r2 : {n / 2.0, double(n), 2.0 * n})
      EXPECT_NEAR(z_value(L, n, r2), -0.5 * n * std::log(kTwoPi) - r2 / 2, 1e-6) << n << " " << r2;
  EXPECT_NEAR(z_value(L, 4, 4.0), -2 * std::log(kTwoPi) - 2, 1e-6);
  EXPECT_NEAR(z_value(L, 4, 4.0), -5.6758, 1e-4);
  EXPECT_THROW(z_value(L, 4, 0.0), RangeError);
}

TEST(ZValue, TotalMassIdentity) {
  auto L = build_ladder(mixture({0.25}), 16);
  for (int n : {3, 8, 16}) {
    // integral of Z_n(f, r) |S^{n-1}| r^{n-1} dr with r = sqrt(u)
    auto q = composite_gl(0.0, L.u_max(), 2000, 8);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double u = q.x[i];
      double lz = z_value(L, n, u);
      s += q.w[i] * std::exp(lz + log_sphere_area(n) + 0.5 * (n - 1) * std::log(u)) /
           (2 * std::sqrt(u));
    }
    EXPECT_NEAR(s, 1.0, 1e-4) << n;
  }
}

TEST(ZValue, LogRatioMatchesDifference) {
  auto L = build_ladder(mixture({0.25}), 40);
  double a = log_z_ratio(L, 38, 37.2, 40, 40.0);
  double b = z_value(L, 38, 37.2) - z_value(L, 40, 40.0);
  EXPECT_NEAR(a, b, 1e-9);
}

TEST(Clt, SigmaSquared) {
  EXPECT_NEAR(moment(gaussian(1.0), 4) - 1.0, 2.0, 1e-6);
  EXPECT_NEAR(moment(mixture({0.25}), 4) - 1.0, 3.0, 1e-6);
  auto L = build_ladder(mixture({0.25}), 8);
  EXPECT_NEAR(L.sigma2(), 3.0, 1e-6);
}

TEST(Clt, EnvelopeDecreasingForMixture) {
  LadderOptions o;
  o.keep = {32, 64, 128, 256};
  auto L = build_ladder(mixture({0.25}), 256, o);
  auto e = clt_envelope(L);
  ASSERT_EQ(e.n.size(), 4u);
  for (std::size_t i = 1; i < e.n.size(); ++i) EXPECT_LT(e.lambda_sup[i], e.lambda_sup[i - 1]);
  EXPECT_LT(e.lambda_sup.back(), 0.05);
  EXPECT_EQ(e.to_json().size(), 4u);
}

TEST(Clt, LeadingTermImprovesWithN) {
  auto f = mixture({0.3});
  auto L = build_ladder(f, 256);
  double prev = 1e9;
  for (int n : {32, 64, 128, 256}) {
    double rel = std::abs(std::expm1(clt_approx(f, n, n) - z_value(L, n, n)));
    EXPECT_LT(rel, prev) << n;
    prev = rel;
  }
}

TEST(Clt, NDependentSchedule) {
  EXPECT_NEAR(delta_schedule(0.1, 100), 0.0251, 1e-4);
  EXPECT_NEAR(sigma2_schedule(delta_schedule(0.1, 100)), 29.65, 0.05);
  // few hot particles (delta_N N = N^0.2) at small N: the envelope peaks near N = 128
  auto e = clt_envelope_ndependent(0.1, {64, 128, 256, 512, 1024}, 0);
  ASSERT_EQ(e.n.size(), 5u);
  EXPECT_NEAR(e.lambda_sup[0], 0.5524, 1e-3);
  EXPECT_NEAR(e.lambda_sup[1], 0.5783, 1e-3);
  for (std::size_t i = 2; i < e.n.size(); ++i) EXPECT_LT(e.lambda_sup[i], e.lambda_sup[i - 1]);
  EXPECT_LT(e.lambda_sup.back(), 0.45);
  auto e1 = clt_envelope_ndependent(0.1, {256}, 1);
  EXPECT_GT(e1.lambda_sup[0], 0.0);
  EXPECT_THROW(clt_envelope_ndependent(0.2, {64}, 0), ArgumentError);
  EXPECT_THROW(clt_envelope_ndependent(0.0, {64}, 0), ArgumentError);
}
