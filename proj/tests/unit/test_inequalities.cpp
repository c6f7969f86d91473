#include <gtest/gtest.h>

#include <cmath>

#include "kac/inequalities.hpp"

using namespace kac;

TEST(GammaRatio, VillaniBoundAndLimit) {
  auto f = mixture({0.25});
  auto rows = gamma_ratio_sweep(f, 0.0, {16, 32, 64, 128, 256});
  for (const auto& r : rows) {
    EXPECT_TRUE(r.villani_checked);
    EXPECT_TRUE(r.villani_ok) << r.N;
    EXPECT_GE(r.ratio, 2.0 / (r.N - 1.0));
  }
  double limit = cercignani_ratio(f);
  EXPECT_LT(std::abs(rows.back().ratio / limit - 1.0), 0.1);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_LT(std::abs(rows[i].ratio - limit), std::abs(rows[i - 1].ratio - limit));
}

TEST(GammaRatio, VillaniOnOtherGenerators) {
  for (double d : {0.4, 0.1}) {
    auto rows = gamma_ratio_sweep(mixture({d}), 0.0, {16, 32});
    for (const auto& r : rows) EXPECT_TRUE(r.villani_ok) << d << ' ' << r.N;
  }
  auto g = gamma_ratio_sweep(mixture({0.25}), 0.5, {32});
  EXPECT_FALSE(g[0].villani_checked);
}

TEST(GammaRatio, ScheduleDecays) {
  auto rows = gamma_ratio_schedule(0.1, 0.0, {64, 128, 256, 512, 1024});
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].ratio, rows[i - 1].ratio);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.delta, std::pow(r.N, -0.8), 1e-15);
    EXPECT_TRUE(r.villani_ok);
  }
  EXPECT_LE(loglog_slope(rows), -0.5);
}

TEST(GammaRatio, GaussianIsDegenerate) {
  EXPECT_THROW(gamma_ratio_sweep(gaussian(1.0), 0.0, {16}), DegenerateError);
}

TEST(LogPower, SupConstant) {
  for (double eps : {0.25, 0.5, 1.0}) {
    double best = 0.0;
    for (double x = 1.0; x < 1e7; x *= 1.001) best = std::max(best, std::log(x) / std::pow(x, eps));
    EXPECT_NEAR(log_sup_constant(eps), best, 1e-6);
  }
}

TEST(LogPower, QuadraticWitnessMoments) {
  auto f = mixture({0.25});
  auto w = quadratic_witness(f, 1.0, 3.0);
  // hot component 0.25 M_2 >= 0.25 (4 pi)^{-1/2} e^{-v^2/2}
  double c = -std::log(0.25 / std::sqrt(4.0 * kPi));
  EXPECT_NEAR(w.Phi(0.0), c, 1e-12);
  // E v^2 = 1, E v^4 = 4 under f_{1/4}
  EXPECT_NEAR(w.M_Phi, 1.0 + c + c * c, 1e-8);
  // E X^4 = 4 (cos^4 + sin^4) + 6 cos^2 sin^2 averages to 15/4
  EXPECT_NEAR(w.M_avg, kTwoPi * (15.0 / 16.0 + c + c * c), 1e-5);
  EXPECT_NEAR(w.sup_f, f(0.0), 1e-12);
}

TEST(LogPower, WitnessValidation) {
  auto f = mixture({0.25});
  auto w = quadratic_witness(f, 1.0, 3.0);
  w.k = 2.0;  // k must exceed 1 + 1/beta = 2
  EXPECT_THROW(w.validate(f), ArgumentError);
  auto bad = quadratic_witness(f, 1.0, 3.0);
  bad.Phi = [](double v) { return 0.1 + 0.1 * v * v; };
  EXPECT_THROW(bad.validate(f), ArgumentError);
}

TEST(LogPower, EnvelopeHolds) {
  auto f = mixture({0.25});
  auto w = quadratic_witness(f, 1.0, 3.0);
  for (int N : {32, 64, 128, 256}) {
    auto e = logpower_envelope(w, ConditionedFamily(f, N));
    ASSERT_TRUE(e.applicable) << N;
    EXPECT_TRUE(e.pass) << N;
    EXPECT_LE(e.measured, e.envelope);
    ASSERT_EQ(e.by_epsilon.size(), 3u);
    EXPECT_DOUBLE_EQ(e.by_epsilon[1].second, e.envelope);
  }
}

TEST(Rescaled, ExponentArithmetic) {
  EXPECT_DOUBLE_EQ(rescaled_exponent(0.5, 1.0, 3.0), 1.0);
  EXPECT_NEAR(rescaled_exponent(0.999999, 1.0, 3.0), 0.0, 1e-5);
  EXPECT_LT(rescaled_exponent(0.6, 1.0, 3.0), rescaled_exponent(0.5, 1.0, 3.0));
  EXPECT_LT(rescaled_exponent(0.5, 1.0, 5.0), rescaled_exponent(0.5, 1.0, 3.0));
  EXPECT_THROW(rescaled_exponent(0.5, 1.0, 2.0), ArgumentError);
}

TEST(Rescaled, DisplayedConstantIsTheOptimum) {
  const double gamma = 0.5, beta = 1.0, k = 3.0, C = 0.12, M = 30.0;
  const double B = rescaled_tail_coefficient(beta, k, C, M), a = k * beta / (1 + beta) - 1.0;
  const double q = (k * beta - (1 + beta)) / (k * beta - gamma * (1 + beta));
  for (double x : {1e-3, 0.03, 1.0}) {
    double best = 1e300;
    for (double lam = 1e-3; lam < 1e8; lam *= 1.0001)
      best = std::min(best, std::pow(lam, 1.0 - gamma) * x + B * std::pow(lam, -a));
    EXPECT_NEAR(rescaled_C_hat(gamma, beta, k, C, M) * std::pow(x, q), best, 1e-6 * best);
  }
}

TEST(Rescaled, HoldsForQuarterMixture) {
  auto f = mixture({0.25});
  auto w = quadratic_witness(f, 1.0, 3.0);
  std::vector<ConditionedFamily> fams;
  for (int N : {32, 64, 128, 256}) fams.emplace_back(f, N);
  auto rep = rescaled_inequality_check(fams, 0.5, w);
  EXPECT_EQ(rep.lambda_grid.size(), 100u);
  EXPECT_DOUBLE_EQ(rep.C1, 2.0);
  EXPECT_DOUBLE_EQ(rep.exponent, 1.0);
  for (const auto& r : rep.rows) {
    EXPECT_TRUE(r.intermediate_ok) << r.N;
    EXPECT_TRUE(r.optimizer_ok) << r.N;
    EXPECT_TRUE(r.final_ok) << r.N;
    EXPECT_GT(r.D_one, r.D_gamma);
  }
  EXPECT_TRUE(rep.pass);
  EXPECT_TRUE(rep.to_json()["pass"].get<bool>());
  auto bad = w;
  bad.k = 1.5;
  EXPECT_THROW(rescaled_inequality_check(fams, 0.5, bad), ArgumentError);
}

TEST(Boltzmann, QuarterMixtureAndMaxwellian) {
  auto rep = boltzmann_inequality_check(mixture({0.25}), 0.5, 1.0, 3.0);
  EXPECT_TRUE(rep.hypotheses_ok) << rep.violation;
  EXPECT_DOUBLE_EQ(rep.moment_order, 6.0);
  EXPECT_NEAR(rep.moment, 15.0 * (0.25 * 8.0 + 0.75 * 8.0 / 27.0), 1e-8);
  EXPECT_DOUBLE_EQ(rep.exponent, rescaled_exponent(0.5, 1.0, 3.0));
  EXPECT_GT(rep.min_ratio, 0.0);
  auto m = boltzmann_inequality_check(gaussian(1.0), 0.5, 1.0, 3.0);
  EXPECT_TRUE(m.rows[0].trivial);
  EXPECT_FALSE(std::isfinite(m.min_ratio));
}

TEST(Boltzmann, HypothesisViolationIsReported) {
  // a narrow core is fine as long as a wide component keeps f >= C e^{-v^2}
  auto f = GridDensity1D::from_components({{0.5, 0.2}, {0.5, 1.8}}, 16.0, 4097, "narrow");
  auto rep = boltzmann_inequality_check(f, 0.5, 1.0, 3.0, 12.0);
  EXPECT_TRUE(rep.hypotheses_ok);
  // unit-variance exp(-a v^4): decays faster than any Gaussian
  const double a = std::pow(std::tgamma(0.75) / std::tgamma(0.25), 2.0);
  std::vector<double> y(4097);
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = -16.0 + i * 32.0 / 4096.0;
    y[i] = std::exp(-a * v * v * v * v);
  }
  auto g = GridDensity1D::from_values(16.0, y, "quartic");
  ASSERT_NEAR(moment(g, 2), 1.0, 1e-6);
  auto bad = boltzmann_inequality_check(g, 0.5, 1.0, 3.0, 12.0);
  EXPECT_FALSE(bad.hypotheses_ok);
  EXPECT_FALSE(bad.violation.empty());
}

TEST(Boltzmann, UniformAlongTrajectory) {
  auto s = make_pde_state(mixture({0.25}));
  EvolveOptions o;
  o.cadence = 0.5;
  o.record_production = false;
  o.keep_snapshots = true;
  auto tr = evolve(s, 0.5, 0.0, 5.0, o);
  auto rep = boltzmann_inequality_check(tr, 0.5, 1.0, 3.0);
  EXPECT_TRUE(rep.hypotheses_ok) << rep.violation;
  EXPECT_EQ(rep.rows.size(), 11u);
  EXPECT_GT(rep.min_ratio, 0.5 * rep.rows.front().ratio);
}
