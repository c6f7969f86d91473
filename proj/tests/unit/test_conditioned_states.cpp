#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "kac/conditioned_states.hpp"

using namespace kac;
using boost::math::quadrature::gauss_kronrod;

namespace {

// D(f) = (1 / 2 pi) triple integral of psi(f f, f(theta) f(theta)) by tensor quadrature
double production_limit_bruteforce(const GridDensity1D& f, double gamma) {
  auto q = composite_gl(-12.0, 12.0, 60, 8);
  const int T = 96;
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j) {
      double a = q.x[i], b = q.x[j];
      double g = f(a) * f(b), acc = 0.0;
      for (int t = 0; t < T; ++t) {
        double th = kTwoPi * t / T;
        double c = std::cos(th), sn = std::sin(th);
        acc += psi(std::max(g, 1e-300),
                   std::max(f(a * c - b * sn) * f(a * sn + b * c), 1e-300));
      }
      s += q.w[i] * q.w[j] * acc * kTwoPi / T * std::pow(1.0 + a * a + b * b, gamma);
    }
  return s / kTwoPi;
}

const GridDensity1D& f14() {
  static const GridDensity1D f = mixture({0.25});
  return f;
}

}  // namespace

TEST(Marginal, GaussianGivesSphereMarginal) {
  const int N = 16;
  ConditionedFamily fam(gaussian(1.0), N);
  double r = std::sqrt(double(N));
  auto shape = [&](double v) { return std::pow(std::max(0.0, 1.0 - v * v / N), (N - 3) / 2.0); };
  double c = 1.0 / gauss_kronrod<double, 61>::integrate(shape, -r, r, 15, 1e-14);
  for (double v : {0.0, 0.5, 1.0, 2.0, 3.0, 3.9})
    EXPECT_NEAR(marginal(fam, v), c * shape(v), 1e-6) << v;
  EXPECT_EQ(marginal(fam, 4.0), 0.0);
  EXPECT_EQ(marginal(fam, 5.0), 0.0);
}

TEST(Marginal, UnitMass) {
  for (int N : {16, 64}) {
    ConditionedFamily fam(f14(), N);
    double r = std::sqrt(double(N));
    double m = gauss_kronrod<double, 61>::integrate([&](double v) { return marginal(fam, v); },
                                                    -r, r, 15, 1e-12);
    EXPECT_NEAR(m, 1.0, 1e-5) << N;
  }
}

TEST(Marginal, SupDistanceToGeneratorDecreases) {
  double prev = 1e9;
  for (int N : {16, 64, 256}) {
    ConditionedFamily fam(f14(), N);
    double sup = 0.0;
    for (double v = -8.0; v <= 8.0; v += 0.01)
      sup = std::max(sup, std::abs(marginal(fam, v) - f14()(v)));
    EXPECT_LT(sup, prev) << N;
    prev = sup;
  }
}

TEST(Marginal, TwoMarginalSymmetricAndIntegrates) {
  ConditionedFamily fam(f14(), 12);
  for (auto [a, b] : {std::pair{0.3, -1.2}, {2.0, 0.1}, {-1.5, -1.7}})
    EXPECT_NEAR(marginal(fam, a, b), marginal(fam, b, a), 1e-12);
  // integrating out the second velocity recovers the first marginal
  for (double a : {0.0, 1.0, 2.5}) {
    double r = std::sqrt(12.0 - a * a);
    double m = gauss_kronrod<double, 61>::integrate([&](double b) { return marginal(fam, a, b); },
                                                    -r, r, 15, 1e-12);
    EXPECT_NEAR(m / marginal(fam, a), 1.0, 1e-5) << a;
  }
  EXPECT_THROW(marginal(fam, 3, std::vector<double>{0.0, 0.0, 0.0}), ArgumentError);
}

TEST(Family, Preconditions) {
  EXPECT_THROW(ConditionedFamily(f14(), 2), ArgumentError);
  EXPECT_THROW(ConditionedFamily(gaussian(2.0), 8), ArgumentError);
}

TEST(Sample, OnSphere) {
  ConditionedFamily fam(f14(), 20);
  auto rng = make_rng(3);
  for (int k = 0; k < 2000; ++k) {
    auto v = sample(fam, rng);
    ASSERT_EQ(v.n(), 20u);
    ASSERT_NEAR(v.energy(), 20.0, 1e-9);
  }
}

TEST(Sample, GaussianFirstCoordinateKolmogorovSmirnov) {
  const int N = 16, n = 100000;
  ConditionedFamily fam(gaussian(1.0), N);
  auto rng = make_rng(4);
  std::vector<double> x(n);
  for (int k = 0; k < n; ++k) x[k] = sample(fam, rng)[0];
  std::sort(x.begin(), x.end());
  double r = std::sqrt(double(N));
  auto shape = [&](double v) { return std::pow(std::max(0.0, 1.0 - v * v / N), (N - 3) / 2.0); };
  double c = gauss_kronrod<double, 61>::integrate(shape, -r, r, 15, 1e-14);
  double ks = 0.0;
  for (int k = 0; k < n; k += 50) {
    double cdf = gauss_kronrod<double, 31>::integrate(shape, -r, x[k], 10, 1e-12) / c;
    ks = std::max({ks, std::abs(cdf - double(k) / n), std::abs(cdf - double(k + 1) / n)});
  }
  EXPECT_LT(ks, 0.01);
}

TEST(Sample, MixtureHistogramMatchesMarginal) {
  const int N = 64, n = 100000, bins = 30;
  const double lo = -6.0, hi = 6.0, w = (hi - lo) / bins;
  ConditionedFamily fam(f14(), N);
  auto rng = make_rng(5);
  std::vector<double> count(bins, 0.0);
  for (int k = 0; k < n; ++k) {
    double v = sample(fam, rng)[k % N];
    int b = static_cast<int>(std::floor((v - lo) / w));
    if (b >= 0 && b < bins) count[b] += 1.0;
  }
  double l1 = 0.0, covered = 0.0;
  for (int b = 0; b < bins; ++b) {
    double p = gauss_kronrod<double, 31>::integrate([&](double v) { return marginal(fam, v); },
                                                    lo + b * w, lo + (b + 1) * w, 5, 1e-12);
    covered += p;
    l1 += std::abs(count[b] / n - p);
  }
  l1 += 1.0 - covered;
  EXPECT_LT(l1, 0.02);
}

TEST(Entropy, GaussianIsZero) {
  for (int N : {8, 32, 64}) EXPECT_NEAR(entropy_HN(ConditionedFamily(gaussian(1.0), N)), 0.0, 1e-6);
}

TEST(Entropy, PerParticleLimit) {
  double H = relative_entropy(f14());
  double prev = 1e9;
  for (int N : {32, 64, 128, 256}) {
    double h = entropy_HN(ConditionedFamily(f14(), N));
    EXPECT_GT(h, 0.0);
    double rel = std::abs(h / N - H) / H;
    EXPECT_LT(rel, prev) << N;
    prev = rel;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(Production, GaussianIsZero) {
  ConditionedFamily fam(gaussian(1.0), 16);
  for (double g : {0.0, 0.5, 1.0}) EXPECT_NEAR(production_DN(fam, g), 0.0, 1e-8);
  EXPECT_NEAR(log_power_integral(fam, 1.0), 0.0, 1e-8);
}

TEST(Production, PerParticleLimit) {
  double D = production_limit_bruteforce(f14(), 0.0);
  double prev = 1e9;
  for (int N : {32, 64, 128, 256}) {
    double d = production_DN(ConditionedFamily(f14(), N), 0.0);
    double rel = std::abs(2.0 * d / (N * D) - 1.0);
    EXPECT_LT(rel, prev) << N;
    prev = rel;
  }
  EXPECT_LT(prev, 0.10);
}

TEST(Production, NondecreasingInGamma) {
  ConditionedFamily fam(f14(), 32);
  double a = production_DN(fam, 0.0), b = production_DN(fam, 0.5), c = production_DN(fam, 1.0);
  EXPECT_GT(a, 0.0);
  EXPECT_LE(a, b);
  EXPECT_LE(b, c);
  EXPECT_THROW(production_DN(fam, 1.5), ArgumentError);
}

TEST(Production, BetaVariantMatchesLogPowerAtGammaZero) {
  ConditionedFamily fam(f14(), 32);
  // D with psi_beta equals (N / 2) times the log-power integral
  EXPECT_NEAR(production_DN(fam, 0.0, 1.0) / (16.0 * log_power_integral(fam, 1.0)), 1.0, 2e-3);
}

TEST(LogPower, FiniteAcrossBeta) {
  for (int N : {16, 64})
    for (double beta : {0.25, 0.5, 1.0, 2.0}) {
      double v = log_power_integral(ConditionedFamily(f14(), N), beta);
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GT(v, 0.0);
    }
  EXPECT_THROW(log_power_integral(ConditionedFamily(f14(), 8), 0.0), ArgumentError);
}

TEST(Chaos, GaussianMatchesSphereMarginalGap) {
  double prev = 1e9;
  for (int N : {8, 32, 128}) {
    ConditionedFamily fam(gaussian(1.0), N);
    double r = std::sqrt(double(N));
    double c = gauss_kronrod<double, 61>::integrate(
        [&](double v) { return std::pow(1.0 - v * v / N, (N - 3) / 2.0); }, -r, r, 15, 1e-14);
    auto gap = [&](double v) {
      double m = std::exp(-0.5 * v * v) / std::sqrt(kTwoPi);
      double u = std::abs(v) < r ? std::pow(1.0 - v * v / N, (N - 3) / 2.0) / c : 0.0;
      return std::abs(u - m);
    };
    double oracle = gauss_kronrod<double, 61>::integrate(gap, -r, r, 15, 1e-12) +
                    2.0 * gauss_kronrod<double, 61>::integrate(gap, r, 40.0, 15, 1e-12);
    double d = chaos_distance(fam, 1);
    EXPECT_NEAR(d / oracle, 1.0, 2e-3) << N;
    EXPECT_LT(d, prev);
    prev = d;
  }
}

TEST(Chaos, MixtureDistanceDecreases) {
  for (int k : {1, 2}) {
    double a = chaos_distance(ConditionedFamily(f14(), 32), k);
    double b = chaos_distance(ConditionedFamily(f14(), 256), k);
    EXPECT_GE(b, 0.0);
    EXPECT_LT(b, a) << k;
  }
}

TEST(Oracle, ReductionMatchesMonteCarloAtN8) {
  const int N = 8;
  const long n = 1000000;
  ConditionedFamily fam(f14(), N);
  const auto& f = fam.generator();
  const double hl = 0.5 * std::log(kTwoPi);
  const double dz = fam.log_z() + 0.5 * N * std::log(kTwoPi) + 0.5 * N;
  auto rng = make_rng(2024);
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  double sh = 0.0, s0 = 0.0, s1 = 0.0;
  for (long k = 0; k < n; ++k) {
    auto V = sample(fam, rng);
    double x = 0.0;
    for (int i = 0; i < N; ++i) x += f.log_at(V[i]) + hl + 0.5 * V[i] * V[i];
    sh += x - dz;
    std::size_t i = pick(rng), j;
    do j = pick(rng);
    while (j == i);
    auto W = apply_rotation(V, {i, j, angle(rng)});
    double lr = f.log_at(W[i]) + f.log_at(W[j]) - f.log_at(V[i]) - f.log_at(V[j]);
    double y = 0.5 * N * std::expm1(lr) * lr;
    s0 += y;
    s1 += y * (1.0 + V[i] * V[i] + V[j] * V[j]);
  }
  EXPECT_NEAR(sh / n / entropy_HN(fam), 1.0, 0.02);
  EXPECT_NEAR(s0 / n / production_DN(fam, 0.0), 1.0, 0.02);
  EXPECT_NEAR(s1 / n / production_DN(fam, 1.0), 1.0, 0.02);
}

TEST(Report, CsvRow) {
  auto path = std::filesystem::temp_directory_path() / "kac_functional_report.csv";
  std::filesystem::remove(path);
  ConditionedFamily fam(f14(), 16);
  auto r = functional_report(fam, 0.5, 1.0, 7);
  append_functional_csv(path.string(), {r, r});
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3);
  EXPECT_GT(r.H_N, 0.0);
  EXPECT_EQ(r.seed, 7u);
}
