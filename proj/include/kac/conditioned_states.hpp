#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "circle_quadrature.hpp"
#include "densities.hpp"
#include "errors.hpp"
#include "normalization.hpp"
#include "numerics.hpp"
#include "sphere_geometry.hpp"

namespace kac {

struct FamilyOptions {
  LadderOptions ladder;
  int panels = 32;          // initial Gauss-Legendre panels (order 8) in the polar variable
  double per_scale = 3.0;   // initial angular nodes per density scale of arc length
  double rel_tol = 1e-3;    // resolutions are doubled until results move by less than this
  int max_doublings = 5;
  std::size_t max_trials = 1000000;
};

/// F_N = f^{(x)N} restricted to the sphere of radius sqrt(N) and renormalized.
class ConditionedFamily {
 public:
  ConditionedFamily(GridDensity1D f, int N, FamilyOptions opt = {})
      : f_(std::move(f)), N_(N), opt_(std::move(opt)), lazy_(std::make_shared<Lazy>()) {
    require(N >= 3, "ConditionedFamily: N must be >= 3");
    double m2 = moment(f_, 2);
    if (std::abs(m2 - 1.0) > 1e-6)
      throw ArgumentError("ConditionedFamily: generator second moment " + std::to_string(m2) +
                          " differs from 1");
    LadderOptions lo = opt_.ladder;
    lo.keep = {N - 2, N - 1, N};
    ladder_ = std::make_shared<NormalizationLadder>(build_ladder(f_, N, lo));
    if (ladder_->u_max() < N)
      throw ConfigurationError("ConditionedFamily: ladder u_max below N");
    log_hN_ = ladder_->log_hconv(N, N);
    scale_ = density_scale(f_);
  }

  const GridDensity1D& generator() const { return f_; }
  int N() const { return N_; }
  const NormalizationLadder& ladder() const { return *ladder_; }
  const FamilyOptions& options() const { return opt_; }
  double scale() const { return scale_; }

  /// log of h^{*(N-k)}(N - s) / h^{*N}(N); -inf once s >= N.
  double log_weight(int k, double s) const {
    require(k == 1 || k == 2, "ConditionedFamily: k must be 1 or 2");
    if (s >= N_) return kNegInf;
    return ladder_->log_hconv(N_ - k, N_ - s) - log_hN_;
  }

  double weight(int k, double s) const { return std::exp(log_weight(k, s)); }

  /// log Z_N(f, sqrt N) relative to the sphere measure.
  double log_z() const { return z_value(*ladder_, N_, N_); }

  /// Ladder with every level 2..N-1, built on first use.
  const NormalizationLadder& sampling_ladder() const {
    std::call_once(lazy_->once, [this] {
      LadderOptions lo = opt_.ladder;
      lo.keep.clear();
      for (int n = 1; n <= N_ - 1; ++n) lo.keep.push_back(n);
      LadderOptions full = lo;
      if (full.u_max <= 0.0) full.u_max = ladder_->u_max();
      lazy_->ladder = std::make_unique<NormalizationLadder>(build_ladder(f_, N_ - 1, full));
      const auto& L = *lazy_->ladder;
      lazy_->prefix_max.assign(N_, {});
      for (int n = 2; n <= N_ - 1; ++n) {
        const auto& t = L.log_table(n);
        auto& pm = lazy_->prefix_max[n];
        pm.assign((t.size() + kBlock - 1) / kBlock, kNegInf);
        for (std::size_t j = 0; j < t.size(); ++j)
          pm[j / kBlock] = std::max(pm[j / kBlock], t[j]);
        for (std::size_t b = 1; b < pm.size(); ++b) pm[b] = std::max(pm[b], pm[b - 1]);
      }
    });
    return *lazy_->ladder;
  }

  /// Upper bound of log h^{*n} on [0, u] from the sampling ladder.
  double log_bound(int n, double u) const {
    const auto& L = sampling_ladder();
    auto j = std::min<std::size_t>(static_cast<std::size_t>(std::ceil(u / L.du())), L.nodes() - 1);
    return lazy_->prefix_max[n][j / kBlock];
  }

 private:
  static constexpr std::size_t kBlock = 64;
  struct Lazy {
    std::once_flag once;
    std::unique_ptr<NormalizationLadder> ladder;
    std::vector<std::vector<double>> prefix_max;
  };

  GridDensity1D f_;
  int N_;
  FamilyOptions opt_;
  std::shared_ptr<NormalizationLadder> ladder_;
  std::shared_ptr<Lazy> lazy_;
  double log_hN_ = 0.0;
  double scale_ = 1.0;
};

/// F_{N,k}(point) for k in {1, 2}.
inline double marginal(const ConditionedFamily& fam, int k, std::span<const double> point) {
  require(k == 1 || k == 2, "marginal: k must be 1 or 2");
  require(point.size() == static_cast<std::size_t>(k), "marginal: point must have k entries");
  double s = 0.0, lf = 0.0;
  for (double v : point) {
    s += v * v;
    lf += fam.generator().log_at(v);
  }
  if (s >= fam.N()) return 0.0;
  return std::exp(lf + fam.log_weight(k, s));
}

inline double marginal(const ConditionedFamily& fam, double v) {
  double p[1] = {v};
  return marginal(fam, 1, p);
}

inline double marginal(const ConditionedFamily& fam, double v1, double v2) {
  double p[2] = {v1, v2};
  return marginal(fam, 2, p);
}

namespace detail {

/// Integral over v in [-sqrt N, sqrt N] with v = sqrt(N) sin t.
inline double line_integral(const ConditionedFamily& fam, int panels,
                            const std::function<double(double)>& g) {
  const double r = std::sqrt(double(fam.N()));
  auto q = composite_gl(-kPi / 2, kPi / 2, panels, 8);
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    s += q.w[i] * r * std::cos(q.x[i]) * g(r * std::sin(q.x[i]));
  return s;
}

/// Integral over s in [0, N] with s = N sin^2 t; g receives rho = sqrt(s).
inline double radial_integral(const ConditionedFamily& fam, int panels,
                              const std::function<double(double)>& g) {
  const double r = std::sqrt(double(fam.N()));
  auto q = composite_gl(0.0, kPi / 2, panels, 8);
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double rho = r * std::sin(q.x[i]);
    s += q.w[i] * 2.0 * rho * r * std::cos(q.x[i]) * g(rho);
  }
  return s;
}

/// Evaluates eval(panels, per_scale) at doubling resolutions until two agree.
inline double refine(const FamilyOptions& opt, const std::string& what,
                     const std::function<double(int, double)>& eval) {
  int p = opt.panels;
  double ps = opt.per_scale;
  double prev = eval(p, ps);
  for (int d = 0; d < opt.max_doublings; ++d) {
    p *= 2;
    ps *= 2.0;
    double cur = eval(p, ps);
    if (std::abs(cur - prev) <= opt.rel_tol * std::abs(cur) + 1e-12) return cur;
    prev = cur;
  }
  throw AccuracyError(what + ": quadrature did not settle within " +
                      std::to_string(opt.max_doublings) + " doublings");
}

}  // namespace detail

/// Kac entropy H_N(F_N) = integral of F_N log F_N d sigma_N.
inline double entropy_HN(const ConditionedFamily& fam) {
  const auto& f = fam.generator();
  const int N = fam.N();
  const double half_log_2pi = 0.5 * std::log(kTwoPi);
  double mass = detail::line_integral(fam, 4 * fam.options().panels,
                                      [&](double v) { return marginal(fam, v); });
  if (std::abs(mass - 1.0) > 1e-4)
    throw AccuracyError("entropy_HN: first marginal has mass " + std::to_string(mass));
  double log_z_gauss = -0.5 * N * std::log(kTwoPi) - 0.5 * N;
  double dz = fam.log_z() - log_z_gauss;
  return detail::refine(fam.options(), "entropy_HN", [&](int panels, double) {
    double I = detail::line_integral(fam, panels, [&](double v) {
      double lf = f.log_at(v);
      double w = fam.log_weight(1, v * v);
      if (w == kNegInf) return 0.0;
      return std::exp(lf + w) * (lf + half_log_2pi + 0.5 * v * v);
    });
    return N * I - dz;
  });
}

/// D_{N,gamma}(F_N); with beta set, psi is replaced by psi_beta.
inline double production_DN(const ConditionedFamily& fam, double gamma,
                            std::optional<double> beta = std::nullopt) {
  require(gamma >= 0.0 && gamma <= 1.0, "production_DN: gamma must lie in [0, 1]");
  if (beta) require(*beta > 0.0, "production_DN: beta must be positive");
  const auto& f = fam.generator();
  double per_n = detail::refine(fam.options(), "production_DN", [&](int panels, double ps) {
    return detail::radial_integral(fam, panels, [&](double rho) {
      double s = rho * rho;
      double w = fam.log_weight(2, s);
      if (w == kNegInf) return 0.0;
      auto c = sample_circle(f, rho, angular_nodes(rho, fam.scale(), ps));
      double phi = beta ? circle_psi_beta(c, *beta) : circle_psi(c);
      return std::exp(w) * std::pow(1.0 + s, gamma) * phi;
    }) / (8.0 * kPi);
  });
  return fam.N() * per_n;
}

/// (1 / 2 pi) integral of psi_beta(F_N(V), F_N(R V)) d sigma_N d theta.
inline double log_power_integral(const ConditionedFamily& fam, double beta) {
  require(beta > 0.0, "log_power_integral: beta must be positive");
  const auto& f = fam.generator();
  return detail::refine(fam.options(), "log_power_integral", [&](int panels, double ps) {
    return detail::radial_integral(fam, panels, [&](double rho) {
      double w = fam.log_weight(2, rho * rho);
      if (w == kNegInf) return 0.0;
      auto c = sample_circle(f, rho, angular_nodes(rho, fam.scale(), ps));
      return std::exp(w) * circle_psi_beta(c, beta);
    }) / (4.0 * kPi);
  });
}

/// L1 distance between F_{N,k} and f^{(x)k}.
inline double chaos_distance(const ConditionedFamily& fam, int k) {
  require(k == 1 || k == 2, "chaos_distance: k must be 1 or 2");
  const auto& f = fam.generator();
  if (k == 1) {
    return detail::refine(fam.options(), "chaos_distance", [&](int panels, double) {
      double d = detail::line_integral(fam, panels, [&](double v) {
        return f(v) * std::abs(fam.weight(1, v * v) - 1.0);
      });
      double inside = detail::line_integral(fam, panels, [&](double v) { return f(v); });
      return d + std::max(0.0, 1.0 - inside);
    });
  }
  // F_{N,2} = f(v1) f(v2) W(s); polar coordinates give (1/2) A(s) ds
  return detail::refine(fam.options(), "chaos_distance", [&](int panels, double ps) {
    double d = detail::radial_integral(fam, panels, [&](double rho) {
      double a = circle_integral(f, rho, angular_nodes(rho, fam.scale(), ps));
      return 0.5 * a * std::abs(fam.weight(2, rho * rho) - 1.0);
    });
    double inside = detail::radial_integral(fam, panels, [&](double rho) {
      return 0.5 * circle_integral(f, rho, angular_nodes(rho, fam.scale(), ps));
    });
    return d + std::max(0.0, 1.0 - inside);
  });
}

/// Exact draw from F_N d sigma_N.
inline VelocityEnsemble sample(const ConditionedFamily& fam, Rng& rng) {
  const int N = fam.N();
  const auto& f = fam.generator();
  const auto& L = fam.sampling_ladder();
  const std::size_t max_trials = fam.options().max_trials;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> v(N);
  double E = N;
  for (int m = 0; m < N - 2; ++m) {
    const int n = N - 1 - m;
    const double bound = fam.log_bound(n, E);
    std::size_t trials = 0;
    for (;;) {
      if (++trials > max_trials)
        throw SamplingError("sample: rejection exceeded " + std::to_string(max_trials) +
                            " trials at coordinate " + std::to_string(m));
      double x = f.sample(rng);
      double r = E - x * x;
      if (!(r > 0.0)) continue;
      double la = L.log_hconv(n, r) - bound;
      if (la == kNegInf) continue;
      if (std::log(unif(rng)) < la) {
        v[m] = x;
        E = r;
        break;
      }
    }
  }
  // last two coordinates on the residual circle
  const double rho = std::sqrt(std::max(E, 0.0));
  const std::size_t K = angular_nodes(rho, fam.scale(), 2.0, 16, 4096);
  double gmax = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    double ph = kTwoPi * a / K;
    gmax = std::max(gmax, f(rho * std::cos(ph)) * f(rho * std::sin(ph)));
  }
  double fsup = 0.0, dsup = 0.0;
  if (f.analytic()) {
    for (const auto& c : f.components()) {
      fsup += c.weight / std::sqrt(kTwoPi * c.variance);
      dsup += c.weight / std::sqrt(kTwoPi * c.variance) * std::exp(-0.5) / std::sqrt(c.variance);
    }
  } else {
    const auto& y = f.values();
    for (std::size_t i = 0; i < y.size(); ++i) fsup = std::max(fsup, y[i]);
    for (std::size_t i = 1; i < y.size(); ++i)
      dsup = std::max(dsup, std::abs(y[i] - y[i - 1]) / f.dv());
    fsup *= 1.1;
    dsup *= 1.5;
  }
  double bound = std::min(gmax + (kPi / K) * 2.0 * rho * dsup * fsup, fsup * fsup * 1.0000001);
  std::size_t trials = 0;
  for (;;) {
    if (++trials > max_trials)
      throw SamplingError("sample: circle rejection exceeded " + std::to_string(max_trials) +
                          " trials");
    double ph = kTwoPi * unif(rng);
    double g = f(rho * std::cos(ph)) * f(rho * std::sin(ph));
    if (unif(rng) * bound < g) {
      v[N - 2] = rho * std::cos(ph);
      v[N - 1] = rho * std::sin(ph);
      break;
    }
  }
  renormalize_energy(v);
  return VelocityEnsemble(std::move(v));
}

struct FunctionalReport {
  std::string tag;
  int N = 0;
  double gamma = 0.0;
  double beta = 0.0;
  double H_N = 0.0;
  double D_N_gamma = 0.0;
  double logpower = 0.0;
  double chaos_L1 = 0.0;
  double v_max = 0.0;
  std::size_t v_nodes = 0;
  std::size_t ladder_nodes = 0;
  double du = 0.0;
  std::uint64_t seed = 0;
};

inline FunctionalReport functional_report(const ConditionedFamily& fam, double gamma, double beta,
                                          std::uint64_t seed = 0) {
  FunctionalReport r;
  r.tag = fam.generator().tag();
  r.N = fam.N();
  r.gamma = gamma;
  r.beta = beta;
  r.H_N = entropy_HN(fam);
  r.D_N_gamma = production_DN(fam, gamma);
  r.logpower = log_power_integral(fam, beta);
  r.chaos_L1 = chaos_distance(fam, 1);
  r.v_max = fam.generator().v_max();
  r.v_nodes = fam.generator().size();
  r.ladder_nodes = fam.ladder().nodes();
  r.du = fam.ladder().du();
  r.seed = seed;
  return r;
}

/// Appends rows to a CSV, writing the header when the file is new.
inline void append_functional_csv(const std::string& path,
                                  const std::vector<FunctionalReport>& rows) {
  bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw ArgumentError("append_functional_csv: cannot open " + path);
  out.precision(12);
  if (fresh)
    out << "tag,N,gamma,beta,H_N,D_N_gamma,logpower,chaos_L1,v_max,v_nodes,ladder_nodes,du,seed\n";
  for (const auto& r : rows)
    out << '"' << r.tag << "\"," << r.N << ',' << r.gamma << ',' << r.beta << ',' << r.H_N << ','
        << r.D_N_gamma << ',' << r.logpower << ',' << r.chaos_L1 << ',' << r.v_max << ','
        << r.v_nodes << ',' << r.ladder_nodes << ',' << r.du << ',' << r.seed << '\n';
}

}  // namespace kac
