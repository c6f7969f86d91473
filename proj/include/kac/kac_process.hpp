#pragma once

#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "generator_spectrum.hpp"
#include "numerics.hpp"
#include "report.hpp"
#include "sphere_geometry.hpp"
#include "statistics.hpp"

namespace kac {

struct SimulationConfig {
  int N = 2;
  double gamma = 0.0;
  double t_end = 1.0;
  std::uint64_t seed = 0;
  double cadence = 0.0;          // observation spacing; 0 observes only t = 0 and t_end
  int renormalize_every = 1000;  // accepted collisions between energy renormalizations
  std::size_t hist_bins = 0;     // 0 disables histogram snapshots
  double hist_range = 0.0;       // half-width; 0 selects sqrt(N)

  void validate() const {
    require(N >= 2, "SimulationConfig: N must be >= 2");
    require(gamma >= 0.0 && gamma <= 1.0, "SimulationConfig: gamma must lie in [0, 1]");
    require(t_end > 0.0, "SimulationConfig: t_end must be positive");
    require(cadence >= 0.0, "SimulationConfig: cadence must be nonnegative");
    require(renormalize_every >= 1, "SimulationConfig: renormalize_every must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"N", N},         {"gamma", gamma},
            {"t_end", t_end}, {"seed", seed},
            {"cadence", cadence}, {"renormalize_every", renormalize_every},
            {"hist_bins", hist_bins}, {"hist_range", hist_range}};
  }
};

struct Observation {
  double t = 0.0;
  double m1 = 0.0, m2 = 0.0, m4 = 0.0;  // moments of the empirical 1-marginal
  std::size_t proposals = 0;
  std::size_t collisions = 0;
  std::vector<double> histogram;  // bin densities when enabled
};

struct TrajectoryStats {
  std::vector<double> times;
  std::vector<Observation> observables;
  std::vector<double> final_state;
  std::size_t proposals = 0;
  std::size_t collisions = 0;
  double hist_lo = 0.0, hist_hi = 0.0;

  double acceptance_rate() const {
    return proposals ? static_cast<double>(collisions) / static_cast<double>(proposals) : 1.0;
  }
};

struct CollisionEvent {
  double time = 0.0;
  std::size_t i = 0, j = 0;
  double theta = 0.0;
  double pair_energy = 0.0;  // v_i^2 + v_j^2 before the event
  bool accepted = false;
};

/// Kac jump process with rates (N / C(N,2)) (1 + v_i^2 + v_j^2)^gamma per pair, by thinning.
class KacProcess {
 public:
  KacProcess(const VelocityEnsemble& initial, double gamma, int renormalize_every = 1000)
      : v_(initial.velocities()), gamma_(gamma), renorm_(renormalize_every) {
    require(gamma >= 0.0 && gamma <= 1.0, "KacProcess: gamma must lie in [0, 1]");
    require(renormalize_every >= 1, "KacProcess: renormalize_every must be >= 1");
    const double n = static_cast<double>(v_.size());
    rate_ = n * std::pow(1.0 + n, gamma_);
  }

  double time() const { return t_; }
  const std::vector<double>& state() const { return v_; }
  double dominating_rate() const { return rate_; }
  std::size_t proposals() const { return proposals_; }
  std::size_t collisions() const { return collisions_; }

  /// Next proposed event of the thinned process (advances time).
  CollisionEvent next_event(Rng& rng) {
    std::exponential_distribution<double> wait(rate_);
    t_ += wait(rng);
    return propose(rng);
  }

  /// Runs events up to time t; the residual waiting time is discarded (memoryless).
  void advance_to(double t, Rng& rng, const std::function<void(const CollisionEvent&)>& hook = {}) {
    std::exponential_distribution<double> wait(rate_);
    for (;;) {
      double w = wait(rng);
      if (t_ + w > t) {
        t_ = t;
        return;
      }
      t_ += w;
      auto e = propose(rng);
      if (hook) hook(e);
    }
  }

 private:
  CollisionEvent propose(Rng& rng) {
    const std::size_t n = v_.size();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    CollisionEvent e;
    e.time = t_;
    e.i = pick(rng);
    do e.j = pick(rng);
    while (e.j == e.i);
    if (e.i > e.j) std::swap(e.i, e.j);
    e.theta = kTwoPi * unif(rng);
    e.pair_energy = v_[e.i] * v_[e.i] + v_[e.j] * v_[e.j];
    ++proposals_;
    e.accepted = gamma_ == 0.0 ||
                 unif(rng) < std::pow((1.0 + e.pair_energy) / (1.0 + static_cast<double>(n)), gamma_);
    if (e.accepted) {
      rotate_pair(v_[e.i], v_[e.j], e.theta);
      if (++collisions_ % static_cast<std::size_t>(renorm_) == 0) renormalize_energy(v_);
    }
    return e;
  }

  std::vector<double> v_;
  double gamma_;
  int renorm_;
  double rate_ = 0.0;
  double t_ = 0.0;
  std::size_t proposals_ = 0, collisions_ = 0;
};

namespace detail {

inline Observation observe(const KacProcess& p, double lo, double hi, std::size_t bins) {
  Observation o;
  o.t = p.time();
  const auto& v = p.state();
  const double n = static_cast<double>(v.size());
  for (double x : v) {
    o.m1 += x;
    o.m2 += x * x;
    o.m4 += x * x * x * x;
  }
  o.m1 /= n;
  o.m2 /= n;
  o.m4 /= n;
  o.proposals = p.proposals();
  o.collisions = p.collisions();
  if (bins > 0) {
    auto h = make_histogram(v, lo, hi, bins);
    o.histogram.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) o.histogram[b] = h.density(b);
  }
  return o;
}

}  // namespace detail

inline TrajectoryStats simulate(const VelocityEnsemble& initial, const SimulationConfig& config,
                                Rng& rng) {
  config.validate();
  require(initial.n() == static_cast<std::size_t>(config.N),
          "simulate: initial ensemble size differs from config.N");
  KacProcess p(initial, config.gamma, config.renormalize_every);
  TrajectoryStats out;
  const double half = config.hist_range > 0.0 ? config.hist_range : std::sqrt(double(config.N));
  out.hist_lo = -half;
  out.hist_hi = half;
  auto record = [&] {
    out.times.push_back(p.time());
    out.observables.push_back(detail::observe(p, -half, half, config.hist_bins));
  };
  record();
  if (config.cadence > 0.0) {
    for (int k = 1;; ++k) {
      double t = k * config.cadence;
      if (t >= config.t_end * (1.0 - 1e-12)) break;
      p.advance_to(t, rng);
      record();
    }
  }
  p.advance_to(config.t_end, rng);
  record();
  out.final_state = p.state();
  out.proposals = p.proposals();
  out.collisions = p.collisions();
  return out;
}

/// Runs replicas with streams make_rng(seed, r); replica r starts from initial(r, rng).
inline std::vector<TrajectoryStats> simulate_replicas(
    const std::function<VelocityEnsemble(std::size_t, Rng&)>& initial, const SimulationConfig& config,
    std::size_t replicas) {
  std::vector<TrajectoryStats> out(replicas);
  std::vector<std::exception_ptr> errors(replicas);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(replicas); ++r) {
    try {
      auto rng = make_rng(config.seed, static_cast<std::uint64_t>(r));
      auto v0 = initial(static_cast<std::size_t>(r), rng);
      out[r] = simulate(v0, config, rng);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Pooled histogram of all coordinates of a set of ensembles; default range [-sqrt N, sqrt N].
inline Histogram empirical_marginal(const std::vector<std::vector<double>>& ensembles,
                                    std::size_t bins, double half_width = 0.0) {
  require(!ensembles.empty() && bins > 0, "empirical_marginal: nothing to histogram");
  double half = half_width > 0.0 ? half_width : std::sqrt(double(ensembles.front().size()));
  auto h = make_histogram(-half, half, bins);
  for (const auto& v : ensembles)
    for (double x : v) h.add(x);
  return h;
}

inline Histogram empirical_marginal(const std::vector<TrajectoryStats>& runs, std::size_t bins,
                                    double half_width = 0.0) {
  std::vector<std::vector<double>> finals;
  for (const auto& r : runs) finals.push_back(r.final_state);
  return empirical_marginal(finals, bins, half_width);
}

inline void write_trajectory_csv(const std::string& path, const TrajectoryStats& s) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("write_trajectory_csv: cannot open " + path);
  out.precision(12);
  out << "t,m1,m2,m4,proposals,collisions\n";
  for (const auto& o : s.observables)
    out << o.t << ',' << o.m1 << ',' << o.m2 << ',' << o.m4 << ',' << o.proposals << ','
        << o.collisions << '\n';
}

struct RayleighEstimate {
  double quotient = 0.0;
  double std_error = 0.0;
  double dirichlet = 0.0;  // <phi, -L phi>
  double variance = 0.0;   // Var(phi)
};

/// Monte Carlo Rayleigh quotient <phi, -L_{N,gamma} phi> / Var(phi) under the uniform sphere law.
inline RayleighEstimate dirichlet_rayleigh(const std::function<double(const std::vector<double>&)>& phi,
                                           int N, double gamma, std::size_t samples, Rng& rng,
                                           int theta_nodes = 32) {
  require(N >= 2, "dirichlet_rayleigh: N must be >= 2");
  require(gamma >= 0.0 && gamma <= 1.0, "dirichlet_rayleigh: gamma must lie in [0, 1]");
  require(samples >= 10000, "dirichlet_rayleigh: need at least 10^4 samples");
  const std::size_t batches = 20, per = samples / batches;
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> bd(batches), bv(batches);
  double gsum = 0.0, gsum2 = 0.0, dsum = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    double s1 = 0.0, s2 = 0.0, sd = 0.0;
    for (std::size_t k = 0; k < per; ++k) {
      auto V = uniform_sphere_sample(N, rng);
      std::vector<double> v = V.velocities();
      double p0 = phi(v);
      s1 += p0;
      s2 += p0 * p0;
      std::size_t i = pick(rng), j;
      do j = pick(rng);
      while (j == i);
      double w = std::pow(1.0 + v[i] * v[i] + v[j] * v[j], gamma);
      double off = unif(rng), acc = 0.0;
      const double vi = v[i], vj = v[j];
      for (int q = 0; q < theta_nodes; ++q) {
        double th = kTwoPi * (q + off) / theta_nodes;
        v[i] = vi;
        v[j] = vj;
        rotate_pair(v[i], v[j], th);
        double d = p0 - phi(v);
        acc += d * d;
      }
      sd += w * acc / theta_nodes;
    }
    double m = s1 / per;
    bv[b] = s2 / per - m * m;
    bd[b] = 0.5 * N * sd / per;
    gsum += s1;
    gsum2 += s2;
    dsum += sd;
  }
  const double n = static_cast<double>(per * batches);
  RayleighEstimate r;
  double mean = gsum / n;
  r.variance = gsum2 / n - mean * mean;
  r.dirichlet = 0.5 * N * dsum / n;
  // batch spread of the variance and of the quotient
  double vm = 0.0, vv = 0.0, qm = 0.0, qv = 0.0;
  for (std::size_t b = 0; b < batches; ++b) vm += bv[b];
  vm /= batches;
  for (std::size_t b = 0; b < batches; ++b) vv += (bv[b] - vm) * (bv[b] - vm);
  double var_se = std::sqrt(vv / (batches - 1) / batches);
  if (!(r.variance > 3.0 * var_se) || r.variance <= 1e-14 * std::max(1.0, gsum2 / n))
    throw DegenerateError("dirichlet_rayleigh: Var(phi) is statistically zero");
  r.quotient = r.dirichlet / r.variance;
  for (std::size_t b = 0; b < batches; ++b) qm += bd[b] / bv[b];
  qm /= batches;
  for (std::size_t b = 0; b < batches; ++b) qv += (bd[b] / bv[b] - qm) * (bd[b] / bv[b] - qm);
  r.std_error = std::sqrt(qv / (batches - 1) / batches);
  return r;
}

}  // namespace kac
