#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "circle_quadrature.hpp"
#include "densities.hpp"
#include "errors.hpp"
#include "numerics.hpp"

namespace kac {

struct PdeState {
  GridDensity1D density;
  double time = 0.0;
};

struct PdeGrid {
  double v_max = 12.0;
  int nodes = 601;
};

/// Resamples f onto a PDE grid.
inline PdeState make_pde_state(const GridDensity1D& f, PdeGrid grid = {}, double t = 0.0) {
  require(grid.v_max > 0.0 && grid.nodes >= 11, "make_pde_state: bad grid");
  std::vector<double> y(grid.nodes);
  const double dv = 2.0 * grid.v_max / (grid.nodes - 1);
  for (int i = 0; i < grid.nodes; ++i) y[i] = f(-grid.v_max + i * dv);
  return {GridDensity1D::from_values(grid.v_max, std::move(y), f.tag()), t};
}

/// Q_gamma on a fixed grid. The gain term is (1/pi) int dw B(v^2 + w^2) with
/// B(s) = (1 + s)^gamma A(s), A the circle integral of f (x) f, tabulated in rho = sqrt(s).
class CollisionOperator {
 public:
  CollisionOperator(double v_max, int nodes, double gamma, double per_scale = 3.0)
      : v_max_(v_max), n_(nodes), gamma_(gamma) {
    require(gamma >= 0.0 && gamma <= 1.0, "collision_operator: gamma must lie in [0, 1]");
    require(nodes >= 11 && v_max > 0.0, "collision_operator: bad grid");
    dv_ = 2.0 * v_max / (nodes - 1);
    v_.resize(n_);
    w_.assign(n_, dv_);
    w_.front() = w_.back() = 0.5 * dv_;
    for (int i = 0; i < n_; ++i) v_[i] = -v_max + i * dv_;

    drho_ = dv_;
    rho_n_ = static_cast<int>(std::ceil(std::sqrt(2.0) * v_max / drho_)) + 4;
    const double scale = std::max(0.25, 8.0 * dv_);
    cs_.resize(rho_n_);
    for (int k = 0; k < rho_n_; ++k) {
      double rho = k * drho_;
      std::size_t K = angular_nodes(rho, scale, per_scale, 16, 8192);
      auto& t = cs_[k];
      t.resize(2 * K);
      for (std::size_t a = 0; a < K; ++a) {
        double ph = kTwoPi * a / K;
        t[2 * a] = rho * std::cos(ph);
        t[2 * a + 1] = rho * std::sin(ph);
      }
    }
    weight_.resize(rho_n_);
    for (int k = 0; k < rho_n_; ++k) weight_[k] = std::pow(1.0 + k * drho_ * k * drho_, gamma_);
    loss_.assign(static_cast<std::size_t>(n_) * n_, 0.0);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        loss_[i * n_ + j] = w_[j] * std::pow(1.0 + v_[i] * v_[i] + v_[j] * v_[j], gamma_);
    // cubic interpolation stencil in rho for every (i, j)
    stencil_.resize(static_cast<std::size_t>(n_) * n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        double x = std::sqrt(v_[i] * v_[i] + v_[j] * v_[j]) / drho_;
        int k = std::clamp(static_cast<int>(std::floor(x)) - 1, 0, rho_n_ - 4);
        double t = x - k;
        Stencil& s = stencil_[i * n_ + j];
        s.k = k;
        s.c[0] = -(t - 1) * (t - 2) * (t - 3) / 6.0;
        s.c[1] = t * (t - 2) * (t - 3) / 2.0;
        s.c[2] = -t * (t - 1) * (t - 3) / 2.0;
        s.c[3] = t * (t - 1) * (t - 2) / 6.0;
      }
  }

  double v_max() const { return v_max_; }
  int nodes() const { return n_; }
  double gamma() const { return gamma_; }
  const std::vector<double>& grid() const { return v_; }
  const std::vector<double>& weights() const { return w_; }
  /// Size of the mass/energy projection applied by the last call.
  double last_correction() const { return last_correction_; }

  /// sup_v of the loss rate 2 int (1 + v^2 + w^2)^gamma f(w) dw.
  double loss_rate_sup(const std::vector<double>& f) const {
    double m = 0.0;
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      for (int j = 0; j < n_; ++j) s += loss_[i * n_ + j] * f[j];
      m = std::max(m, 2.0 * s);
    }
    return m;
  }

  /// Symmetrized bilinear Q(f, g); Q(f, f) is the collision operator.
  std::vector<double> bilinear(const std::vector<double>& f, const std::vector<double>& g,
                               bool project = true) const {
    require(f.size() == static_cast<std::size_t>(n_) && g.size() == f.size(),
            "collision_operator: size mismatch");
    std::vector<double> B(rho_n_);
    for (int k = 0; k < rho_n_; ++k) {
      const auto& t = cs_[k];
      const std::size_t K = t.size() / 2;
      double s = 0.0;
      for (std::size_t a = 0; a < K; ++a) {
        double x = t[2 * a], y = t[2 * a + 1];
        s += interp(f, x) * interp(g, y) + interp(g, x) * interp(f, y);
      }
      B[k] = weight_[k] * 0.5 * s * kTwoPi / K;
    }
    std::vector<double> q(n_);
    for (int i = 0; i < n_; ++i) {
      double gain = 0.0, lf = 0.0, lg = 0.0;
      for (int j = 0; j < n_; ++j) {
        const Stencil& s = stencil_[i * n_ + j];
        gain += w_[j] * (s.c[0] * B[s.k] + s.c[1] * B[s.k + 1] + s.c[2] * B[s.k + 2] +
                         s.c[3] * B[s.k + 3]);
        lf += loss_[i * n_ + j] * f[j];
        lg += loss_[i * n_ + j] * g[j];
      }
      q[i] = gain / kPi - (f[i] * lg + g[i] * lf);
    }
    last_correction_ = 0.0;
    if (project) project_invariants(q, f, g);
    return q;
  }

  std::vector<double> apply(const std::vector<double>& f, bool project = true) const {
    return bilinear(f, f, project);
  }

  /// Largest mass density outside the disk the gain table resolves.
  double tail_leak(const std::vector<double>& f) const {
    double tail = 0.0, total = 0.0;
    for (int i = 0; i < n_; ++i) {
      total += w_[i] * f[i];
      if (std::abs(v_[i]) > v_max_ / std::sqrt(2.0)) tail += w_[i] * f[i];
    }
    return total > 0.0 ? 2.0 * tail / total : 0.0;
  }

 private:
  struct Stencil {
    int k = 0;
    double c[4] = {0, 0, 0, 0};
  };

  double interp(const std::vector<double>& f, double x) const {
    return std::max(0.0, cubic_uniform(f.data(), f.size(), -v_max_, dv_, x));
  }

  // removes the components of q along f + g and v^2 (f + g) that break mass and energy balance
  void project_invariants(std::vector<double>& q, const std::vector<double>& f,
                          const std::vector<double>& g) const {
    double m0 = 0.0, m2 = 0.0, a00 = 0.0, a02 = 0.0, a22 = 0.0;
    for (int i = 0; i < n_; ++i) {
      double u = 0.5 * (f[i] + g[i]), v2 = v_[i] * v_[i];
      m0 += w_[i] * q[i];
      m2 += w_[i] * v2 * q[i];
      a00 += w_[i] * u;
      a02 += w_[i] * v2 * u;
      a22 += w_[i] * v2 * v2 * u;
    }
    double det = a00 * a22 - a02 * a02;
    if (!(std::abs(det) > 0.0)) return;
    double a = (m0 * a22 - m2 * a02) / det;
    double b = (a00 * m2 - a02 * m0) / det;
    double corr = 0.0;
    for (int i = 0; i < n_; ++i) {
      double d = (a + b * v_[i] * v_[i]) * 0.5 * (f[i] + g[i]);
      q[i] -= d;
      corr = std::max(corr, std::abs(d));
    }
    last_correction_ = corr;
  }

  double v_max_;
  int n_;
  double gamma_;
  double dv_ = 0.0, drho_ = 0.0;
  int rho_n_ = 0;
  std::vector<double> v_, w_, weight_, loss_;
  std::vector<std::vector<double>> cs_;
  std::vector<Stencil> stencil_;
  mutable double last_correction_ = 0.0;
};

struct CollisionValues {
  std::vector<double> v;
  std::vector<double> q;
};

/// Q_gamma(f) on the PDE grid; f is resampled when its own grid is not already that grid.
inline CollisionValues collision_operator(const GridDensity1D& f, double gamma, PdeGrid grid = {}) {
  PdeState s = (f.size() == static_cast<std::size_t>(grid.nodes) && f.v_max() == grid.v_max)
                   ? PdeState{f, 0.0}
                   : make_pde_state(f, grid);
  CollisionOperator op(grid.v_max, grid.nodes, gamma);
  if (op.tail_leak(s.density.values()) > 1e-6)
    throw AccuracyError("collision_operator: density mass beyond v_max / sqrt 2 exceeds 1e-6");
  return {op.grid(), op.apply(s.density.values())};
}

/// D_gamma(f) = (1 / 2 pi) int (1 + v^2 + w^2)^gamma psi(f f, f' f') dv dw dtheta.
inline double limit_production(const GridDensity1D& f, double gamma, double rel_tol = 1e-4) {
  require(gamma >= 0.0 && gamma <= 1.0, "limit_production: gamma must lie in [0, 1]");
  const double R = std::sqrt(2.0) * f.v_max();
  const double scale = density_scale(f);
  auto eval = [&](int panels, double ps) {
    auto q = composite_gl(0.0, R, panels, 8);
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double rho = q.x[i];
      auto c = sample_circle(f, rho, angular_nodes(rho, scale, ps));
      s += q.w[i] * 2.0 * rho * std::pow(1.0 + rho * rho, gamma) * circle_psi(c);
    }
    return s / (4.0 * kPi);
  };
  int panels = std::max(32, static_cast<int>(std::ceil(R / scale / 2.0)));
  double ps = 3.0;
  double prev = eval(panels, ps);
  for (int d = 0; d < 4; ++d) {
    panels *= 2;
    ps *= 2.0;
    double cur = eval(panels, ps);
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur) + 1e-14) return cur;
    prev = cur;
  }
  throw AccuracyError("limit_production: quadrature did not settle");
}

/// D(f) / (2 H(f|M)).
inline double cercignani_ratio(const GridDensity1D& f) {
  double H = relative_entropy(f);
  if (!(H > 1e-12)) throw DegenerateError("cercignani_ratio: H(f|M) vanishes (f is Maxwellian)");
  return limit_production(f, 0.0) / (2.0 * H);
}

struct PdeRecord {
  double t = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double H = 0.0;
  double D = 0.0;
};

struct PdeTrajectory {
  std::vector<PdeRecord> records;
  std::vector<PdeState> snapshots;
  PdeState final_state;
  double max_clipped = 0.0;  // largest per-step clipped negative mass
  std::size_t clipped_steps = 0;
  double dt = 0.0;
};

struct EvolveOptions {
  double cadence = 0.1;          // record spacing
  bool record_production = true;
  bool keep_snapshots = false;
  double clip_tolerance = 1e-6;  // clipped mass above this per step is a stability error
};

/// dt default: 0.01 capped by the RK4 stability bound from the loss rate.
inline double default_time_step(const PdeState& s, double gamma) {
  CollisionOperator op(s.density.v_max(), static_cast<int>(s.density.size()), gamma);
  double rate = op.loss_rate_sup(s.density.values());
  return std::min(0.01, 1.0 / std::max(rate, 1e-12));
}

/// Classical RK4 for df/dt = Q_gamma(f); dt <= 0 selects default_time_step.
inline PdeTrajectory evolve(const PdeState& state, double gamma, double dt, double t_end,
                            EvolveOptions opt = {}) {
  require(t_end >= state.time, "evolve: t_end precedes the state time");
  const auto& f0 = state.density;
  CollisionOperator op(f0.v_max(), static_cast<int>(f0.size()), gamma);
  if (op.tail_leak(f0.values()) > 1e-6)
    throw AccuracyError("evolve: density mass beyond v_max / sqrt 2 exceeds 1e-6");
  double rate = op.loss_rate_sup(f0.values());
  if (dt <= 0.0) dt = std::min(0.01, 1.0 / std::max(rate, 1e-12));
  if (dt * rate > 2.5)
    throw StabilityError("evolve: dt * loss rate = " + std::to_string(dt * rate) +
                         " exceeds the RK4 stability bound");
  const auto& w = op.weights();
  const auto& v = op.grid();
  const std::size_t n = v.size();

  PdeTrajectory out;
  out.dt = dt;
  std::vector<double> f = f0.values();
  double t = state.time;
  auto record = [&] {
    PdeRecord r;
    r.t = t;
    for (std::size_t i = 0; i < n; ++i) {
      r.mass += w[i] * f[i];
      r.energy += w[i] * v[i] * v[i] * f[i];
    }
    auto g = GridDensity1D::from_values(f0.v_max(), f, f0.tag());
    r.H = std::abs(r.energy / r.mass - 1.0) <= 1e-6 ? relative_entropy(g) : NAN;
    if (opt.record_production) r.D = limit_production(g, gamma);
    out.records.push_back(r);
    if (opt.keep_snapshots) out.snapshots.push_back({g, t});
  };
  record();
  double next_record = state.time + opt.cadence;
  std::vector<double> k1, k2, k3, k4, tmp(n);
  while (t < t_end - 1e-12) {
    double h = std::min(dt, t_end - t);
    k1 = op.apply(f);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] + 0.5 * h * k1[i];
    k2 = op.apply(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] + 0.5 * h * k2[i];
    k3 = op.apply(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] + h * k3[i];
    k4 = op.apply(tmp);
    double clipped = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (f[i] < 0.0) {
        clipped -= w[i] * f[i];
        f[i] = 0.0;
      }
      mass += w[i] * f[i];
    }
    if (clipped > opt.clip_tolerance)
      throw StabilityError("evolve: clipped negative mass " + std::to_string(clipped));
    if (clipped > 1e-10) ++out.clipped_steps;
    out.max_clipped = std::max(out.max_clipped, clipped);
    for (double& x : f) x /= mass;
    t += h;
    if (t >= next_record - 1e-9 || t >= t_end - 1e-12) {
      record();
      next_record += opt.cadence;
    }
  }
  out.final_state = {GridDensity1D::from_values(f0.v_max(), f, f0.tag()), t};
  return out;
}

inline void write_pde_csv(const std::string& path, const PdeTrajectory& tr) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("write_pde_csv: cannot open " + path);
  out.precision(12);
  out << "t,mass,energy,H,D_gamma\n";
  for (const auto& r : tr.records)
    out << r.t << ',' << r.mass << ',' << r.energy << ',' << r.H << ',' << r.D << '\n';
}

}  // namespace kac
