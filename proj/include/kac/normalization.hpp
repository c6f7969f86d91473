#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "circle_quadrature.hpp"
#include "densities.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "sphere_geometry.hpp"

namespace kac {

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

/// Real-to-complex transform pair of fixed length, owning its buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_ = fftw_alloc_real(n_);
    spec_ = fftw_alloc_complex(n_ / 2 + 1);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }

  std::vector<std::complex<double>> forward(const std::vector<double>& x) {
    std::fill(real_, real_ + n_, 0.0);
    std::copy(x.begin(), x.begin() + std::min(x.size(), n_), real_);
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec_[k][0], spec_[k][1]};
    return out;
  }

  std::vector<double> inverse(const std::vector<std::complex<double>>& s) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      spec_[k][0] = s[k].real();
      spec_[k][1] = s[k].imag();
    }
    fftw_execute(inv_);
    std::vector<double> out(real_, real_ + n_);
    for (double& x : out) x /= static_cast<double>(n_);
    return out;
  }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

inline std::complex<double> ipow(std::complex<double> z, int n) {
  std::complex<double> r(1.0, 0.0);
  while (n > 0) {
    if (n & 1) r *= z;
    z *= z;
    n >>= 1;
  }
  return r;
}

}  // namespace detail

/// Linear convolution of two sampled functions with spacing du, truncated to m nodes.
inline std::vector<double> convolve_truncated(const std::vector<double>& a,
                                              const std::vector<double>& b, std::size_t m,
                                              double du) {
  detail::RealFft fft(next_pow2(a.size() + b.size()));
  auto fa = fft.forward(a);
  auto fb = fft.forward(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto c = fft.inverse(fa);
  c.resize(m);
  for (double& x : c) x *= du;
  return c;
}

struct LadderOptions {
  double u_max = 0.0;            // 0 selects n_max + 10 sqrt(n_max Sigma^2)
  std::size_t nodes = 1u << 15;  // u-grid size
  std::vector<int> keep;         // levels to store; empty stores 1..n_max
  double floor_rel = 1e-14;      // values below floor_rel * level max are stored as -inf
  double leak_tolerance = 1e-4;
};

/// Log-domain tables of h^{*n}(u) on a uniform u-grid. Level 1 is evaluated exactly.
///
/// The first level is a mean-preserving lattice split of the cell masses of h, so each
/// lattice variable has the law of V^2 plus conditionally centred noise; the n-fold
/// lattice law is the n-th power of its spectrum, and the stored density subtracts the
/// leading n * excess_variance / 2 * g'' smoothing term.
class NormalizationLadder {
 public:
  static NormalizationLadder build(const GridDensity1D& f, int n_max, LadderOptions opt = {}) {
    require(n_max >= 2, "build_ladder: n_max must be >= 2");
    require(opt.nodes >= 64, "build_ladder: too few nodes");
    NormalizationLadder L(f);
    L.n_max_ = n_max;
    L.m2_ = moment(f, 2);
    L.sigma2_ = moment(f, 4) - L.m2_ * L.m2_;
    if (!(L.sigma2_ > 0.0)) throw ArgumentError("build_ladder: Sigma^2 must be positive");
    double need = n_max * L.m2_ + 10.0 * std::sqrt(n_max * L.sigma2_);
    L.u_max_ = opt.u_max > 0.0 ? opt.u_max : need;
    L.m_ = opt.nodes;
    L.du_ = L.u_max_ / static_cast<double>(L.m_ - 1);
    L.floor_rel_ = opt.floor_rel;

    std::set<int> keep(opt.keep.begin(), opt.keep.end());
    if (keep.empty())
      for (int n = 1; n <= n_max; ++n) keep.insert(n);
    for (int n : keep)
      require(n >= 1 && n <= n_max, "build_ladder: kept level outside 1..n_max");

    const std::size_t M = L.m_;
    const double du = L.du_;
    std::vector<double> p(M, 0.0);
    double cell_second = 0.0;
    for (std::size_t j = 0; j + 1 < M; ++j) {
      double a = j * du, b = (j + 1) * du;
      auto c = L.h_.cell(a, b);
      p[j] += c.mass * (b - c.mean) / du;
      p[j + 1] += c.mass * (c.mean - a) / du;
      cell_second += c.second;
    }
    double lattice_second = 0.0;
    for (std::size_t j = 0; j < M; ++j) lattice_second += p[j] * (j * du) * (j * du);
    L.excess_var_ = std::max(0.0, lattice_second - cell_second);

    detail::RealFft fft(2 * M);
    auto spec = fft.forward(p);
    std::vector<std::complex<double>> work(spec.size());
    for (int n : keep) {
      if (n == 1) {
        std::vector<double> t(M);
        t[0] = std::log(L.h_.cell(0.0, du).mass / du);
        for (std::size_t j = 1; j < M; ++j) t[j] = L.h_.log_at(j * du);
        L.table_[1] = std::move(t);
        L.mass_[1] = 1.0;
        continue;
      }
      if (n == 2) {
        // h^{*2}(u) = A(u) / 2 exactly
        std::vector<double> t(M);
        const double scale = density_scale(f);
        double gmax = 0.0;
        std::size_t below = 0;
        for (std::size_t j = 0; j < M; ++j) {
          if (below > 16) {
            t[j] = 0.0;
            continue;
          }
          double rho = std::sqrt(j * du);
          t[j] = 0.5 * circle_integral(f, rho, angular_nodes(rho, scale, 3.0));
          gmax = std::max(gmax, t[j]);
          below = t[j] < 1e-3 * L.floor_rel_ * gmax ? below + 1 : 0;
        }
        for (double& v : t) v = v > L.floor_rel_ * gmax ? std::log(v) : kNegInf;
        L.table_[2] = std::move(t);
        L.mass_[2] = 1.0;
        continue;
      }
      for (std::size_t k = 0; k < spec.size(); ++k) work[k] = detail::ipow(spec[k], n);
      auto pmf = fft.inverse(work);
      pmf.resize(M);
      double mass = 0.0;
      for (double x : pmf) mass += x;
      if (1.0 - mass > opt.leak_tolerance)
        throw ConfigurationError("build_ladder: level " + std::to_string(n) + " leaks mass " +
                                 std::to_string(1.0 - mass) + " beyond u_max = " +
                                 std::to_string(L.u_max_));
      L.mass_[n] = mass;
      std::vector<double> g(M);
      for (std::size_t j = 0; j < M; ++j) g[j] = pmf[j] / du;
      g[0] = 0.0;  // h^{*n}(0) = 0 for n >= 3
      std::vector<double> t(M);
      const double c = 0.5 * n * L.excess_var_ / (du * du);
      double gmax = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        double v = g[j];
        if (j >= 1 && j + 1 < M) v -= c * (g[j + 1] - 2.0 * g[j] + g[j - 1]);
        t[j] = v;
        gmax = std::max(gmax, v);
      }
      const double floor = L.floor_rel_ * gmax;
      for (double& v : t) v = v > floor ? std::log(v) : kNegInf;
      L.table_[n] = std::move(t);
    }
    return L;
  }

  const GridDensity1D& generator() const { return h_.generator(); }
  const SquaredDensity& squared() const { return h_; }
  int n_max() const { return n_max_; }
  double u_max() const { return u_max_; }
  double du() const { return du_; }
  std::size_t nodes() const { return m_; }
  double sigma2() const { return sigma2_; }
  double second_moment() const { return m2_; }
  double excess_variance() const { return excess_var_; }
  bool has_level(int n) const { return table_.count(n) > 0; }

  std::vector<int> levels() const {
    std::vector<int> out;
    for (const auto& kv : table_) out.push_back(kv.first);
    return out;
  }

  const std::vector<double>& log_table(int n) const {
    auto it = table_.find(n);
    if (it == table_.end())
      throw StateError("ladder: level " + std::to_string(n) + " was not stored");
    return it->second;
  }

  /// log h^{*n}(u), linear in log between nodes.
  double log_hconv(int n, double u) const {
    if (!(u >= 0.0) || u > u_max_ * (1.0 + 1e-12))
      throw RangeError("ladder: u = " + std::to_string(u) + " outside [0, " +
                       std::to_string(u_max_) + "]");
    if (n == 1) return h_.log_at(u);
    const auto& t = log_table(n);
    double x = u / du_;
    auto j = std::min<std::size_t>(static_cast<std::size_t>(x), m_ - 2);
    double w = x - j;
    double a = t[j], b = t[j + 1];
    if (a == kNegInf || b == kNegInf) {
      if (w == 0.0) return a;
      if (w == 1.0) return b;
      return kNegInf;
    }
    return (1.0 - w) * a + w * b;
  }

  double hconv(int n, double u) const { return std::exp(log_hconv(n, u)); }

  double level_mass(int n) const {
    if (n == 1) return 1.0;
    log_table(n);
    return mass_.at(n);
  }

  /// Trapezoid mass and mean of the stored density.
  std::pair<double, double> stored_moments(int n) const {
    const auto& t = log_table(n);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t j = 0; j < m_; ++j) {
      double w = (j == 0 || j + 1 == m_) ? 0.5 * du_ : du_;
      double g = std::exp(t[j]);
      m0 += w * g;
      m1 += w * g * j * du_;
    }
    return {m0, m1 / m0};
  }

 private:
  explicit NormalizationLadder(const GridDensity1D& f) : h_(f) {}

  SquaredDensity h_;
  int n_max_ = 0;
  double u_max_ = 0.0, du_ = 0.0, sigma2_ = 0.0, m2_ = 1.0, excess_var_ = 0.0;
  double floor_rel_ = 1e-14;
  std::size_t m_ = 0;
  std::map<int, std::vector<double>> table_;
  std::map<int, double> mass_;
};

inline NormalizationLadder build_ladder(const GridDensity1D& f, int n_max,
                                        LadderOptions opt = {}) {
  return NormalizationLadder::build(f, n_max, std::move(opt));
}

/// log Z_n(f, sqrt u) = log 2 + log h^{*n}(u) - (n-2)/2 log u - log |S^{n-1}|.
inline double z_value(const NormalizationLadder& L, int n, double u) {
  require(n >= 1 && n <= L.n_max(), "z_value: n outside ladder range");
  if (!(u > 0.0)) throw RangeError("z_value: u must be positive");
  return std::log(2.0) + L.log_hconv(n, u) - 0.5 * (n - 2) * std::log(u) - log_sphere_area(n);
}

/// log(Z_{n1}(f, sqrt u1) / Z_{n2}(f, sqrt u2)) with the geometric factors cancelled first.
inline double log_z_ratio(const NormalizationLadder& L, int n1, double u1, int n2, double u2) {
  double geo = -0.5 * (n1 - 2) * std::log(u1) + 0.5 * (n2 - 2) * std::log(u2) -
               log_sphere_area(n1) + log_sphere_area(n2);
  return L.log_hconv(n1, u1) - L.log_hconv(n2, u2) + geo;
}

/// Leading Gaussian term of Z_n(f, sqrt u), in log-domain.
inline double clt_approx(const GridDensity1D& f, int n, double u) {
  double sigma2 = moment(f, 4) - 1.0;
  if (!(sigma2 > 0.0)) throw ArgumentError("clt_approx: Sigma^2 must be positive");
  require(n >= 2 && u > 0.0, "clt_approx: need n >= 2 and u > 0");
  double s = std::sqrt(n * sigma2);
  return std::log(2.0) - std::log(s) - log_sphere_area(n) - 0.5 * (n - 2) * std::log(u) -
         0.5 * std::log(kTwoPi) - 0.5 * (u - n) * (u - n) / (s * s);
}

struct CltEnvelope {
  double sigma2 = 0.0;
  std::vector<int> n;
  std::vector<double> lambda_sup;
  std::vector<double> delta;  // generator parameter per entry, when it varies

  double at(int level) const {
    for (std::size_t i = 0; i < n.size(); ++i)
      if (n[i] == level) return lambda_sup[i];
    throw StateError("CltEnvelope: level " + std::to_string(level) + " not present");
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < n.size(); ++i) {
      nlohmann::json r = {{"n", n[i]}, {"sigma2", sigma2}, {"lambda_sup", lambda_sup[i]}};
      if (i < delta.size()) r["delta"] = delta[i];
      rows.push_back(r);
    }
    return rows;
  }
};

/// sup |lambda_n(u)| with lambda_n(u) = sqrt(n) Sigma h^{*n}(u) - phi((u - n)/(sqrt(n) Sigma)),
/// over grid nodes in (0, u_hi]; u_hi <= 0 means the whole grid.
inline double clt_lambda_sup(const NormalizationLadder& L, int n, double sigma2, double u_hi) {
  const auto& t = L.log_table(n);
  double s = std::sqrt(n * sigma2);
  double top = u_hi > 0.0 ? std::min(u_hi, L.u_max()) : L.u_max();
  double sup = 0.0;
  for (std::size_t j = 1; j < t.size(); ++j) {
    double u = j * L.du();
    if (u > top * (1.0 + 1e-12)) break;
    double z = (u - n) / s;
    double lam = s * std::exp(t[j]) - std::exp(-0.5 * z * z) / std::sqrt(kTwoPi);
    sup = std::max(sup, std::abs(lam));
  }
  return sup;
}

inline CltEnvelope clt_envelope(const NormalizationLadder& L) {
  CltEnvelope e;
  e.sigma2 = L.sigma2();
  if (!(e.sigma2 > 0.0)) throw ArgumentError("clt_envelope: Sigma^2 must be positive");
  for (int n : L.levels()) {
    if (n < 2) continue;
    e.n.push_back(n);
    e.lambda_sup.push_back(clt_lambda_sup(L, n, e.sigma2, n));
  }
  return e;
}

inline double delta_schedule(double beta, int N) { return std::pow(double(N), 2.0 * beta - 1.0); }

inline double sigma2_schedule(double delta) { return 3.0 / (4.0 * delta * (1.0 - delta)) - 1.0; }

/// Envelope of lambda_j(N - j, .) for the generator f_{delta_N}, delta_N = N^{2 beta - 1}.
inline CltEnvelope clt_envelope_ndependent(double beta, const std::vector<int>& n_list, int j,
                                           LadderOptions opt = {}) {
  if (!(beta > 0.0 && beta < 1.0 / 6.0))
    throw ArgumentError("clt_envelope_ndependent: beta must lie in (0, 1/6)");
  require(j >= 0 && j <= 2, "clt_envelope_ndependent: j must be 0, 1 or 2");
  CltEnvelope e;
  for (int N : n_list) {
    require(N - j >= 2, "clt_envelope_ndependent: N - j must be >= 2");
    double d = delta_schedule(beta, N);
    auto f = mixture({d});
    LadderOptions o = opt;
    o.keep = {N - j};
    auto L = build_ladder(f, N, o);
    double s2 = sigma2_schedule(d);
    e.sigma2 = s2;
    e.n.push_back(N);
    e.delta.push_back(d);
    e.lambda_sup.push_back(clt_lambda_sup(L, N - j, s2, 0.0));
  }
  return e;
}

inline void export_ladder_csv(const NormalizationLadder& L, const std::string& path,
                              std::size_t stride = 1) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("export_ladder_csv: cannot open " + path);
  out << "n,u,log_hconv\n";
  out.precision(17);
  for (int n : L.levels()) {
    const auto& t = L.log_table(n);
    for (std::size_t j = 0; j < t.size(); j += std::max<std::size_t>(stride, 1))
      out << n << "," << j * L.du() << "," << t[j] << "\n";
  }
}

}  // namespace kac
