#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "numerics.hpp"

namespace kac {

struct GaussianComponent {
  double weight = 1.0;
  double variance = 1.0;
};

struct GridOptions {
  double v_max = 0.0;  // 0 selects the automatic width
  int nodes = 4097;
};

struct MixtureSpec {
  double delta = 0.25;
};

/// Truncated density on a uniform grid over [-v_max, v_max]. Gaussian mixtures keep
/// their components so values, logs and samples are exact off the grid.
class GridDensity1D {
 public:
  GridDensity1D() = default;

  static GridDensity1D from_components(std::vector<GaussianComponent> comps, double v_max,
                                       int nodes, std::string tag) {
    require(!comps.empty(), "GridDensity1D: no components");
    double wsum = 0.0;
    for (auto& c : comps) {
      require(c.weight > 0.0 && c.variance > 0.0, "GridDensity1D: bad component");
      wsum += c.weight;
    }
    for (auto& c : comps) c.weight /= wsum;
    GridDensity1D f;
    f.comps_ = std::move(comps);
    f.tag_ = std::move(tag);
    f.init_grid(v_max, nodes);
    f.set_constants();
    for (std::size_t i = 0; i < f.nodes_.size(); ++i) f.values_[i] = f.exact(f.nodes_[i]);
    f.normalize();
    return f;
  }

  /// Tabulated density; values are clamped at 0 and renormalized.
  static GridDensity1D from_values(double v_max, std::vector<double> values, std::string tag) {
    require(values.size() >= 5, "GridDensity1D: need at least 5 nodes");
    GridDensity1D f;
    f.tag_ = std::move(tag);
    f.init_grid(v_max, static_cast<int>(values.size()));
    for (double& x : values) x = std::max(x, 0.0);
    f.values_ = std::move(values);
    f.normalize();
    f.build_cdf();
    return f;
  }

  bool analytic() const { return !comps_.empty(); }
  const std::vector<GaussianComponent>& components() const { return comps_; }
  const std::string& tag() const { return tag_; }
  double v_max() const { return v_max_; }
  double dv() const { return dv_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& weights() const { return weights_; }

  double operator()(double v) const {
    if (analytic()) return exact(v);
    return std::max(0.0, cubic_uniform(values_.data(), values_.size(), -v_max_, dv_, v));
  }

  double log_at(double v) const {
    if (analytic()) {
      if (comps_.size() == 1) return log_norm_[0] - half_prec_[0] * v * v;
      double acc = kNegInf;
      for (std::size_t k = 0; k < comps_.size(); ++k)
        acc = log_sum_exp(acc, log_norm_[k] - half_prec_[k] * v * v);
      return acc;
    }
    return std::log(std::max((*this)(v), kDensityFloor));
  }

  /// Distribution function; exact for mixtures, from the trapezoid table otherwise.
  double cdf(double v) const {
    if (analytic()) {
      double s = 0.0;
      for (const auto& c : comps_) s += c.weight * 0.5 * std::erfc(-v / std::sqrt(2.0 * c.variance));
      return s;
    }
    if (v <= -v_max_) return 0.0;
    if (v >= v_max_) return 1.0;
    double t = (v + v_max_) / dv_;
    auto k = std::min(static_cast<std::size_t>(t), cdf_.size() - 2);
    double u = t - k;
    return (1.0 - u) * cdf_[k] + u * cdf_[k + 1];
  }

  double sup_norm() const {
    double m = 0.0;
    for (double x : values_) m = std::max(m, x);
    return m;
  }

  /// Sum_i w_i g(v_i, f_i).
  double integrate(const std::function<double(double, double)>& g) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * g(nodes_[i], values_[i]);
    return s;
  }

  double sample(Rng& rng) const {
    if (analytic()) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      double r = u(rng), acc = 0.0;
      const GaussianComponent* pick = &comps_.back();
      for (const auto& c : comps_) {
        acc += c.weight;
        if (r < acc) {
          pick = &c;
          break;
        }
      }
      std::normal_distribution<double> z(0.0, std::sqrt(pick->variance));
      return z(rng);
    }
    std::uniform_real_distribution<double> u(0.0, cdf_.back());
    double r = u(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), r);
    std::size_t k = std::clamp<std::size_t>(it - cdf_.begin(), 1, cdf_.size() - 1);
    double c0 = cdf_[k - 1], c1 = cdf_[k];
    double t = c1 > c0 ? (r - c0) / (c1 - c0) : 0.5;
    return nodes_[k - 1] + t * dv_;
  }

 private:
  void init_grid(double v_max, int nodes) {
    require(v_max > 0.0 && nodes >= 5, "GridDensity1D: bad grid");
    v_max_ = v_max;
    dv_ = 2.0 * v_max / (nodes - 1);
    nodes_.resize(nodes);
    weights_.assign(nodes, dv_);
    weights_.front() = weights_.back() = 0.5 * dv_;
    values_.assign(nodes, 0.0);
    for (int i = 0; i < nodes; ++i) nodes_[i] = -v_max + i * dv_;
  }

  double exact(double v) const {
    double s = 0.0;
    for (std::size_t k = 0; k < comps_.size(); ++k)
      s += norm_[k] * std::exp(-half_prec_[k] * v * v);
    return s;
  }

  void set_constants() {
    norm_.clear();
    log_norm_.clear();
    half_prec_.clear();
    for (const auto& c : comps_) {
      norm_.push_back(scale_ * c.weight / std::sqrt(kTwoPi * c.variance));
      log_norm_.push_back(std::log(norm_.back()));
      half_prec_.push_back(0.5 / c.variance);
    }
  }

  void normalize() {
    set_constants();
    double m = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) m += weights_[i] * values_[i];
    if (!(m > 0.0)) throw ArgumentError("GridDensity1D: zero mass");
    for (double& x : values_) x /= m;
    scale_ /= m;
    set_constants();
  }

  void build_cdf() {
    cdf_.assign(nodes_.size(), 0.0);
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      cdf_[i] = cdf_[i - 1] + 0.5 * dv_ * (values_[i - 1] + values_[i]);
  }

  std::string tag_;
  double v_max_ = 0.0;
  double dv_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> nodes_, values_, weights_;
  std::vector<GaussianComponent> comps_;
  std::vector<double> norm_, log_norm_, half_prec_;
  std::vector<double> cdf_;
};

inline constexpr double kDefaultVmax = 16.0;

/// Maxwellian M_a with variance a.
inline GridDensity1D gaussian(double a, GridOptions opt = {}) {
  require(a > 0.0, "gaussian: variance must be positive");
  double need = 8.0 * std::sqrt(a);
  double vmax = opt.v_max > 0.0 ? opt.v_max : std::max(kDefaultVmax, need);
  if (vmax < need)
    throw ConfigurationError("gaussian: v_max " + std::to_string(vmax) + " < 8 sqrt(a) = " +
                             std::to_string(need));
  std::ostringstream tag;
  tag << "gaussian(" << a << ")";
  return GridDensity1D::from_components({{1.0, a}}, vmax, opt.nodes, tag.str());
}

/// f_delta = delta M_{1/(2 delta)} + (1 - delta) M_{1/(2(1 - delta))}.
inline GridDensity1D mixture(MixtureSpec spec, GridOptions opt = {}) {
  double d = spec.delta;
  require(d > 0.0 && d < 1.0, "mixture: delta must lie in (0, 1)");
  double hot = std::max(0.5 / d, 0.5 / (1.0 - d));
  double need = 8.0 * std::sqrt(hot);
  double vmax = opt.v_max > 0.0 ? opt.v_max : std::max(kDefaultVmax, need);
  if (vmax < need)
    throw ConfigurationError("mixture: hot component unresolved, v_max " + std::to_string(vmax) +
                             " < " + std::to_string(need));
  std::ostringstream tag;
  tag << "mixture(" << d << ")";
  if (d == 0.5) return GridDensity1D::from_components({{1.0, 1.0}}, vmax, opt.nodes, tag.str());
  return GridDensity1D::from_components({{d, 0.5 / d}, {1.0 - d, 0.5 / (1.0 - d)}}, vmax,
                                        opt.nodes, tag.str());
}

inline double moment(const GridDensity1D& f, int p) {
  require(p >= 0, "moment: order must be nonnegative");
  const auto& x = f.nodes();
  const auto& y = f.values();
  const std::size_t n = f.size();
  double total = 0.0, signed_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double term = f.weights()[i] * std::pow(x[i], p) * y[i];
    signed_sum += term;
    total += std::abs(term);
  }
  // geometric extrapolation of the truncated tail from the last two nodes at each end
  auto tail = [&](std::size_t e, std::size_t in) {
    double a = std::abs(std::pow(x[e], p) * y[e]), b = std::abs(std::pow(x[in], p) * y[in]);
    if (a == 0.0) return 0.0;
    if (a >= b) return std::numeric_limits<double>::infinity();
    double r = a / b;
    return a * f.dv() * r / (1.0 - r);
  };
  double t = tail(n - 1, n - 2) + tail(0, 1);
  if (total > 0.0 && t > 1e-10 * total)
    throw AccuracyError("moment: estimated tail " + std::to_string(t / total) +
                        " of the total exceeds 1e-10; widen the grid");
  return signed_sum;
}

/// Density h of V^2 when V ~ f. Cell integrals are computed in v-space so the
/// 1/sqrt(r) singularity at 0 carries no quadrature error.
class SquaredDensity {
 public:
  explicit SquaredDensity(GridDensity1D f) : f_(std::move(f)) {}

  const GridDensity1D& generator() const { return f_; }

  double operator()(double r) const {
    if (r <= 0.0) return 0.0;
    double s = std::sqrt(r);
    return (f_(s) + f_(-s)) / (2.0 * s);
  }

  double log_at(double r) const {
    if (r <= 0.0) return kNegInf;
    double s = std::sqrt(r);
    return log_sum_exp(f_.log_at(s), f_.log_at(-s)) - std::log(2.0 * s);
  }

  struct CellStats {
    double mass = 0.0;
    double mean = 0.0;    // E[V^2 | cell]
    double second = 0.0;  // integral of r^2 h over the cell
  };

  CellStats cell(double a, double b) const {
    const Quadrature& g = gauss_legendre(8);
    double va = std::sqrt(std::max(a, 0.0)), vb = std::sqrt(b);
    double half = 0.5 * (vb - va), mid = 0.5 * (vb + va);
    CellStats c;
    double m1 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double v = mid + half * g.x[i];
      double w = half * g.w[i] * (f_(v) + f_(-v));
      double r = v * v;
      c.mass += w;
      m1 += w * r;
      c.second += w * r * r;
    }
    c.mean = c.mass > 0.0 ? m1 / c.mass : 0.5 * (a + b);
    return c;
  }

  double mass(double r_max, int cells = 4096) const {
    double s = 0.0, h = r_max / cells;
    for (int i = 0; i < cells; ++i) s += cell(i * h, (i + 1) * h).mass;
    return s;
  }

  double mean(double r_max, int cells = 4096) const {
    double s = 0.0, h = r_max / cells;
    for (int i = 0; i < cells; ++i) {
      auto c = cell(i * h, (i + 1) * h);
      s += c.mass * c.mean;
    }
    return s;
  }

 private:
  GridDensity1D f_;
};

inline SquaredDensity square_pushforward(const GridDensity1D& f) { return SquaredDensity(f); }

/// H(f|M) = integral of f log(f/M_1).
inline double relative_entropy(const GridDensity1D& f) {
  double m2 = moment(f, 2);
  if (std::abs(m2 - 1.0) > 1e-6)
    throw ArgumentError("relative_entropy: second moment " + std::to_string(m2) + " is not 1");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double fv = f.values()[i];
    if (fv <= 0.0) continue;
    double v = f.nodes()[i];
    double lf = f.analytic() ? f.log_at(v) : std::log(std::max(fv, kDensityFloor));
    s += f.weights()[i] * fv * (lf + 0.5 * v * v + 0.5 * std::log(kTwoPi));
  }
  return s;
}

inline double fisher_information(const GridDensity1D& f) {
  const auto& y = f.values();
  double s = 0.0, h = f.dv();
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    if (y[i] <= 0.0)
      throw ArgumentError("fisher_information: zero density at node " + std::to_string(i));
    double d = (y[i + 1] - y[i - 1]) / (2.0 * h);
    s += f.weights()[i] * d * d / y[i];
  }
  return s;
}

inline double psi(double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) throw ArgumentError("psi: arguments must be positive");
  return (x - y) * (std::log(x) - std::log(y));
}

inline double psi_beta(double x, double y, double beta) {
  if (!(x > 0.0) || !(y > 0.0)) throw ArgumentError("psi_beta: arguments must be positive");
  return std::abs(x - y) * std::pow(std::abs(std::log(x) - std::log(y)), 1.0 + beta);
}

inline void write_density_csv(const std::string& path, const GridDensity1D& f,
                              const nlohmann::json& provenance = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("write_density_csv: cannot open " + path);
  nlohmann::json head = {{"v_max", f.v_max()}, {"nodes", f.size()}, {"tag", f.tag()},
                         {"provenance", provenance}};
  out << "# " << head.dump() << "\n";
  out << "node,value\n";
  out.precision(17);
  for (std::size_t i = 0; i < f.size(); ++i) out << f.nodes()[i] << "," << f.values()[i] << "\n";
}

inline GridDensity1D read_density_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("read_density_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("# ", 0) != 0) throw ArgumentError("read_density_csv: missing header");
  auto head = nlohmann::json::parse(line.substr(2));
  std::getline(in, line);
  std::vector<double> values;
  while (std::getline(in, line)) {
    auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (values.size() != head.at("nodes").get<std::size_t>())
    throw ArgumentError("read_density_csv: node count mismatch");
  return GridDensity1D::from_values(head.at("v_max").get<double>(), std::move(values),
                                    head.value("tag", std::string("csv")));
}

}  // namespace kac
