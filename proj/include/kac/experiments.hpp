#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "conditioned_states.hpp"
#include "densities.hpp"
#include "errors.hpp"
#include "generator_spectrum.hpp"
#include "inequalities.hpp"
#include "kac_process.hpp"
#include "limit_equation.hpp"
#include "normalization.hpp"
#include "report.hpp"
#include "statistics.hpp"
#include "svg_plot.hpp"

namespace kac {

/// A configuration that cannot be run; carries every problem found.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const char* kind() const noexcept override { return "validation"; }
  const std::vector<std::string>& problems() const { return problems_; }
  nlohmann::json to_json() const { return {{"error", "validation"}, {"problems", problems_}}; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s;
    for (const auto& x : p) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
  std::vector<std::string> problems_;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"gap",        "clt",        "entropy-scan", "villani",
                                              "cercignani", "inequality", "pde",          "chaos"};
  return names;
}

struct GeneratorSpec {
  std::string kind = "mixture";  // gaussian | mixture | schedule
  double delta = 0.25;
  double beta = 0.1;

  double delta_at(int N) const { return kind == "schedule" ? delta_schedule(beta, N) : delta; }

  GridDensity1D make(int N, GridOptions grid = {}) const {
    if (kind == "gaussian") return gaussian(1.0, grid);
    return mixture({delta_at(N)}, grid);
  }

  nlohmann::json to_json() const {
    if (kind == "gaussian") return {{"kind", kind}};
    if (kind == "schedule") return {{"kind", kind}, {"beta", beta}};
    return {{"kind", kind}, {"delta", delta}};
  }
};

struct ExperimentConfig {
  std::string experiment;
  GeneratorSpec generator;
  std::vector<int> N;
  double gamma = 0.0;
  double beta = 1.0;
  double k = 3.0;
  double C1 = 2.0;
  double epsilon = 0.5;
  int degree = 4;
  std::size_t samples = 200000;
  std::vector<double> deltas{0.1, 0.03, 0.01, 0.003};
  double t_end = 5.0;
  double dt = 0.0;  // 0 selects the stability rule
  double cadence = 0.1;
  std::size_t replicas = 200;
  std::uint64_t seed = 1;
  GridOptions grid;
  PdeGrid pde_grid;
  std::string out = "out";

  /// Defaults depend on the experiment; explicit keys override them.
  static ExperimentConfig from_json(const nlohmann::json& j) {
    std::vector<std::string> problems;
    if (!j.is_object()) throw ValidationError({"config must be a JSON object"});
    ExperimentConfig c;
    auto get = [&](const char* key, auto& dst) {
      if (!j.contains(key)) return;
      try {
        j.at(key).get_to(dst);
      } catch (const nlohmann::json::exception&) {
        problems.push_back(std::string("field '") + key + "' has the wrong type");
      }
    };
    get("experiment", c.experiment);
    c.apply_defaults();
    get("N", c.N);
    get("gamma", c.gamma);
    get("beta", c.beta);
    get("k", c.k);
    get("C1", c.C1);
    get("epsilon", c.epsilon);
    get("degree", c.degree);
    get("samples", c.samples);
    get("deltas", c.deltas);
    get("t_end", c.t_end);
    get("dt", c.dt);
    get("cadence", c.cadence);
    get("replicas", c.replicas);
    get("seed", c.seed);
    get("out", c.out);
    if (j.contains("generator")) {
      const auto& g = j["generator"];
      if (g.is_string()) {
        c.generator.kind = g.get<std::string>();
      } else if (g.is_object()) {
        try {
          c.generator.kind = g.value("kind", c.generator.kind);
          c.generator.delta = g.value("delta", c.generator.delta);
          c.generator.beta = g.value("beta", c.generator.beta);
        } catch (const nlohmann::json::exception&) {
          problems.push_back("field 'generator' has a wrongly typed member");
        }
      } else {
        problems.push_back("field 'generator' must be a string or an object");
      }
    }
    if (j.contains("grid")) {
      try {
        c.grid.v_max = j["grid"].value("v_max", c.grid.v_max);
        c.grid.nodes = j["grid"].value("nodes", c.grid.nodes);
      } catch (const nlohmann::json::exception&) {
        problems.push_back("field 'grid' must be an object with numeric v_max, nodes");
      }
    }
    if (j.contains("pde_grid")) {
      try {
        c.pde_grid.v_max = j["pde_grid"].value("v_max", c.pde_grid.v_max);
        c.pde_grid.nodes = j["pde_grid"].value("nodes", c.pde_grid.nodes);
      } catch (const nlohmann::json::exception&) {
        problems.push_back("field 'pde_grid' must be an object with numeric v_max, nodes");
      }
    }
    static const std::set<std::string> known{
        "experiment", "generator", "N",     "gamma",   "beta",     "k",        "C1",
        "epsilon",    "degree",    "samples", "deltas", "t_end",   "dt",       "cadence",
        "replicas",   "seed",      "grid",  "pde_grid", "out"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!known.count(it.key())) problems.push_back("unknown field '" + it.key() + "'");
    if (!problems.empty()) {
      for (auto& q : c.problems()) problems.push_back(q);
      throw ValidationError(problems);
    }
    return c;
  }

  void apply_defaults() {
    if (experiment == "gap") N = {3, 4, 5};
    else if (experiment == "clt") N = {32, 64, 128, 256};
    else if (experiment == "entropy-scan") N = {32, 64, 128, 256};
    else if (experiment == "villani") {
      generator.kind = "schedule";
      N = {64, 128, 256, 512, 1024};
    } else if (experiment == "inequality") {
      gamma = 0.5;
      N = {32, 64, 128, 256};
      cadence = 0.5;
    } else if (experiment == "chaos") {
      N = {64, 128, 256, 512};
      t_end = 1.0;
    }
  }

  /// Every problem that would make a module reject the run.
  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), experiment) == names.end()) {
      p.push_back("unknown experiment '" + experiment + "'");
      return p;
    }
    const std::string& g = generator.kind;
    if (g != "gaussian" && g != "mixture" && g != "schedule")
      p.push_back("generator kind must be gaussian, mixture or schedule");
    if (g == "mixture" && !(generator.delta > 0.0 && generator.delta < 1.0))
      p.push_back("generator delta must lie in (0, 1)");
    if (g == "schedule" && !(generator.beta > 0.0 && generator.beta < 0.5))
      p.push_back("schedule beta must lie in (0, 1/2)");
    if (experiment == "clt" && g == "schedule" && !(generator.beta < 1.0 / 6.0))
      p.push_back("clt with a schedule needs beta in (0, 1/6)");
    if (!(gamma >= 0.0 && gamma <= 1.0)) p.push_back("gamma must lie in [0, 1]");
    if (experiment != "cercignani" && experiment != "pde") {
      if (N.empty()) p.push_back("N list is empty");
      for (int n : N) {
        if (experiment == "gap" && (n < 3 || n > 6)) p.push_back("gap needs N in 3..6");
        else if (n < 3) p.push_back("N must be >= 3");
      }
      if (!std::is_sorted(N.begin(), N.end()) ||
          std::adjacent_find(N.begin(), N.end()) != N.end())
        p.push_back("N list must be strictly increasing");
    }
    if (experiment == "gap") {
      if (degree < 1 || degree > 6) p.push_back("degree must lie in 1..6");
      if (samples < 10000) p.push_back("samples must be >= 10000");
    }
    if (experiment == "villani" && g == "gaussian")
      p.push_back("villani needs a non-Maxwellian generator (H_N vanishes)");
    if (experiment == "cercignani") {
      if (deltas.empty()) p.push_back("deltas list is empty");
      for (double d : deltas)
        if (!(d > 0.0 && d < 1.0)) p.push_back("deltas must lie in (0, 1)");
    }
    if (experiment == "inequality") {
      if (g == "schedule") p.push_back("inequality needs a fixed generator");
      if (!(gamma < 1.0)) p.push_back("inequality needs gamma < 1");
      if (!(beta > 0.0)) p.push_back("beta must be positive");
      if (!(k * beta > 1.0 + beta)) p.push_back("k must exceed 1 + 1/beta");
      if (!(C1 > 0.0)) p.push_back("C1 must be positive");
      if (!(epsilon > 0.0)) p.push_back("epsilon must be positive");
    }
    if (experiment == "entropy-scan" && !(beta > 0.0)) p.push_back("beta must be positive");
    if (experiment == "pde" || experiment == "chaos") {
      if (g == "schedule") p.push_back(experiment + " needs a fixed generator");
      if (!(t_end > 0.0)) p.push_back("t_end must be positive");
      if (dt < 0.0) p.push_back("dt must be >= 0");
      if (pde_grid.nodes < 101 || pde_grid.nodes % 2 == 0)
        p.push_back("pde_grid nodes must be odd and >= 101");
      if (!(pde_grid.v_max > 0.0)) p.push_back("pde_grid v_max must be positive");
    }
    if ((experiment == "pde" || experiment == "inequality") && !(cadence > 0.0))
      p.push_back("cadence must be positive");
    if (experiment == "chaos" && replicas < 1) p.push_back("replicas must be >= 1");
    if (grid.nodes < 257 || grid.nodes % 2 == 0) p.push_back("grid nodes must be odd and >= 257");
    if (grid.v_max < 0.0) p.push_back("grid v_max must be >= 0");
    if (out.empty()) p.push_back("out must be a directory path");
    return p;
  }

  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ValidationError(p);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"experiment", experiment},
                        {"generator", generator.to_json()},
                        {"N", N},
                        {"gamma", gamma},
                        {"seed", seed},
                        {"grid", {{"v_max", grid.v_max}, {"nodes", grid.nodes}}}};
    if (experiment == "gap") {
      j["degree"] = degree;
      j["samples"] = samples;
    }
    if (experiment == "cercignani") {
      j.erase("N");
      j.erase("generator");
      j["deltas"] = deltas;
    }
    if (experiment == "entropy-scan") j["beta"] = beta;
    if (experiment == "inequality") {
      j["beta"] = beta;
      j["k"] = k;
      j["C1"] = C1;
      j["epsilon"] = epsilon;
      j["t_end"] = t_end;
      j["cadence"] = cadence;
    }
    if (experiment == "pde" || experiment == "chaos") {
      j["t_end"] = t_end;
      j["dt"] = dt;
      j["pde_grid"] = {{"v_max", pde_grid.v_max}, {"nodes", pde_grid.nodes}};
    }
    if (experiment == "pde") {
      j.erase("N");
      j["cadence"] = cadence;
    }
    if (experiment == "chaos") j["replicas"] = replicas;
    return j;
  }
};

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({"cannot open config " + path});
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError({std::string("config is not valid JSON: ") + e.what()});
  }
  return ExperimentConfig::from_json(j);
}

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ExperimentResult {
  std::string experiment;
  nlohmann::json summary;
  std::vector<Check> checks;
  std::vector<std::string> artifacts;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

namespace detail {

inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(12);
  s << x;
  return s.str();
}

/// CSV with "# " provenance lines ahead of the column header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const nlohmann::json& prov, const nlohmann::json& tolerances,
            const std::string& columns, const std::vector<std::string>& notes = {})
      : out_(path) {
    if (!out_) throw ArgumentError("CsvWriter: cannot open " + path);
    out_ << "# kaclab " << prov["version"].get<std::string>()
         << " experiment=" << prov["config"]["experiment"].get<std::string>() << '\n';
    out_ << "# config_hash=" << prov["config_hash"].get<std::string>()
         << " seed=" << prov["seed"].get<std::uint64_t>() << '\n';
    out_ << "# tolerances=" << tolerances.dump() << '\n';
    for (const auto& n : notes) out_ << "# " << n << '\n';
    out_ << columns << '\n';
  }

  template <class... T>
  void row(const T&... v) {
    std::string line;
    ((line += cell(v) + ","), ...);
    line.pop_back();
    out_ << line << '\n';
  }

 private:
  static std::string cell(double x) { return num(x); }
  static std::string cell(int x) { return std::to_string(x); }
  static std::string cell(std::size_t x) { return std::to_string(x); }
  static std::string cell(bool x) { return x ? "1" : "0"; }
  static std::string cell(const std::string& x) { return x; }
  std::ofstream out_;
};

inline nlohmann::json checks_json(const std::vector<Check>& checks) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : checks)
    a.push_back({{"name", c.name},
                 {"value", std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr)},
                 {"tolerance", c.tolerance},
                 {"pass", c.pass}});
  return a;
}

template <class F>
void parallel_over(std::size_t n, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline bool strictly_decreasing(const std::vector<double>& x) {
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] < x[i - 1])) return false;
  return true;
}

struct Context {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  nlohmann::json prov;
  ExperimentResult& res;

  std::string path(const std::string& name) {
    res.artifacts.push_back(name);
    return (dir / name).string();
  }
};

inline void run_gap(Context& c) {
  const auto& cfg = c.cfg;
  const double tol = 1e-6;
  nlohmann::json tols = {{"gap_abs", tol}};
  CsvWriter csv(c.path("gap.csv"), c.prov, tols,
                "N,degree,basis_size,rank,gap,gap_formula,rayleigh,rayleigh_se,gamma");
  std::vector<GeneratorSpectrum> spec(cfg.N.size());
  std::vector<RayleighEstimate> ray(cfg.N.size());
  parallel_over(cfg.N.size(), [&](std::size_t i) {
    spec[i] = generator_matrix_smallN(cfg.N[i], cfg.degree);
    auto rng = make_rng(cfg.seed, i);
    auto phi = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x * x * x * x - 3.0 * x * x;
      return s;
    };
    ray[i] = dirichlet_rayleigh(phi, cfg.N[i], cfg.gamma, cfg.samples, rng);
  });
  PlotSeries g{"Galerkin gap", {}, {}}, fm{"(N+2)/(2(N-1))", {}, {}}, r{"Rayleigh", {}, {}};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.N.size(); ++i) {
    int N = cfg.N[i];
    double gap = spec[i].gap(), formula = spectral_gap_formula(N);
    csv.row(N, cfg.degree, spec[i].basis_size, spec[i].rank, gap, formula, ray[i].quotient,
            ray[i].std_error, cfg.gamma);
    rows.push_back({{"N", N}, {"gap", gap}, {"gap_formula", formula},
                    {"rayleigh", ray[i].quotient}, {"rayleigh_se", ray[i].std_error}});
    c.res.checks.push_back({"|gap - (N+2)/(2(N-1))| <= tol, N=" + std::to_string(N), std::abs(gap - formula), tol,
                            std::abs(gap - formula) <= tol});
    g.x.push_back(N), g.y.push_back(gap);
    fm.x.push_back(N), fm.y.push_back(formula);
    r.x.push_back(N), r.y.push_back(ray[i].quotient);
  }
  c.res.summary["rows"] = rows;
  c.res.summary["note"] = "Galerkin spectrum is for gamma = 0; the Rayleigh column uses gamma";
  write_svg_plot(c.path("gap.svg"), {"Spectral gap", "N", "gap"}, {g, fm, r});
}

inline void run_clt(Context& c) {
  const auto& cfg = c.cfg;
  const double tol = 1e-6;
  nlohmann::json tols = {{"gaussian_log_abs", tol}};
  CltEnvelope env;
  const int n_max = cfg.N.back();
  if (cfg.generator.kind == "schedule") {
    env = clt_envelope_ndependent(cfg.generator.beta, cfg.N, 0);
  } else {
    LadderOptions lo;
    lo.keep = cfg.N;
    int top = n_max;
    if (cfg.generator.kind == "gaussian") {
      top = std::max(n_max, 64);
      for (int n = 2; n <= 64; ++n) lo.keep.push_back(n);
    }
    std::sort(lo.keep.begin(), lo.keep.end());
    lo.keep.erase(std::unique(lo.keep.begin(), lo.keep.end()), lo.keep.end());
    auto L = build_ladder(cfg.generator.make(n_max, cfg.grid), top, lo);
    env.sigma2 = L.sigma2();
    for (int n : cfg.N) {
      env.n.push_back(n);
      env.lambda_sup.push_back(clt_lambda_sup(L, n, env.sigma2, n));
    }
    if (cfg.generator.kind == "gaussian") {
      double worst = 0.0;
      for (int n = 2; n <= 64; ++n)
        for (double r2 : {n / 2.0, double(n), 2.0 * n})
          worst = std::max(worst,
                           std::abs(z_value(L, n, r2) - (-0.5 * n * std::log(kTwoPi) - r2 / 2)));
      c.res.summary["gaussian_log_error"] = worst;
      c.res.checks.push_back({"gaussian closed form error <= tol, n<=64", worst, tol, worst <= tol});
    }
  }
  CsvWriter csv(c.path("clt.csv"), c.prov, tols, "N,delta,sigma2,lambda_sup");
  PlotSeries s{"sup |lambda_N|", {}, {}};
  for (std::size_t i = 0; i < env.n.size(); ++i) {
    double d = i < env.delta.size() ? env.delta[i] : cfg.generator.delta_at(env.n[i]);
    if (cfg.generator.kind == "gaussian") d = std::numeric_limits<double>::quiet_NaN();
    csv.row(env.n[i], d, cfg.generator.kind == "schedule" ? sigma2_schedule(d) : env.sigma2,
            env.lambda_sup[i]);
    s.x.push_back(env.n[i]), s.y.push_back(env.lambda_sup[i]);
  }
  bool dec = strictly_decreasing(env.lambda_sup);
  c.res.summary["envelope"] = env.to_json();
  c.res.summary["strictly_decreasing"] = dec;
  c.res.checks.push_back({"lambda_sup strictly decreasing", env.lambda_sup.back(), 0.0, dec});
  write_svg_plot(c.path("clt.svg"), {"Local CLT envelope", "N", "sup |lambda_N|", true, true}, {s});
}

inline void run_entropy_scan(Context& c) {
  const auto& cfg = c.cfg;
  const double floor = 1e-6;
  nlohmann::json tols = {{"resolution", floor}};
  struct Row {
    double H = 0, D = 0, L1 = 0, H_lim = 0, D_lim = 0;
  };
  std::vector<Row> rows(cfg.N.size());
  parallel_over(cfg.N.size(), [&](std::size_t i) {
    int N = cfg.N[i];
    auto f = cfg.generator.make(N, cfg.grid);
    ConditionedFamily fam(f, N);
    Row& r = rows[i];
    r.H = entropy_HN(fam);
    r.D = production_DN(fam, cfg.gamma);
    r.L1 = chaos_distance(fam, 1);
    r.H_lim = relative_entropy(f);
    r.D_lim = limit_production(f, cfg.gamma);
    if (std::abs(r.H) < floor) r.H = 0.0;
    if (std::abs(r.D) < floor) r.D = 0.0;
    if (std::abs(r.H_lim) < floor) r.H_lim = 0.0;
    if (std::abs(r.D_lim) < floor) r.D_lim = 0.0;
  });
  CsvWriter csv(c.path("entropy_scan.csv"), c.prov, tols,
                "N,delta,H_N,H_N_over_N,D_N,two_D_N_over_N,chaos_L1,H_limit,D_limit,H_gap,D_gap",
                {"values below " + num(floor) + " are reported as 0 (ladder resolution)"});
  PlotSeries h{"H_N/N", {}, {}}, d{"2 D_N/N", {}, {}};
  std::vector<double> hg, dg;
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int N = cfg.N[i];
    const Row& r = rows[i];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double delta = cfg.generator.kind == "gaussian" ? nan : cfg.generator.delta_at(N);
    double H_gap = r.H_lim > 0 ? std::abs(r.H / N - r.H_lim) / r.H_lim : nan;
    double D_gap = r.D_lim > 0 ? std::abs(2.0 * r.D / (N * r.D_lim) - 1.0) : nan;
    csv.row(N, delta, r.H, r.H / N, r.D, 2.0 * r.D / N, r.L1, r.H_lim, r.D_lim, H_gap, D_gap);
    out.push_back({{"N", N}, {"H_N", r.H}, {"D_N", r.D}, {"chaos_L1", r.L1},
                   {"H_limit", r.H_lim}, {"D_limit", r.D_lim}});
    h.x.push_back(N), h.y.push_back(r.H / N);
    d.x.push_back(N), d.y.push_back(2.0 * r.D / N);
    if (std::isfinite(H_gap)) hg.push_back(H_gap);
    if (std::isfinite(D_gap)) dg.push_back(D_gap);
  }
  c.res.summary["rows"] = out;
  if (cfg.generator.kind == "mixture" && hg.size() == rows.size() && dg.size() == rows.size()) {
    c.res.checks.push_back({"H gap decreasing", hg.back(), 0.0, strictly_decreasing(hg)});
    c.res.checks.push_back({"D gap decreasing", dg.back(), 0.0, strictly_decreasing(dg)});
  }
  write_svg_plot(c.path("entropy_scan.svg"), {"Normalised functionals", "N", "per particle"},
                 {h, d});
}

inline void run_villani(Context& c) {
  const auto& cfg = c.cfg;
  nlohmann::json tols = {{"villani", "Gamma_N >= 2/(N-1)"}};
  std::vector<GammaRatio> rows =
      cfg.generator.kind == "schedule"
          ? gamma_ratio_schedule(cfg.generator.beta, cfg.gamma, cfg.N)
          : gamma_ratio_sweep([&](int N) { return cfg.generator.make(N, cfg.grid); }, cfg.gamma,
                              cfg.N);
  if (cfg.generator.kind == "schedule") tols["slope_max"] = -0.5;
  CsvWriter csv(c.path("villani.csv"), c.prov, tols,
                "N,delta,H_N,D_N,ratio,villani_bound,villani_checked,villani_ok");
  PlotSeries s{"Gamma_N", {}, {}}, b{"2/(N-1)", {}, {}};
  for (const auto& r : rows) {
    csv.row(r.N, cfg.generator.delta_at(r.N), r.H_N, r.D_N, r.ratio, r.villani_bound,
            r.villani_checked, r.villani_ok);
    if (r.villani_checked)
      c.res.checks.push_back({"Gamma_N >= 2/(N-1), N=" + std::to_string(r.N), r.ratio, r.villani_bound,
                              r.villani_ok});
    s.x.push_back(r.N), s.y.push_back(r.ratio);
    b.x.push_back(r.N), b.y.push_back(r.villani_bound);
  }
  c.res.summary["rows"] = to_json(rows);
  if (rows.size() >= 2) {
    double slope = loglog_slope(rows);
    c.res.summary["loglog_slope"] = slope;
    if (cfg.generator.kind == "schedule")
      c.res.checks.push_back({"loglog slope <= tol", slope, -0.5, slope <= -0.5});
  }
  write_svg_plot(c.path("villani.svg"), {"Entropy production ratio", "N", "Gamma_N", true, true},
                 {s, b});
}

inline void run_cercignani(Context& c) {
  const auto& cfg = c.cfg;
  const double K_max = 6.0 / std::log(2.0);
  nlohmann::json tols = {{"K_max", K_max}};
  std::vector<double> H(cfg.deltas.size()), D(cfg.deltas.size());
  parallel_over(cfg.deltas.size(), [&](std::size_t i) {
    auto f = mixture({cfg.deltas[i]}, cfg.grid);
    H[i] = relative_entropy(f);
    D[i] = limit_production(f, 0.0);
  });
  CsvWriter csv(c.path("cercignani.csv"), c.prov, tols,
                "delta,H,D,ratio,ratio_over_delta_log");
  PlotSeries s{"D/(2H)", {}, {}}, k{"K delta log(1/delta)", {}, {}};
  std::vector<double> ratio;
  double K = 0.0;
  for (std::size_t i = 0; i < H.size(); ++i) {
    double d = cfg.deltas[i];
    if (!(H[i] > 1e-12)) throw DegenerateError("cercignani: H vanishes at delta = " + num(d));
    ratio.push_back(D[i] / (2.0 * H[i]));
    double scaled = ratio.back() / (d * std::log(1.0 / d));
    K = std::max(K, scaled);
    csv.row(d, H[i], D[i], ratio.back(), scaled);
    s.x.push_back(d), s.y.push_back(ratio.back());
  }
  for (double d : cfg.deltas) k.x.push_back(d), k.y.push_back(K * d * std::log(1.0 / d));
  c.res.summary["K"] = K;
  c.res.summary["K_max"] = K_max;
  // deltas are listed in decreasing order, so the ratio must decrease along the list
  std::vector<double> by_delta = ratio;
  std::vector<std::size_t> order(ratio.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return cfg.deltas[a] > cfg.deltas[b]; });
  for (std::size_t i = 0; i < order.size(); ++i) by_delta[i] = ratio[order[i]];
  bool dec = strictly_decreasing(by_delta);
  c.res.summary["decreasing"] = dec;
  c.res.checks.push_back({"ratio decreasing in delta", by_delta.back(), 0.0, dec});
  c.res.checks.push_back({"K < 6/log 2", K, K_max, K < K_max});
  write_svg_plot(c.path("cercignani.svg"),
                 {"Limit entropy production ratio", "delta", "D/(2H)", true, true}, {s, k});
}

inline void run_inequality(Context& c) {
  const auto& cfg = c.cfg;
  nlohmann::json tols = {{"lambda_points", 100}, {"C1", cfg.C1}, {"epsilon", cfg.epsilon}};
  auto f = cfg.generator.make(cfg.N.front(), cfg.grid);
  auto w = quadratic_witness(f, cfg.beta, cfg.k, cfg.epsilon);
  w.validate(f);
  std::vector<ConditionedFamily> fams;
  for (int N : cfg.N) fams.emplace_back(f, N);
  std::vector<LogPowerEnvelope> env(fams.size());
  parallel_over(fams.size(), [&](std::size_t i) { env[i] = logpower_envelope(w, fams[i]); });
  auto rep = rescaled_inequality_check(fams, cfg.gamma, w, cfg.C1);

  CsvWriter lp(c.path("logpower.csv"), c.prov, tols,
               "N,measured,lambda_N_minus_1,lambda_N,denominator,applicable,envelope,pass");
  PlotSeries m{"measured", {}, {}}, e{"envelope", {}, {}};
  nlohmann::json ej = nlohmann::json::array();
  for (const auto& r : env) {
    double envv = r.applicable ? r.envelope : std::numeric_limits<double>::quiet_NaN();
    lp.row(r.N, r.measured, r.lambda_nm1, r.lambda_n, r.denominator, r.applicable, envv, r.pass);
    ej.push_back(r.to_json());
    if (r.applicable)
      c.res.checks.push_back({"log-power <= envelope, N=" + std::to_string(r.N), r.measured,
                              r.envelope, r.pass});
    m.x.push_back(r.N), m.y.push_back(r.measured);
    e.x.push_back(r.N), e.y.push_back(envv);
  }
  CsvWriter rc(c.path("rescaled.csv"), c.prov, tols,
               "N,H_over_N,D_gamma_over_N,D_1_over_N,lambda_star,worst_margin,intermediate_ok,"
               "final_lhs,final_rhs,final_ok");
  for (const auto& r : rep.rows) {
    rc.row(r.N, r.H, r.D_gamma, r.D_one, r.lambda_star, r.worst_margin, r.intermediate_ok,
           r.final_lhs, r.final_rhs, r.final_ok);
    c.res.checks.push_back({"intermediate bound margin >= 0, N=" + std::to_string(r.N), r.worst_margin,
                            0.0, r.intermediate_ok});
    c.res.checks.push_back({"rescaled D/N >= C (H/N)^(1+e), N=" + std::to_string(r.N), r.final_lhs,
                            r.final_rhs, r.final_ok});
  }
  BoltzmannReport bz;
  if (cfg.t_end > 0.0) {
    EvolveOptions o;
    o.cadence = cfg.cadence;
    o.record_production = false;
    o.keep_snapshots = true;
    auto tr = evolve(make_pde_state(f, cfg.pde_grid), cfg.gamma, cfg.dt, cfg.t_end, o);
    bz = boltzmann_inequality_check(tr, cfg.gamma, cfg.beta, cfg.k);
  } else {
    bz = boltzmann_inequality_check(f, cfg.gamma, cfg.beta, cfg.k);
  }
  CsvWriter bc(c.path("boltzmann.csv"), c.prov, tols, "t,D_gamma,H,ratio,trivial");
  for (const auto& r : bz.rows)
    bc.row(r.t, r.D, r.H, r.trivial ? std::numeric_limits<double>::quiet_NaN() : r.ratio,
           r.trivial);
  c.res.summary["witness"] = w.to_json();
  c.res.summary["logpower"] = ej;
  c.res.summary["rescaled"] = rep.to_json();
  c.res.summary["boltzmann"] = bz.to_json();
  write_svg_plot(c.path("logpower.svg"), {"Log-power integral", "N", "value", true, true}, {m, e});
}

inline void run_pde(Context& c) {
  const auto& cfg = c.cfg;
  const double drift_tol = 1e-6, diss_tol = 0.02;
  nlohmann::json tols = {{"drift", drift_tol}, {"dissipation_rel", diss_tol}};
  auto f = cfg.generator.make(0, cfg.grid);
  auto s0 = make_pde_state(f, cfg.pde_grid);
  const double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(s0, cfg.gamma);
  EvolveOptions o;
  o.cadence = dt;
  o.record_production = false;
  o.keep_snapshots = true;
  auto tr = evolve(s0, cfg.gamma, dt, cfg.t_end, o);
  const auto& R = tr.records;
  const std::size_t stride = std::max<std::size_t>(1, std::lround(cfg.cadence / dt));

  std::vector<std::size_t> out_idx;
  for (std::size_t k = 0; k < R.size(); k += stride) out_idx.push_back(k);
  if (out_idx.back() != R.size() - 1) out_idx.push_back(R.size() - 1);
  std::vector<double> D(out_idx.size());
  parallel_over(out_idx.size(), [&](std::size_t i) {
    D[i] = limit_production(tr.snapshots[out_idx[i]].density, cfg.gamma);
  });
  CsvWriter csv(c.path("pde.csv"), c.prov, tols, "t,mass,energy,H,D_gamma,dHdt");
  PlotSeries h{"H(f|M)", {}, {}}, d{"D_gamma/2", {}, {}};
  for (std::size_t i = 0; i < out_idx.size(); ++i) {
    std::size_t k = out_idx[i];
    double dH = std::numeric_limits<double>::quiet_NaN();
    if (k > 0 && k + 1 < R.size()) dH = (R[k + 1].H - R[k - 1].H) / (R[k + 1].t - R[k - 1].t);
    csv.row(R[k].t, R[k].mass, R[k].energy, R[k].H, D[i], dH);
    h.x.push_back(R[k].t), h.y.push_back(R[k].H);
    d.x.push_back(R[k].t), d.y.push_back(D[i] / 2.0);
  }
  double drift = 0.0;
  bool monotone = true;
  for (std::size_t k = 0; k < R.size(); ++k) {
    drift = std::max({drift, std::abs(R[k].mass - 1.0), std::abs(R[k].energy - 1.0)});
    if (k > 0 && R[k].H > R[k - 1].H) monotone = false;
  }
  c.res.checks.push_back({"mass/energy drift < tol", drift, drift_tol, drift < drift_tol});
  c.res.checks.push_back({"H nonincreasing", R.back().H, 0.0, monotone});
  nlohmann::json diss = nlohmann::json::array();
  for (double t : {0.5, 1.0, 2.0}) {
    auto k = static_cast<std::size_t>(std::lround(t / dt));
    if (k == 0 || k + 1 >= R.size()) continue;
    double dH = (R[k + 1].H - R[k - 1].H) / (R[k + 1].t - R[k - 1].t);
    double Dk = limit_production(tr.snapshots[k].density, cfg.gamma);
    double rel = std::abs(dH + Dk / 2.0) / Dk;
    diss.push_back({{"t", R[k].t}, {"dHdt", dH}, {"D_gamma", Dk}, {"relative_residual", rel}});
    c.res.checks.push_back({"dissipation residual < tol, t=" + num(R[k].t), rel, diss_tol, rel < diss_tol});
  }
  c.res.summary["dt"] = dt;
  c.res.summary["max_drift"] = drift;
  c.res.summary["H_monotone"] = monotone;
  c.res.summary["dissipation"] = diss;
  c.res.summary["max_clipped"] = tr.max_clipped;
  c.res.summary["clipped_steps"] = tr.clipped_steps;
  write_svg_plot(c.path("pde.svg"), {"H-theorem", "t", "value", false, true}, {h, d});
}

inline void run_chaos(Context& c) {
  const auto& cfg = c.cfg;
  const double w1_tol = 0.05;
  nlohmann::json tols = {{"W1_max", w1_tol}};
  auto f = cfg.generator.make(0, cfg.grid);
  EvolveOptions o;
  o.cadence = cfg.t_end;
  o.record_production = false;
  auto tr = evolve(make_pde_state(f, cfg.pde_grid), cfg.gamma, cfg.dt, cfg.t_end, o);
  const auto& g = tr.final_state.density;
  CsvWriter csv(c.path("chaos.csv"), c.prov, tols, "N,replicas,W1,hist_L1,acceptance_rate");
  PlotSeries s{"W1(Kac, PDE)", {}, {}};
  std::vector<double> w1s;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.N.size(); ++i) {
    int N = cfg.N[i];
    ConditionedFamily fam(f, N);
    SimulationConfig sc;
    sc.N = N;
    sc.gamma = cfg.gamma;
    sc.t_end = cfg.t_end;
    sc.seed = cfg.seed + 1000003ull * i;
    auto runs = simulate_replicas([&](std::size_t, Rng& rng) { return sample(fam, rng); }, sc,
                                  cfg.replicas);
    std::vector<double> pooled;
    std::size_t prop = 0, coll = 0;
    for (const auto& r : runs) {
      pooled.insert(pooled.end(), r.final_state.begin(), r.final_state.end());
      prop += r.proposals;
      coll += r.collisions;
    }
    double w1 = wasserstein1(pooled, [&](double v) { return g.cdf(v); }, -g.v_max(), g.v_max());
    auto h = make_histogram(pooled, -6.0, 6.0, 48);
    double l1 = histogram_l1(h, [&](double v) { return g(v); });
    double acc = prop ? double(coll) / double(prop) : 1.0;
    csv.row(N, cfg.replicas, w1, l1, acc);
    rows.push_back({{"N", N}, {"W1", w1}, {"hist_L1", l1}, {"acceptance_rate", acc}});
    w1s.push_back(w1);
    s.x.push_back(N), s.y.push_back(w1);
  }
  bool dec = strictly_decreasing(w1s);
  c.res.summary["rows"] = rows;
  c.res.summary["decreasing"] = dec;
  c.res.checks.push_back({"W1 at largest N < tol", w1s.back(), w1_tol, w1s.back() < w1_tol});
  if (w1s.size() >= 2) c.res.checks.push_back({"W1 decreasing in N", w1s.back(), 0.0, dec});
  write_svg_plot(c.path("chaos.svg"), {"Kac marginal vs PDE", "N", "W1", true, true}, {s});
}

}  // namespace detail

/// Runs a validated configuration, writing CSV, JSON and SVG artifacts under out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  ExperimentResult res;
  res.experiment = cfg.experiment;
  detail::Context ctx{cfg, out_dir, provenance(cfg.to_json(), cfg.seed), res};
  const auto& e = cfg.experiment;
  if (e == "gap") detail::run_gap(ctx);
  else if (e == "clt") detail::run_clt(ctx);
  else if (e == "entropy-scan") detail::run_entropy_scan(ctx);
  else if (e == "villani") detail::run_villani(ctx);
  else if (e == "cercignani") detail::run_cercignani(ctx);
  else if (e == "inequality") detail::run_inequality(ctx);
  else if (e == "pde") detail::run_pde(ctx);
  else if (e == "chaos") detail::run_chaos(ctx);
  nlohmann::json summary = {{"provenance", ctx.prov},
                            {"results", res.summary},
                            {"checks", detail::checks_json(res.checks)},
                            {"pass", res.pass()}};
  res.artifacts.push_back("summary.json");
  summary["artifacts"] = res.artifacts;
  write_json((std::filesystem::path(out_dir) / "summary.json").string(), summary);
  return res;
}

}  // namespace kac
