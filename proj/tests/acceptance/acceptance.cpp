#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "kac/kac.hpp"

using namespace kac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 means no runtime budget
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool strictly_decreasing(const std::vector<double>& x) {
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] < x[i - 1])) return false;
  return true;
}

std::string list(const std::vector<double>& x) {
  std::string s = "[";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? " " : "") + fmt("%.4g", x[i]);
  return s + "]";
}

const GridDensity1D& f14() {
  static const GridDensity1D f = mixture({0.25});
  return f;
}

std::vector<GammaRatio> all_gamma_rows;

Outcome spectral_gap() {
  const double tol = 1e-6;
  Outcome o{true, ""};
  for (int N : {3, 4, 5}) {
    double g = generator_matrix_smallN(N, 4).gap(), err = std::abs(g - spectral_gap_formula(N));
    o.pass = o.pass && err <= tol;
    o.detail += "N=" + std::to_string(N) + " gap=" + fmt("%.10g", g) + " err=" + fmt("%.1e", err) + " ";
  }
  return o;
}

Outcome local_clt() {
  const double final_max = 0.05, gauss_tol = 1e-6;
  LadderOptions lo;
  lo.keep = {32, 64, 128, 256};
  auto L = build_ladder(f14(), 256, lo);
  std::vector<double> sup;
  for (int n : lo.keep) sup.push_back(clt_lambda_sup(L, n, L.sigma2(), n));
  auto G = build_ladder(gaussian(1.0), 64);
  double worst = 0.0;
  for (int n = 2; n <= 64; ++n)
    for (double r2 : {n / 2.0, double(n), 2.0 * n})
      worst = std::max(worst, std::abs(z_value(G, n, r2) - (-0.5 * n * std::log(kTwoPi) - r2 / 2)));
  bool ok = strictly_decreasing(sup) && sup.back() < final_max && worst <= gauss_tol;
  return {ok, "sup|lambda_N| " + list(sup) + " gaussian log error " + fmt("%.2e", worst)};
}

Outcome entropic_chaos() {
  const double h_tol = 0.05, d_tol = 0.10;
  const std::vector<int> ns{32, 64, 128, 256};
  const double H = relative_entropy(f14()), D = limit_production(f14(), 0.0);
  std::vector<double> hg(ns.size()), dg(ns.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < ns.size(); ++i) {
    ConditionedFamily fam(f14(), ns[i]);
    hg[i] = std::abs(entropy_HN(fam) / ns[i] - H) / H;
    dg[i] = std::abs(2.0 * production_DN(fam, 0.0) / (ns[i] * D) - 1.0);
  }
  bool ok = hg.back() < h_tol && dg.back() < d_tol && strictly_decreasing(hg) &&
            strictly_decreasing(dg);
  return {ok, "H gaps " + list(hg) + " D gaps " + list(dg)};
}

Outcome gamma_decay() {
  const double slope_max = -0.5;
  auto rows = gamma_ratio_schedule(0.1, 0.0, {64, 128, 256, 512, 1024});
  all_gamma_rows.insert(all_gamma_rows.end(), rows.begin(), rows.end());
  std::vector<double> r;
  for (const auto& x : rows) r.push_back(x.ratio);
  double slope = loglog_slope(rows);
  return {slope <= slope_max, "Gamma_N " + list(r) + " slope " + fmt("%.4f", slope)};
}

Outcome villani_bound() {
  for (double d : {0.4, 0.25, 0.1}) {
    auto rows = gamma_ratio_sweep(mixture({d}), 0.0,
                                  d == 0.25 ? std::vector<int>{16, 32, 64, 128, 256}
                                            : std::vector<int>{16, 32});
    all_gamma_rows.insert(all_gamma_rows.end(), rows.begin(), rows.end());
  }
  std::size_t checked = 0, bad = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& r : all_gamma_rows) {
    if (!r.villani_checked) continue;
    ++checked;
    if (!(r.ratio >= r.villani_bound)) ++bad;
    worst = std::min(worst, r.ratio / r.villani_bound);
  }
  return {checked > 0 && bad == 0, std::to_string(checked) + " rows checked, " +
                                       std::to_string(bad) + " violations, min ratio/bound " +
                                       fmt("%.3f", worst)};
}

Outcome cercignani() {
  const std::vector<double> deltas{0.1, 0.03, 0.01, 0.003};
  const double K_max = 6.0 / std::log(2.0);
  std::vector<double> r;
  double K = 0.0;
  for (double d : deltas) {
    r.push_back(cercignani_ratio(mixture({d})));
    K = std::max(K, r.back() / (d * std::log(1.0 / d)));
  }
  bool bounded = true;
  for (std::size_t i = 0; i < deltas.size(); ++i)
    bounded = bounded && r[i] <= K * deltas[i] * std::log(1.0 / deltas[i]);
  bool ok = strictly_decreasing(r) && bounded && K < K_max;
  return {ok, "ratio " + list(r) + " K " + fmt("%.3f", K) + " (< 6/log 2 = " + fmt("%.3f", K_max) + ")"};
}

std::vector<ConditionedFamily>& quarter_families() {
  static std::vector<ConditionedFamily> fams = [] {
    std::vector<ConditionedFamily> v;
    for (int N : {32, 64, 128, 256}) v.emplace_back(f14(), N);
    return v;
  }();
  return fams;
}

Outcome rescaled() {
  auto w = quadratic_witness(f14(), 1.0, 3.0);
  auto rep = rescaled_inequality_check(quarter_families(), 0.5, w, 2.0, 100);
  double margin = std::numeric_limits<double>::infinity(), fin = margin;
  for (const auto& r : rep.rows) {
    margin = std::min(margin, r.worst_margin);
    fin = std::min(fin, r.final_lhs / r.final_rhs);
  }
  bool ok = rep.pass && rep.lambda_grid.size() == 100 && rep.rows.size() == 4;
  return {ok, "lambda points " + std::to_string(rep.lambda_grid.size()) + ", min margin " +
                  fmt("%.3f", margin) + ", min lhs/rhs " + fmt("%.3g", fin) + ", C1 " +
                  fmt("%g", rep.C1)};
}

Outcome logpower() {
  auto w = quadratic_witness(f14(), 1.0, 3.0);
  int applicable = 0;
  bool ok = true;
  std::vector<double> ratio;
  for (const auto& fam : quarter_families()) {
    auto e = logpower_envelope(w, fam);
    if (!e.applicable) continue;
    ++applicable;
    ok = ok && e.measured <= e.envelope;
    ratio.push_back(e.measured / e.envelope);
  }
  return {ok && applicable > 0,
          std::to_string(applicable) + " N with positive denominator, measured/envelope " + list(ratio)};
}

Outcome h_theorem() {
  const double drift_tol = 1e-6, diss_tol = 0.02;
  bool ok = true;
  std::string d;
  for (double g : {0.0, 0.5}) {
    auto s = make_pde_state(f14());
    double dt = default_time_step(s, g);
    EvolveOptions o;
    o.cadence = dt;
    o.record_production = false;
    o.keep_snapshots = true;
    auto tr = evolve(s, g, dt, 5.0, o);
    const auto& R = tr.records;
    double drift = 0.0;
    bool mono = true;
    for (std::size_t k = 0; k < R.size(); ++k) {
      drift = std::max({drift, std::abs(R[k].mass - 1.0), std::abs(R[k].energy - 1.0)});
      if (k && R[k].H > R[k - 1].H) mono = false;
    }
    double worst = 0.0;
    for (double t : {0.5, 1.0, 2.0, 4.0}) {
      auto k = static_cast<std::size_t>(std::lround(t / dt));
      double dH = (R[k + 1].H - R[k - 1].H) / (R[k + 1].t - R[k - 1].t);
      double D = limit_production(tr.snapshots[k].density, g);
      worst = std::max(worst, std::abs(dH + D / 2.0) / D);
    }
    ok = ok && drift < drift_tol && mono && worst < diss_tol;
    d += "gamma=" + fmt("%g", g) + " drift " + fmt("%.1e", drift) + (mono ? " H monotone" : " H NOT monotone") +
         " max residual " + fmt("%.1e", worst) + " max clipped mass " + fmt("%.1e", tr.max_clipped) +
         "; ";
  }
  return {ok, d};
}

Outcome chaos_bridge() {
  const double w1_max = 0.05;
  const std::vector<int> ns{64, 128, 256, 512};
  EvolveOptions o;
  o.cadence = 1.0;
  o.record_production = false;
  auto tr = evolve(make_pde_state(f14()), 0.0, 0.0, 1.0, o);
  const auto& g = tr.final_state.density;
  std::vector<double> w1;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    ConditionedFamily fam(f14(), ns[i]);
    SimulationConfig sc;
    sc.N = ns[i];
    sc.t_end = 1.0;
    sc.seed = 1 + 1000003ull * i;
    auto runs = simulate_replicas([&](std::size_t, Rng& rng) { return sample(fam, rng); }, sc, 200);
    std::vector<double> pooled;
    for (const auto& r : runs) pooled.insert(pooled.end(), r.final_state.begin(), r.final_state.end());
    w1.push_back(wasserstein1(pooled, [&](double v) { return g.cdf(v); }, -g.v_max(), g.v_max()));
  }
  bool ok = w1.back() < w1_max && strictly_decreasing(w1);
  return {ok, "W1 at N=64..512 " + list(w1)};
}

Outcome oracle() {
  const int N = 8;
  const double tol = 0.02;
  const long n = 1000000, chunks = 50;
  ConditionedFamily fam(f14(), N);
  const auto& f = fam.generator();
  const double hl = 0.5 * std::log(kTwoPi);
  const double dz = fam.log_z() + 0.5 * N * std::log(kTwoPi) + 0.5 * N;
  std::vector<double> sh(chunks), s0(chunks), s1(chunks);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    auto rng = make_rng(2024, c);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    std::uniform_int_distribution<std::size_t> pick(0, N - 1);
    for (long k = 0; k < n / chunks; ++k) {
      auto V = sample(fam, rng);
      double x = 0.0;
      for (int i = 0; i < N; ++i) x += f.log_at(V[i]) + hl + 0.5 * V[i] * V[i];
      sh[c] += x - dz;
      std::size_t i = pick(rng), j;
      do j = pick(rng);
      while (j == i);
      auto W = apply_rotation(V, {i, j, angle(rng)});
      double lr = f.log_at(W[i]) + f.log_at(W[j]) - f.log_at(V[i]) - f.log_at(V[j]);
      double y = 0.5 * N * std::expm1(lr) * lr;
      s0[c] += y;
      s1[c] += y * std::sqrt(1.0 + V[i] * V[i] + V[j] * V[j]);
    }
  }
  double H = 0.0, D0 = 0.0, D1 = 0.0;
  for (long c = 0; c < chunks; ++c) H += sh[c], D0 += s0[c], D1 += s1[c];
  double eh = std::abs(H / n / entropy_HN(fam) - 1.0);
  double e0 = std::abs(D0 / n / production_DN(fam, 0.0) - 1.0);
  double e1 = std::abs(D1 / n / production_DN(fam, 0.5) - 1.0);
  return {eh < tol && e0 < tol && e1 < tol, "relative differences H " + fmt("%.2e", eh) +
                                                ", D_{N,0} " + fmt("%.2e", e0) + ", D_{N,0.5} " +
                                                fmt("%.2e", e1)};
}

}  // namespace

int main() {
  // criterion 5 runs before 4 so the hard bound also covers the schedule sweep
  const std::vector<Criterion> criteria{
      {1, "spectral gap", 60, spectral_gap},
      {2, "local CLT", 120, local_clt},
      {3, "entropic chaoticity", 300, entropic_chaos},
      {5, "Gamma_N decay", 600, gamma_decay},
      {4, "Villani bound", 0, villani_bound},
      {6, "Cercignani failure", 120, cercignani},
      {7, "rescaled inequality", 300, rescaled},
      {8, "log-power envelope", 300, logpower},
      {9, "H-theorem and dissipation identity", 300, h_theorem},
      {10, "propagation of chaos", 600, chaos_bridge},
      {11, "oracle equivalence", 0, oracle},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = c.budget_s <= 0 || secs < c.budget_s;
    bool pass = o.pass && in_time;
    failed += !pass;
    char head[128];
    std::snprintf(head, sizeof head, "%s %2d %s (%.1f s%s): ", pass ? "PASS" : "FAIL", c.id, c.name,
                  secs, in_time ? "" : ", over budget");
    std::printf("%s%s\n", head, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %d of %zu criteria failed\n", failed ? "FAIL" : "PASS", failed, criteria.size());
  return failed ? 1 : 0;
}
