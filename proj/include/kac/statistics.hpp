#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"
#include "numerics.hpp"

namespace kac {

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<double> counts;
  double total = 0.0;    // all samples, including those outside [lo, hi)
  double outside = 0.0;

  std::size_t bins() const { return counts.size(); }
  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double center(std::size_t b) const { return lo + (b + 0.5) * width(); }
  double mass() const { return total > 0.0 ? (total - outside) / total : 0.0; }
  double density(std::size_t b) const { return total > 0.0 ? counts[b] / (total * width()) : 0.0; }

  void add(double x, double w = 1.0) {
    total += w;
    if (!(x >= lo && x < hi)) {
      if (x == hi) {
        counts.back() += w;
        return;
      }
      outside += w;
      return;
    }
    auto b = std::min(static_cast<std::size_t>((x - lo) / width()), counts.size() - 1);
    counts[b] += w;
  }
};

inline Histogram make_histogram(double lo, double hi, std::size_t bins) {
  require(hi > lo && bins >= 1, "make_histogram: bad range");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0.0);
  return h;
}

inline Histogram make_histogram(const std::vector<double>& x, double lo, double hi,
                                std::size_t bins) {
  auto h = make_histogram(lo, hi, bins);
  for (double v : x) h.add(v);
  return h;
}

/// L1 distance between a histogram and a density (bin-averaged), plus the density's outside mass.
inline double histogram_l1(const Histogram& h, const std::function<double(double)>& pdf) {
  double l1 = 0.0, covered = 0.0;
  for (std::size_t b = 0; b < h.bins(); ++b) {
    auto q = composite_gl(h.lo + b * h.width(), h.lo + (b + 1) * h.width(), 1, 8);
    double p = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) p += q.w[i] * pdf(q.x[i]);
    covered += p;
    l1 += std::abs(h.counts[b] / h.total - p);
  }
  return l1 + std::abs((1.0 - covered) - h.outside / h.total);
}

/// W1 = integral of |F_emp - F| for an empirical sample against a CDF.
inline double wasserstein1(std::vector<double> x, const std::function<double(double)>& cdf,
                           double lo, double hi) {
  require(!x.empty(), "wasserstein1: empty sample");
  std::sort(x.begin(), x.end());
  lo = std::min(lo, x.front());
  hi = std::max(hi, x.back());
  const double n = static_cast<double>(x.size());
  // integrate piecewise between consecutive order statistics
  std::vector<double> cuts;
  cuts.reserve(x.size() + 2);
  cuts.push_back(lo);
  for (double v : x) cuts.push_back(v);
  cuts.push_back(hi);
  double w = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double a = cuts[k], b = cuts[k + 1];
    if (b <= a) continue;
    double fe = static_cast<double>(k) / n;
    int sub = std::max(1, static_cast<int>(std::ceil((b - a) / 0.05)));
    auto q = composite_gl(a, b, sub, 4);
    for (std::size_t i = 0; i < q.size(); ++i) w += q.w[i] * std::abs(fe - cdf(q.x[i]));
  }
  return w;
}

/// Two-sample W1 = integral of |F_a - F_b|.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double prev = std::min(a[0], b[0]), w = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() || j < b.size()) {
    double x = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    w += std::abs(i / na - j / nb) * (x - prev);
    prev = x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      ++i;
    else
      ++j;
  }
  return w;
}

inline double ks_distance(std::vector<double> x, const std::function<double(double)>& cdf) {
  require(!x.empty(), "ks_distance: empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double c = cdf(x[k]);
    d = std::max({d, std::abs(c - k / n), std::abs(c - (k + 1) / n)});
  }
  return d;
}

/// Asymptotic Kolmogorov survival function P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double t = 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? t : -t);
    if (t < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

struct TwoSampleTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline TwoSampleTest ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  double ne = na * nb / (na + nb);
  double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  return {d, kolmogorov_survival(lam)};
}

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Batch-means estimate of the mean and its standard error.
inline MeanEstimate batch_means(const std::vector<double>& x, std::size_t batches = 20) {
  require(x.size() >= 2 * batches && batches >= 2, "batch_means: too few values");
  const std::size_t per = x.size() / batches;
  std::vector<double> m(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t k = 0; k < per; ++k) m[b] += x[b * per + k];
    m[b] /= static_cast<double>(per);
  }
  double mean = 0.0;
  for (double v : m) mean += v;
  mean /= batches;
  double var = 0.0;
  for (double v : m) var += (v - mean) * (v - mean);
  var /= static_cast<double>(batches - 1);
  return {mean, std::sqrt(var / batches)};
}

}  // namespace kac
