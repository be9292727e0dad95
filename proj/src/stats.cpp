// SPDX-License-Identifier: Apache-2.0
#include "ecmude/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecmude/errors.hpp"

namespace ecmude {

double mean(std::span<const double> x) {
  if (x.empty()) throw DataError("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

namespace {

double sum_sq_dev(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s;
}

void check_paired(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("paired samples differ in length");
  if (a.empty()) throw DataError("paired samples are empty");
}

}  // namespace

double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(sum_sq_dev(x) / static_cast<double>(x.size() - 1));
}

double population_std(std::span<const double> x) {
  return std::sqrt(sum_sq_dev(x) / static_cast<double>(x.size()));
}

std::vector<double> signed_rank_distribution(std::span<const int> doubled_ranks) {
  const int total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0);
  std::vector<double> p(static_cast<std::size_t>(total) + 1, 0.0);
  p[0] = 1.0;
  int reach = 0;
  for (int r : doubled_ranks) {
    // Each rank is positive or negative with probability 1/2.
    for (int k = reach + r; k >= 0; --k) {
      const double keep = p[static_cast<std::size_t>(k)];
      const double add = k >= r ? p[static_cast<std::size_t>(k - r)] : 0.0;
      p[static_cast<std::size_t>(k)] = 0.5 * (keep + add);
    }
    reach += r;
  }
  return p;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  check_paired(a, b);
  std::vector<double> d;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    if (diff != 0.0) d.push_back(diff);
  }
  if (d.empty()) throw DataError("all paired differences are zero");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });

  // Doubled mid-ranks: a tie group occupying ranks i+1..j gets i + 1 + j.
  std::vector<int> rank2(d.size());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = static_cast<int>(i + 1 + j);
    const auto t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  WilcoxonResult r;
  r.n = d.size();
  int w_plus2 = 0;
  int total2 = 0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    total2 += rank2[j];
    if (d[j] > 0.0) w_plus2 += rank2[j];
  }
  r.w_plus = 0.5 * w_plus2;
  r.w_minus = 0.5 * (total2 - w_plus2);
  r.w = std::min(r.w_plus, r.w_minus);
  const int w2 = std::min(w_plus2, total2 - w_plus2);

  if (r.n <= kWilcoxonExactLimit) {
    const std::vector<double> dist = signed_rank_distribution(rank2);
    double tail = 0.0;
    for (int k = 0; k <= w2; ++k) tail += dist[static_cast<std::size_t>(k)];
    r.p_value = std::min(1.0, 2.0 * tail);
    r.exact = true;
  } else {
    const auto n = static_cast<double>(r.n);
    const double mu = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (r.w - mu + 0.5) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
    r.exact = false;
  }
  return r;
}

PairedStats paired_effect_stats(std::span<const double> a, std::span<const double> b) {
  check_paired(a, b);
  if (a.size() < 2) throw DataError("paired statistics need at least two pairs");
  std::vector<double> diff(a.size()), rel(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    diff[j] = a[j] - b[j];
    if (b[j] == 0.0) throw DataError("reference value is zero");
    rel[j] = 100.0 * (b[j] - a[j]) / b[j];
  }
  const double sd = sample_std(diff);
  if (!(sd > 0.0)) throw DataError("differences have zero spread; effect size undefined");

  PairedStats s;
  s.wilcoxon = wilcoxon_signed_rank(a, b);
  s.cohens_d = mean(diff) / sd;
  s.cv_a = 100.0 * sample_std(a) / mean(a);
  s.cv_b = 100.0 * sample_std(b) / mean(b);
  s.mean_rel_reduction = mean(rel);
  return s;
}

}  // namespace ecmude
