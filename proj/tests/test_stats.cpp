// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ecmude/errors.hpp"
#include "ecmude/rng.hpp"
#include "ecmude/stats.hpp"

using namespace ecmude;

namespace {

/// Two-sided p by enumerating all 2^n sign assignments of the ranks.
double brute_force_p(const std::vector<double>& ranks, double w) {
  const std::size_t n = ranks.size();
  const double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
  std::size_t hits = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1ULL) plus += ranks[i];
    }
    if (std::min(plus, total - plus) <= w + 1e-9) ++hits;
  }
  return std::min(1.0, static_cast<double>(hits) / static_cast<double>(1ULL << n));
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("all differences of one sign over thirty pairs") {
  std::vector<double> a(30), b(30);
  for (std::size_t i = 0; i < 30; ++i) {
    a[i] = 0.05 + 0.001 * static_cast<double>(i);
    b[i] = 0.10 + 0.0017 * static_cast<double>(i);
  }
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.w == 0.0);
  CHECK(r.n == 30);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(2.0 * std::pow(2.0, -30)).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(1.86e-9).epsilon(0.005));
}

TEST_CASE("two pairs") {
  const std::vector<double> a{1.0, 0.0}, b{0.0, 2.0};
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.w == 1.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("all-zero differences are rejected") {
  const std::vector<double> a{1, 2, 3};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), DataError);
}

TEST_CASE("null distribution sums to one and matches enumeration") {
  Rng rng(17);
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int trial = 0; trial < 4; ++trial) {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::round(rng.uniform(-5, 5));  // integer values force ties
        b[i] = std::round(rng.uniform(-5, 5));
        if (a[i] == b[i]) b[i] += 1.0;
      }
      const auto r = wilcoxon_signed_rank(a, b);
      // Mid-ranks of |a - b|.
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = std::abs(a[i] - b[i]);
      std::vector<double> ranks(n);
      for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
          less += d[j] < d[i];
          equal += d[j] == d[i];
        }
        ranks[i] = less + (equal + 1) / 2;
      }
      CHECK(r.p_value == doctest::Approx(brute_force_p(ranks, r.w)).epsilon(1e-12));

      std::vector<int> doubled(n);
      for (std::size_t i = 0; i < n; ++i) doubled[i] = static_cast<int>(std::lround(2 * ranks[i]));
      const auto dist = signed_rank_distribution(doubled);
      CHECK(std::accumulate(dist.begin(), dist.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("large samples use the normal approximation") {
  Rng rng(2);
  std::vector<double> a(80), b(80);
  for (std::size_t i = 0; i < 80; ++i) {
    a[i] = rng.normal();
    b[i] = a[i] + 0.8 + rng.normal();
  }
  const auto r = wilcoxon_signed_rank(a, b);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 0.05);
}

TEST_CASE("paired effect statistics") {
  const std::vector<double> a{1, 2, 3}, b{2, 4, 6};
  const auto s = paired_effect_stats(a, b);
  CHECK(s.mean_rel_reduction == doctest::Approx(50.0).epsilon(1e-14));
  CHECK(s.cohens_d == doctest::Approx(-2.0).epsilon(1e-14));  // diffs -1,-2,-3
  CHECK(s.cv_a == doctest::Approx(50.0).epsilon(1e-14));

  const std::vector<double> flat{10, 10, 10};
  CHECK(sample_std(flat) == 0.0);
  const std::vector<double> shifted{9, 9, 9};
  CHECK_THROWS(paired_effect_stats(shifted, flat));
  const std::vector<double> x{0.02, 0.021, 0.0205}, y{0.04, 0.041, 0.043};
  CHECK(paired_effect_stats(x, y).cv_b > 0.0);
  CHECK(population_std(std::vector<double>{1, 3}) == 1.0);
}

}  // TEST_SUITE
