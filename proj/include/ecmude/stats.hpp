// SPDX-License-Identifier: Apache-2.0
//
// Paired comparison statistics over per-seed results.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ecmude {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1); 0 for n < 2.
double sample_std(std::span<const double> x);
/// Population standard deviation (n).
double population_std(std::span<const double> x);

/// Null distribution of the positive signed-rank sum for the given ranks,
/// each rank doubled so that mid-ranks stay integral. Entry k is
/// P(2 W+ = k); size is sum(doubled_ranks) + 1.
std::vector<double> signed_rank_distribution(std::span<const int> doubled_ranks);

struct WilcoxonResult {
  double w = 0.0;        // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;     // non-zero differences
  double p_value = 1.0;  // two-sided
  bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactLimit = 50;

/// Differences a - b; zero differences are dropped, tied magnitudes get
/// mid-ranks. Exact p up to 50 pairs, normal approximation with continuity
/// and tie correction above. Throws DataError when every difference is zero.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct PairedStats {
  WilcoxonResult wilcoxon;
  double cohens_d = 0.0;            // mean(a - b) / sd(a - b)
  double cv_a = 0.0;                // percent
  double cv_b = 0.0;                // percent
  double mean_rel_reduction = 0.0;  // percent, 100 mean((b - a) / b)
};

/// `a` is the proposed model, `b` the reference. Needs n >= 2 and a
/// non-degenerate spread of differences.
PairedStats paired_effect_stats(std::span<const double> a, std::span<const double> b);

}  // namespace ecmude
