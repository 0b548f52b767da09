#pragma once

#include <optional>
#include <vector>

namespace atlasground {

struct WilcoxonResult {
  double statistic = 0.0;         // W+: rank sum of positive differences
  std::optional<double> p_value;  // empty when no nonzero differences remain
  std::size_t n_used = 0;         // pairs after dropping zero differences
  bool exact = false;             // exact enumeration vs normal approximation
};

// One-sided Wilcoxon signed-rank test for H1: x > y. Zero differences are
// dropped; tied magnitudes get average ranks. Exact null distribution up to
// 20 usable pairs, normal approximation with tie correction above.
WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& x,
                                            const std::vector<double>& y);

}  // namespace atlasground
