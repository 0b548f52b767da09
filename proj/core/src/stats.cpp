#include "atlasground/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atlasground {

WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& x,
                                            const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("wilcoxon: paired vectors differ in length");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult res;
  res.n_used = diffs.size();
  if (diffs.empty()) return res;

  // Average ranks over |d|; doubled so ties stay integral.
  const std::size_t n = diffs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(diffs[a]) < std::abs(diffs[b]);
  });
  std::vector<long> doubled_rank(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
      ++j;
    // ranks i+1 .. j+1 share the average; doubled average = (i+j+2)
    const long dr = static_cast<long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) doubled_rank[order[k]] = dr;
    i = j + 1;
  }

  long w_doubled = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (diffs[k] > 0.0) w_doubled += doubled_rank[k];
  res.statistic = static_cast<double>(w_doubled) / 2.0;

  if (n <= 20) {
    // Exact null: each sign independently +-. Subset-sum counting over the
    // doubled ranks.
    const long max_sum = static_cast<long>(n) * static_cast<long>(n + 1);
    std::vector<double> count(static_cast<std::size_t>(max_sum) + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const long r = doubled_rank[k];
      for (long s = max_sum; s >= r; --s)
        count[static_cast<std::size_t>(s)] +=
            count[static_cast<std::size_t>(s - r)];
    }
    double tail = 0.0, total = 0.0;
    for (long s = 0; s <= max_sum; ++s) {
      total += count[static_cast<std::size_t>(s)];
      if (s >= w_doubled) tail += count[static_cast<std::size_t>(s)];
    }
    res.p_value = tail / total;
    res.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    // Tie correction: sum over tie groups of (t^3 - t) / 48.
    i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n &&
             std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
        ++j;
      const double t = static_cast<double>(j - i + 1);
      var -= (t * t * t - t) / 48.0;
      i = j + 1;
    }
    const double w = res.statistic;
    const double z = (w - mean - 0.5) / std::sqrt(var);
    res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    res.exact = false;
  }
  return res;
}

}  // namespace atlasground
