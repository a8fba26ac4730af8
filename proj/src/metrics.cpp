#include "tem4ctr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace tem4ctr::harness {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: score/label count mismatch");
  if (scores.empty()) throw MetricError("auc: empty input");

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks across tie groups, then sum the positives' ranks.
  double rank_pos = 0.0;
  std::size_t pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_pos += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc undefined: only one class present");

  const double p = static_cast<double>(pos);
  return (rank_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double rela_impr(double auc_value, double auc_base) {
  if (auc_base == 0.5) throw MetricError("rela_impr undefined: base AUC is exactly 0.5");
  return ((auc_value - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

}  // namespace tem4ctr::harness
