#pragma once

#include <cstdint>
#include <span>

#include "tem4ctr/common.hpp"

namespace tem4ctr::harness {

// Rank-sum AUC (Mann-Whitney) with half credit for score ties. Labels are
// 0/1. Throws MetricError on size mismatch, empty input, or a single-class
// label set.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Relative improvement over a base model, measured against a random
// predictor: ((auc - 0.5) / (auc_base - 0.5) - 1) * 100. A base AUC of
// exactly 0.5 is undefined and throws MetricError.
double rela_impr(double auc_value, double auc_base);

}  // namespace tem4ctr::harness
