#pragma once

// Token-level set metrics and their per-sample aggregation.
//
// Empty-prediction conventions: recall 0 and precision 1. These reproduce the
// high-threshold endpoint of a dynamic ensemble, where no member survives.

#include <optional>
#include <span>
#include <vector>

#include "evikit/evidence.hpp"

namespace evikit {

// |gt ∩ pred| / |gt|. Throws Error(validation) for an empty ground truth.
double recall(const TokenSet& gt, const TokenSet& pred);

// |gt ∩ pred| / |pred|, or 1 when pred is empty.
double precision(const TokenSet& gt, const TokenSet& pred);

// F-beta from the conventions above; 0 when precision + recall is 0.
double f_beta(const TokenSet& gt, const TokenSet& pred, double beta = 1.0);

struct SampleMetrics {
  SampleKey sample;
  double recall = 0.0;
  double precision = 1.0;
  std::size_t predicted_size = 0;
  std::size_t gt_size = 0;
};

SampleMetrics score_sample(const SampleKey& sample, const TokenSet& gt, const TokenSet& pred);

// ((Σ_t c_t²) / T − 1) / (M − 1), with c_t the number of members containing
// token t and T = Σ_t c_t. std::nullopt when every member is empty.
// Throws Error(configuration) for fewer than two members.
std::optional<double> agreement(std::span<const TokenSet> members);

std::size_t unique_token_count(std::span<const TokenSet> members);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

// Throws Error(configuration) when there is nothing to aggregate.
Summary aggregate(std::span<const double> values);

// Undefined (nullopt) entries are skipped.
Summary aggregate(std::span<const std::optional<double>> values);

}  // namespace evikit
