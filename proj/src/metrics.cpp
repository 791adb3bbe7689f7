#include "evikit/metrics.hpp"

#include <cmath>
#include <map>

#include "evikit/error.hpp"

namespace evikit {

double recall(const TokenSet& gt, const TokenSet& pred) {
  if (gt.empty()) {
    throw Error(ErrorKind::validation, "recall is undefined for an empty ground-truth set");
  }
  return static_cast<double>(intersection_size(gt, pred)) / static_cast<double>(gt.size());
}

double precision(const TokenSet& gt, const TokenSet& pred) {
  if (pred.empty()) return 1.0;
  return static_cast<double>(intersection_size(gt, pred)) / static_cast<double>(pred.size());
}

double f_beta(const TokenSet& gt, const TokenSet& pred, double beta) {
  const double r = recall(gt, pred);
  const double p = precision(gt, pred);
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * p * r / denom;
}

SampleMetrics score_sample(const SampleKey& sample, const TokenSet& gt, const TokenSet& pred) {
  return SampleMetrics{
      .sample = sample,
      .recall = recall(gt, pred),
      .precision = precision(gt, pred),
      .predicted_size = pred.size(),
      .gt_size = gt.size(),
  };
}

std::optional<double> agreement(std::span<const TokenSet> members) {
  if (members.size() < 2) {
    throw Error(ErrorKind::configuration, "agreement needs at least two ensemble members");
  }
  std::map<TokenId, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& set : members) {
    for (auto id : set) ++counts[id];
    total += set.size();
  }
  if (total == 0) return std::nullopt;

  double sum_sq = 0.0;
  for (const auto& [id, c] : counts) sum_sq += static_cast<double>(c) * static_cast<double>(c);
  const double m = static_cast<double>(members.size());
  return (sum_sq / static_cast<double>(total) - 1.0) / (m - 1.0);
}

std::size_t unique_token_count(std::span<const TokenSet> members) {
  TokenSet all;
  for (const auto& set : members) all |= set;
  return all.size();
}

Summary aggregate(std::span<const double> values) {
  if (values.empty()) {
    throw Error(ErrorKind::configuration, "cannot aggregate zero samples");
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return Summary{.mean = mean, .std = std::sqrt(ss / n), .count = values.size()};
}

Summary aggregate(std::span<const std::optional<double>> values) {
  std::vector<double> defined;
  defined.reserve(values.size());
  for (const auto& v : values) {
    if (v) defined.push_back(*v);
  }
  return aggregate(std::span<const double>(defined));
}

}  // namespace evikit
