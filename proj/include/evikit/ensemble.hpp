#pragma once

// Single-model baselines and union ensembles over member PredictionSets.
//
// Ensembles are plain unions; members are never weighted. The dynamic
// ensemble keeps a member iff its probability >= the certainty threshold, so
// threshold 0 reproduces the standard ensemble exactly.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "evikit/evidence.hpp"
#include "evikit/metrics.hpp"

namespace evikit {

enum class EnsembleMode { standard, dynamic };

struct EnsembleConfig {
  std::vector<std::string> member_model_ids;
  EnsembleMode mode = EnsembleMode::standard;
  double certainty_threshold = 0.0;

  // Throws Error(configuration) for an empty or duplicated member list or a
  // threshold outside [0, 1].
  void validate() const;
};

struct RetainedCount {
  SampleKey sample;
  double threshold = 0.0;
  std::size_t retained = 0;
};

// Throws Error(structural) if a member belongs to a different sample.
PredictionSet union_ensemble(std::span<const PredictionSet> members, const SampleKey& sample);

struct DynamicEnsembleResult {
  PredictionSet prediction;
  RetainedCount retained;
};

// Members are matched to records by model_id (source_id == model_id).
// Throws Error(data) when a member has no record for the sample.
DynamicEnsembleResult dynamic_ensemble(std::span<const AttributionRecord> records,
                                       std::span<const PredictionSet> members,
                                       const SampleKey& sample, double certainty_threshold);

PredictionSet cross_regime_ensemble(std::span<const PredictionSet> first,
                                    std::span<const PredictionSet> second, const SampleKey& sample);

// model_id -> sample -> metric value.
using MetricTable = std::map<std::string, std::map<SampleKey, double>>;

struct PerSampleMax {
  std::vector<double> values;  // aligned with the requested samples
  Summary summary;
};

// Throws Error(data) when a (model, sample) value is missing.
PerSampleMax per_sample_max(const MetricTable& table, std::span<const SampleKey> samples);

struct BestModel {
  std::string model_id;
  std::size_t wins = 0;
  std::vector<double> values;  // aligned with the requested samples
  Summary summary;
};

// Most per-sample wins (ties on a sample award every tied model a win), then
// higher mean, then the lexicographically smaller model_id.
BestModel select_best_model(const MetricTable& table, std::span<const SampleKey> samples);

}  // namespace evikit
