#pragma once

// AttInGrad scoring, threshold extraction and validation-set calibration.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evikit/evidence.hpp"

namespace evikit {

struct ScoreVector {
  std::string doc_id;
  std::string code;
  std::string model_id;
  std::vector<double> values;
  bool normalized = false;

  SampleKey key() const { return {doc_id, code}; }
};

struct DecisionThreshold {
  double theta = 0.0;
  std::string objective;
  double objective_value = 0.0;
};

// Inclusive range "start:stop:step" inside [0, 1]. The stop point is part of
// the grid whenever step divides the range.
struct ThresholdGrid {
  double start = 0.0;
  double stop = 1.0;
  double step = 0.05;

  // Throws Error(usage) on malformed text, step <= 0, start > stop, or bounds
  // outside [0, 1].
  static ThresholdGrid parse(std::string_view text);

  std::vector<double> points() const;
  std::string to_string() const;
};

// Per-sample F-beta objective, macro-averaged over samples. Named
// "token-f1", "token-f2", "token-f0.5", ...
struct CalibrationObjective {
  std::string name = "token-f1";
  double beta = 1.0;

  // Throws Error(configuration) for unknown names.
  static CalibrationObjective parse(std::string_view name);
};

// Divides by the sum. An all-zero vector stays all-zero and is still
// reported as normalized.
ScoreVector normalize_scores(std::vector<double> raw);

// raw[t] = attention[t] * input_grad_l2[t], then sum-normalized.
// Throws Error(structural) on a length mismatch and Error(validation) on a
// negative or non-finite entry.
ScoreVector att_in_grad(std::span<const double> attention, std::span<const double> input_grad_l2);

// AttInGrad when the record has attention and gradient norms, otherwise its
// precomputed scores sum-normalized. Ids are copied from the record.
ScoreVector score_record(const AttributionRecord& record);

// { t : values[t] >= theta }.
TokenSet extract_tokens(std::span<const double> values, double theta);

// Throws Error(structural) when the scores are not normalized.
PredictionSet extract_prediction(const ScoreVector& scores, const DecisionThreshold& threshold);

struct CalibrationPoint {
  double theta = 0.0;
  double objective_value = 0.0;
};

// Objective value at every grid point, in grid order. Samples are the score
// vectors that have an annotation of the given style; Error(configuration)
// when there are none.
std::vector<CalibrationPoint> calibration_curve(std::span<const ScoreVector> scores,
                                                std::span<const EvidenceAnnotation> annotations,
                                                Style style, const ThresholdGrid& grid,
                                                const CalibrationObjective& objective);

// Grid point maximizing the objective; ties go to the smaller theta.
DecisionThreshold calibrate_threshold(std::span<const ScoreVector> scores,
                                      std::span<const EvidenceAnnotation> annotations,
                                      Style style, const ThresholdGrid& grid,
                                      const CalibrationObjective& objective = {});

}  // namespace evikit
