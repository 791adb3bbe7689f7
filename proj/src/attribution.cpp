#include "evikit/attribution.hpp"

#include <charconv>
#include <cmath>
#include <map>

#include "evikit/error.hpp"
#include "evikit/metrics.hpp"
#include "evikit/parallel.hpp"

namespace evikit {

namespace {

double parse_number(std::string_view text, std::string_view what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::usage, "malformed " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

// Grid points accumulate rounding error; snap them to 1e-12.
double snap(double x) { return std::round(x * 1e12) / 1e12; }

void check_entries(std::span<const double> values, std::string_view name) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw Error(ErrorKind::validation, std::string(name) + "[" + std::to_string(i) +
                                             "] must be finite and non-negative");
    }
  }
}

}  // namespace

ThresholdGrid ThresholdGrid::parse(std::string_view text) {
  const auto first = text.find(':');
  const auto second = first == std::string_view::npos ? first : text.find(':', first + 1);
  if (second == std::string_view::npos || text.find(':', second + 1) != std::string_view::npos) {
    throw Error(ErrorKind::usage,
                "threshold range must look like start:stop:step, got '" + std::string(text) + "'");
  }
  ThresholdGrid grid{
      .start = parse_number(text.substr(0, first), "range start"),
      .stop = parse_number(text.substr(first + 1, second - first - 1), "range stop"),
      .step = parse_number(text.substr(second + 1), "range step"),
  };
  if (!(grid.step > 0.0)) throw Error(ErrorKind::usage, "range step must be positive");
  if (grid.start > grid.stop) throw Error(ErrorKind::usage, "range start exceeds stop");
  if (grid.start < 0.0 || grid.stop > 1.0) {
    throw Error(ErrorKind::usage, "range must lie within [0, 1]");
  }
  return grid;
}

std::vector<double> ThresholdGrid::points() const {
  std::vector<double> out;
  const double tolerance = step * 1e-9;
  for (std::size_t i = 0;; ++i) {
    const double p = start + static_cast<double>(i) * step;
    if (p > stop + tolerance) break;
    out.push_back(std::min(snap(p), stop));
  }
  return out;
}

std::string ThresholdGrid::to_string() const {
  auto fmt = [](double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  return fmt(start) + ":" + fmt(stop) + ":" + fmt(step);
}

CalibrationObjective CalibrationObjective::parse(std::string_view name) {
  constexpr std::string_view prefix = "token-f";
  if (name.substr(0, prefix.size()) == prefix) {
    const auto rest = name.substr(prefix.size());
    double beta = 0.0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), beta);
    if (!rest.empty() && ec == std::errc() && ptr == rest.data() + rest.size() && beta > 0.0 &&
        std::isfinite(beta)) {
      return CalibrationObjective{std::string(name), beta};
    }
  }
  throw Error(ErrorKind::configuration,
              "unknown calibration objective '" + std::string(name) + "' (expected token-f<beta>)");
}

ScoreVector normalize_scores(std::vector<double> raw) {
  check_entries(raw, "scores");
  double sum = 0.0;
  for (double v : raw) sum += v;
  if (sum > 0.0) {
    for (double& v : raw) v /= sum;
  }
  ScoreVector out;
  out.values = std::move(raw);
  out.normalized = true;
  return out;
}

ScoreVector att_in_grad(std::span<const double> attention, std::span<const double> input_grad_l2) {
  if (attention.size() != input_grad_l2.size()) {
    throw Error(ErrorKind::structural, "attention has " + std::to_string(attention.size()) +
                                           " entries but input_grad_l2 has " +
                                           std::to_string(input_grad_l2.size()));
  }
  check_entries(attention, "attention");
  check_entries(input_grad_l2, "input_grad_l2");
  std::vector<double> raw(attention.size());
  for (std::size_t t = 0; t < raw.size(); ++t) raw[t] = attention[t] * input_grad_l2[t];
  return normalize_scores(std::move(raw));
}

ScoreVector score_record(const AttributionRecord& record) {
  ScoreVector out;
  if (record.attention && record.input_grad_l2) {
    out = att_in_grad(*record.attention, *record.input_grad_l2);
  } else if (record.scores) {
    out = normalize_scores(*record.scores);
  } else {
    throw Error(ErrorKind::data, "attribution record " + record.model_id + "@" +
                                     to_string(record.key()) + " carries no scores");
  }
  out.doc_id = record.doc_id;
  out.code = record.code;
  out.model_id = record.model_id;
  return out;
}

TokenSet extract_tokens(std::span<const double> values, double theta) {
  std::vector<TokenId> ids;
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (values[t] >= theta) ids.push_back(TokenId{static_cast<std::uint32_t>(t)});
  }
  return TokenSet(std::move(ids));
}

PredictionSet extract_prediction(const ScoreVector& scores, const DecisionThreshold& threshold) {
  if (!scores.normalized) {
    throw Error(ErrorKind::structural, "extract_prediction needs normalized scores");
  }
  return PredictionSet{
      .source_id = scores.model_id,
      .doc_id = scores.doc_id,
      .code = scores.code,
      .token_ids = extract_tokens(scores.values, threshold.theta),
  };
}

std::vector<CalibrationPoint> calibration_curve(std::span<const ScoreVector> scores,
                                                std::span<const EvidenceAnnotation> annotations,
                                                Style style, const ThresholdGrid& grid,
                                                const CalibrationObjective& objective) {
  std::map<SampleKey, const TokenSet*> evidence;
  for (const auto& ann : annotations) {
    if (ann.style == style) evidence.emplace(ann.key(), &ann.evidence_ids);
  }

  struct Sample {
    const ScoreVector* scores;
    const TokenSet* gt;
  };
  std::vector<Sample> samples;
  for (const auto& sv : scores) {
    if (!sv.normalized) {
      throw Error(ErrorKind::structural, "calibration needs normalized scores");
    }
    if (auto it = evidence.find(sv.key()); it != evidence.end()) {
      samples.push_back({&sv, it->second});
    }
  }
  if (samples.empty()) {
    throw Error(ErrorKind::configuration,
                "calibration set is empty: no scored sample has a " +
                    std::string(to_string(style)) + " annotation");
  }

  const auto thetas = grid.points();
  std::vector<CalibrationPoint> curve(thetas.size());
  parallel_for(thetas.size(), [&](std::size_t g) {
    double sum = 0.0;
    for (const auto& s : samples) {
      sum += f_beta(*s.gt, extract_tokens(s.scores->values, thetas[g]), objective.beta);
    }
    curve[g] = {thetas[g], sum / static_cast<double>(samples.size())};
  });
  return curve;
}

DecisionThreshold calibrate_threshold(std::span<const ScoreVector> scores,
                                      std::span<const EvidenceAnnotation> annotations,
                                      Style style, const ThresholdGrid& grid,
                                      const CalibrationObjective& objective) {
  const auto curve = calibration_curve(scores, annotations, style, grid, objective);
  const CalibrationPoint* best = &curve.front();
  for (const auto& point : curve) {
    if (point.objective_value > best->objective_value) best = &point;
  }
  return DecisionThreshold{best->theta, objective.name, best->objective_value};
}

}  // namespace evikit
