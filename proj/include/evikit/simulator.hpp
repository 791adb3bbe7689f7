#pragma once

// Rashomon simulator: synthetic corpora whose model families recover evidence
// with known closed-form expectations.
//
// Generative model, per document:
//   - E distinct evidence positions out of D tokens;
//   - a blind-spot subset of the evidence that no model ever detects, of size
//     floor(b*E) or ceil(b*E) (stochastically rounded so the expected blind
//     fraction is exactly b);
//   - per model, each visible evidence token is detected with probability p
//     and each non-evidence token is a false positive with probability q,
//     independently;
//   - per model, a certainty drawn uniformly from
//     [certainty_mean - spread, certainty_mean + spread], clamped below 1.
//
// Score vectors are built so that thresholding at `theta` recovers exactly the
// sampled sets: selected tokens score >= theta + margin, the rest
// <= theta - margin (or the whole vector is zero when nothing was selected).

#include <cstdint>
#include <string>
#include <vector>

#include "evikit/evidence.hpp"

namespace evikit {

struct SimulatorParams {
  std::size_t doc_count = 40;
  std::size_t tokens_per_doc = 300;
  std::size_t evidence_per_doc = 8;
  std::size_t model_count = 10;
  double coverage_p = 0.6;
  double blind_spot_b = 0.12;
  double noise_q = 0.02;
  double certainty_mean = 0.75;
  double certainty_spread = 0.2;
  std::uint64_t seed = 42;
  double validation_fraction = 0.5;  // leading documents go to the validation split
  double theta = 0.002;              // planted extraction threshold
  double margin = 0.001;             // score gap on either side of theta
  Regime regime = Regime::SIM;
  std::string code = "SIM.1";

  // Throws Error(configuration) naming the first offending field.
  void validate() const;

  nlohmann::json to_json() const;
  // Missing fields keep their defaults; throws Error(configuration) on bad types.
  static SimulatorParams from_json(const nlohmann::json& j);

  friend bool operator==(const SimulatorParams&, const SimulatorParams&) = default;
};

// Sets drawn for one document.
struct DocumentDraw {
  TokenSet evidence;
  TokenSet blind;
  std::vector<TokenSet> detections;  // one per model
  std::vector<double> probabilities;  // one per model, all < 1
  std::vector<std::string> tokens;
};

// Independent stream seed for item `index` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Deterministic in (params, stream_seed). Params must be valid.
DocumentDraw draw_document(const SimulatorParams& params, std::uint64_t stream_seed);

// Normalized score vector whose extraction at params.theta is `selected`.
std::vector<double> planted_scores(const SimulatorParams& params, const TokenSet& selected,
                                   std::uint64_t stream_seed);

std::string simulated_model_id(const SimulatorParams& params, std::size_t model_index);

// Documents, one annotation per document (sufficient style on validation,
// complete on test), and one AttInGrad-form record per (model, document).
// Identical for identical params regardless of worker count.
Corpus generate(const SimulatorParams& params);

// (1 - b) * (1 - (1 - p)^M)
double expected_union_recall(const SimulatorParams& params);

// (1 - b) * p
double expected_single_recall(const SimulatorParams& params);

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct MonteCarloStats {
  std::size_t trials = 0;
  Estimate single_recall;     // per-trial mean over models
  Estimate single_precision;  // per-trial mean over models
  Estimate union_recall;
  Estimate union_precision;
  std::size_t union_dominance_violations = 0;  // trials where union recall < some member's
};

// Trial i draws document i of the corpus `generate` would build.
MonteCarloStats monte_carlo_stats(const SimulatorParams& params, std::size_t trials);

}  // namespace evikit
