#include "evikit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "evikit/error.hpp"
#include "evikit/metrics.hpp"
#include "evikit/parallel.hpp"

namespace evikit {

namespace {

using Rng = std::mt19937_64;

// 53 random mantissa bits -> [0, 1). Independent of the standard library's
// distribution implementations, so corpora are identical across toolchains.
double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

constexpr double kBelowOne = 0x1.fffffffffffffp-1;  // largest double < 1

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::configuration, "invalid simulator params: " + message);
}

bool is_probability(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

void SimulatorParams::validate() const {
  require(doc_count >= 1, "doc_count must be at least 1");
  require(tokens_per_doc >= 1, "tokens_per_doc must be at least 1");
  require(evidence_per_doc >= 2, "evidence_per_doc must be at least 2");
  require(evidence_per_doc <= tokens_per_doc, "evidence_per_doc must not exceed tokens_per_doc");
  require(model_count >= 1, "model_count must be at least 1");
  require(is_probability(coverage_p), "coverage_p must lie in [0, 1]");
  require(is_probability(blind_spot_b), "blind_spot_b must lie in [0, 1]");
  require(is_probability(noise_q), "noise_q must lie in [0, 1]");
  require(is_probability(certainty_mean), "certainty_mean must lie in [0, 1]");
  require(certainty_spread >= 0.0 && std::isfinite(certainty_spread),
          "certainty_spread must be non-negative");
  require(is_probability(validation_fraction), "validation_fraction must lie in [0, 1]");
  require(margin > 0.0 && std::isfinite(margin), "margin must be positive");
  require(theta - margin >= 0.0, "theta must be at least margin");
  require((theta + margin) * static_cast<double>(tokens_per_doc) <= 1.0,
          "(theta + margin) * tokens_per_doc must not exceed 1");
  require(!code.empty(), "code must be nonempty");
}

nlohmann::json SimulatorParams::to_json() const {
  return nlohmann::json{
      {"doc_count", doc_count},
      {"tokens_per_doc", tokens_per_doc},
      {"evidence_per_doc", evidence_per_doc},
      {"model_count", model_count},
      {"coverage_p", coverage_p},
      {"blind_spot_b", blind_spot_b},
      {"noise_q", noise_q},
      {"certainty_mean", certainty_mean},
      {"certainty_spread", certainty_spread},
      {"seed", seed},
      {"validation_fraction", validation_fraction},
      {"theta", theta},
      {"margin", margin},
      {"regime", std::string(evikit::to_string(regime))},
      {"code", code},
  };
}

SimulatorParams SimulatorParams::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::configuration, "simulator params must be an object");
  SimulatorParams p;
  try {
    p.doc_count = j.value("doc_count", p.doc_count);
    p.tokens_per_doc = j.value("tokens_per_doc", p.tokens_per_doc);
    p.evidence_per_doc = j.value("evidence_per_doc", p.evidence_per_doc);
    p.model_count = j.value("model_count", p.model_count);
    p.coverage_p = j.value("coverage_p", p.coverage_p);
    p.blind_spot_b = j.value("blind_spot_b", p.blind_spot_b);
    p.noise_q = j.value("noise_q", p.noise_q);
    p.certainty_mean = j.value("certainty_mean", p.certainty_mean);
    p.certainty_spread = j.value("certainty_spread", p.certainty_spread);
    p.seed = j.value("seed", p.seed);
    p.validation_fraction = j.value("validation_fraction", p.validation_fraction);
    p.theta = j.value("theta", p.theta);
    p.margin = j.value("margin", p.margin);
    if (j.contains("regime")) p.regime = parse_regime(j.at("regime").get<std::string>());
    p.code = j.value("code", p.code);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("simulator params: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::configuration, std::string("simulator params: ") + e.what());
  }
  return p;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DocumentDraw draw_document(const SimulatorParams& params, std::uint64_t stream_seed) {
  Rng rng(stream_seed);
  const std::size_t d = params.tokens_per_doc;
  const std::size_t e = params.evidence_per_doc;

  // Partial Fisher-Yates: the first e entries are a uniform random e-subset
  // in random order.
  std::vector<std::uint32_t> order(d);
  std::iota(order.begin(), order.end(), 0u);
  for (std::size_t i = 0; i < e; ++i) {
    std::swap(order[i], order[i + uniform_index(rng, d - i)]);
  }

  const double blind_target = params.blind_spot_b * static_cast<double>(e);
  std::size_t blind_count = static_cast<std::size_t>(std::floor(blind_target));
  if (bernoulli(rng, blind_target - static_cast<double>(blind_count))) ++blind_count;
  blind_count = std::min(blind_count, e);

  DocumentDraw draw;
  draw.evidence = TokenSet::from_positions({order.begin(), order.begin() + e});
  draw.blind = TokenSet::from_positions({order.begin(), order.begin() + blind_count});

  // 0 = background, 1 = visible evidence, 2 = blind evidence
  std::vector<std::uint8_t> kind(d, 0);
  for (auto id : draw.evidence) kind[id.position] = 1;
  for (auto id : draw.blind) kind[id.position] = 2;

  draw.detections.reserve(params.model_count);
  draw.probabilities.reserve(params.model_count);
  for (std::size_t m = 0; m < params.model_count; ++m) {
    std::vector<TokenId> picked;
    for (std::size_t t = 0; t < d; ++t) {
      const bool hit = kind[t] == 1   ? bernoulli(rng, params.coverage_p)
                       : kind[t] == 0 ? bernoulli(rng, params.noise_q)
                                      : false;
      if (hit) picked.push_back(TokenId{static_cast<std::uint32_t>(t)});
    }
    draw.detections.emplace_back(std::move(picked));
    const double c =
        params.certainty_mean + params.certainty_spread * (2.0 * uniform01(rng) - 1.0);
    draw.probabilities.push_back(std::clamp(c, 0.0, kBelowOne));
  }

  draw.tokens.reserve(d);
  for (std::size_t t = 0; t < d; ++t) {
    draw.tokens.push_back((kind[t] ? "ev" : "w") + std::to_string(uniform_index(rng, 5000)));
  }
  return draw;
}

std::vector<double> planted_scores(const SimulatorParams& params, const TokenSet& selected,
                                   std::uint64_t stream_seed) {
  const std::size_t d = params.tokens_per_doc;
  std::vector<double> values(d, 0.0);
  if (selected.empty()) return values;

  Rng rng(stream_seed);
  const double k = static_cast<double>(selected.size());
  const double hi_floor = params.theta + params.margin;
  const double lo_cap = params.theta - params.margin;

  std::vector<bool> is_selected(d, false);
  for (auto id : selected) is_selected[id.position] = true;

  double low_mass = 0.0;
  for (std::size_t t = 0; t < d; ++t) {
    if (!is_selected[t]) {
      values[t] = uniform01(rng) * lo_cap;
      low_mass += values[t];
    }
  }
  // Keep enough mass for every selected token to reach hi_floor.
  const double slack = 1.0 - k * hi_floor;
  if (low_mass > slack) {
    const double scale = slack / low_mass;
    low_mass = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      if (!is_selected[t]) {
        values[t] *= scale;
        low_mass += values[t];
      }
    }
  }
  const double high = (1.0 - low_mass) / k;
  for (auto id : selected) values[id.position] = high;
  return values;
}

std::string simulated_model_id(const SimulatorParams& params, std::size_t model_index) {
  std::string prefix(evikit::to_string(params.regime));
  std::transform(prefix.begin(), prefix.end(), prefix.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const auto n = std::to_string(model_index);
  return prefix + "-" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

Corpus generate(const SimulatorParams& params) {
  params.validate();
  const std::size_t n = params.doc_count;
  const auto validation_docs = static_cast<std::size_t>(
      std::floor(params.validation_fraction * static_cast<double>(n)));
  const int width = static_cast<int>(std::to_string(n - 1).size());

  struct Item {
    Document doc;
    EvidenceAnnotation annotation;
    std::vector<AttributionRecord> records;
  };
  std::vector<Item> items(n);

  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t doc_seed = derive_seed(params.seed, i);
    DocumentDraw draw = draw_document(params, doc_seed);
    Item& item = items[i];

    auto idx = std::to_string(i);
    item.doc.doc_id = "sim-" + std::string(width - static_cast<int>(idx.size()), '0') + idx;
    item.doc.tokens = std::move(draw.tokens);
    item.doc.split = i < validation_docs ? Split::validation : Split::test;

    item.annotation = EvidenceAnnotation{
        .doc_id = item.doc.doc_id,
        .code = params.code,
        .style = item.doc.split == Split::validation ? Style::sufficient : Style::complete,
        .evidence_ids = draw.evidence,
    };

    for (std::size_t m = 0; m < params.model_count; ++m) {
      const std::uint64_t model_seed = derive_seed(doc_seed, m);
      const auto target = planted_scores(params, draw.detections[m], model_seed);

      // Split each target score into attention x gradient norm so that their
      // normalized product reproduces the target.
      Rng rng(derive_seed(model_seed, params.model_count));
      const std::size_t d = target.size();
      std::vector<double> grad(d);
      std::vector<double> attention(d);
      double z = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        grad[t] = 0.5 + 1.5 * uniform01(rng);
        attention[t] = target[t] / grad[t];
        z += attention[t];
      }
      if (z > 0.0) {
        for (double& a : attention) a /= z;
      } else {
        std::fill(attention.begin(), attention.end(), 1.0 / static_cast<double>(d));
        std::fill(grad.begin(), grad.end(), 0.0);
      }

      item.records.push_back(AttributionRecord{
          .model_id = simulated_model_id(params, m),
          .regime = params.regime,
          .doc_id = item.doc.doc_id,
          .code = params.code,
          .probability = draw.probabilities[m],
          .attention = std::move(attention),
          .input_grad_l2 = std::move(grad),
      });
    }
  });

  Corpus corpus;
  corpus.documents.reserve(n);
  corpus.annotations.reserve(n);
  corpus.attributions.reserve(n * params.model_count);
  for (auto& item : items) {
    corpus.documents.push_back(std::move(item.doc));
    corpus.annotations.push_back(std::move(item.annotation));
    for (auto& r : item.records) corpus.attributions.push_back(std::move(r));
  }
  return corpus;
}

double expected_union_recall(const SimulatorParams& params) {
  return (1.0 - params.blind_spot_b) *
         (1.0 - std::pow(1.0 - params.coverage_p, static_cast<double>(params.model_count)));
}

double expected_single_recall(const SimulatorParams& params) {
  return (1.0 - params.blind_spot_b) * params.coverage_p;
}

MonteCarloStats monte_carlo_stats(const SimulatorParams& params, std::size_t trials) {
  params.validate();
  if (trials == 0) throw Error(ErrorKind::configuration, "monte carlo needs at least one trial");

  struct Trial {
    double single_recall, single_precision, union_recall, union_precision;
    bool dominance_violated;
  };
  std::vector<Trial> results(trials);
  parallel_for(trials, [&](std::size_t i) {
    const DocumentDraw draw = draw_document(params, derive_seed(params.seed, i));
    TokenSet all;
    double r_sum = 0.0;
    double p_sum = 0.0;
    double r_max = 0.0;
    for (const auto& det : draw.detections) {
      const double r = recall(draw.evidence, det);
      r_sum += r;
      r_max = std::max(r_max, r);
      p_sum += precision(draw.evidence, det);
      all |= det;
    }
    const double m = static_cast<double>(draw.detections.size());
    const double union_r = recall(draw.evidence, all);
    results[i] = {r_sum / m, p_sum / m, union_r, precision(draw.evidence, all), union_r < r_max};
  });

  auto estimate = [&](double Trial::*field) {
    std::vector<double> v;
    v.reserve(trials);
    for (const auto& t : results) v.push_back(t.*field);
    const Summary s = aggregate(std::span<const double>(v));
    const double n = static_cast<double>(trials);
    // sample standard deviation from the population one
    const double se = trials > 1 ? s.std * std::sqrt(n / (n - 1.0)) / std::sqrt(n) : 0.0;
    return Estimate{s.mean, se};
  };

  MonteCarloStats stats;
  stats.trials = trials;
  stats.single_recall = estimate(&Trial::single_recall);
  stats.single_precision = estimate(&Trial::single_precision);
  stats.union_recall = estimate(&Trial::union_recall);
  stats.union_precision = estimate(&Trial::union_precision);
  for (const auto& t : results) stats.union_dominance_violations += t.dominance_violated ? 1 : 0;
  return stats;
}

}  // namespace evikit
