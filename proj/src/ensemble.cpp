#include "evikit/ensemble.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "evikit/error.hpp"

namespace evikit {

namespace {

std::string member_list(std::span<const PredictionSet> members) {
  std::string out = "[";
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) out += ",";
    out += members[i].source_id;
  }
  return out + "]";
}

void require_sample(const PredictionSet& member, const SampleKey& sample) {
  if (member.key() != sample) {
    throw Error(ErrorKind::structural, "member " + member.source_id + " predicts " +
                                           to_string(member.key()) + ", expected " +
                                           to_string(sample));
  }
}

const double& lookup(const MetricTable& table, const std::string& model, const SampleKey& sample) {
  const auto& per_sample = table.at(model);
  auto it = per_sample.find(sample);
  if (it == per_sample.end()) {
    throw Error(ErrorKind::data, "no metric value for model " + model + " on " + to_string(sample));
  }
  return it->second;
}

}  // namespace

void EnsembleConfig::validate() const {
  if (member_model_ids.empty()) {
    throw Error(ErrorKind::configuration, "ensemble needs at least one member");
  }
  std::set<std::string> seen(member_model_ids.begin(), member_model_ids.end());
  if (seen.size() != member_model_ids.size()) {
    throw Error(ErrorKind::configuration, "ensemble member ids must be distinct");
  }
  if (!(certainty_threshold >= 0.0 && certainty_threshold <= 1.0)) {
    throw Error(ErrorKind::configuration, "certainty threshold must lie in [0, 1]");
  }
}

PredictionSet union_ensemble(std::span<const PredictionSet> members, const SampleKey& sample) {
  PredictionSet out{.source_id = "union" + member_list(members),
                    .doc_id = sample.doc_id,
                    .code = sample.code};
  for (const auto& m : members) {
    require_sample(m, sample);
    out.token_ids |= m.token_ids;
  }
  return out;
}

DynamicEnsembleResult dynamic_ensemble(std::span<const AttributionRecord> records,
                                       std::span<const PredictionSet> members,
                                       const SampleKey& sample, double certainty_threshold) {
  std::vector<PredictionSet> kept;
  for (const auto& m : members) {
    require_sample(m, sample);
    auto rec = std::find_if(records.begin(), records.end(), [&](const AttributionRecord& r) {
      return r.model_id == m.source_id && r.key() == sample;
    });
    if (rec == records.end()) {
      throw Error(ErrorKind::data,
                  "no probability for member " + m.source_id + " on " + to_string(sample));
    }
    if (rec->probability >= certainty_threshold) kept.push_back(m);
  }

  DynamicEnsembleResult result{
      .prediction = union_ensemble(kept, sample),
      .retained = {.sample = sample, .threshold = certainty_threshold, .retained = kept.size()},
  };
  char buf[32];
  std::snprintf(buf, sizeof buf, "dynamic@%g", certainty_threshold);
  result.prediction.source_id = buf + member_list(members);
  return result;
}

PredictionSet cross_regime_ensemble(std::span<const PredictionSet> first,
                                    std::span<const PredictionSet> second,
                                    const SampleKey& sample) {
  std::vector<PredictionSet> all(first.begin(), first.end());
  all.insert(all.end(), second.begin(), second.end());
  auto out = union_ensemble(all, sample);
  out.source_id = "cross" + member_list(all);
  return out;
}

PerSampleMax per_sample_max(const MetricTable& table, std::span<const SampleKey> samples) {
  if (table.empty()) throw Error(ErrorKind::configuration, "per-sample max needs at least one model");
  PerSampleMax out;
  out.values.reserve(samples.size());
  for (const auto& sample : samples) {
    double best = 0.0;
    bool first = true;
    for (const auto& [model, per_sample] : table) {
      const double v = lookup(table, model, sample);
      if (first || v > best) best = v;
      first = false;
    }
    out.values.push_back(best);
  }
  out.summary = aggregate(std::span<const double>(out.values));
  return out;
}

BestModel select_best_model(const MetricTable& table, std::span<const SampleKey> samples) {
  if (table.empty() || samples.empty()) {
    throw Error(ErrorKind::configuration, "best-model selection needs a model and a sample");
  }
  std::map<std::string, std::size_t> wins;
  for (const auto& sample : samples) {
    double top = 0.0;
    bool first = true;
    for (const auto& [model, _] : table) {
      const double v = lookup(table, model, sample);
      if (first || v > top) top = v;
      first = false;
    }
    for (const auto& [model, _] : table) {
      if (lookup(table, model, sample) == top) ++wins[model];
    }
  }

  BestModel best;
  bool have = false;
  // std::map iterates model ids in ascending order, so strict comparisons
  // leave the lexicographically smaller id in place on a full tie.
  for (const auto& [model, _] : table) {
    std::vector<double> values;
    values.reserve(samples.size());
    for (const auto& sample : samples) values.push_back(lookup(table, model, sample));
    const Summary summary = aggregate(std::span<const double>(values));
    const std::size_t w = wins[model];
    if (!have || w > best.wins || (w == best.wins && summary.mean > best.summary.mean)) {
      best = BestModel{model, w, std::move(values), summary};
      have = true;
    }
  }
  return best;
}

}  // namespace evikit
