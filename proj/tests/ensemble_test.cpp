#include <random>

#include "doctest.h"
#include "evikit/ensemble.hpp"
#include "evikit/error.hpp"
#include "evikit/metrics.hpp"
#include "oracles.hpp"

using namespace evikit;

namespace {

const SampleKey kSample{"d", "c"};

PredictionSet pred(const std::string& model, TokenSet ids, const SampleKey& key = kSample) {
  return PredictionSet{model, key.doc_id, key.code, std::move(ids)};
}

AttributionRecord record(const std::string& model, double p) {
  AttributionRecord r;
  r.model_id = model;
  r.doc_id = kSample.doc_id;
  r.code = kSample.code;
  r.probability = p;
  r.scores = std::vector<double>{1.0};
  return r;
}

}  // namespace

TEST_CASE("union examples") {
  const std::vector<PredictionSet> members{pred("a", TokenSet{1, 2}), pred("b", TokenSet{2, 5}),
                                           pred("c", TokenSet{})};
  const auto u = union_ensemble(members, kSample);
  CHECK(u.token_ids == TokenSet{1, 2, 5});
  CHECK(u.source_id == "union[a,b,c]");
  CHECK(u.key() == kSample);

  const std::vector<PredictionSet> empties{pred("a", TokenSet{}), pred("b", TokenSet{})};
  CHECK(union_ensemble(empties, kSample).token_ids.empty());

  const std::vector<PredictionSet> mixed{pred("a", TokenSet{1}), pred("b", TokenSet{2}, {"e", "c"})};
  try {
    union_ensemble(mixed, kSample);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::structural);
  }
}

TEST_CASE("property: union matches a fold and dominates every member's recall") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const auto gt = oracle::to_token_set(oracle::random_nonempty_set(rng, 40, 0.2));
    std::vector<oracle::Set> sets;
    std::vector<PredictionSet> members;
    const auto m = 1 + rng() % 10;
    for (std::size_t i = 0; i < m; ++i) {
      sets.push_back(oracle::random_set(rng, 40, 0.15));
      members.push_back(pred("m" + std::to_string(i), oracle::to_token_set(sets.back())));
    }
    const auto u = union_ensemble(members, kSample);
    CHECK(oracle::to_set(u.token_ids) == oracle::fold_union(sets));
    for (const auto& member : members) {
      CHECK(is_subset(member.token_ids, u.token_ids));
      CHECK(recall(gt, u.token_ids) >= recall(gt, member.token_ids));
    }
  }
}

TEST_CASE("dynamic ensemble examples") {
  const std::vector<AttributionRecord> recs{record("a", 0.9), record("b", 0.4), record("c", 0.6)};
  const std::vector<PredictionSet> members{pred("a", TokenSet{1}), pred("b", TokenSet{2}),
                                           pred("c", TokenSet{3})};

  auto r = dynamic_ensemble(recs, members, kSample, 0.5);
  CHECK(r.prediction.token_ids == TokenSet{1, 3});
  CHECK(r.retained.retained == 2);
  CHECK(r.retained.threshold == 0.5);

  // equality counts as retained
  r = dynamic_ensemble(recs, members, kSample, 0.6);
  CHECK(r.prediction.token_ids == TokenSet{1, 3});

  r = dynamic_ensemble(recs, members, kSample, 0.0);
  CHECK(r.prediction.token_ids == union_ensemble(members, kSample).token_ids);
  CHECK(r.retained.retained == 3);

  r = dynamic_ensemble(recs, members, kSample, 1.0);
  CHECK(r.prediction.token_ids.empty());
  CHECK(r.retained.retained == 0);

  const std::vector<AttributionRecord> partial{record("a", 0.9)};
  try {
    dynamic_ensemble(partial, members, kSample, 0.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("property: dynamic ensemble shrinks as the certainty threshold grows") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = oracle::to_token_set(oracle::random_nonempty_set(rng, 30, 0.3));
    std::vector<AttributionRecord> recs;
    std::vector<PredictionSet> members;
    for (int i = 0; i < 8; ++i) {
      const std::string id = "m" + std::to_string(i);
      recs.push_back(record(id, u(rng)));
      members.push_back(pred(id, oracle::to_token_set(oracle::random_set(rng, 30, 0.2))));
    }
    std::size_t last_retained = members.size() + 1;
    double last_recall = 2.0;
    TokenSet last_tokens = union_ensemble(members, kSample).token_ids;
    for (int k = 0; k <= 20; ++k) {
      const auto r = dynamic_ensemble(recs, members, kSample, k / 20.0);
      CHECK(r.retained.retained <= last_retained);
      CHECK(recall(gt, r.prediction.token_ids) <= last_recall);
      CHECK(is_subset(r.prediction.token_ids, last_tokens));
      last_retained = r.retained.retained;
      last_recall = recall(gt, r.prediction.token_ids);
      last_tokens = r.prediction.token_ids;
    }
  }
}

TEST_CASE("ensemble config validation") {
  EnsembleConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.member_model_ids = {"a", "a"};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.member_model_ids = {"a", "b"};
  cfg.certainty_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.certainty_threshold = 1.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("cross-regime ensemble") {
  const std::vector<PredictionSet> igr{pred("i1", TokenSet{1}), pred("i2", TokenSet{2})};
  const std::vector<PredictionSet> egt{pred("e1", TokenSet{2, 7})};
  const auto c = cross_regime_ensemble(igr, egt, kSample);
  CHECK(c.token_ids == TokenSet{1, 2, 7});
  CHECK(c.source_id == "cross[i1,i2,e1]");

  const auto gt = TokenSet{1, 7, 9};
  const auto ui = union_ensemble(igr, kSample);
  const auto ue = union_ensemble(egt, kSample);
  CHECK(recall(gt, c.token_ids) >= std::max(recall(gt, ui.token_ids), recall(gt, ue.token_ids)));
}

TEST_CASE("per-sample max and best model") {
  const std::vector<SampleKey> samples{{"d1", "c"}, {"d2", "c"}, {"d3", "c"}, {"d4", "c"}};
  MetricTable table;
  // "steady" wins three samples with modest recall; "spiky" only one but hits 1.0.
  table["steady"] = {{samples[0], 0.6}, {samples[1], 0.5}, {samples[2], 0.5}, {samples[3], 0.4}};
  table["spiky"] = {{samples[0], 1.0}, {samples[1], 0.2}, {samples[2], 0.1}, {samples[3], 0.0}};

  const auto mx = per_sample_max(table, samples);
  CHECK(mx.values == std::vector<double>{1.0, 0.5, 0.5, 0.4});
  CHECK(mx.summary.mean == doctest::Approx(0.6));

  const auto best = select_best_model(table, samples);
  CHECK(best.model_id == "steady");
  CHECK(best.wins == 3);
  CHECK(best.values[0] == 0.6);
  for (std::size_t i = 0; i < samples.size(); ++i) CHECK(mx.values[i] >= best.values[i]);

  table["missing"] = {{samples[0], 0.3}};
  try {
    per_sample_max(table, samples);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("best model tie-breaks") {
  const std::vector<SampleKey> samples{{"d1", "c"}, {"d2", "c"}};
  MetricTable table;
  // one win each; higher mean decides
  table["b"] = {{samples[0], 0.9}, {samples[1], 0.1}};
  table["a"] = {{samples[0], 0.2}, {samples[1], 0.3}};
  CHECK(select_best_model(table, samples).model_id == "b");

  // identical rows: lexicographic
  table.clear();
  table["zeta"] = {{samples[0], 0.5}, {samples[1], 0.5}};
  table["alpha"] = {{samples[0], 0.5}, {samples[1], 0.5}};
  const auto best = select_best_model(table, samples);
  CHECK(best.model_id == "alpha");
  CHECK(best.wins == 2);
}

TEST_CASE("property: per-sample max is never below the best model") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SampleKey> samples;
    for (int s = 0; s < 6; ++s) samples.push_back({"d" + std::to_string(s), "c"});
    MetricTable table;
    for (int m = 0; m < 5; ++m) {
      for (const auto& s : samples) table["m" + std::to_string(m)][s] = u(rng);
    }
    const auto mx = per_sample_max(table, samples);
    const auto best = select_best_model(table, samples);
    CHECK(mx.summary.mean >= best.summary.mean);
  }
}
