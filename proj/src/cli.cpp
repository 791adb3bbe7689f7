#include "evikit/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "evikit/attribution.hpp"
#include "evikit/dataset_io.hpp"
#include "evikit/ensemble.hpp"
#include "evikit/error.hpp"
#include "evikit/metrics.hpp"
#include "evikit/simulator.hpp"

namespace evikit::cli {

namespace {

// --- output helpers -------------------------------------------------------------

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string metadata_line(const std::string& command, const nlohmann::json& config) {
  return " evikit " + std::string(kVersion) + " command=" + command +
         " config=" + config_hash(config) + " std=population";
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string mean_std(const Summary& s, int digits = 3) {
  return fixed(s.mean, digits) + " (±" + fixed(s.std, digits) + ")";
}

// Column-aligned text table for humans.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  void print(std::ostream& out) const {
    std::vector<std::size_t> width;
    for (const auto& row : rows_) {
      width.resize(std::max(width.size(), row.size()), 0);
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
    }
    for (const auto& row : rows_) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        out << row[c];
        if (c + 1 < row.size()) out << std::string(width[c] - display_width(row[c]) + 2, ' ');
      }
      out << '\n';
    }
  }

 private:
  static std::size_t display_width(const std::string& s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](unsigned char c) { return (c & 0xC0) != 0x80; }));
  }
  std::vector<std::vector<std::string>> rows_;
};

void write_table_file(const std::string& path, const ReportTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path);
  write_report(out, table);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// --- shared inputs ----------------------------------------------------------------

struct InputFlags {
  std::string documents;
  std::string annotations;
  std::string attributions;
  std::string predictions;
  std::string thresholds;
  std::string split = "test";
  std::string style = "complete";
  std::size_t min_spans = 1;
};

void add_corpus_flags(CLI::App* sub, InputFlags& in) {
  sub->add_option("--documents", in.documents, "Documents JSONL file")->required();
  sub->add_option("--annotations", in.annotations, "Annotations JSONL file")->required();
  sub->add_option("--attributions", in.attributions, "Attribution records JSONL file")->required();
}

void add_prediction_flags(CLI::App* sub, InputFlags& in) {
  sub->add_option("--threshold-file", in.thresholds, "Threshold file written by 'calibrate'");
  sub->add_option("--predictions", in.predictions,
                  "Predictions JSONL file (used instead of --threshold-file)");
  sub->add_option("--split", in.split, "Document split to evaluate")
      ->check(CLI::IsMember({"train", "validation", "test"}));
}

using ModelSample = std::pair<std::string, SampleKey>;

// Loaded corpus plus the per-(model, sample) predictions an evaluation needs.
class Workspace {
 public:
  Workspace(const InputFlags& flags, std::optional<Style> style, std::size_t min_spans) {
    corpus_ = load_corpus({flags.documents, flags.annotations, flags.attributions});
    const Split split = parse_split(flags.split);

    std::map<std::string, const Document*> docs;
    for (const auto& d : corpus_.documents) docs.emplace(d.doc_id, &d);

    std::set<SampleKey> keys;
    for (const auto& ann : corpus_.annotations) {
      if (docs.at(ann.doc_id)->split != split) continue;
      if (style && ann.style != *style) continue;
      if (evidence_span_count(ann) < min_spans) continue;
      keys.insert(ann.key());
      ground_truth_.emplace(ann.key(), ann.evidence_ids);
    }
    samples_.assign(keys.begin(), keys.end());
    if (samples_.empty()) {
      throw Error(ErrorKind::configuration, "no annotated samples in the " + flags.split +
                                                " split match the selection");
    }

    for (const auto& rec : corpus_.attributions) {
      auto [it, inserted] = regimes_.emplace(rec.model_id, rec.regime);
      if (!inserted && it->second != rec.regime) {
        throw Error(ErrorKind::data, "model " + rec.model_id + " appears under two regimes");
      }
      if (keys.count(rec.key())) records_.emplace(ModelSample{rec.model_id, rec.key()}, &rec);
    }

    if (!flags.predictions.empty()) {
      std::ifstream in(flags.predictions);
      if (!in) throw Error(ErrorKind::data, "cannot open " + flags.predictions);
      for (auto& pred : read_predictions(in, flags.predictions)) {
        auto doc = docs.find(pred.doc_id);
        if (doc == docs.end()) {
          throw Error(ErrorKind::data, "prediction for unknown doc_id '" + pred.doc_id + "'");
        }
        if (pred.token_ids.bound() > doc->second->token_count()) {
          throw Error(ErrorKind::data, "prediction " + pred.source_id + "@" +
                                           to_string(pred.key()) + " has an out-of-range token id");
        }
        if (keys.count(pred.key())) {
          predictions_.emplace(ModelSample{pred.source_id, pred.key()}, std::move(pred));
        }
      }
    } else if (!flags.thresholds.empty()) {
      std::ifstream in(flags.thresholds);
      if (!in) throw Error(ErrorKind::data, "cannot open " + flags.thresholds);
      const auto thresholds = read_thresholds(in, flags.thresholds);
      for (const auto& [ms, rec] : records_) {
        auto t = thresholds.find(ms.first);
        if (t == thresholds.end()) {
          throw Error(ErrorKind::data, "no threshold for model " + ms.first);
        }
        predictions_.emplace(ms, extract_prediction(score_record(*rec), t->second.threshold));
      }
    } else {
      throw Error(ErrorKind::usage, "pass --threshold-file or --predictions");
    }
  }

  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const std::vector<SampleKey>& samples() const { return samples_; }
  const TokenSet& ground_truth(const SampleKey& key) const { return ground_truth_.at(key); }
  const Corpus& corpus() const { return corpus_; }

  std::vector<Regime> regimes() const {
    std::set<Regime> out;
    for (const auto& [model, r] : regimes_) out.insert(r);
    return {out.begin(), out.end()};
  }

  std::vector<std::string> models(std::optional<Regime> regime = std::nullopt) const {
    std::vector<std::string> out;
    for (const auto& [model, r] : regimes_) {
      if (!regime || r == *regime) out.push_back(model);
    }
    return out;
  }

  const PredictionSet& prediction(const std::string& model, const SampleKey& key) const {
    auto it = predictions_.find({model, key});
    if (it == predictions_.end()) {
      throw Error(ErrorKind::data, "no prediction for model " + model + " on " + to_string(key));
    }
    return it->second;
  }

  std::vector<PredictionSet> member_predictions(const std::vector<std::string>& models,
                                                const SampleKey& key) const {
    std::vector<PredictionSet> out;
    out.reserve(models.size());
    for (const auto& m : models) out.push_back(prediction(m, key));
    return out;
  }

  std::vector<AttributionRecord> member_records(const std::vector<std::string>& models,
                                                const SampleKey& key) const {
    std::vector<AttributionRecord> out;
    for (const auto& m : models) {
      auto it = records_.find({m, key});
      if (it == records_.end()) {
        throw Error(ErrorKind::data, "no attribution record for model " + m + " on " + to_string(key));
      }
      out.push_back(*it->second);
    }
    return out;
  }

 private:
  Corpus corpus_;
  std::vector<SampleKey> samples_;
  std::map<SampleKey, TokenSet> ground_truth_;
  std::map<std::string, Regime> regimes_;
  std::map<ModelSample, const AttributionRecord*> records_;
  std::map<ModelSample, PredictionSet> predictions_;
};

std::optional<Regime> optional_regime(const std::string& text) {
  if (text.empty()) return std::nullopt;
  try {
    return parse_regime(text);
  } catch (const Error& e) {
    throw Error(ErrorKind::usage, e.what());
  }
}

std::vector<std::string> require_models(const Workspace& ws, std::optional<Regime> regime) {
  auto models = ws.models(regime);
  if (models.empty()) {
    throw Error(ErrorKind::configuration,
                "no models" + (regime ? " for regime " + std::string(to_string(*regime)) : std::string()));
  }
  return models;
}

// --- calibrate --------------------------------------------------------------------

struct CalibrateFlags {
  InputFlags in;
  std::string grid = "0:1:0.05";
  std::string objective = "token-f1";
  std::string scope = "model";
  std::string out;
};

int cmd_calibrate(const CalibrateFlags& f, std::ostream& out) {
  const auto grid = ThresholdGrid::parse(f.grid);
  const auto objective = CalibrationObjective::parse(f.objective);
  const Corpus corpus = load_corpus({f.in.documents, f.in.annotations, f.in.attributions});
  const Split split = parse_split(f.in.split);
  const Style style = parse_style(f.in.style);

  std::set<std::string> split_docs;
  for (const auto& d : corpus.documents) {
    if (d.split == split) split_docs.insert(d.doc_id);
  }

  // Group key -> (score vectors, model ids in the group)
  struct Group {
    Regime regime;
    std::vector<ScoreVector> scores;
    std::set<std::string> models;
  };
  std::map<std::string, Group> groups;
  for (const auto& rec : corpus.attributions) {
    if (!split_docs.count(rec.doc_id)) continue;
    const std::string key = f.scope == "regime" ? std::string(to_string(rec.regime)) : rec.model_id;
    auto& g = groups.try_emplace(key, Group{rec.regime, {}, {}}).first->second;
    g.scores.push_back(score_record(rec));
    g.models.insert(rec.model_id);
  }
  if (groups.empty()) {
    throw Error(ErrorKind::configuration,
                "no attribution records in the " + f.in.split + " split to calibrate on");
  }

  std::set<SampleKey> annotated;
  for (const auto& ann : corpus.annotations) {
    if (ann.style == style && split_docs.count(ann.doc_id)) annotated.insert(ann.key());
  }

  std::vector<ThresholdEntry> entries;
  TextTable table({"model_id", "regime", "theta", f.objective, "samples"});
  for (const auto& [key, g] : groups) {
    const auto threshold = calibrate_threshold(g.scores, corpus.annotations, style, grid, objective);
    const auto samples = static_cast<std::size_t>(
        std::count_if(g.scores.begin(), g.scores.end(),
                      [&](const ScoreVector& s) { return annotated.count(s.key()) > 0; }));
    for (const auto& model : g.models) {
      entries.push_back({model, g.regime, threshold, samples});
      table.add({model, std::string(to_string(g.regime)), format_number(threshold.theta),
                 fixed(threshold.objective_value, 4), std::to_string(samples)});
    }
  }

  std::ofstream file(f.out, std::ios::binary);
  if (!file) throw Error(ErrorKind::data, "cannot write " + f.out);
  write_thresholds(file, entries);
  out << "calibrated " << entries.size() << " model(s) on the " << f.in.split
      << " split, grid " << grid.to_string() << ", scope " << f.scope << "\n";
  table.print(out);
  return 0;
}

// --- extract ----------------------------------------------------------------------

struct ExtractFlags {
  std::string documents;
  std::string attributions;
  std::string thresholds;
  std::string out;
};

int cmd_extract(const ExtractFlags& f, std::ostream& out) {
  const Corpus corpus = load_corpus({f.documents, {}, f.attributions});
  std::ifstream in(f.thresholds);
  if (!in) throw Error(ErrorKind::data, "cannot open " + f.thresholds);
  const auto thresholds = read_thresholds(in, f.thresholds);

  std::vector<PredictionSet> preds;
  preds.reserve(corpus.attributions.size());
  for (const auto& rec : corpus.attributions) {
    auto t = thresholds.find(rec.model_id);
    if (t == thresholds.end()) throw Error(ErrorKind::data, "no threshold for model " + rec.model_id);
    preds.push_back(extract_prediction(score_record(rec), t->second.threshold));
  }
  std::sort(preds.begin(), preds.end(), [](const PredictionSet& a, const PredictionSet& b) {
    return std::tie(a.doc_id, a.code, a.source_id) < std::tie(b.doc_id, b.code, b.source_id);
  });
  std::ofstream file(f.out, std::ios::binary);
  if (!file) throw Error(ErrorKind::data, "cannot write " + f.out);
  write_predictions(file, preds);
  out << "wrote " << preds.size() << " prediction set(s) to " << f.out << "\n";
  return 0;
}

// --- evaluate ---------------------------------------------------------------------

struct EvaluateFlags {
  InputFlags in;
  std::string mode;
  std::string regime;
  std::string model;
  std::string metric = "recall";
  std::string select_by = "recall";
  double certainty_threshold = 0.5;
  std::string out;
};

using MetricFn = double (*)(const TokenSet&, const TokenSet&);

MetricFn metric_fn(const std::string& name) {
  if (name == "recall") return &recall;
  if (name == "precision") return &precision;
  throw Error(ErrorKind::usage, "unknown metric '" + name + "'");
}

struct Column {
  std::string name;
  std::vector<double> values;
};

class Evaluator {
 public:
  Evaluator(const Workspace& ws, MetricFn metric, MetricFn select_metric)
      : ws_(ws), metric_(metric), select_metric_(select_metric) {}

  MetricTable table(const std::vector<std::string>& models, MetricFn fn) const {
    MetricTable t;
    for (const auto& m : models) {
      auto& row = t[m];
      for (const auto& s : ws_.samples()) row[s] = fn(ws_.ground_truth(s), ws_.prediction(m, s).token_ids);
    }
    return t;
  }

  Column single(const std::string& model) const {
    Column c{model, {}};
    for (const auto& s : ws_.samples()) {
      c.values.push_back(metric_(ws_.ground_truth(s), ws_.prediction(model, s).token_ids));
    }
    return c;
  }

  Column best(Regime regime, std::string* chosen = nullptr) const {
    const auto models = require_models(ws_, regime);
    const auto pick = select_best_model(table(models, select_metric_), ws_.samples());
    if (chosen) *chosen = pick.model_id;
    auto c = single(pick.model_id);
    c.name = "best_" + lower(to_string(regime));
    return c;
  }

  Column max_value(std::optional<Regime> regime) const {
    const auto models = require_models(ws_, regime);
    return {"max_value", per_sample_max(table(models, metric_), ws_.samples()).values};
  }

  Column ensemble(Regime regime) const {
    const auto models = require_models(ws_, regime);
    Column c{"ens_" + lower(to_string(regime)), {}};
    for (const auto& s : ws_.samples()) {
      const auto members = ws_.member_predictions(models, s);
      c.values.push_back(metric_(ws_.ground_truth(s), union_ensemble(members, s).token_ids));
    }
    return c;
  }

  Column dynamic(Regime regime, double certainty) const {
    const auto models = require_models(ws_, regime);
    Column c{"dyn_" + lower(to_string(regime)), {}};
    for (const auto& s : ws_.samples()) {
      const auto result = dynamic_ensemble(ws_.member_records(models, s),
                                           ws_.member_predictions(models, s), s, certainty);
      c.values.push_back(metric_(ws_.ground_truth(s), result.prediction.token_ids));
    }
    return c;
  }

  Column cross(const std::vector<Regime>& regimes) const {
    if (regimes.size() < 2) {
      throw Error(ErrorKind::configuration, "cross-regime ensemble needs two regimes");
    }
    std::vector<std::string> first = require_models(ws_, regimes.front());
    std::vector<std::string> second;
    for (std::size_t r = 1; r < regimes.size(); ++r) {
      auto more = require_models(ws_, regimes[r]);
      second.insert(second.end(), more.begin(), more.end());
    }
    Column c{"ens_cross", {}};
    for (const auto& s : ws_.samples()) {
      const auto a = ws_.member_predictions(first, s);
      const auto b = ws_.member_predictions(second, s);
      c.values.push_back(metric_(ws_.ground_truth(s), cross_regime_ensemble(a, b, s).token_ids));
    }
    return c;
  }

 private:
  const Workspace& ws_;
  MetricFn metric_;
  MetricFn select_metric_;
};

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out) {
  const MetricFn metric = metric_fn(f.metric);
  const MetricFn select_metric = metric_fn(f.select_by);
  const auto regime_filter = optional_regime(f.regime);
  if (f.mode == "dynamic" && !(f.certainty_threshold >= 0.0 && f.certainty_threshold <= 1.0)) {
    throw Error(ErrorKind::usage, "--certainty-threshold must lie in [0, 1]");
  }
  if (f.mode == "single" && f.model.empty()) throw Error(ErrorKind::usage, "--mode single needs --model");

  const Workspace ws(f.in, parse_style(f.in.style), f.in.min_spans);
  const Evaluator ev(ws, metric, select_metric);

  std::vector<Regime> regimes;
  if (regime_filter) {
    regimes.push_back(*regime_filter);
  } else {
    regimes = ws.regimes();
  }

  std::vector<Column> columns;
  std::vector<std::string> notes;
  if (f.mode == "single") {
    columns.push_back(ev.single(f.model));
  } else if (f.mode == "best") {
    for (auto r : regimes) {
      std::string chosen;
      columns.push_back(ev.best(r, &chosen));
      notes.push_back(columns.back().name + " = " + chosen);
    }
  } else if (f.mode == "max") {
    columns.push_back(ev.max_value(regime_filter));
  } else if (f.mode == "ensemble") {
    for (auto r : regimes) columns.push_back(ev.ensemble(r));
  } else if (f.mode == "dynamic") {
    for (auto r : regimes) columns.push_back(ev.dynamic(r, f.certainty_threshold));
  } else if (f.mode == "cross") {
    columns.push_back(ev.cross(regimes));
  } else if (f.mode == "table") {
    std::string igr;
    std::string egt;
    columns.push_back(ev.best(Regime::IGR, &igr));
    columns.push_back(ev.best(Regime::EGT, &egt));
    columns.push_back(ev.max_value(std::nullopt));
    columns.push_back(ev.ensemble(Regime::IGR));
    columns.push_back(ev.ensemble(Regime::EGT));
    notes.push_back("best_igr = " + igr);
    notes.push_back("best_egt = " + egt);
  } else {
    throw Error(ErrorKind::usage, "unknown mode '" + f.mode + "'");
  }

  const nlohmann::json config{{"mode", f.mode},     {"regime", f.regime},
                              {"model", f.model},   {"metric", f.metric},
                              {"select_by", f.select_by}, {"certainty_threshold", f.certainty_threshold},
                              {"split", f.in.split}, {"style", f.in.style},
                              {"min_spans", f.in.min_spans}};
  ReportTable report;
  report.metadata.push_back(metadata_line("evaluate", config));
  for (const auto& c : columns) report.columns.push_back(c.name);
  const auto& samples = ws.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ReportRow row{std::to_string(i + 1), {}};
    for (const auto& c : columns) row.values.push_back(c.values[i]);
    report.rows.push_back(std::move(row));
  }
  std::vector<Summary> summaries;
  for (const auto& c : columns) summaries.push_back(aggregate(std::span<const double>(c.values)));
  ReportRow mean_row{"mean", {}};
  ReportRow std_row{"std", {}};
  for (const auto& s : summaries) {
    mean_row.values.push_back(s.mean);
    std_row.values.push_back(s.std);
  }
  report.rows.push_back(std::move(mean_row));
  report.rows.push_back(std::move(std_row));
  if (!f.out.empty()) write_table_file(f.out, report);

  std::vector<std::string> header{"#", "doc_id", "code"};
  for (const auto& c : columns) header.push_back(c.name);
  TextTable table(header);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1), samples[i].doc_id, samples[i].code};
    for (const auto& c : columns) row.push_back(fixed(c.values[i], 2));
    table.add(std::move(row));
  }
  std::vector<std::string> agg{"mean (±std)", "", ""};
  for (const auto& s : summaries) agg.push_back(mean_std(s, 2));
  table.add(std::move(agg));

  out << f.metric << " by sample, mode " << f.mode << ", " << samples.size() << " sample(s)\n";
  for (const auto& n : notes) out << "  " << n << "\n";
  table.print(out);
  return 0;
}

// --- sweep ------------------------------------------------------------------------

struct SweepFlags {
  InputFlags in;
  std::string thresholds_range = "0:1:0.1";
  std::string regime;
  std::string out;
};

int cmd_sweep(const SweepFlags& f, std::ostream& out) {
  const auto grid = ThresholdGrid::parse(f.thresholds_range);
  const auto regime_filter = optional_regime(f.regime);
  const Workspace ws(f.in, parse_style(f.in.style), f.in.min_spans);

  Regime regime;
  if (regime_filter) {
    regime = *regime_filter;
  } else if (const auto all = ws.regimes(); all.size() == 1) {
    regime = all.front();
  } else {
    throw Error(ErrorKind::usage, "corpus has several regimes; pass --regime");
  }
  const auto models = require_models(ws, regime);

  struct Members {
    std::vector<AttributionRecord> records;
    std::vector<PredictionSet> predictions;
  };
  std::vector<Members> members;
  for (const auto& s : ws.samples()) {
    members.push_back({ws.member_records(models, s), ws.member_predictions(models, s)});
  }

  const nlohmann::json config{{"thresholds", grid.to_string()}, {"regime", to_string(regime)},
                              {"split", f.in.split}, {"style", f.in.style},
                              {"min_spans", f.in.min_spans}};
  ReportTable report;
  report.metadata.push_back(metadata_line("sweep", config));
  report.key_column = "threshold";
  report.columns = {"recall_mean", "precision_mean", "retained_mean", "retained_std"};
  TextTable table({"threshold", "recall", "precision", "retained"});

  const auto& samples = ws.samples();
  for (double t : grid.points()) {
    std::vector<double> r;
    std::vector<double> p;
    std::vector<double> kept;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto result = dynamic_ensemble(members[i].records, members[i].predictions, samples[i], t);
      r.push_back(recall(ws.ground_truth(samples[i]), result.prediction.token_ids));
      p.push_back(precision(ws.ground_truth(samples[i]), result.prediction.token_ids));
      kept.push_back(static_cast<double>(result.retained.retained));
    }
    const auto rs = aggregate(std::span<const double>(r));
    const auto ps = aggregate(std::span<const double>(p));
    const auto ks = aggregate(std::span<const double>(kept));
    report.rows.push_back({format_number(t), {rs.mean, ps.mean, ks.mean, ks.std}});
    table.add({format_number(t), fixed(rs.mean), fixed(ps.mean), mean_std(ks, 1)});
  }
  if (!f.out.empty()) write_table_file(f.out, report);

  out << "dynamic ensemble sweep, regime " << to_string(regime) << ", " << models.size()
      << " member(s), " << samples.size() << " sample(s)\n";
  table.print(out);
  return 0;
}

// --- agreement --------------------------------------------------------------------

struct AgreementFlags {
  InputFlags in;
  std::string regime;
  std::string style = "all";
  std::string out;
};

int cmd_agreement(const AgreementFlags& f, std::ostream& out) {
  const auto regime_filter = optional_regime(f.regime);
  std::optional<Style> style;
  if (f.style == "complete") style = Style::complete;
  const Workspace ws(f.in, style, f.in.min_spans);

  std::vector<Regime> regimes;
  if (regime_filter) {
    regimes.push_back(*regime_filter);
  } else {
    regimes = ws.regimes();
  }

  const nlohmann::json config{{"regime", f.regime}, {"style", f.style}, {"split", f.in.split},
                              {"min_spans", f.in.min_spans}};
  ReportTable report;
  report.metadata.push_back(metadata_line("agreement", config));
  report.key_column = "regime";
  report.columns = {"agreement_mean", "agreement_std", "unique_mean", "unique_std", "samples"};
  TextTable table({"regime", "style", "agreement", "unique tokens", "samples"});

  for (auto regime : regimes) {
    const auto models = require_models(ws, regime);
    if (models.size() < 2) {
      throw Error(ErrorKind::configuration, "agreement needs at least two members in regime " +
                                                std::string(to_string(regime)));
    }
    std::vector<std::optional<double>> agree;
    std::vector<double> unique;
    for (const auto& s : ws.samples()) {
      std::vector<TokenSet> sets;
      for (const auto& p : ws.member_predictions(models, s)) sets.push_back(p.token_ids);
      agree.push_back(agreement(sets));
      unique.push_back(static_cast<double>(unique_token_count(sets)));
    }
    const auto a = aggregate(std::span<const std::optional<double>>(agree));
    const auto u = aggregate(std::span<const double>(unique));
    report.rows.push_back({std::string(to_string(regime)),
                           {a.mean, a.std, u.mean, u.std, static_cast<double>(a.count)}});
    table.add({std::string(to_string(regime)), f.style, mean_std(a, 2), mean_std(u, 2),
               std::to_string(a.count)});
  }
  if (!f.out.empty()) write_table_file(f.out, report);
  table.print(out);
  return 0;
}

// --- simulate / montecarlo --------------------------------------------------------

struct SimulateFlags {
  std::string params_file;
  std::string out;
  std::size_t trials = 10000;
  // Explicit flags override the params file.
  std::map<std::string, std::string> overrides;
};

SimulatorParams resolve_params(const SimulateFlags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.params_file.empty()) {
    std::ifstream in(f.params_file);
    if (!in) throw Error(ErrorKind::usage, "cannot open params file " + f.params_file);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::usage, "params file: " + std::string(e.what()));
    }
  }
  for (const auto& [key, text] : f.overrides) {
    if (key == "regime" || key == "code") {
      j[key] = text;
      continue;
    }
    try {
      j[key] = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::usage, "--" + key + ": not a number: " + text);
    }
  }
  try {
    auto params = SimulatorParams::from_json(j);
    params.validate();
    return params;
  } catch (const Error& e) {
    throw Error(ErrorKind::usage, e.what());
  }
}

void add_simulator_flags(CLI::App* sub, SimulateFlags& f) {
  sub->add_option("--params", f.params_file, "JSON file with simulator parameters");
  const std::vector<std::pair<std::string, std::string>> flags{
      {"doc-count", "Number of documents"},
      {"tokens-per-doc", "Tokens per document (D)"},
      {"evidence-per-doc", "Evidence tokens per document (E >= 2)"},
      {"model-count", "Models in the family (M)"},
      {"coverage", "Per-model detection probability of a visible evidence token (p)"},
      {"blind-spot", "Expected fraction of evidence no model sees (b)"},
      {"noise", "Per-model false-positive probability of a background token (q)"},
      {"certainty-mean", "Centre of the model certainty distribution"},
      {"certainty-spread", "Half-width of the model certainty distribution"},
      {"seed", "Master seed"},
      {"validation-fraction", "Fraction of documents in the validation split"},
      {"theta", "Planted extraction threshold"},
      {"margin", "Score gap on each side of the planted threshold"},
      {"regime", "Regime label for the simulated models (IGR, EGT, SIM)"},
      {"code", "Code assigned to every simulated sample"},
  };
  static const std::map<std::string, std::string> json_names{
      {"doc-count", "doc_count"},
      {"tokens-per-doc", "tokens_per_doc"},
      {"evidence-per-doc", "evidence_per_doc"},
      {"model-count", "model_count"},
      {"coverage", "coverage_p"},
      {"blind-spot", "blind_spot_b"},
      {"noise", "noise_q"},
      {"certainty-mean", "certainty_mean"},
      {"certainty-spread", "certainty_spread"},
      {"seed", "seed"},
      {"validation-fraction", "validation_fraction"},
      {"theta", "theta"},
      {"margin", "margin"},
      {"regime", "regime"},
      {"code", "code"},
  };
  for (const auto& [flag, help] : flags) {
    const std::string key = json_names.at(flag);
    sub->add_option_function<std::string>(
        "--" + flag, [&f, key](const std::string& v) { f.overrides[key] = v; }, help);
  }
}

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
  const auto params = resolve_params(f);
  const Corpus corpus = generate(params);
  const std::filesystem::path dir(f.out);
  write_corpus(corpus, dir);

  nlohmann::ordered_json summary;
  summary["params"] = params.to_json();
  summary["expected_single_recall"] = expected_single_recall(params);
  summary["expected_union_recall"] = expected_union_recall(params);
  summary["planted_theta"] = params.theta;
  std::ofstream meta(dir / "simulation.json", std::ios::binary);
  if (!meta) throw Error(ErrorKind::data, "cannot write " + (dir / "simulation.json").string());
  meta << summary.dump(2) << '\n';

  out << "wrote " << corpus.documents.size() << " documents, " << corpus.annotations.size()
      << " annotations, " << corpus.attributions.size() << " attribution records to " << f.out
      << "\n  planted theta " << format_number(params.theta) << ", expected single recall "
      << fixed(expected_single_recall(params), 4) << ", expected union recall "
      << fixed(expected_union_recall(params), 4) << "\n";
  return 0;
}

int cmd_montecarlo(const SimulateFlags& f, std::ostream& out) {
  if (f.trials == 0) throw Error(ErrorKind::usage, "--trials must be at least 1");
  const auto params = resolve_params(f);
  const auto stats = monte_carlo_stats(params, f.trials);
  auto est = [](const Estimate& e) { return fixed(e.mean, 4) + " ± " + fixed(e.standard_error, 4); };
  TextTable table({"quantity", "empirical (± s.e.)", "expected"});
  table.add({"single recall", est(stats.single_recall), fixed(expected_single_recall(params), 4)});
  table.add({"union recall", est(stats.union_recall), fixed(expected_union_recall(params), 4)});
  table.add({"single precision", est(stats.single_precision), ""});
  table.add({"union precision", est(stats.union_precision), ""});
  out << stats.trials << " trial(s)\n";
  table.print(out);
  return 0;
}

// --- validate ---------------------------------------------------------------------

int cmd_validate(const InputFlags& f, std::ostream& out) {
  try {
    const auto corpus = load_corpus({f.documents, f.annotations, f.attributions});
    out << "ok: " << corpus.documents.size() << " documents, " << corpus.annotations.size()
        << " annotations, " << corpus.attributions.size() << " attribution records\n";
    return 0;
  } catch (const CorpusError& e) {
    for (const auto& issue : e.issues()) out << to_string(issue) << "\n";
    throw Error(ErrorKind::data, std::to_string(e.issues().size()) + " validation issue(s)");
  }
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"evikit: complete-evidence extraction from model ensembles", "evikit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.footer(
      "Ranges use start:stop:step and include both endpoints when step divides the range.\n"
      "EVIKIT_THREADS caps worker threads. Exit codes: 0 ok, 1 data/configuration error, 2 "
      "usage error.");

  CalibrateFlags calibrate;
  calibrate.in.split = "validation";
  calibrate.in.style = "sufficient";
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Calibrate decision thresholds on a split");
  add_corpus_flags(calibrate_cmd, calibrate.in);
  calibrate_cmd->add_option("--grid", calibrate.grid, "Threshold grid start:stop:step")
      ->capture_default_str();
  calibrate_cmd->add_option("--objective", calibrate.objective, "token-f<beta>")
      ->capture_default_str();
  calibrate_cmd->add_option("--split", calibrate.in.split, "Calibration split")->capture_default_str();
  calibrate_cmd->add_option("--style", calibrate.in.style, "Annotation style to calibrate against")
      ->capture_default_str();
  calibrate_cmd->add_option("--scope", calibrate.scope, "One threshold per model or per regime")
      ->check(CLI::IsMember({"model", "regime"}))
      ->capture_default_str();
  calibrate_cmd->add_option("--out", calibrate.out, "Threshold file to write")->required();

  ExtractFlags extract;
  auto* extract_cmd = app.add_subcommand("extract", "Write prediction sets from thresholds");
  extract_cmd->add_option("--documents", extract.documents)->required();
  extract_cmd->add_option("--attributions", extract.attributions)->required();
  extract_cmd->add_option("--threshold-file", extract.thresholds)->required();
  extract_cmd->add_option("--out", extract.out, "Predictions JSONL file to write")->required();

  EvaluateFlags evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Per-sample recall/precision report");
  add_corpus_flags(evaluate_cmd, evaluate.in);
  add_prediction_flags(evaluate_cmd, evaluate.in);
  evaluate_cmd->add_option("--mode", evaluate.mode, "single|best|max|ensemble|dynamic|cross|table")
      ->required();
  evaluate_cmd->add_option("--regime", evaluate.regime, "Restrict to one regime");
  evaluate_cmd->add_option("--model", evaluate.model, "Model id for --mode single");
  evaluate_cmd->add_option("--metric", evaluate.metric, "recall|precision")->capture_default_str();
  evaluate_cmd->add_option("--select-by", evaluate.select_by, "Metric for best-model wins")
      ->capture_default_str();
  evaluate_cmd->add_option("--certainty-threshold", evaluate.certainty_threshold,
                           "Member certainty gate for --mode dynamic")
      ->capture_default_str();
  evaluate_cmd->add_option("--style", evaluate.in.style, "Annotation style")
      ->check(CLI::IsMember({"sufficient", "complete"}))
      ->capture_default_str();
  evaluate_cmd->add_option("--min-spans", evaluate.in.min_spans,
                           "Keep samples with at least this many evidence spans")
      ->capture_default_str();
  evaluate_cmd->add_option("--out", evaluate.out, "Per-sample CSV to write");

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Dynamic-ensemble certainty sweep");
  add_corpus_flags(sweep_cmd, sweep.in);
  add_prediction_flags(sweep_cmd, sweep.in);
  sweep_cmd->add_option("--thresholds", sweep.thresholds_range,
                        "Certainty grid start:stop:step")
      ->capture_default_str();
  sweep_cmd->add_option("--regime", sweep.regime, "Regime whose models form the ensemble");
  sweep_cmd->add_option("--style", sweep.in.style, "Annotation style")
      ->check(CLI::IsMember({"sufficient", "complete"}))
      ->capture_default_str();
  sweep_cmd->add_option("--min-spans", sweep.in.min_spans)->capture_default_str();
  sweep_cmd->add_option("--out", sweep.out, "Sweep CSV to write");

  AgreementFlags agree;
  auto* agreement_cmd = app.add_subcommand("agreement", "Member agreement and unique tokens");
  add_corpus_flags(agreement_cmd, agree.in);
  add_prediction_flags(agreement_cmd, agree.in);
  agreement_cmd->add_option("--regime", agree.regime, "Restrict to one regime");
  agreement_cmd->add_option("--style", agree.style, "all|complete")
      ->check(CLI::IsMember({"all", "complete"}))
      ->capture_default_str();
  agreement_cmd->add_option("--min-spans", agree.in.min_spans)->capture_default_str();
  agreement_cmd->add_option("--out", agree.out, "Agreement CSV to write");

  SimulateFlags simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "Write a simulated exchange-format corpus");
  add_simulator_flags(simulate_cmd, simulate);
  simulate_cmd->add_option("--out", simulate.out, "Output directory")->required();

  SimulateFlags montecarlo;
  auto* montecarlo_cmd =
      app.add_subcommand("montecarlo", "Empirical vs expected recall of the simulator");
  add_simulator_flags(montecarlo_cmd, montecarlo);
  montecarlo_cmd->add_option("--trials", montecarlo.trials)->capture_default_str();

  InputFlags validate;
  auto* validate_cmd = app.add_subcommand("validate", "Check corpus cross-references");
  validate_cmd->add_option("--documents", validate.documents)->required();
  validate_cmd->add_option("--annotations", validate.annotations);
  validate_cmd->add_option("--attributions", validate.attributions);

  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (calibrate_cmd->parsed()) return cmd_calibrate(calibrate, out);
    if (extract_cmd->parsed()) return cmd_extract(extract, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(evaluate, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep, out);
    if (agreement_cmd->parsed()) return cmd_agreement(agree, out);
    if (simulate_cmd->parsed()) return cmd_simulate(simulate, out);
    if (montecarlo_cmd->parsed()) return cmd_montecarlo(montecarlo, out);
    if (validate_cmd->parsed()) return cmd_validate(validate, out);
  } catch (const Error& e) {
    err << "evikit: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "evikit: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace evikit::cli
