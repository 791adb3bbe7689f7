#include "evikit/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

namespace evikit {

using ordered_json = nlohmann::ordered_json;

namespace {

// Thrown while decoding a single record; the line reader adds the location.
struct FieldError {
  std::string field;
  std::string message;
};

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& field) {
  auto it = j.find(field);
  if (it == j.end()) throw FieldError{field, "missing required field"};
  return *it;
}

std::string string_field(const nlohmann::json& j, const std::string& field) {
  const auto& v = require_field(j, field);
  if (!v.is_string()) throw FieldError{field, "expected a string"};
  return v.get<std::string>();
}

double number_field(const nlohmann::json& j, const std::string& field) {
  const auto& v = require_field(j, field);
  if (!v.is_number()) throw FieldError{field, "expected a number"};
  return v.get<double>();
}

std::vector<double> number_array(const nlohmann::json& v, const std::string& field) {
  if (!v.is_array()) throw FieldError{field, "expected an array of numbers"};
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw FieldError{field, "expected an array of numbers"};
    out.push_back(x.get<double>());
  }
  return out;
}

std::optional<std::vector<double>> optional_numbers(const nlohmann::json& j,
                                                    const std::string& field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return number_array(*it, field);
}

TokenSet token_id_array(const nlohmann::json& j, const std::string& field) {
  const auto& v = require_field(j, field);
  if (!v.is_array()) throw FieldError{field, "expected an array of token ids"};
  std::vector<TokenId> ids;
  ids.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<std::int64_t>() < 0 ||
        x.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
      throw FieldError{field, "token ids must be non-negative integers"};
    }
    ids.push_back(TokenId{static_cast<std::uint32_t>(x.get<std::int64_t>())});
  }
  return TokenSet(std::move(ids));
}

std::vector<CharSpan> span_array(const nlohmann::json& j, const std::string& field) {
  const auto& v = require_field(j, field);
  if (!v.is_array()) throw FieldError{field, "expected an array of [start, end] pairs"};
  std::vector<CharSpan> out;
  out.reserve(v.size());
  for (const auto& pair : v) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number_integer()) {
      throw FieldError{field, "expected an array of [start, end] integer pairs"};
    }
    out.push_back({pair[0].get<std::int64_t>(), pair[1].get<std::int64_t>()});
  }
  return out;
}

nlohmann::json extras(const nlohmann::json& j, std::initializer_list<std::string_view> known) {
  nlohmann::json out = nlohmann::json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) out[it.key()] = it.value();
  }
  return out;
}

void require_object(const nlohmann::json& j) {
  if (!j.is_object()) throw FieldError{"", "record must be a JSON object"};
}

template <typename T>
T with_field_errors(T (*decode)(const nlohmann::json&), const nlohmann::json& j) {
  try {
    return decode(j);
  } catch (const FieldError& e) {
    const std::string where = e.field.empty() ? "" : "field '" + e.field + "': ";
    throw Error(ErrorKind::data, where + e.message);
  }
}

Document decode_document(const nlohmann::json& j) {
  require_object(j);
  Document doc;
  doc.doc_id = string_field(j, "doc_id");
  const auto& tokens = require_field(j, "tokens");
  if (!tokens.is_array()) throw FieldError{"tokens", "expected an array of strings"};
  for (const auto& t : tokens) {
    if (!t.is_string()) throw FieldError{"tokens", "expected an array of strings"};
    doc.tokens.push_back(t.get<std::string>());
  }
  try {
    doc.split = parse_split(string_field(j, "split"));
  } catch (const Error& e) {
    throw FieldError{"split", e.what()};
  }
  doc.extra = extras(j, {"doc_id", "tokens", "split"});
  return doc;
}

TokenSet spans_to_ids(std::span<const CharSpan> spans, std::span<const CharSpan> offsets) {
  std::int64_t text_end = 0;
  std::int64_t previous_start = 0;
  for (const auto& o : offsets) {
    if (o.start < 0 || o.end < o.start || o.start < previous_start) {
      throw Error(ErrorKind::structural, "token offsets must be nondecreasing intervals");
    }
    previous_start = o.start;
    text_end = std::max(text_end, o.end);
  }
  std::vector<TokenId> ids;
  for (const auto& s : spans) {
    if (s.start < 0 || s.end > text_end || s.start > s.end) {
      throw Error(ErrorKind::data, "evidence span [" + std::to_string(s.start) + ", " +
                                       std::to_string(s.end) + ") lies outside the text [0, " +
                                       std::to_string(text_end) + ")");
    }
    for (std::size_t t = 0; t < offsets.size(); ++t) {
      if (std::max(offsets[t].start, s.start) < std::min(offsets[t].end, s.end)) {
        ids.push_back(TokenId{static_cast<std::uint32_t>(t)});
      }
    }
  }
  return TokenSet(std::move(ids));
}

EvidenceAnnotation decode_annotation(const nlohmann::json& j) {
  require_object(j);
  EvidenceAnnotation ann;
  ann.doc_id = string_field(j, "doc_id");
  ann.code = string_field(j, "code");
  try {
    ann.style = parse_style(string_field(j, "style"));
  } catch (const Error& e) {
    throw FieldError{"style", e.what()};
  }
  if (j.contains("evidence_char_spans")) {
    SpanEvidence src{span_array(j, "evidence_char_spans"), span_array(j, "token_offsets")};
    try {
      ann.evidence_ids = spans_to_ids(src.spans, src.token_offsets);
    } catch (const Error& e) {
      throw FieldError{"evidence_char_spans", e.what()};
    }
    if (j.contains("evidence_token_ids") &&
        token_id_array(j, "evidence_token_ids") != ann.evidence_ids) {
      throw FieldError{"evidence_token_ids", "disagrees with evidence_char_spans"};
    }
    ann.span_source = std::move(src);
    ann.extra = extras(j, {"doc_id", "code", "style", "evidence_char_spans", "token_offsets",
                           "evidence_token_ids"});
  } else {
    ann.evidence_ids = token_id_array(j, "evidence_token_ids");
    ann.extra = extras(j, {"doc_id", "code", "style", "evidence_token_ids"});
  }
  return ann;
}

AttributionRecord decode_attribution(const nlohmann::json& j) {
  require_object(j);
  AttributionRecord rec;
  rec.model_id = string_field(j, "model_id");
  try {
    rec.regime = parse_regime(string_field(j, "regime"));
  } catch (const Error& e) {
    throw FieldError{"regime", e.what()};
  }
  rec.doc_id = string_field(j, "doc_id");
  rec.code = string_field(j, "code");
  rec.probability = number_field(j, "probability");
  rec.attention = optional_numbers(j, "attention");
  rec.input_grad_l2 = optional_numbers(j, "input_grad_l2");
  rec.scores = optional_numbers(j, "scores");
  rec.extra = extras(j, {"model_id", "regime", "doc_id", "code", "probability", "attention",
                         "input_grad_l2", "scores"});
  return rec;
}

PredictionSet decode_prediction(const nlohmann::json& j) {
  require_object(j);
  PredictionSet pred;
  pred.source_id = string_field(j, "source_id");
  pred.doc_id = string_field(j, "doc_id");
  pred.code = string_field(j, "code");
  pred.token_ids = token_id_array(j, "token_ids");
  pred.extra = extras(j, {"source_id", "doc_id", "code", "token_ids"});
  return pred;
}

ordered_json with_extras(ordered_json j, const nlohmann::json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    if (!j.contains(it.key())) j[it.key()] = it.value();
  }
  return j;
}

ordered_json spans_json(const std::vector<CharSpan>& spans) {
  ordered_json out = ordered_json::array();
  for (const auto& s : spans) out.push_back({s.start, s.end});
  return out;
}

template <typename T, typename Decode>
std::vector<T> read_lines(std::istream& in, const std::string& source, Decode decode) {
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, "", std::string("malformed JSON: ") + e.what());
    }
    try {
      out.push_back(decode(j));
    } catch (const FieldError& e) {
      throw ParseError(source, line_no, e.field, e.message);
    }
  }
  return out;
}

template <typename T>
void write_lines(std::ostream& out, std::span<const T> items) {
  for (const auto& item : items) out << to_json(item).dump() << '\n';
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t begin = 0;
  while (true) {
    auto comma = line.find(',', begin);
    cells.push_back(line.substr(begin, comma - begin));
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  return cells;
}

}  // namespace

ParseError::ParseError(std::string source, std::size_t line, std::string field,
                       const std::string& message)
    : Error(ErrorKind::data,
            source + ":" + std::to_string(line) + ": " +
                (field.empty() ? std::string() : "field '" + field + "': ") + message),
      source_(std::move(source)),
      line_(line),
      field_(std::move(field)) {}

CorpusError::CorpusError(std::vector<ValidationIssue> issues)
    : Error(ErrorKind::data,
            [&] {
              std::string msg = std::to_string(issues.size()) + " validation issue(s)";
              for (std::size_t i = 0; i < issues.size() && i < 20; ++i) {
                msg += "\n  " + to_string(issues[i]);
              }
              return msg;
            }()),
      issues_(std::move(issues)) {}

nlohmann::ordered_json to_json(const Document& doc) {
  return with_extras(ordered_json{{"doc_id", doc.doc_id},
                                  {"tokens", doc.tokens},
                                  {"split", to_string(doc.split)}},
                     doc.extra);
}

nlohmann::ordered_json to_json(const EvidenceAnnotation& ann) {
  ordered_json j{{"doc_id", ann.doc_id}, {"code", ann.code}, {"style", to_string(ann.style)}};
  if (ann.span_source) {
    j["evidence_char_spans"] = spans_json(ann.span_source->spans);
    j["token_offsets"] = spans_json(ann.span_source->token_offsets);
  } else {
    j["evidence_token_ids"] = ann.evidence_ids.positions();
  }
  return with_extras(std::move(j), ann.extra);
}

nlohmann::ordered_json to_json(const AttributionRecord& rec) {
  ordered_json j{{"model_id", rec.model_id},
                 {"regime", to_string(rec.regime)},
                 {"doc_id", rec.doc_id},
                 {"code", rec.code},
                 {"probability", rec.probability}};
  if (rec.attention) j["attention"] = *rec.attention;
  if (rec.input_grad_l2) j["input_grad_l2"] = *rec.input_grad_l2;
  if (rec.scores) j["scores"] = *rec.scores;
  return with_extras(std::move(j), rec.extra);
}

nlohmann::ordered_json to_json(const PredictionSet& pred) {
  return with_extras(ordered_json{{"source_id", pred.source_id},
                                  {"doc_id", pred.doc_id},
                                  {"code", pred.code},
                                  {"token_ids", pred.token_ids.positions()}},
                     pred.extra);
}

Document document_from_json(const nlohmann::json& j) {
  return with_field_errors(&decode_document, j);
}
EvidenceAnnotation annotation_from_json(const nlohmann::json& j) {
  return with_field_errors(&decode_annotation, j);
}
AttributionRecord attribution_from_json(const nlohmann::json& j) {
  return with_field_errors(&decode_attribution, j);
}
PredictionSet prediction_from_json(const nlohmann::json& j) {
  return with_field_errors(&decode_prediction, j);
}

std::vector<Document> read_documents(std::istream& in, const std::string& source) {
  return read_lines<Document>(in, source, decode_document);
}
std::vector<EvidenceAnnotation> read_annotations(std::istream& in, const std::string& source) {
  return read_lines<EvidenceAnnotation>(in, source, decode_annotation);
}
std::vector<AttributionRecord> read_attributions(std::istream& in, const std::string& source) {
  return read_lines<AttributionRecord>(in, source, decode_attribution);
}
std::vector<PredictionSet> read_predictions(std::istream& in, const std::string& source) {
  return read_lines<PredictionSet>(in, source, decode_prediction);
}

void write_documents(std::ostream& out, std::span<const Document> docs) { write_lines(out, docs); }
void write_annotations(std::ostream& out, std::span<const EvidenceAnnotation> anns) {
  write_lines(out, anns);
}
void write_attributions(std::ostream& out, std::span<const AttributionRecord> recs) {
  write_lines(out, recs);
}
void write_predictions(std::ostream& out, std::span<const PredictionSet> preds) {
  write_lines(out, preds);
}

Corpus load_corpus(const CorpusPaths& paths) {
  Corpus corpus;
  {
    auto in = open_input(paths.documents);
    corpus.documents = read_documents(in, paths.documents.string());
  }
  if (!paths.annotations.empty()) {
    auto in = open_input(paths.annotations);
    corpus.annotations = read_annotations(in, paths.annotations.string());
  }
  if (!paths.attributions.empty()) {
    auto in = open_input(paths.attributions);
    corpus.attributions = read_attributions(in, paths.attributions.string());
  }
  if (auto issues = validate_corpus(corpus); !issues.empty()) throw CorpusError(std::move(issues));
  return corpus;
}

CorpusPaths write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CorpusPaths paths{dir / "documents.jsonl", dir / "annotations.jsonl", dir / "attributions.jsonl"};
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write " + p.string());
    return out;
  };
  {
    auto out = open(paths.documents);
    write_documents(out, corpus.documents);
  }
  {
    auto out = open(paths.annotations);
    write_annotations(out, corpus.annotations);
  }
  {
    auto out = open(paths.attributions);
    write_attributions(out, corpus.attributions);
  }
  return paths;
}

void write_thresholds(std::ostream& out, std::span<const ThresholdEntry> entries) {
  for (const auto& e : entries) {
    out << ordered_json{{"model_id", e.model_id},
                        {"regime", to_string(e.regime)},
                        {"theta", e.threshold.theta},
                        {"objective", e.threshold.objective},
                        {"objective_value", e.threshold.objective_value},
                        {"samples", e.samples}}
               .dump()
        << '\n';
  }
}

std::map<std::string, ThresholdEntry> read_thresholds(std::istream& in, const std::string& source) {
  auto entries = read_lines<ThresholdEntry>(in, source, [](const nlohmann::json& j) {
    require_object(j);
    ThresholdEntry e;
    e.model_id = string_field(j, "model_id");
    try {
      e.regime = parse_regime(string_field(j, "regime"));
    } catch (const Error& err) {
      throw FieldError{"regime", err.what()};
    }
    e.threshold.theta = number_field(j, "theta");
    if (!(e.threshold.theta >= 0.0 && e.threshold.theta <= 1.0)) {
      throw FieldError{"theta", "must lie in [0, 1]"};
    }
    e.threshold.objective = string_field(j, "objective");
    e.threshold.objective_value = number_field(j, "objective_value");
    e.samples = j.value("samples", std::size_t{0});
    return e;
  });
  std::map<std::string, ThresholdEntry> out;
  for (auto& e : entries) {
    const auto id = e.model_id;
    if (!out.emplace(id, std::move(e)).second) {
      throw Error(ErrorKind::data, source + ": duplicate threshold for model " + id);
    }
  }
  return out;
}

TokenSet spans_to_token_ids(const Document& document, std::span<const CharSpan> spans,
                            std::span<const CharSpan> token_offsets) {
  if (token_offsets.size() != document.token_count()) {
    throw Error(ErrorKind::structural,
                "document " + document.doc_id + " has " + std::to_string(document.token_count()) +
                    " tokens but " + std::to_string(token_offsets.size()) + " token offsets");
  }
  return spans_to_ids(spans, token_offsets);
}

std::size_t count_contiguous_runs(const TokenSet& ids) {
  std::size_t runs = 0;
  std::optional<std::uint32_t> previous;
  for (auto id : ids) {
    if (!previous || id.position != *previous + 1) ++runs;
    previous = id.position;
  }
  return runs;
}

std::size_t evidence_span_count(const EvidenceAnnotation& annotation) {
  if (annotation.span_source) return annotation.span_source->spans.size();
  return count_contiguous_runs(annotation.evidence_ids);
}

std::vector<SampleKey> filter_multi_span_test_cases(std::span<const EvidenceAnnotation> annotations,
                                                    std::size_t min_spans) {
  std::set<SampleKey> kept;
  for (const auto& ann : annotations) {
    if (ann.style == Style::complete && evidence_span_count(ann) >= min_spans) {
      kept.insert(ann.key());
    }
  }
  return {kept.begin(), kept.end()};
}

std::string format_number(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_report(std::ostream& out, const ReportTable& table) {
  for (const auto& m : table.metadata) out << '#' << m << '\n';
  out << table.key_column;
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.label;
    for (double v : row.values) out << ',' << format_number(v);
    out << '\n';
  }
}

ReportTable read_report(std::istream& in, const std::string& source) {
  ReportTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      table.metadata.push_back(line.substr(1));
      continue;
    }
    auto cells = split_csv(line);
    if (!have_header) {
      if (cells.front().empty()) throw ParseError(source, line_no, "", "empty key column name");
      table.key_column = cells.front();
      table.columns.assign(cells.begin() + 1, cells.end());
      have_header = true;
      continue;
    }
    if (cells.size() != table.columns.size() + 1) {
      throw ParseError(source, line_no, "", "expected " + std::to_string(table.columns.size() + 1) +
                                                " cells, found " + std::to_string(cells.size()));
    }
    ReportRow row{cells.front(), {}};
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      const auto& cell = cells[c];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError(source, line_no, table.columns[c - 1], "not a number: '" + cell + "'");
      }
      row.values.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(source, line_no, "", "missing header line");
  return table;
}

}  // namespace evikit
