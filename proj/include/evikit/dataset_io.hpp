#pragma once

// Line-delimited JSON exchange formats, span -> token conversion and test-set
// filtering.
//
// Every reader reports the 1-based line number of a malformed record. Fields
// the reader does not know are kept in the record's `extra` object and written
// back unchanged.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evikit/attribution.hpp"
#include "evikit/error.hpp"
#include "evikit/evidence.hpp"

namespace evikit {

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, std::string field, const std::string& message);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string source_;
  std::size_t line_;
  std::string field_;
};

class CorpusError : public Error {
 public:
  explicit CorpusError(std::vector<ValidationIssue> issues);

  const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ValidationIssue> issues_;
};

// --- single-record conversion -----------------------------------------------

nlohmann::ordered_json to_json(const Document& doc);
nlohmann::ordered_json to_json(const EvidenceAnnotation& ann);
nlohmann::ordered_json to_json(const AttributionRecord& rec);
nlohmann::ordered_json to_json(const PredictionSet& pred);

// Throws Error(data) naming the offending field. Span-form annotations are
// converted with spans_to_token_ids.
Document document_from_json(const nlohmann::json& j);
EvidenceAnnotation annotation_from_json(const nlohmann::json& j);
AttributionRecord attribution_from_json(const nlohmann::json& j);
PredictionSet prediction_from_json(const nlohmann::json& j);

// --- files -------------------------------------------------------------------

std::vector<Document> read_documents(std::istream& in, const std::string& source = "documents");
std::vector<EvidenceAnnotation> read_annotations(std::istream& in,
                                                 const std::string& source = "annotations");
std::vector<AttributionRecord> read_attributions(std::istream& in,
                                                 const std::string& source = "attributions");
std::vector<PredictionSet> read_predictions(std::istream& in,
                                            const std::string& source = "predictions");

void write_documents(std::ostream& out, std::span<const Document> docs);
void write_annotations(std::ostream& out, std::span<const EvidenceAnnotation> anns);
void write_attributions(std::ostream& out, std::span<const AttributionRecord> recs);
void write_predictions(std::ostream& out, std::span<const PredictionSet> preds);

struct CorpusPaths {
  std::filesystem::path documents;
  std::filesystem::path annotations;   // optional: empty path means none
  std::filesystem::path attributions;  // optional
};

// Reads the given files and validates the result. Throws ParseError for a
// malformed line, CorpusError for cross-reference failures and Error(data)
// for unreadable files.
Corpus load_corpus(const CorpusPaths& paths);

// Writes documents.jsonl, annotations.jsonl and attributions.jsonl into dir.
CorpusPaths write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// --- threshold files ---------------------------------------------------------

struct ThresholdEntry {
  std::string model_id;
  Regime regime = Regime::SIM;
  DecisionThreshold threshold;
  std::size_t samples = 0;
};

// One {model_id, regime, theta, objective, objective_value, samples} per line.
void write_thresholds(std::ostream& out, std::span<const ThresholdEntry> entries);
std::map<std::string, ThresholdEntry> read_thresholds(std::istream& in,
                                                      const std::string& source = "thresholds");

// --- span conversion and filtering ---------------------------------------------

// Tokens whose [start, end) offset interval shares at least one character with
// any span. Text bounds are [0, max token end]. Throws Error(structural) when
// the offsets do not match the document, Error(data) for spans outside the text
// or with start > end.
TokenSet spans_to_token_ids(const Document& document, std::span<const CharSpan> spans,
                            std::span<const CharSpan> token_offsets);

// Number of maximal runs of consecutive positions.
std::size_t count_contiguous_runs(const TokenSet& ids);

// Explicit span count when the annotation came from spans, otherwise
// contiguous runs of its token ids.
std::size_t evidence_span_count(const EvidenceAnnotation& annotation);

// Complete-style samples whose evidence has at least min_spans spans, sorted.
std::vector<SampleKey> filter_multi_span_test_cases(std::span<const EvidenceAnnotation> annotations,
                                                    std::size_t min_spans = 2);

// --- per-sample report CSV --------------------------------------------------------

struct ReportRow {
  std::string label;  // sample number, threshold, or an aggregate name such as "mean"
  std::vector<double> values;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

// Comma-separated table: optional '#' metadata lines, a header, then one row
// per key. Per-sample reports use the key column "sample".
struct ReportTable {
  std::vector<std::string> metadata;  // '#' lines, without the marker
  std::string key_column = "sample";
  std::vector<std::string> columns;  // value columns, after the key column
  std::vector<ReportRow> rows;

  friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

// Numbers use the shortest round-trip representation.
std::string format_number(double value);

void write_report(std::ostream& out, const ReportTable& table);
// Throws ParseError for ragged rows or non-numeric cells.
ReportTable read_report(std::istream& in, const std::string& source = "report");

}  // namespace evikit
