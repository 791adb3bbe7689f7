#pragma once

// Domain types shared by every evikit module.
//
// A Document's token positions are the universe every evidence set indexes
// into: a TokenId is a position, not a vocabulary id, so repeated surface
// tokens are distinct evidence items.

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace evikit {

enum class Split { train, validation, test };
enum class Style { sufficient, complete };
enum class Regime { IGR, EGT, SIM };

std::string_view to_string(Split split);
std::string_view to_string(Style style);
std::string_view to_string(Regime regime);

// Parsers throw Error(validation) on unknown names.
Split parse_split(std::string_view name);
Style parse_style(std::string_view name);
Regime parse_regime(std::string_view name);

struct TokenId {
  std::uint32_t position = 0;

  constexpr auto operator<=>(const TokenId&) const = default;
};

// Sorted, duplicate-free set of token positions.
class TokenSet {
 public:
  using const_iterator = std::vector<TokenId>::const_iterator;

  TokenSet() = default;
  explicit TokenSet(std::vector<TokenId> ids);
  TokenSet(std::initializer_list<std::uint32_t> positions);

  static TokenSet from_positions(const std::vector<std::uint32_t>& positions);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  bool contains(TokenId id) const;
  const_iterator begin() const noexcept { return ids_.begin(); }
  const_iterator end() const noexcept { return ids_.end(); }
  const std::vector<TokenId>& ids() const noexcept { return ids_; }
  std::vector<std::uint32_t> positions() const;

  // Largest position + 1, or 0 for the empty set.
  std::uint32_t bound() const noexcept { return ids_.empty() ? 0 : ids_.back().position + 1; }

  void insert(TokenId id);
  TokenSet& operator|=(const TokenSet& other);

  friend bool operator==(const TokenSet&, const TokenSet&) = default;

 private:
  std::vector<TokenId> ids_;
};

TokenSet set_union(const TokenSet& a, const TokenSet& b);
std::size_t intersection_size(const TokenSet& a, const TokenSet& b);
bool is_subset(const TokenSet& inner, const TokenSet& outer);

struct SampleKey {
  std::string doc_id;
  std::string code;

  auto operator<=>(const SampleKey&) const = default;
};

std::string to_string(const SampleKey& key);

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  Split split = Split::test;
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, kept verbatim

  std::size_t token_count() const noexcept { return tokens.size(); }

  friend bool operator==(const Document&, const Document&) = default;
};

// Half-open character interval [start, end).
struct CharSpan {
  std::int64_t start = 0;
  std::int64_t end = 0;

  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

// Span-form evidence as it appeared on disk; evidence_ids are derived from it.
struct SpanEvidence {
  std::vector<CharSpan> spans;
  std::vector<CharSpan> token_offsets;

  friend bool operator==(const SpanEvidence&, const SpanEvidence&) = default;
};

struct EvidenceAnnotation {
  std::string doc_id;
  std::string code;
  Style style = Style::complete;
  TokenSet evidence_ids;
  std::optional<SpanEvidence> span_source;
  nlohmann::json extra = nlohmann::json::object();

  SampleKey key() const { return {doc_id, code}; }

  friend bool operator==(const EvidenceAnnotation&, const EvidenceAnnotation&) = default;
};

struct AttributionRecord {
  std::string model_id;
  Regime regime = Regime::SIM;
  std::string doc_id;
  std::string code;
  double probability = 0.0;
  std::optional<std::vector<double>> attention;
  std::optional<std::vector<double>> input_grad_l2;
  std::optional<std::vector<double>> scores;
  nlohmann::json extra = nlohmann::json::object();

  SampleKey key() const { return {doc_id, code}; }

  friend bool operator==(const AttributionRecord&, const AttributionRecord&) = default;
};

struct PredictionSet {
  std::string source_id;
  std::string doc_id;
  std::string code;
  TokenSet token_ids;
  nlohmann::json extra = nlohmann::json::object();

  SampleKey key() const { return {doc_id, code}; }

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

struct Corpus {
  std::vector<Document> documents;
  std::vector<EvidenceAnnotation> annotations;
  std::vector<AttributionRecord> attributions;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct ValidationIssue {
  std::string record;  // e.g. "annotation[3] doc7/416.8"
  std::string field;
  std::string message;

  friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

std::string to_string(const ValidationIssue& issue);

// Checks every cross-reference and per-record invariant. Returns an empty
// list iff the corpus is consistent. Issues are ordered by record kind, then
// input order.
std::vector<ValidationIssue> validate_corpus(const std::vector<Document>& documents,
                                             const std::vector<EvidenceAnnotation>& annotations,
                                             const std::vector<AttributionRecord>& attributions);

inline std::vector<ValidationIssue> validate_corpus(const Corpus& corpus) {
  return validate_corpus(corpus.documents, corpus.annotations, corpus.attributions);
}

}  // namespace evikit
