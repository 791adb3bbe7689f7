#include "evikit/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "evikit/error.hpp"

namespace evikit {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage error";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::data: return "data error";
    case ErrorKind::structural: return "structural error";
    case ErrorKind::validation: return "validation error";
  }
  return "error";
}

int exit_code(ErrorKind kind) noexcept { return kind == ErrorKind::usage ? 2 : 1; }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

std::string_view to_string(Style style) {
  return style == Style::sufficient ? "sufficient" : "complete";
}

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::IGR: return "IGR";
    case Regime::EGT: return "EGT";
    case Regime::SIM: return "SIM";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw Error(ErrorKind::validation, "unknown split '" + std::string(name) + "'");
}

Style parse_style(std::string_view name) {
  if (name == "sufficient") return Style::sufficient;
  if (name == "complete") return Style::complete;
  throw Error(ErrorKind::validation, "unknown annotation style '" + std::string(name) + "'");
}

Regime parse_regime(std::string_view name) {
  if (name == "IGR") return Regime::IGR;
  if (name == "EGT") return Regime::EGT;
  if (name == "SIM") return Regime::SIM;
  throw Error(ErrorKind::validation, "unknown regime '" + std::string(name) + "'");
}

// --- TokenSet ---------------------------------------------------------------

TokenSet::TokenSet(std::vector<TokenId> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

TokenSet::TokenSet(std::initializer_list<std::uint32_t> positions) {
  ids_.reserve(positions.size());
  for (auto p : positions) ids_.push_back(TokenId{p});
  *this = TokenSet(std::move(ids_));
}

TokenSet TokenSet::from_positions(const std::vector<std::uint32_t>& positions) {
  std::vector<TokenId> ids;
  ids.reserve(positions.size());
  for (auto p : positions) ids.push_back(TokenId{p});
  return TokenSet(std::move(ids));
}

bool TokenSet::contains(TokenId id) const {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

std::vector<std::uint32_t> TokenSet::positions() const {
  std::vector<std::uint32_t> out;
  out.reserve(ids_.size());
  for (auto id : ids_) out.push_back(id.position);
  return out;
}

void TokenSet::insert(TokenId id) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) ids_.insert(it, id);
}

TokenSet& TokenSet::operator|=(const TokenSet& other) {
  if (other.empty()) return *this;
  std::vector<TokenId> merged;
  merged.reserve(ids_.size() + other.ids_.size());
  std::set_union(ids_.begin(), ids_.end(), other.ids_.begin(), other.ids_.end(),
                 std::back_inserter(merged));
  ids_ = std::move(merged);
  return *this;
}

TokenSet set_union(const TokenSet& a, const TokenSet& b) {
  TokenSet out = a;
  out |= b;
  return out;
}

std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

bool is_subset(const TokenSet& inner, const TokenSet& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

std::string to_string(const SampleKey& key) { return key.doc_id + "/" + key.code; }

std::string to_string(const ValidationIssue& issue) {
  return issue.record + ": " + issue.field + ": " + issue.message;
}

// --- validate_corpus --------------------------------------------------------

namespace {

class IssueLog {
 public:
  void add(std::string record, std::string field, std::string message) {
    issues_.push_back({std::move(record), std::move(field), std::move(message)});
  }
  std::vector<ValidationIssue> take() { return std::move(issues_); }

 private:
  std::vector<ValidationIssue> issues_;
};

std::string record_name(std::string_view kind, std::size_t index, std::string_view detail) {
  return std::string(kind) + "[" + std::to_string(index) + "] " + std::string(detail);
}

void check_vector(IssueLog& log, const std::string& record, std::string_view field,
                  const std::vector<double>& values, std::size_t expected_len) {
  if (values.size() != expected_len) {
    log.add(record, std::string(field),
            "length " + std::to_string(values.size()) + " does not match document token count " +
                std::to_string(expected_len));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      log.add(record, std::string(field) + "[" + std::to_string(i) + "]",
              "entry must be finite and non-negative");
      break;
    }
  }
}

}  // namespace

std::vector<ValidationIssue> validate_corpus(const std::vector<Document>& documents,
                                             const std::vector<EvidenceAnnotation>& annotations,
                                             const std::vector<AttributionRecord>& attributions) {
  IssueLog log;
  std::unordered_map<std::string, const Document*> by_id;

  for (std::size_t i = 0; i < documents.size(); ++i) {
    const auto& doc = documents[i];
    const auto name = record_name("document", i, doc.doc_id);
    if (doc.doc_id.empty()) log.add(name, "doc_id", "must be nonempty");
    if (doc.tokens.empty()) log.add(name, "tokens", "must be nonempty");
    if (!doc.doc_id.empty() && !by_id.emplace(doc.doc_id, &doc).second) {
      log.add(name, "doc_id", "duplicate doc_id '" + doc.doc_id + "'");
    }
  }

  std::set<std::tuple<std::string, std::string, Style>> seen_annotations;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& ann = annotations[i];
    const auto name = record_name("annotation", i, to_string(ann.key()));
    if (ann.code.empty()) log.add(name, "code", "must be nonempty");
    if (ann.evidence_ids.empty()) log.add(name, "evidence_ids", "must be nonempty");
    if (!seen_annotations.emplace(ann.doc_id, ann.code, ann.style).second) {
      log.add(name, "style",
              "duplicate " + std::string(to_string(ann.style)) + " annotation for sample");
    }
    auto it = by_id.find(ann.doc_id);
    if (it == by_id.end()) {
      log.add(name, "doc_id", "unknown doc_id '" + ann.doc_id + "'");
      continue;
    }
    if (ann.evidence_ids.bound() > it->second->token_count()) {
      log.add(name, "evidence_ids",
              "token id " + std::to_string(ann.evidence_ids.bound() - 1) +
                  " out of range for document with " +
                  std::to_string(it->second->token_count()) + " tokens");
    }
    if (ann.span_source && ann.span_source->token_offsets.size() != it->second->token_count()) {
      log.add(name, "token_offsets",
              std::to_string(ann.span_source->token_offsets.size()) +
                  " offsets for a document with " + std::to_string(it->second->token_count()) +
                  " tokens");
    }
  }

  std::set<std::tuple<std::string, std::string, std::string>> seen_records;
  for (std::size_t i = 0; i < attributions.size(); ++i) {
    const auto& rec = attributions[i];
    const auto name = record_name("attribution", i, rec.model_id + "@" + to_string(rec.key()));
    if (rec.model_id.empty()) log.add(name, "model_id", "must be nonempty");
    if (rec.code.empty()) log.add(name, "code", "must be nonempty");
    if (!(rec.probability >= 0.0 && rec.probability <= 1.0)) {
      log.add(name, "probability", "must lie in [0, 1]");
    }
    if (!seen_records.emplace(rec.model_id, rec.doc_id, rec.code).second) {
      log.add(name, "model_id", "duplicate record for model and sample");
    }
    const bool has_pair = rec.attention.has_value() && rec.input_grad_l2.has_value();
    if (!has_pair && !rec.scores.has_value()) {
      log.add(name, "scores", "needs attention and input_grad_l2, or scores");
    }
    auto it = by_id.find(rec.doc_id);
    if (it == by_id.end()) {
      log.add(name, "doc_id", "unknown doc_id '" + rec.doc_id + "'");
      continue;
    }
    const auto n = it->second->token_count();
    if (rec.attention) check_vector(log, name, "attention", *rec.attention, n);
    if (rec.input_grad_l2) check_vector(log, name, "input_grad_l2", *rec.input_grad_l2, n);
    if (rec.scores) check_vector(log, name, "scores", *rec.scores, n);
  }

  return log.take();
}

}  // namespace evikit
