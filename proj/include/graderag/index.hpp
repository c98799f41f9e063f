#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "graderag/corpus.hpp"
#include "graderag/embed.hpp"
#include "graderag/types.hpp"

namespace graderag {

/// Payload carried alongside each indexed vector. Which fields are set
/// depends on the index kind: chunks carry dimension/level/text, exemplars
/// carry task/dimension/score/response text/rationale.
struct Metadata {
  std::optional<Dimension> dimension;
  std::optional<int> level;
  std::optional<std::string> task;
  std::optional<int> score;
  std::optional<std::string> source_name;
  std::optional<IndexKind> index_kind;
  std::string text;
  std::optional<std::string> rationale;
};

/// Conjunction of constraints; unset fields match anything. `levels`, when
/// present, requires the record's level to be one of the listed values.
struct MetadataFilter {
  std::optional<Dimension> dimension;
  std::optional<std::vector<int>> levels;
  std::optional<std::string> task;
};

inline bool filter_matches(const MetadataFilter& filter, const Metadata& meta) {
  if (filter.dimension && (!meta.dimension || *meta.dimension != *filter.dimension))
    return false;
  if (filter.levels) {
    if (!meta.level) return false;
    if (std::find(filter.levels->begin(), filter.levels->end(), *meta.level) ==
        filter.levels->end())
      return false;
  }
  if (filter.task && (!meta.task || *meta.task != *filter.task)) return false;
  return true;
}

struct IndexRecord {
  std::string record_id;
  EmbeddingVector vector;
  Metadata metadata;
};

struct ScoredHit {
  std::string record_id;
  double score = 0.0;
  Metadata metadata;
};

/// Exact-search vector index over a fixed record set. Records are validated
/// once at construction (unique ids, uniform dimension) and never mutated.
class VectorIndex {
 public:
  static VectorIndex build(IndexKind kind, std::vector<IndexRecord> records) {
    std::unordered_set<std::string> seen;
    std::size_t dim = 0;
    for (const IndexRecord& rec : records) {
      if (rec.record_id.empty())
        fail(Errc::ParseError, "index record with empty record_id");
      if (!seen.insert(rec.record_id).second)
        fail(Errc::DuplicateId, "duplicate record_id: " + rec.record_id);
      if (dim == 0) dim = rec.vector.dim();
      if (rec.vector.dim() != dim || dim == 0)
        fail(Errc::DimensionMismatch,
             "record " + rec.record_id + " has dim " +
                 std::to_string(rec.vector.dim()) + ", expected " +
                 std::to_string(dim));
    }
    return VectorIndex(kind, dim, std::move(records));
  }

  IndexKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<IndexRecord>& records() const { return records_; }

  /// Exact top-k by cosine similarity among records passing the filter.
  /// Ties break by ascending record_id so results are fully deterministic.
  std::vector<ScoredHit> search(const EmbeddingVector& query, std::size_t k,
                                const MetadataFilter& filter = {}) const {
    if (k == 0 || records_.empty()) return {};
    if (query.dim() != dim_)
      fail(Errc::DimensionMismatch,
           "query dim " + std::to_string(query.dim()) + " vs index dim " +
               std::to_string(dim_));
    std::vector<ScoredHit> hits;
    for (const IndexRecord& rec : records_) {
      if (!filter_matches(filter, rec.metadata)) continue;
      hits.push_back({rec.record_id, cosine(query, rec.vector), rec.metadata});
    }
    std::sort(hits.begin(), hits.end(),
              [](const ScoredHit& a, const ScoredHit& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.record_id < b.record_id;
              });
    if (hits.size() > k) hits.resize(k);
    return hits;
  }

 private:
  VectorIndex(IndexKind kind, std::size_t dim, std::vector<IndexRecord> records)
      : kind_(kind), dim_(dim), records_(std::move(records)) {}

  IndexKind kind_;
  std::size_t dim_;
  std::vector<IndexRecord> records_;
};

/// Builds a chunk index (coarse or fine) by embedding each chunk's text.
inline VectorIndex build_index(IndexKind kind,
                               const std::vector<DocumentChunk>& chunks,
                               const EmbeddingProviderConfig& provider) {
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const DocumentChunk& c : chunks) texts.push_back(c.text);
  std::vector<EmbeddingVector> vectors = embed_batch(texts, provider);
  std::vector<IndexRecord> records;
  records.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    Metadata meta;
    meta.dimension = chunks[i].dimension;
    meta.level = chunks[i].level;
    meta.source_name = chunks[i].source_name;
    meta.index_kind = kind;
    meta.text = chunks[i].text;
    records.push_back({chunks[i].chunk_id, std::move(vectors[i]), std::move(meta)});
  }
  return VectorIndex::build(kind, std::move(records));
}

/// Builds the exemplar index; each exemplar is embedded by its response text.
inline VectorIndex build_index(const std::vector<Exemplar>& exemplars,
                               const EmbeddingProviderConfig& provider) {
  std::vector<std::string> texts;
  texts.reserve(exemplars.size());
  for (const Exemplar& e : exemplars) texts.push_back(e.response_text);
  std::vector<EmbeddingVector> vectors = embed_batch(texts, provider);
  std::vector<IndexRecord> records;
  records.reserve(exemplars.size());
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    Metadata meta;
    meta.task = exemplars[i].task;
    meta.dimension = exemplars[i].dimension;
    meta.score = exemplars[i].score;
    meta.index_kind = IndexKind::KE;
    meta.text = exemplars[i].response_text;
    meta.rationale = exemplars[i].rationale;
    records.push_back(
        {exemplars[i].exemplar_id, std::move(vectors[i]), std::move(meta)});
  }
  return VectorIndex::build(IndexKind::KE, std::move(records));
}

namespace detail {

inline nlohmann::ordered_json metadata_to_json(const Metadata& meta) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (meta.dimension) j["dimension"] = to_string(*meta.dimension);
  if (meta.level) j["level"] = *meta.level;
  if (meta.task) j["task"] = *meta.task;
  if (meta.score) j["score"] = *meta.score;
  if (meta.source_name) j["source_name"] = *meta.source_name;
  if (meta.index_kind) j["index_kind"] = to_string(*meta.index_kind);
  j["text"] = meta.text;
  if (meta.rationale) j["rationale"] = *meta.rationale;
  return j;
}

inline Metadata metadata_from_json(const nlohmann::json& j,
                                   const std::string& where) {
  Metadata meta;
  if (j.contains("dimension"))
    meta.dimension = parse_dimension(require_string(j, "dimension", where));
  if (j.contains("level")) meta.level = require_int(j, "level", where);
  if (j.contains("task")) meta.task = require_string(j, "task", where);
  if (j.contains("score")) meta.score = require_int(j, "score", where);
  if (j.contains("source_name"))
    meta.source_name = require_string(j, "source_name", where);
  if (j.contains("index_kind"))
    meta.index_kind = parse_index_kind(require_string(j, "index_kind", where));
  meta.text = require_string(j, "text", where);
  if (j.contains("rationale"))
    meta.rationale = require_string(j, "rationale", where);
  return meta;
}

}  // namespace detail

/// Writes an index as a header line {kind, dim} followed by one JSONL record
/// per entry. Key order is fixed so identical indices serialize identically.
inline void save_index(const VectorIndex& index, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot open for writing: " + path);
  nlohmann::ordered_json header = {{"kind", to_string(index.kind())},
                                   {"dim", index.dim()}};
  out << header.dump() << "\n";
  for (const IndexRecord& rec : index.records()) {
    nlohmann::ordered_json line = {
        {"record_id", rec.record_id},
        {"metadata", detail::metadata_to_json(rec.metadata)},
        {"values", rec.vector.values}};
    out << line.dump() << "\n";
  }
  if (!out) fail(Errc::IoError, "write failed: " + path);
}

inline VectorIndex load_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    fail(Errc::ParseError, path + ": missing index header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, path + ":1: " + std::string(e.what()));
  }
  IndexKind kind =
      parse_index_kind(detail::require_string(header, "kind", path + ":1"));
  std::size_t dim =
      static_cast<std::size_t>(detail::require_int(header, "dim", path + ":1"));
  std::vector<IndexRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ParseError, where + ": " + std::string(e.what()));
    }
    IndexRecord rec;
    rec.record_id = detail::require_string(j, "record_id", where);
    if (!j.contains("metadata") || !j["metadata"].is_object())
      fail(Errc::ParseError, where + ": missing object field 'metadata'");
    rec.metadata = detail::metadata_from_json(j["metadata"], where);
    if (!j.contains("values") || !j["values"].is_array())
      fail(Errc::ParseError, where + ": missing array field 'values'");
    rec.vector.values = j["values"].get<std::vector<double>>();
    if (rec.vector.dim() != dim)
      fail(Errc::DimensionMismatch,
           where + ": record dim " + std::to_string(rec.vector.dim()) +
               " does not match header dim " + std::to_string(dim));
    records.push_back(std::move(rec));
  }
  return VectorIndex::build(kind, std::move(records));
}

}  // namespace graderag
