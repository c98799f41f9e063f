#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "graderag/text.hpp"
#include "graderag/types.hpp"

namespace graderag {

inline constexpr std::size_t kDefaultChunkTokens = 512;

namespace detail {

/// Streams a JSON-lines file, invoking fn(line_number, record) per
/// non-blank line. Line numbers are 1-based for error messages.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(std::size_t,
                                                    const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ParseError, path.string() + ":" + std::to_string(line_no) +
                                 ": " + e.what());
    }
    fn(line_no, record);
  }
}

inline std::string require_string(const nlohmann::json& record, const char* key,
                                  const std::string& where) {
  if (!record.contains(key) || !record[key].is_string())
    fail(Errc::ParseError,
         where + ": missing or non-string field '" + key + "'");
  return record[key].get<std::string>();
}

inline std::string require_string(const nlohmann::json& record, const char* key,
                                  const std::filesystem::path& path,
                                  std::size_t line_no) {
  return require_string(record, key,
                        path.string() + ":" + std::to_string(line_no));
}

inline int require_int(const nlohmann::json& record, const char* key,
                       const std::string& where) {
  if (!record.contains(key) || !record[key].is_number_integer())
    fail(Errc::ParseError,
         where + ": missing or non-integer field '" + key + "'");
  return record[key].get<int>();
}

inline int require_int(const nlohmann::json& record, const char* key,
                       const std::filesystem::path& path, std::size_t line_no) {
  return require_int(record, key, path.string() + ":" + std::to_string(line_no));
}

}  // namespace detail

/// Splits a document into chunks of at most max_tokens tokens each.
/// Sentences are packed greedily; a sentence longer than the budget is
/// split at word boundaries. Chunks preserve document order and their
/// concatenation reproduces the text up to whitespace normalization.
inline std::vector<DocumentChunk> chunk_document(
    const SourceDocument& doc, std::size_t max_tokens = kDefaultChunkTokens) {
  if (max_tokens < 1) fail(Errc::ConfigError, "max_tokens must be >= 1");
  if (count_tokens(doc.text) == 0)
    fail(Errc::EmptyDocument, "document '" + doc.id + "' has no text");

  // Sentence pieces, none longer than the token budget.
  std::vector<std::string> pieces;
  for (const std::string& sentence : split_sentences(doc.text)) {
    std::size_t tokens = count_tokens(sentence);
    if (tokens <= max_tokens) {
      pieces.push_back(normalize_whitespace(sentence));
      continue;
    }
    std::string piece;
    std::size_t piece_tokens = 0;
    std::size_t pos = 0;
    while (pos < sentence.size()) {
      while (pos < sentence.size() && detail::is_space(sentence[pos])) ++pos;
      std::size_t word_end = pos;
      while (word_end < sentence.size() && !detail::is_space(sentence[word_end]))
        ++word_end;
      if (word_end == pos) break;
      if (piece_tokens == max_tokens) {
        pieces.push_back(piece);
        piece.clear();
        piece_tokens = 0;
      }
      if (!piece.empty()) piece.push_back(' ');
      piece.append(sentence, pos, word_end - pos);
      ++piece_tokens;
      pos = word_end;
    }
    if (!piece.empty()) pieces.push_back(piece);
  }

  std::vector<DocumentChunk> chunks;
  std::string current;
  std::size_t current_tokens = 0;
  auto flush = [&]() {
    if (current.empty()) return;
    DocumentChunk chunk;
    char seq[16];
    std::snprintf(seq, sizeof seq, "#%04zu", chunks.size());
    chunk.chunk_id = doc.id + seq;
    chunk.index_kind = IndexKind::KD1;
    chunk.source_name = doc.source_name;
    chunk.dimension = doc.dimension;
    chunk.text = current;
    chunk.token_count = current_tokens;
    chunks.push_back(std::move(chunk));
    current.clear();
    current_tokens = 0;
  };
  for (const std::string& piece : pieces) {
    std::size_t tokens = count_tokens(piece);
    if (current_tokens + tokens > max_tokens) flush();
    if (!current.empty()) current.push_back(' ');
    current.append(piece);
    current_tokens += tokens;
  }
  flush();
  return chunks;
}

/// Loads the KD1 corpus manifest: JSON lines of
/// {id, source_name, dimension, text}.
inline std::vector<SourceDocument> load_manifest(
    const std::filesystem::path& path) {
  std::vector<SourceDocument> docs;
  std::set<std::string> seen;
  detail::for_each_jsonl(path, [&](std::size_t line_no,
                                   const nlohmann::json& record) {
    SourceDocument doc;
    doc.id = detail::require_string(record, "id", path, line_no);
    doc.source_name = detail::require_string(record, "source_name", path, line_no);
    doc.dimension =
        parse_dimension(detail::require_string(record, "dimension", path, line_no));
    doc.text = detail::require_string(record, "text", path, line_no);
    if (count_tokens(doc.text) == 0)
      fail(Errc::EmptyDocument, path.string() + ":" + std::to_string(line_no) +
                                    ": document '" + doc.id + "' has no text");
    if (!seen.insert(doc.id).second)
      fail(Errc::DuplicateId, path.string() + ":" + std::to_string(line_no) +
                                  ": duplicate document id '" + doc.id + "'");
    docs.push_back(std::move(doc));
  });
  return docs;
}

/// Loads the expert-pre-chunked KD2 file: JSON lines of
/// {chunk_id, dimension, level, text}. Every record must carry a level.
inline std::vector<DocumentChunk> load_fine_chunks(
    const std::filesystem::path& path) {
  std::vector<DocumentChunk> chunks;
  std::set<std::string> seen;
  detail::for_each_jsonl(path, [&](std::size_t line_no,
                                   const nlohmann::json& record) {
    DocumentChunk chunk;
    chunk.chunk_id = detail::require_string(record, "chunk_id", path, line_no);
    chunk.index_kind = IndexKind::KD2;
    chunk.dimension =
        parse_dimension(detail::require_string(record, "dimension", path, line_no));
    if (!record.contains("level") || record["level"].is_null())
      fail(Errc::MissingLevel, path.string() + ":" + std::to_string(line_no) +
                                   ": record '" + chunk.chunk_id +
                                   "' has no level");
    chunk.level = detail::require_int(record, "level", path, line_no);
    chunk.text = detail::require_string(record, "text", path, line_no);
    if (record.contains("source_name") && record["source_name"].is_string())
      chunk.source_name = record["source_name"].get<std::string>();
    chunk.token_count = count_tokens(chunk.text);
    if (!seen.insert(chunk.chunk_id).second)
      fail(Errc::DuplicateId, path.string() + ":" + std::to_string(line_no) +
                                  ": duplicate chunk_id '" + chunk.chunk_id + "'");
    chunks.push_back(std::move(chunk));
  });
  return chunks;
}

/// Loads whole exemplars: JSON lines of
/// {exemplar_id, task, dimension, response_text, rationale, score}.
/// Scores are validated against the configured scheme for (task, dimension).
inline std::vector<Exemplar> load_exemplars(const std::filesystem::path& path,
                                            const SchemeTable& schemes) {
  std::vector<Exemplar> exemplars;
  std::set<std::string> seen;
  detail::for_each_jsonl(path, [&](std::size_t line_no,
                                   const nlohmann::json& record) {
    Exemplar e;
    e.exemplar_id = detail::require_string(record, "exemplar_id", path, line_no);
    e.task = detail::require_string(record, "task", path, line_no);
    e.dimension =
        parse_dimension(detail::require_string(record, "dimension", path, line_no));
    e.response_text = detail::require_string(record, "response_text", path, line_no);
    e.rationale = detail::require_string(record, "rationale", path, line_no);
    e.score = detail::require_int(record, "score", path, line_no);
    const ScoreScheme& scheme = scheme_for(schemes, e.task, e.dimension);
    if (!scheme.contains(e.score))
      fail(Errc::InvalidScore, path.string() + ":" + std::to_string(line_no) +
                                   ": exemplar '" + e.exemplar_id + "' score " +
                                   std::to_string(e.score) +
                                   " outside scheme for " + e.task + "/" +
                                   to_string(e.dimension));
    if (!seen.insert(e.exemplar_id).second)
      fail(Errc::DuplicateId, path.string() + ":" + std::to_string(line_no) +
                                  ": duplicate exemplar_id '" + e.exemplar_id + "'");
    exemplars.push_back(std::move(e));
  });
  return exemplars;
}

}  // namespace graderag
