#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace graderag {

/// NGSS assessment dimension of a record. GENERAL marks corpus documents
/// that are not tied to a single dimension.
enum class Dimension { DCI, SEP, CCC, GENERAL };

/// Which of the three indices a record belongs to: auto-chunked general
/// documents (KD1), expert-pre-chunked rubric segments (KD2), or whole
/// graded exemplars (KE).
enum class IndexKind { KD1, KD2, KE };

/// Experiment condition: rubric-only prompt (NONRAG) or retrieval-augmented
/// prompt (GRADERAG).
enum class Condition { NONRAG, GRADERAG };

enum class Errc {
  ParseError,
  DuplicateId,
  MissingLevel,
  InvalidScore,
  EmptyDocument,
  DimensionMismatch,
  ProviderUnavailable,
  ProviderRejected,
  UnknownTaskDimension,
  InvalidClassCount,
  NoScoreFound,
  LengthMismatch,
  EmptyMatrix,
  InsufficientExemplars,
  DatasetNotFound,
  IndexNotBuilt,
  ConfigError,
  IoError,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline const char* to_string(Dimension d) {
  switch (d) {
    case Dimension::DCI: return "DCI";
    case Dimension::SEP: return "SEP";
    case Dimension::CCC: return "CCC";
    case Dimension::GENERAL: return "GENERAL";
  }
  return "?";
}

inline Dimension parse_dimension(const std::string& s) {
  if (s == "DCI") return Dimension::DCI;
  if (s == "SEP") return Dimension::SEP;
  if (s == "CCC") return Dimension::CCC;
  if (s == "GENERAL") return Dimension::GENERAL;
  fail(Errc::ParseError, "unknown dimension: '" + s + "'");
}

/// The three gradable dimensions, in reporting order.
inline const std::vector<Dimension>& gradable_dimensions() {
  static const std::vector<Dimension> dims = {Dimension::DCI, Dimension::SEP,
                                              Dimension::CCC};
  return dims;
}

inline const char* to_string(IndexKind k) {
  switch (k) {
    case IndexKind::KD1: return "KD1";
    case IndexKind::KD2: return "KD2";
    case IndexKind::KE: return "KE";
  }
  return "?";
}

inline IndexKind parse_index_kind(const std::string& s) {
  if (s == "KD1") return IndexKind::KD1;
  if (s == "KD2") return IndexKind::KD2;
  if (s == "KE") return IndexKind::KE;
  fail(Errc::ParseError, "unknown index kind: '" + s + "'");
}

/// Machine-facing condition name, as used in files and CLI flags.
inline const char* to_string(Condition c) {
  return c == Condition::NONRAG ? "nonrag" : "graderag";
}

/// Human-facing condition name, as used in rendered reports.
inline const char* condition_label(Condition c) {
  return c == Condition::NONRAG ? "NonRAG" : "GradeRAG";
}

inline Condition parse_condition(const std::string& s) {
  if (s == "nonrag") return Condition::NONRAG;
  if (s == "graderag") return Condition::GRADERAG;
  fail(Errc::ParseError, "unknown condition: '" + s + "'");
}

/// One raw input document for the auto-chunked index (KD1).
struct SourceDocument {
  std::string id;
  std::string source_name;
  Dimension dimension = Dimension::GENERAL;
  std::string text;
};

/// One retrievable unit of KD1 or KD2.
struct DocumentChunk {
  std::string chunk_id;
  IndexKind index_kind = IndexKind::KD1;
  std::string source_name;
  Dimension dimension = Dimension::GENERAL;
  std::optional<int> level;  // present iff index_kind == KD2
  std::string text;
  std::size_t token_count = 0;
};

/// Expert-graded (response, rationale, score) triple. Always kept whole.
struct Exemplar {
  std::string exemplar_id;
  std::string task;
  Dimension dimension = Dimension::DCI;
  std::string response_text;
  std::string rationale;
  int score = 0;
};

struct StudentResponse {
  std::string response_id;
  std::string task;
  std::string text;
};

/// Valid score levels for one (task, dimension), sorted ascending.
struct ScoreScheme {
  std::string task;
  Dimension dimension = Dimension::DCI;
  std::vector<int> levels;

  bool contains(int v) const {
    return std::find(levels.begin(), levels.end(), v) != levels.end();
  }

  std::size_t index_of(int v) const {
    auto it = std::find(levels.begin(), levels.end(), v);
    if (it == levels.end())
      fail(Errc::InvalidScore, "score " + std::to_string(v) +
                                   " not in scheme for " + task + "/" +
                                   to_string(dimension));
    return static_cast<std::size_t>(it - levels.begin());
  }

  std::size_t num_classes() const { return levels.size(); }
};

inline void validate_scheme(const ScoreScheme& s) {
  if (s.levels.size() < 2)
    fail(Errc::ConfigError, "score scheme for " + s.task + "/" +
                                to_string(s.dimension) +
                                " needs at least 2 levels");
  if (!std::is_sorted(s.levels.begin(), s.levels.end()) ||
      std::adjacent_find(s.levels.begin(), s.levels.end()) != s.levels.end())
    fail(Errc::ConfigError, "score scheme levels for " + s.task + "/" +
                                to_string(s.dimension) +
                                " must be strictly ascending");
}

using TaskDimension = std::pair<std::string, Dimension>;
using SchemeTable = std::map<TaskDimension, ScoreScheme>;

inline const ScoreScheme& scheme_for(const SchemeTable& table,
                                     const std::string& task, Dimension dim) {
  auto it = table.find({task, dim});
  if (it == table.end())
    fail(Errc::UnknownTaskDimension,
         "no score scheme configured for (" + task + ", " + to_string(dim) + ")");
  return it->second;
}

/// Outcome of grading one (response, dimension) pair.
struct GradeResult {
  std::string response_id;
  Dimension dimension = Dimension::DCI;
  int score = 0;
  std::string rationale;
  std::string prompt_fingerprint;
  Condition condition = Condition::NONRAG;
  std::size_t shots = 0;
  std::size_t k = 0;
};

}  // namespace graderag
