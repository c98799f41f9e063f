#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "graderag/index.hpp"
#include "graderag/text.hpp"
#include "graderag/types.hpp"

namespace graderag {

/// Weights for combining the three rerank signals. Must be non-negative and
/// sum to 1 within a small tolerance.
struct RerankWeights {
  double semantic = 0.4;
  double lexical = 0.3;
  double conceptual = 0.3;
};

inline void validate_weights(const RerankWeights& w) {
  if (w.semantic < 0.0 || w.lexical < 0.0 || w.conceptual < 0.0)
    fail(Errc::ConfigError, "rerank weights must be non-negative");
  double sum = w.semantic + w.lexical + w.conceptual;
  if (std::abs(sum - 1.0) > 1e-9)
    fail(Errc::ConfigError,
         "rerank weights must sum to 1, got " + std::to_string(sum));
}

/// Domain phrases whose presence in a chunk signals concept coverage.
/// Phrases are kept lowercase, trimmed, and deduplicated.
struct ConceptLexicon {
  std::vector<std::string> phrases;

  static ConceptLexicon defaults() {
    return {{"properties", "substances", "chemical reactions", "identifications"}};
  }

  static ConceptLexicon from_phrases(const std::vector<std::string>& raw) {
    ConceptLexicon lexicon;
    std::set<std::string> seen;
    for (const std::string& phrase : raw) {
      std::string norm = to_lower(normalize_whitespace(phrase));
      if (norm.empty()) continue;
      if (seen.insert(norm).second) lexicon.phrases.push_back(std::move(norm));
    }
    return lexicon;
  }
};

/// Maps (task, dimension) to the fine-chunk levels relevant for that pair.
using TaskLevelMap = std::map<TaskDimension, std::vector<int>>;

inline const std::vector<int>& levels_for(const TaskLevelMap& map,
                                          const std::string& task,
                                          Dimension dimension) {
  auto it = map.find({task, dimension});
  if (it == map.end())
    fail(Errc::UnknownTaskDimension,
         "no level mapping for task " + task + " dimension " +
             to_string(dimension));
  return it->second;
}

/// Jaccard similarity of the lowercased, punctuation-stripped word sets.
/// If either side has no words the overlap is 0.
inline double lexical_overlap(std::string_view query, std::string_view chunk) {
  std::vector<std::string> q = word_tokens(query);
  std::vector<std::string> c = word_tokens(chunk);
  std::set<std::string> qs(q.begin(), q.end());
  std::set<std::string> cs(c.begin(), c.end());
  if (qs.empty() || cs.empty()) return 0.0;
  std::size_t inter = 0;
  for (const std::string& w : qs) inter += cs.count(w);
  std::size_t uni = qs.size() + cs.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Fraction of lexicon phrases present in the chunk as whole-word matches.
/// An empty lexicon scores 0 for every chunk.
inline double concept_coverage(std::string_view chunk,
                               const ConceptLexicon& lexicon) {
  if (lexicon.phrases.empty()) return 0.0;
  std::size_t hits = 0;
  for (const std::string& phrase : lexicon.phrases)
    if (contains_phrase(chunk, phrase)) ++hits;
  return static_cast<double>(hits) /
         static_cast<double>(lexicon.phrases.size());
}

inline double combine_scores(double semantic, double lexical, double conceptual,
                             const RerankWeights& w) {
  double sem = std::max(0.0, semantic);
  return w.semantic * sem + w.lexical * lexical + w.conceptual * conceptual;
}

struct RankedChunk {
  std::string chunk_id;
  IndexKind index_kind = IndexKind::KD1;
  std::string text;
  double semantic = 0.0;
  double lexical = 0.0;
  double conceptual = 0.0;
  double combined = 0.0;
};

/// Candidate pool: over-fetch from each index so reranking has room to
/// reorder before the final cut.
inline std::size_t pool_size(std::size_t k) { return std::max(4 * k, std::size_t{16}); }

/// Scores each hit on all three signals and sorts by combined score
/// descending, then ascending chunk_id.
inline std::vector<RankedChunk> rerank(const std::string& query,
                                       const std::vector<ScoredHit>& hits,
                                       const ConceptLexicon& lexicon,
                                       const RerankWeights& weights = {}) {
  validate_weights(weights);
  std::vector<RankedChunk> ranked;
  ranked.reserve(hits.size());
  for (const ScoredHit& hit : hits) {
    RankedChunk rc;
    rc.chunk_id = hit.record_id;
    rc.index_kind = hit.metadata.index_kind.value_or(IndexKind::KD1);
    rc.text = hit.metadata.text;
    rc.semantic = hit.score;
    rc.lexical = lexical_overlap(query, hit.metadata.text);
    rc.conceptual = concept_coverage(hit.metadata.text, lexicon);
    rc.combined = combine_scores(rc.semantic, rc.lexical, rc.conceptual, weights);
    ranked.push_back(std::move(rc));
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const RankedChunk& a, const RankedChunk& b) {
              if (a.combined != b.combined) return a.combined > b.combined;
              return a.chunk_id < b.chunk_id;
            });
  return ranked;
}

struct RetrievalContext {
  const VectorIndex* kd1 = nullptr;
  const VectorIndex* kd2 = nullptr;
  const VectorIndex* ke = nullptr;
  EmbeddingProviderConfig provider;
  ConceptLexicon lexicon;
  RerankWeights weights;
  TaskLevelMap task_levels;
};

/// Knowledge retrieval: pools candidates from the coarse index (filtered by
/// dimension) and the fine index (filtered by dimension and the task's
/// relevant levels), reranks the merged pool, and keeps the top k.
inline std::vector<RankedChunk> retrieve_knowledge(const RetrievalContext& ctx,
                                                   const std::string& task,
                                                   Dimension dimension,
                                                   const std::string& query,
                                                   std::size_t k) {
  if (k == 0) return {};
  if (!ctx.kd1 || !ctx.kd2)
    fail(Errc::IndexNotBuilt, "knowledge retrieval requires both chunk indices");
  const std::vector<int>& levels = levels_for(ctx.task_levels, task, dimension);
  EmbeddingVector qv = embed_text(query, ctx.provider);
  std::size_t pool = pool_size(k);

  MetadataFilter coarse;
  coarse.dimension = dimension;
  std::vector<ScoredHit> merged = ctx.kd1->search(qv, pool, coarse);

  MetadataFilter fine;
  fine.dimension = dimension;
  fine.levels = levels;
  std::vector<ScoredHit> fine_hits = ctx.kd2->search(qv, pool, fine);
  merged.insert(merged.end(), fine_hits.begin(), fine_hits.end());

  std::vector<RankedChunk> ranked = rerank(query, merged, ctx.lexicon, ctx.weights);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

/// Sentinel for "pick the shot count from the scheme" (three per level).
inline constexpr std::size_t kAutoShots = static_cast<std::size_t>(-1);

/// Demonstration budget: three examples per score level of the scheme.
inline std::size_t shot_count(const ScoreScheme& scheme) {
  std::size_t classes = scheme.num_classes();
  if (classes < 2)
    fail(Errc::InvalidClassCount,
         "score scheme needs at least 2 levels, got " + std::to_string(classes));
  return 3 * classes;
}

/// Exemplar retrieval is a plain similarity search (no reranking). A short
/// pool is reported via `insufficient` rather than raised, so callers can
/// degrade to fewer shots with a warning.
struct ExemplarRetrieval {
  std::vector<Exemplar> exemplars;
  std::size_t requested = 0;
  bool insufficient = false;
};

inline ExemplarRetrieval retrieve_exemplars(const RetrievalContext& ctx,
                                            const std::string& task,
                                            Dimension dimension,
                                            const std::string& query,
                                            std::size_t shots) {
  ExemplarRetrieval result;
  result.requested = shots;
  if (shots == 0) return result;
  if (!ctx.ke) fail(Errc::IndexNotBuilt, "exemplar retrieval requires the exemplar index");
  EmbeddingVector qv = embed_text(query, ctx.provider);
  MetadataFilter filter;
  filter.task = task;
  filter.dimension = dimension;
  std::vector<ScoredHit> hits = ctx.ke->search(qv, shots, filter);
  for (const ScoredHit& hit : hits) {
    Exemplar e;
    e.exemplar_id = hit.record_id;
    e.task = hit.metadata.task.value_or(task);
    e.dimension = hit.metadata.dimension.value_or(dimension);
    e.response_text = hit.metadata.text;
    e.rationale = hit.metadata.rationale.value_or("");
    e.score = hit.metadata.score.value_or(0);
    result.exemplars.push_back(std::move(e));
  }
  result.insufficient = result.exemplars.size() < shots;
  return result;
}

}  // namespace graderag
