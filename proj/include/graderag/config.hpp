#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "graderag/embed.hpp"
#include "graderag/grade.hpp"
#include "graderag/retrieve.hpp"
#include "graderag/types.hpp"

namespace graderag {

struct PathsConfig {
  std::string corpus_manifest;
  std::string fine_chunks;
  std::string exemplars;
  std::string index_dir;
  std::string dataset;
};

struct DefaultsConfig {
  std::size_t k = 4;
  std::size_t shots = 0;
};

struct AblationConfig {
  std::vector<std::size_t> k_values = {0, 1, 2, 3, 4};
  std::vector<std::size_t> shot_values = {0, 3, 6};
};

/// Per-(task, dimension) settings: the score levels, the fine-chunk levels
/// relevant when retrieving for this pair, and the rubric criteria text.
struct DimensionConfig {
  std::vector<int> levels;
  std::vector<int> kd2_levels;
  std::string criteria;
};

struct TaskConfig {
  std::string description;
  std::string question;
  std::map<Dimension, DimensionConfig> dimensions;
};

struct EngineConfig {
  PathsConfig paths;
  EmbeddingProviderConfig embedding;
  LlmProviderConfig llm;
  RerankWeights weights;
  ConceptLexicon lexicon = ConceptLexicon::defaults();
  DefaultsConfig defaults;
  AblationConfig ablation;
  std::map<std::string, TaskConfig> tasks;

  SchemeTable schemes() const {
    SchemeTable table;
    for (const auto& [task, tc] : tasks)
      for (const auto& [dim, dc] : tc.dimensions)
        table.emplace(TaskDimension{task, dim},
                      ScoreScheme{task, dim, dc.levels});
    return table;
  }

  TaskLevelMap task_levels() const {
    TaskLevelMap map;
    for (const auto& [task, tc] : tasks)
      for (const auto& [dim, dc] : tc.dimensions)
        map.emplace(TaskDimension{task, dim}, dc.kd2_levels);
    return map;
  }

  PromptSpec prompt_spec(const std::string& task, Dimension dimension) const {
    auto ti = tasks.find(task);
    if (ti == tasks.end())
      fail(Errc::UnknownTaskDimension, "unknown task: " + task);
    auto di = ti->second.dimensions.find(dimension);
    if (di == ti->second.dimensions.end())
      fail(Errc::UnknownTaskDimension,
           "task " + task + " has no dimension " + to_string(dimension));
    return {ti->second.description, ti->second.question, di->second.criteria};
  }
};

namespace detail {

inline const nlohmann::json& cfg_section(const nlohmann::json& j,
                                         const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j[key].is_object())
    fail(Errc::ConfigError, std::string("config field '") + key +
                                "' must be an object");
  return j[key];
}

inline std::string cfg_string(const nlohmann::json& j, const char* key,
                              const std::string& def = "") {
  if (!j.contains(key)) return def;
  if (!j[key].is_string())
    fail(Errc::ConfigError, std::string("config field '") + key +
                                "' must be a string");
  return j[key].get<std::string>();
}

inline double cfg_number(const nlohmann::json& j, const char* key, double def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number())
    fail(Errc::ConfigError, std::string("config field '") + key +
                                "' must be a number");
  return j[key].get<double>();
}

inline std::int64_t cfg_integer(const nlohmann::json& j, const char* key,
                                std::int64_t def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number_integer())
    fail(Errc::ConfigError, std::string("config field '") + key +
                                "' must be an integer");
  return j[key].get<std::int64_t>();
}

template <typename T>
std::vector<T> cfg_int_list(const nlohmann::json& j, const char* key,
                            std::vector<T> def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_array())
    fail(Errc::ConfigError, std::string("config field '") + key +
                                "' must be an array");
  std::vector<T> out;
  for (const auto& item : j[key]) {
    if (!item.is_number_integer())
      fail(Errc::ConfigError, std::string("config field '") + key +
                                  "' must hold integers");
    out.push_back(item.get<T>());
  }
  return out;
}

inline std::string resolve_path(const std::string& raw,
                                const std::filesystem::path& base) {
  if (raw.empty()) return raw;
  std::filesystem::path p(raw);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (base / p).lexically_normal().string();
}

}  // namespace detail

inline void validate_config(const EngineConfig& cfg) {
  validate_provider(cfg.embedding);
  validate_llm_provider(cfg.llm);
  validate_weights(cfg.weights);
  if (cfg.lexicon.phrases.empty())
    fail(Errc::ConfigError, "concept_lexicon must hold at least one phrase");
  if (cfg.tasks.empty()) fail(Errc::ConfigError, "config defines no tasks");
  for (const auto& [task, tc] : cfg.tasks) {
    if (tc.dimensions.empty())
      fail(Errc::ConfigError, "task " + task + " defines no dimensions");
    for (const auto& [dim, dc] : tc.dimensions)
      validate_scheme({task, dim, dc.levels});
  }
  if (cfg.ablation.k_values.empty() || cfg.ablation.shot_values.empty())
    fail(Errc::ConfigError, "ablation axes must be non-empty");
}

inline EngineConfig config_from_json(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir) {
  if (!j.is_object()) fail(Errc::ConfigError, "config root must be an object");
  EngineConfig cfg;

  const auto& paths = detail::cfg_section(j, "paths");
  cfg.paths.corpus_manifest =
      detail::resolve_path(detail::cfg_string(paths, "corpus_manifest"), base_dir);
  cfg.paths.fine_chunks =
      detail::resolve_path(detail::cfg_string(paths, "fine_chunks"), base_dir);
  cfg.paths.exemplars =
      detail::resolve_path(detail::cfg_string(paths, "exemplars"), base_dir);
  cfg.paths.index_dir =
      detail::resolve_path(detail::cfg_string(paths, "index_dir"), base_dir);
  cfg.paths.dataset =
      detail::resolve_path(detail::cfg_string(paths, "dataset"), base_dir);

  const auto& emb = detail::cfg_section(j, "embedding");
  {
    std::string kind = detail::cfg_string(emb, "kind", "local");
    if (kind == "local")
      cfg.embedding.kind = ProviderKind::LOCAL;
    else if (kind == "remote")
      cfg.embedding.kind = ProviderKind::REMOTE;
    else
      fail(Errc::ConfigError, "embedding.kind must be local or remote");
    cfg.embedding.endpoint = detail::cfg_string(emb, "endpoint");
    cfg.embedding.model_name = detail::cfg_string(emb, "model_name");
    cfg.embedding.dim = static_cast<std::size_t>(
        detail::cfg_integer(emb, "dim", static_cast<std::int64_t>(cfg.embedding.dim)));
    cfg.embedding.api_key_env = detail::cfg_string(emb, "api_key_env");
    cfg.embedding.retry_limit = static_cast<int>(
        detail::cfg_integer(emb, "retry_limit", cfg.embedding.retry_limit));
    cfg.embedding.backoff_ms = static_cast<int>(
        detail::cfg_integer(emb, "backoff_ms", cfg.embedding.backoff_ms));
    cfg.embedding.max_parallel = static_cast<int>(
        detail::cfg_integer(emb, "max_parallel", cfg.embedding.max_parallel));
  }

  const auto& llm = detail::cfg_section(j, "llm");
  {
    std::string kind = detail::cfg_string(llm, "kind", "mock");
    if (kind == "mock")
      cfg.llm.kind = LlmKind::MOCK;
    else if (kind == "remote")
      cfg.llm.kind = LlmKind::REMOTE;
    else
      fail(Errc::ConfigError, "llm.kind must be mock or remote");
    cfg.llm.endpoint = detail::cfg_string(llm, "endpoint");
    cfg.llm.model_name = detail::cfg_string(llm, "model_name");
    cfg.llm.api_key_env = detail::cfg_string(llm, "api_key_env");
    cfg.llm.temperature =
        detail::cfg_number(llm, "temperature", cfg.llm.temperature);
    cfg.llm.retry_limit = static_cast<int>(
        detail::cfg_integer(llm, "retry_limit", cfg.llm.retry_limit));
    cfg.llm.backoff_ms = static_cast<int>(
        detail::cfg_integer(llm, "backoff_ms", cfg.llm.backoff_ms));
    cfg.llm.max_parallel = static_cast<int>(
        detail::cfg_integer(llm, "max_parallel", cfg.llm.max_parallel));
    std::string mode = detail::cfg_string(llm, "mock_mode", "heuristic");
    if (mode == "heuristic")
      cfg.llm.mock_mode = MockMode::HEURISTIC;
    else if (mode == "scripted")
      cfg.llm.mock_mode = MockMode::SCRIPTED;
    else
      fail(Errc::ConfigError, "llm.mock_mode must be heuristic or scripted");
    cfg.llm.mock_script_path =
        detail::resolve_path(detail::cfg_string(llm, "mock_script"), base_dir);
    cfg.llm.mock_seed = static_cast<std::uint64_t>(
        detail::cfg_integer(llm, "mock_seed", 0));
  }

  const auto& weights = detail::cfg_section(j, "rerank_weights");
  cfg.weights.semantic =
      detail::cfg_number(weights, "semantic", cfg.weights.semantic);
  cfg.weights.lexical =
      detail::cfg_number(weights, "lexical", cfg.weights.lexical);
  cfg.weights.conceptual =
      detail::cfg_number(weights, "concept", cfg.weights.conceptual);

  if (j.contains("concept_lexicon")) {
    if (!j["concept_lexicon"].is_array())
      fail(Errc::ConfigError, "concept_lexicon must be an array of strings");
    std::vector<std::string> raw;
    for (const auto& item : j["concept_lexicon"]) {
      if (!item.is_string())
        fail(Errc::ConfigError, "concept_lexicon must hold strings");
      raw.push_back(item.get<std::string>());
    }
    cfg.lexicon = ConceptLexicon::from_phrases(raw);
  }

  const auto& defaults = detail::cfg_section(j, "defaults");
  cfg.defaults.k = static_cast<std::size_t>(detail::cfg_integer(
      defaults, "k", static_cast<std::int64_t>(cfg.defaults.k)));
  cfg.defaults.shots = static_cast<std::size_t>(detail::cfg_integer(
      defaults, "shots", static_cast<std::int64_t>(cfg.defaults.shots)));

  const auto& ablation = detail::cfg_section(j, "ablation");
  cfg.ablation.k_values = detail::cfg_int_list<std::size_t>(
      ablation, "k_values", cfg.ablation.k_values);
  cfg.ablation.shot_values = detail::cfg_int_list<std::size_t>(
      ablation, "shot_values", cfg.ablation.shot_values);

  if (!j.contains("tasks") || !j["tasks"].is_object())
    fail(Errc::ConfigError, "config requires a tasks object");
  for (const auto& [task, tj] : j["tasks"].items()) {
    if (!tj.is_object())
      fail(Errc::ConfigError, "task " + task + " must be an object");
    TaskConfig tc;
    tc.description = detail::cfg_string(tj, "description");
    tc.question = detail::cfg_string(tj, "question");
    if (!tj.contains("dimensions") || !tj["dimensions"].is_object())
      fail(Errc::ConfigError, "task " + task + " requires a dimensions object");
    for (const auto& [dim_name, dj] : tj["dimensions"].items()) {
      Dimension dim = parse_dimension(dim_name);
      DimensionConfig dc;
      dc.levels = detail::cfg_int_list<int>(dj, "levels", {});
      dc.kd2_levels = detail::cfg_int_list<int>(dj, "kd2_levels", {});
      dc.criteria = detail::cfg_string(dj, "criteria");
      tc.dimensions.emplace(dim, std::move(dc));
    }
    cfg.tasks.emplace(task, std::move(tc));
  }

  validate_config(cfg);
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const EngineConfig& cfg) {
  nlohmann::ordered_json j;
  j["paths"] = {{"corpus_manifest", cfg.paths.corpus_manifest},
                {"fine_chunks", cfg.paths.fine_chunks},
                {"exemplars", cfg.paths.exemplars},
                {"index_dir", cfg.paths.index_dir},
                {"dataset", cfg.paths.dataset}};
  j["embedding"] = {
      {"kind", cfg.embedding.kind == ProviderKind::LOCAL ? "local" : "remote"},
      {"endpoint", cfg.embedding.endpoint},
      {"model_name", cfg.embedding.model_name},
      {"dim", cfg.embedding.dim},
      {"api_key_env", cfg.embedding.api_key_env},
      {"retry_limit", cfg.embedding.retry_limit},
      {"backoff_ms", cfg.embedding.backoff_ms},
      {"max_parallel", cfg.embedding.max_parallel}};
  j["llm"] = {
      {"kind", cfg.llm.kind == LlmKind::MOCK ? "mock" : "remote"},
      {"endpoint", cfg.llm.endpoint},
      {"model_name", cfg.llm.model_name},
      {"api_key_env", cfg.llm.api_key_env},
      {"temperature", cfg.llm.temperature},
      {"retry_limit", cfg.llm.retry_limit},
      {"backoff_ms", cfg.llm.backoff_ms},
      {"max_parallel", cfg.llm.max_parallel},
      {"mock_mode",
       cfg.llm.mock_mode == MockMode::HEURISTIC ? "heuristic" : "scripted"},
      {"mock_script", cfg.llm.mock_script_path},
      {"mock_seed", cfg.llm.mock_seed}};
  j["rerank_weights"] = {{"semantic", cfg.weights.semantic},
                         {"lexical", cfg.weights.lexical},
                         {"concept", cfg.weights.conceptual}};
  j["concept_lexicon"] = cfg.lexicon.phrases;
  j["defaults"] = {{"k", cfg.defaults.k}, {"shots", cfg.defaults.shots}};
  j["ablation"] = {{"k_values", cfg.ablation.k_values},
                   {"shot_values", cfg.ablation.shot_values}};
  nlohmann::ordered_json tasks = nlohmann::ordered_json::object();
  for (const auto& [task, tc] : cfg.tasks) {
    nlohmann::ordered_json dims = nlohmann::ordered_json::object();
    for (const auto& [dim, dc] : tc.dimensions)
      dims[to_string(dim)] = {{"levels", dc.levels},
                              {"kd2_levels", dc.kd2_levels},
                              {"criteria", dc.criteria}};
    tasks[task] = {{"description", tc.description},
                   {"question", tc.question},
                   {"dimensions", std::move(dims)}};
  }
  j["tasks"] = std::move(tasks);
  return j;
}

inline EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigError, "cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, path + ": " + std::string(e.what()));
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace graderag
