#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "graderag/config.hpp"
#include "graderag/corpus.hpp"
#include "graderag/eval.hpp"
#include "graderag/grade.hpp"
#include "graderag/index.hpp"
#include "graderag/retrieve.hpp"
#include "graderag/types.hpp"

namespace graderag {

/// One dataset record: the response text plus whatever gold labels exist.
/// A dimension without a gold label is excluded from that cell's metrics.
struct DatasetRow {
  std::string response_id;
  std::string task;
  std::string text;
  std::map<Dimension, int> gold;
};

inline std::vector<DatasetRow> load_dataset(const std::string& path) {
  if (!std::filesystem::exists(path))
    fail(Errc::DatasetNotFound, "dataset not found: " + path);
  std::vector<DatasetRow> rows;
  std::set<std::string> seen;
  detail::for_each_jsonl(path, [&](std::size_t line_no,
                                   const nlohmann::json& j) {
    const std::string where = path + ":" + std::to_string(line_no);
    DatasetRow row;
    row.response_id = detail::require_string(j, "response_id", where);
    row.task = detail::require_string(j, "task", where);
    row.text = detail::require_string(j, "text", where);
    if (j.contains("gold")) {
      if (!j["gold"].is_object())
        fail(Errc::ParseError, where + ": field 'gold' must be an object");
      for (const auto& [name, value] : j["gold"].items()) {
        if (!value.is_number_integer())
          fail(Errc::ParseError,
               where + ": gold." + name + " must be an integer");
        row.gold[parse_dimension(name)] = value.get<int>();
      }
    }
    if (!seen.insert(row.response_id).second)
      fail(Errc::DuplicateId,
           where + ": duplicate response_id '" + row.response_id + "'");
    rows.push_back(std::move(row));
  });
  return rows;
}

/// Owns the three indices, the LLM client, and the derived lookup tables.
/// build() embeds the bundled corpus in memory; load() reads previously
/// persisted indices from the configured index directory.
class Engine {
 public:
  static Engine build(EngineConfig cfg) {
    Engine engine(std::move(cfg));
    std::vector<DocumentChunk> coarse;
    for (const SourceDocument& doc :
         load_manifest(engine.cfg_.paths.corpus_manifest)) {
      std::vector<DocumentChunk> chunks = chunk_document(doc);
      coarse.insert(coarse.end(), std::make_move_iterator(chunks.begin()),
                    std::make_move_iterator(chunks.end()));
    }
    engine.kd1_ = build_index(IndexKind::KD1, coarse, engine.cfg_.embedding);
    engine.kd2_ =
        build_index(IndexKind::KD2, load_fine_chunks(engine.cfg_.paths.fine_chunks),
                    engine.cfg_.embedding);
    engine.ke_ = build_index(
        load_exemplars(engine.cfg_.paths.exemplars, engine.schemes_),
        engine.cfg_.embedding);
    return engine;
  }

  static Engine load(EngineConfig cfg) {
    Engine engine(std::move(cfg));
    engine.kd1_ = load_index(engine.require_index_path("kd1"));
    engine.kd2_ = load_index(engine.require_index_path("kd2"));
    engine.ke_ = load_index(engine.require_index_path("ke"));
    return engine;
  }

  void save_indices() const {
    if (!kd1_ || !kd2_ || !ke_)
      fail(Errc::IndexNotBuilt, "no indices to persist");
    std::filesystem::create_directories(cfg_.paths.index_dir);
    save_index(*kd1_, index_path("kd1"));
    save_index(*kd2_, index_path("kd2"));
    save_index(*ke_, index_path("ke"));
  }

  const EngineConfig& config() const { return cfg_; }
  const SchemeTable& schemes() const { return schemes_; }
  const LlmClient& llm() const { return *llm_; }
  const VectorIndex& kd1() const { return require(kd1_, "kd1"); }
  const VectorIndex& kd2() const { return require(kd2_, "kd2"); }
  const VectorIndex& ke() const { return require(ke_, "ke"); }

  RetrievalContext retrieval() const {
    RetrievalContext ctx;
    ctx.kd1 = kd1_ ? &*kd1_ : nullptr;
    ctx.kd2 = kd2_ ? &*kd2_ : nullptr;
    ctx.ke = ke_ ? &*ke_ : nullptr;
    ctx.provider = cfg_.embedding;
    ctx.lexicon = cfg_.lexicon;
    ctx.weights = cfg_.weights;
    ctx.task_levels = task_levels_;
    return ctx;
  }

  GradeResult grade_one(const GradeRequest& req) const {
    const ScoreScheme& scheme = scheme_for(schemes_, req.task, req.dimension);
    return grade(req, cfg_.prompt_spec(req.task, req.dimension), scheme,
                 retrieval(), *llm_);
  }

 private:
  explicit Engine(EngineConfig cfg) : cfg_(std::move(cfg)) {
    validate_config(cfg_);
    schemes_ = cfg_.schemes();
    task_levels_ = cfg_.task_levels();
    llm_ = make_llm_client(cfg_.llm);
  }

  std::string index_path(const char* stem) const {
    return (std::filesystem::path(cfg_.paths.index_dir) /
            (std::string(stem) + ".jsonl"))
        .string();
  }

  std::string require_index_path(const char* stem) const {
    std::string path = index_path(stem);
    if (!std::filesystem::exists(path))
      fail(Errc::IndexNotBuilt,
           "index not built: " + path + " (run the index command first)");
    return path;
  }

  static const VectorIndex& require(const std::optional<VectorIndex>& idx,
                                    const char* stem) {
    if (!idx) fail(Errc::IndexNotBuilt, std::string("index not built: ") + stem);
    return *idx;
  }

  EngineConfig cfg_;
  SchemeTable schemes_;
  TaskLevelMap task_levels_;
  std::unique_ptr<LlmClient> llm_;
  std::optional<VectorIndex> kd1_;
  std::optional<VectorIndex> kd2_;
  std::optional<VectorIndex> ke_;
};

struct ExperimentSpec {
  std::string dataset_path;  // empty: the config's bundled dataset
  std::vector<ConditionSpec> conditions;
  std::vector<std::string> tasks;     // empty: every configured task
  std::vector<Dimension> dimensions;  // empty: every gradable dimension
};

struct ExperimentResult {
  EvalReport report;
  std::vector<PredictionRecord> predictions;
};

/// Grades every (response, dimension) under each condition and aggregates
/// metrics per (task, condition, dimension). Responses are graded in
/// parallel up to the LLM provider's max_parallel; failures are recorded
/// per response instead of aborting the batch. Output order is fixed:
/// (task, condition, dimension, response_id).
inline ExperimentResult run_experiment(const Engine& engine,
                                       const ExperimentSpec& spec) {
  if (spec.conditions.empty())
    fail(Errc::ConfigError, "experiment needs at least one condition");
  const std::string dataset_path =
      spec.dataset_path.empty() ? engine.config().paths.dataset
                                : spec.dataset_path;
  const std::vector<DatasetRow> rows = load_dataset(dataset_path);
  const std::vector<Dimension>& dims =
      spec.dimensions.empty() ? gradable_dimensions() : spec.dimensions;

  struct WorkItem {
    ConditionSpec condition;
    const DatasetRow* row = nullptr;
    Dimension dimension = Dimension::DCI;
    int gold = 0;
  };
  std::vector<WorkItem> items;
  for (const ConditionSpec& cond : spec.conditions)
    for (const DatasetRow& row : rows) {
      if (!spec.tasks.empty() &&
          std::find(spec.tasks.begin(), spec.tasks.end(), row.task) ==
              spec.tasks.end())
        continue;
      for (Dimension dim : dims) {
        auto gold = row.gold.find(dim);
        if (gold == row.gold.end()) {
          std::cerr << "warning: response " << row.response_id
                    << " has no gold " << to_string(dim)
                    << " label; excluded from that cell\n";
          continue;
        }
        items.push_back({cond, &row, dim, gold->second});
      }
    }

  const RetrievalContext retrieval = engine.retrieval();
  std::vector<std::optional<PredictionRecord>> results(items.size());
  std::vector<std::optional<ResponseError>> failures(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      const WorkItem& item = items[i];
      try {
        const ScoreScheme& scheme =
            scheme_for(engine.schemes(), item.row->task, item.dimension);
        if (!scheme.contains(item.gold))
          fail(Errc::InvalidScore,
               "gold score " + std::to_string(item.gold) +
                   " outside scheme for " + item.row->task + "/" +
                   to_string(item.dimension));
        GradeRequest req;
        req.response = {item.row->response_id, item.row->task, item.row->text};
        req.task = item.row->task;
        req.dimension = item.dimension;
        req.condition = item.condition.condition;
        req.k = item.condition.k;
        req.shots = item.condition.shots == kAutoShots ? shot_count(scheme)
                                                       : item.condition.shots;
        const GradeResult graded =
            grade(req, engine.config().prompt_spec(item.row->task, item.dimension),
                  scheme, retrieval, engine.llm());
        PredictionRecord rec;
        rec.response_id = item.row->response_id;
        rec.task = item.row->task;
        rec.dimension = item.dimension;
        rec.gold = item.gold;
        rec.pred = graded.score;
        rec.condition = {item.condition.condition, graded.k, graded.shots};
        results[i] = std::move(rec);
      } catch (const std::exception& e) {
        failures[i] = ResponseError{item.row->response_id, item.row->task,
                                    item.dimension, item.condition, e.what()};
      }
    }
  };
  const std::size_t worker_count = std::min(
      items.size(),
      static_cast<std::size_t>(std::max(1, engine.config().llm.max_parallel)));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < worker_count; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();

  ExperimentResult out;
  std::vector<ResponseError> errors;
  for (auto& r : results)
    if (r) out.predictions.push_back(std::move(*r));
  for (auto& e : failures)
    if (e) errors.push_back(std::move(*e));
  std::sort(out.predictions.begin(), out.predictions.end(),
            [](const PredictionRecord& a, const PredictionRecord& b) {
              return std::tie(a.task, a.condition, a.dimension, a.response_id) <
                     std::tie(b.task, b.condition, b.dimension, b.response_id);
            });
  std::sort(errors.begin(), errors.end(),
            [](const ResponseError& a, const ResponseError& b) {
              return std::tie(a.task, a.condition, a.dimension, a.response_id) <
                     std::tie(b.task, b.condition, b.dimension, b.response_id);
            });
  if (!out.predictions.empty())
    out.report = report_from_predictions(out.predictions, engine.schemes());
  out.report.errors = std::move(errors);
  return out;
}

struct AblationSpec {
  std::string dataset_path;  // empty: the config's bundled dataset
  std::vector<std::size_t> k_values;     // empty: config ablation axis
  std::vector<std::size_t> shot_values;  // empty: config ablation axis
  std::vector<std::string> tasks;
  std::vector<Dimension> dimensions;
};

struct AblationCell {
  std::size_t k = 0;
  std::size_t shots = 0;
  std::map<Dimension, double> accuracy;  // pooled over tasks
  std::map<Dimension, std::size_t> n;
  bool failed = false;
  std::string error;
};

struct AblationGrid {
  std::vector<std::size_t> k_values;
  std::vector<std::size_t> shot_values;
  std::vector<AblationCell> cells;  // k outer, shots inner
};

/// Sweeps the full Cartesian (k, shots) grid under the retrieval-augmented
/// condition. A cell that fails outright is kept in the grid with its error
/// message so the sweep output always covers every requested cell.
inline AblationGrid ablate(const Engine& engine, const AblationSpec& spec) {
  AblationGrid grid;
  grid.k_values = spec.k_values.empty() ? engine.config().ablation.k_values
                                        : spec.k_values;
  grid.shot_values = spec.shot_values.empty()
                         ? engine.config().ablation.shot_values
                         : spec.shot_values;
  if (grid.k_values.empty() || grid.shot_values.empty())
    fail(Errc::ConfigError, "ablation axes must be non-empty");
  for (std::size_t k : grid.k_values)
    for (std::size_t shots : grid.shot_values) {
      AblationCell cell;
      cell.k = k;
      cell.shots = shots;
      try {
        ExperimentSpec es;
        es.dataset_path = spec.dataset_path;
        es.conditions = {{Condition::GRADERAG, k, shots}};
        es.tasks = spec.tasks;
        es.dimensions = spec.dimensions;
        const ExperimentResult result = run_experiment(engine, es);
        std::map<Dimension, std::pair<std::size_t, std::size_t>> agg;
        for (const PredictionRecord& rec : result.predictions) {
          auto& [correct, total] = agg[rec.dimension];
          ++total;
          if (rec.gold == rec.pred) ++correct;
        }
        for (const auto& [dim, counts] : agg) {
          cell.accuracy[dim] = static_cast<double>(counts.first) /
                               static_cast<double>(counts.second);
          cell.n[dim] = counts.second;
        }
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      grid.cells.push_back(std::move(cell));
    }
  return grid;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace detail

/// One CSV row per grid cell: k, shots, pooled accuracy per dimension, and
/// the error message for failed cells.
inline std::string ablation_csv(const AblationGrid& grid) {
  std::string out = "k,shots,DCI,SEP,CCC,error\n";
  for (const AblationCell& cell : grid.cells) {
    out += std::to_string(cell.k) + "," + std::to_string(cell.shots);
    for (Dimension dim : gradable_dimensions()) {
      out += ",";
      auto it = cell.accuracy.find(dim);
      if (it != cell.accuracy.end()) out += format_metric(it->second);
    }
    out += "," + detail::csv_quote(cell.error) + "\n";
  }
  return out;
}

}  // namespace graderag
