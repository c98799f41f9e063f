#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "graderag/graderag.hpp"

namespace {

using namespace graderag;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::ProviderUnavailable:
    case Errc::ProviderRejected:
      return 3;
    default:
      return 2;
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot open for writing: " + path);
  out << content;
  if (!out) fail(Errc::IoError, "write failed: " + path);
}

std::string response_text_from(const std::string& text,
                               const std::string& file) {
  if (!text.empty()) return text;
  if (file.empty())
    fail(Errc::ConfigError, "provide the response via --text or --file");
  std::ifstream in(file);
  if (!in) fail(Errc::IoError, "cannot open: " + file);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t parse_shots_flag(const std::string& s) {
  if (s == "auto") return kAutoShots;
  try {
    std::size_t consumed = 0;
    long v = std::stol(s, &consumed);
    if (consumed == s.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  fail(Errc::ConfigError,
       "--shots must be a non-negative integer or 'auto', got '" + s + "'");
}

struct SharedFlags {
  std::string config_path;
  std::string task;
  std::string dimension;
  long k = -1;  // negative: use the config default
  std::string shots = "";
  std::string condition;
  std::string provider;
  std::string out;
  std::string format = "table";
  std::string dataset;
  std::string text;
  std::string file;
  std::string predictions = "predictions.jsonl";
  long seed = -1;  // negative: use the config value
};

EngineConfig load_effective_config(const SharedFlags& flags) {
  EngineConfig cfg = load_config(flags.config_path);
  if (!flags.provider.empty()) {
    if (flags.provider == "mock")
      cfg.llm.kind = LlmKind::MOCK;
    else if (flags.provider == "remote")
      cfg.llm.kind = LlmKind::REMOTE;
    else
      fail(Errc::ConfigError, "--provider must be mock or remote");
  }
  if (flags.seed >= 0)
    cfg.llm.mock_seed = static_cast<std::uint64_t>(flags.seed);
  validate_config(cfg);
  return cfg;
}

std::size_t effective_k(const SharedFlags& flags, const EngineConfig& cfg) {
  return flags.k < 0 ? cfg.defaults.k : static_cast<std::size_t>(flags.k);
}

std::size_t effective_shots(const SharedFlags& flags, const EngineConfig& cfg) {
  return flags.shots.empty() ? cfg.defaults.shots
                             : parse_shots_flag(flags.shots);
}

int cmd_index(const SharedFlags& flags) {
  EngineConfig cfg = load_effective_config(flags);
  Engine engine = Engine::build(cfg);
  engine.save_indices();
  std::printf("kd1: %zu records\n", engine.kd1().size());
  std::printf("kd2: %zu records\n", engine.kd2().size());
  std::printf("ke: %zu records\n", engine.ke().size());
  return 0;
}

int cmd_retrieve(const SharedFlags& flags) {
  EngineConfig cfg = load_effective_config(flags);
  Engine engine = Engine::load(cfg);
  const Dimension dim = parse_dimension(flags.dimension);
  const ScoreScheme& scheme = scheme_for(engine.schemes(), flags.task, dim);
  const std::string query = response_text_from(flags.text, flags.file);
  const std::size_t k = effective_k(flags, cfg);
  std::size_t shots = effective_shots(flags, cfg);
  if (shots == kAutoShots) shots = shot_count(scheme);

  const RetrievalContext ctx = engine.retrieval();
  const std::vector<RankedChunk> chunks =
      retrieve_knowledge(ctx, flags.task, dim, query, k);
  std::printf("knowledge (%zu of k=%zu):\n", chunks.size(), k);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const RankedChunk& c = chunks[i];
    std::printf("%zu. %s kind=%s combined=%.6f semantic=%.6f lexical=%.6f "
                "concept=%.6f\n",
                i + 1, c.chunk_id.c_str(), to_string(c.index_kind), c.combined,
                c.semantic, c.lexical, c.conceptual);
  }
  if (shots > 0) {
    const ExemplarRetrieval ex =
        retrieve_exemplars(ctx, flags.task, dim, query, shots);
    std::printf("exemplars (%zu of %zu):\n", ex.exemplars.size(), ex.requested);
    for (const Exemplar& e : ex.exemplars)
      std::printf("- %s score=%d\n", e.exemplar_id.c_str(), e.score);
    if (ex.insufficient)
      std::fprintf(stderr, "warning: only %zu exemplars available for %zu "
                           "requested shots\n",
                   ex.exemplars.size(), ex.requested);
  }
  return 0;
}

int cmd_grade(const SharedFlags& flags) {
  EngineConfig cfg = load_effective_config(flags);
  Engine engine = Engine::load(cfg);
  const Dimension dim = parse_dimension(flags.dimension);
  const ScoreScheme& scheme = scheme_for(engine.schemes(), flags.task, dim);

  GradeRequest req;
  req.response = {"cli", flags.task, response_text_from(flags.text, flags.file)};
  req.task = flags.task;
  req.dimension = dim;
  req.condition =
      flags.condition.empty() ? Condition::GRADERAG : parse_condition(flags.condition);
  req.k = effective_k(flags, cfg);
  req.shots = effective_shots(flags, cfg);
  if (req.shots == kAutoShots) req.shots = shot_count(scheme);

  const GradeResult result = engine.grade_one(req);
  nlohmann::ordered_json j = {{"response_id", result.response_id},
                              {"task", flags.task},
                              {"dimension", to_string(result.dimension)},
                              {"condition", to_string(result.condition)},
                              {"k", result.k},
                              {"shots", result.shots},
                              {"score", result.score},
                              {"rationale", result.rationale},
                              {"prompt_fingerprint", result.prompt_fingerprint}};
  const std::string rendered = j.dump(2) + "\n";
  std::fputs(rendered.c_str(), stdout);
  if (!flags.out.empty()) write_file(flags.out, rendered);
  return 0;
}

int cmd_eval(const SharedFlags& flags) {
  EngineConfig cfg = load_effective_config(flags);
  Engine engine = Engine::load(cfg);

  ExperimentSpec spec;
  spec.dataset_path = flags.dataset;
  if (!flags.task.empty()) spec.tasks.push_back(flags.task);
  if (!flags.dimension.empty())
    spec.dimensions.push_back(parse_dimension(flags.dimension));
  const std::size_t k = effective_k(flags, cfg);
  const std::size_t shots = effective_shots(flags, cfg);
  if (flags.condition.empty()) {
    spec.conditions.push_back({Condition::NONRAG, 0, 0});
    spec.conditions.push_back({Condition::GRADERAG, k, shots});
  } else {
    const Condition cond = parse_condition(flags.condition);
    spec.conditions.push_back(
        cond == Condition::NONRAG ? ConditionSpec{cond, 0, 0}
                                  : ConditionSpec{cond, k, shots});
  }

  const ExperimentResult result = run_experiment(engine, spec);
  write_predictions(result.predictions, flags.predictions);
  std::fprintf(stderr, "wrote %zu predictions to %s\n",
               result.predictions.size(), flags.predictions.c_str());
  const std::string rendered =
      render_report(result.report, parse_report_format(flags.format));
  std::fputs(rendered.c_str(), stdout);
  if (!flags.out.empty()) write_file(flags.out, rendered);
  return result.report.errors.empty() ? 0 : 2;
}

int cmd_ablate(const SharedFlags& flags) {
  EngineConfig cfg = load_effective_config(flags);
  Engine engine = Engine::load(cfg);

  AblationSpec spec;
  spec.dataset_path = flags.dataset;
  if (!flags.task.empty()) spec.tasks.push_back(flags.task);
  if (!flags.dimension.empty())
    spec.dimensions.push_back(parse_dimension(flags.dimension));

  const AblationGrid grid = ablate(engine, spec);
  const std::string csv = ablation_csv(grid);
  std::fputs(csv.c_str(), stdout);
  if (!flags.out.empty()) write_file(flags.out, csv);
  for (const AblationCell& cell : grid.cells)
    if (cell.failed) return 2;
  return 0;
}

void add_shared_flags(CLI::App* cmd, SharedFlags& flags, bool needs_task) {
  cmd->add_option("--config", flags.config_path, "engine config file")
      ->required();
  auto* task = cmd->add_option("--task", flags.task, "task id, e.g. Q1");
  auto* dim = cmd->add_option("--dimension", flags.dimension,
                              "dimension: DCI, SEP or CCC");
  if (needs_task) {
    task->required();
    dim->required();
  }
  cmd->add_option("--k", flags.k, "retrieved knowledge chunks");
  cmd->add_option("--shots", flags.shots,
                  "demonstration count, or 'auto' for three per level");
  cmd->add_option("--condition", flags.condition, "nonrag or graderag");
  cmd->add_option("--provider", flags.provider, "mock or remote");
  cmd->add_option("--seed", flags.seed, "mock heuristic tie-break seed");
  cmd->add_option("--out", flags.out, "write the result here as well");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented short answer grading"};
  app.require_subcommand(1);
  SharedFlags flags;

  CLI::App* index = app.add_subcommand("index", "build and persist the indices");
  index->add_option("--config", flags.config_path, "engine config file")
      ->required();

  CLI::App* retrieve =
      app.add_subcommand("retrieve", "inspect retrieval for a response");
  add_shared_flags(retrieve, flags, true);
  retrieve->add_option("--text", flags.text, "response text inline");
  retrieve->add_option("--file", flags.file, "response text from a file");

  CLI::App* grade = app.add_subcommand("grade", "grade a single response");
  add_shared_flags(grade, flags, true);
  grade->add_option("--text", flags.text, "response text inline");
  grade->add_option("--file", flags.file, "response text from a file");

  CLI::App* eval = app.add_subcommand("eval", "grade a dataset and report metrics");
  add_shared_flags(eval, flags, false);
  eval->add_option("--dataset", flags.dataset, "dataset file (default: config)");
  eval->add_option("--format", flags.format, "table, csv or json");
  eval->add_option("--predictions", flags.predictions,
                   "where to persist per-response predictions");

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "sweep the (k, shots) grid");
  add_shared_flags(ablate_cmd, flags, false);
  ablate_cmd->add_option("--dataset", flags.dataset,
                         "dataset file (default: config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(index)) return cmd_index(flags);
    if (app.got_subcommand(retrieve)) return cmd_retrieve(flags);
    if (app.got_subcommand(grade)) return cmd_grade(flags);
    if (app.got_subcommand(eval)) return cmd_eval(flags);
    return cmd_ablate(flags);
  } catch (const graderag::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
