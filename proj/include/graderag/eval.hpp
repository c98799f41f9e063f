#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "graderag/corpus.hpp"
#include "graderag/types.hpp"

namespace graderag {

struct ConfusionMatrix {
  ScoreScheme scheme;
  std::vector<std::vector<std::size_t>> counts;  // [gold index][pred index]
  std::size_t n = 0;

  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
  }
  std::size_t row_sum(std::size_t i) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) s += counts[i][j];
    return s;
  }
  std::size_t col_sum(std::size_t j) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) s += counts[i][j];
    return s;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& golds,
                                 const std::vector<int>& preds,
                                 const ScoreScheme& scheme) {
  if (golds.size() != preds.size())
    fail(Errc::LengthMismatch,
         std::to_string(golds.size()) + " golds vs " +
             std::to_string(preds.size()) + " predictions");
  if (golds.empty()) fail(Errc::EmptyMatrix, "no gold/prediction pairs");
  validate_scheme(scheme);
  ConfusionMatrix cm;
  cm.scheme = scheme;
  const std::size_t classes = scheme.num_classes();
  cm.counts.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < golds.size(); ++i)
    ++cm.counts[scheme.index_of(golds[i])][scheme.index_of(preds[i])];
  cm.n = golds.size();
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.n == 0) fail(Errc::EmptyMatrix, "accuracy of an empty matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.n);
}

/// Weighted F1 with gold-proportion weights. A class with zero gold support
/// contributes nothing; a class with P + R = 0 contributes an F1 of 0.
inline double weighted_f1(const ConfusionMatrix& cm) {
  if (cm.n == 0) fail(Errc::EmptyMatrix, "weighted F1 of an empty matrix");
  double sum = 0.0;
  for (std::size_t k = 0; k < cm.counts.size(); ++k) {
    const std::size_t support = cm.row_sum(k);
    if (support == 0) continue;
    const std::size_t predicted = cm.col_sum(k);
    const std::size_t correct = cm.counts[k][k];
    const double precision =
        predicted == 0 ? 0.0
                       : static_cast<double>(correct) /
                             static_cast<double>(predicted);
    const double recall =
        static_cast<double>(correct) / static_cast<double>(support);
    const double f1 = (precision + recall) == 0.0
                          ? 0.0
                          : 2.0 * precision * recall / (precision + recall);
    sum += (static_cast<double>(support) / static_cast<double>(cm.n)) * f1;
  }
  return sum;
}

/// Chance-corrected agreement (p_o - p_e) / (1 - p_e). When expected
/// agreement saturates (p_e = 1, both marginals on one class) the quotient
/// is 0/0; by convention perfect observed agreement scores 1 and anything
/// else scores 0.
inline double cohens_kappa(const ConfusionMatrix& cm) {
  if (cm.n == 0) fail(Errc::EmptyMatrix, "kappa of an empty matrix");
  const double n = static_cast<double>(cm.n);
  const double p_o = static_cast<double>(cm.trace()) / n;
  double p_e = 0.0;
  for (std::size_t k = 0; k < cm.counts.size(); ++k)
    p_e += (static_cast<double>(cm.row_sum(k)) / n) *
           (static_cast<double>(cm.col_sum(k)) / n);
  if (p_e >= 1.0 - 1e-12) return p_o == 1.0 ? 1.0 : 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

/// One experimental setting: the condition plus its retrieval size and shot
/// count, so a report can hold several settings of the same condition.
struct ConditionSpec {
  Condition condition = Condition::GRADERAG;
  std::size_t k = 0;
  std::size_t shots = 0;

  friend auto operator<=>(const ConditionSpec&, const ConditionSpec&) = default;
};

struct EvalKey {
  std::string task;
  ConditionSpec condition;
  Dimension dimension = Dimension::DCI;

  friend auto operator<=>(const EvalKey&, const EvalKey&) = default;
};

struct EvalCell {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double kappa = 0.0;
  ConfusionMatrix confusion;
  std::size_t n = 0;
};

struct ResponseError {
  std::string response_id;
  std::string task;
  Dimension dimension = Dimension::DCI;
  ConditionSpec condition;
  std::string message;
};

struct EvalReport {
  std::map<EvalKey, EvalCell> cells;
  std::vector<ResponseError> errors;
};

enum class ReportFormat { TEXT_TABLE, CSV, JSON };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "table") return ReportFormat::TEXT_TABLE;
  if (s == "csv") return ReportFormat::CSV;
  if (s == "json") return ReportFormat::JSON;
  fail(Errc::ConfigError, "unknown report format: " + s);
}

/// Rounds to 3 decimals, ties up, and normalizes -0.0 away.
inline double round3(double x) {
  double r = std::floor(x * 1000.0 + 0.5) / 1000.0;
  return r == 0.0 ? 0.0 : r;
}

inline std::string format_metric(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", round3(x));
  return buf;
}

namespace detail {

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

/// Settings are labeled by condition name alone unless the report holds
/// several settings of that condition, in which case k and shots are spelled
/// out to keep rows distinguishable.
inline std::map<ConditionSpec, std::string> condition_labels(
    const EvalReport& report) {
  std::map<Condition, std::set<ConditionSpec>> by_condition;
  for (const auto& [key, cell] : report.cells)
    by_condition[key.condition.condition].insert(key.condition);
  std::map<ConditionSpec, std::string> labels;
  for (const auto& [cond, specs] : by_condition)
    for (const ConditionSpec& spec : specs) {
      std::string label = condition_label(cond);
      if (specs.size() > 1)
        label += " k=" + std::to_string(spec.k) +
                 " shots=" + std::to_string(spec.shots);
      labels[spec] = label;
    }
  return labels;
}

struct ReportRow {
  std::string task;
  ConditionSpec condition;
};

inline std::vector<ReportRow> report_rows(const EvalReport& report) {
  std::vector<ReportRow> rows;
  for (const auto& [key, cell] : report.cells) {
    if (rows.empty() || rows.back().task != key.task ||
        rows.back().condition != key.condition)
      rows.push_back({key.task, key.condition});
  }
  return rows;
}

inline const EvalCell* find_cell(const EvalReport& report,
                                 const ReportRow& row, Dimension dim) {
  auto it = report.cells.find({row.task, row.condition, dim});
  return it == report.cells.end() ? nullptr : &it->second;
}

inline double metric_of(const EvalCell& cell, int metric) {
  switch (metric) {
    case 0: return cell.accuracy;
    case 1: return cell.weighted_f1;
    default: return cell.kappa;
  }
}

inline const char* metric_title(int metric) {
  switch (metric) {
    case 0: return "Accuracy";
    case 1: return "Weighted F1";
    default: return "Cohen's Kappa";
  }
}

inline const char* metric_slug(int metric) {
  switch (metric) {
    case 0: return "accuracy";
    case 1: return "weighted_f1";
    default: return "kappa";
  }
}

}  // namespace detail

/// Renders the three-section layout: Accuracy, Weighted F1, Cohen's Kappa,
/// each with one row per (task, setting) and one column per dimension.
/// Cells without data print "-".
inline std::string render_report(const EvalReport& report,
                                 ReportFormat format) {
  if (report.cells.empty()) fail(Errc::EmptyMatrix, "report has no cells");
  const auto labels = detail::condition_labels(report);
  const auto rows = detail::report_rows(report);
  const std::vector<Dimension> dims = gradable_dimensions();

  if (format == ReportFormat::JSON) {
    nlohmann::ordered_json root;
    root["sections"] = nlohmann::ordered_json::array();
    for (int metric = 0; metric < 3; ++metric) {
      nlohmann::ordered_json section;
      section["metric"] = detail::metric_slug(metric);
      section["rows"] = nlohmann::ordered_json::array();
      for (const auto& row : rows) {
        nlohmann::ordered_json r;
        r["task"] = row.task;
        r["condition"] = labels.at(row.condition);
        for (Dimension dim : dims) {
          const EvalCell* cell = detail::find_cell(report, row, dim);
          if (cell)
            r[to_string(dim)] = round3(detail::metric_of(*cell, metric));
          else
            r[to_string(dim)] = nullptr;
        }
        section["rows"].push_back(std::move(r));
      }
      root["sections"].push_back(std::move(section));
    }
    root["errors"] = nlohmann::ordered_json::array();
    for (const ResponseError& e : report.errors)
      root["errors"].push_back({{"response_id", e.response_id},
                                {"task", e.task},
                                {"dimension", to_string(e.dimension)},
                                {"condition", labels.count(e.condition)
                                                  ? labels.at(e.condition)
                                                  : condition_label(
                                                        e.condition.condition)},
                                {"message", e.message}});
    return root.dump(2) + "\n";
  }

  if (format == ReportFormat::CSV) {
    std::string out = "metric,task,condition,DCI,SEP,CCC\n";
    for (int metric = 0; metric < 3; ++metric)
      for (const auto& row : rows) {
        out += std::string(detail::metric_slug(metric)) + "," + row.task +
               "," + labels.at(row.condition);
        for (Dimension dim : dims) {
          const EvalCell* cell = detail::find_cell(report, row, dim);
          out += ",";
          if (cell) out += format_metric(detail::metric_of(*cell, metric));
        }
        out += "\n";
      }
    return out;
  }

  std::size_t task_w = 4, cond_w = 9;
  for (const auto& row : rows) {
    task_w = std::max(task_w, row.task.size());
    cond_w = std::max(cond_w, labels.at(row.condition).size());
  }
  const std::size_t value_w = 6;
  std::string out;
  for (int metric = 0; metric < 3; ++metric) {
    if (metric > 0) out += "\n";
    out += std::string("== ") + detail::metric_title(metric) + " ==\n";
    out += detail::pad_right("Task", task_w) + "  " +
           detail::pad_right("Condition", cond_w);
    for (Dimension dim : dims)
      out += "  " + detail::pad_left(to_string(dim), value_w);
    out += "\n";
    for (const auto& row : rows) {
      out += detail::pad_right(row.task, task_w) + "  " +
             detail::pad_right(labels.at(row.condition), cond_w);
      for (Dimension dim : dims) {
        const EvalCell* cell = detail::find_cell(report, row, dim);
        out += "  " + detail::pad_left(
                          cell ? format_metric(detail::metric_of(*cell, metric))
                               : "-",
                          value_w);
      }
      out += "\n";
    }
  }
  if (!report.errors.empty()) {
    out += "\n== Errors ==\n";
    for (const ResponseError& e : report.errors)
      out += e.response_id + " " + e.task + " " + to_string(e.dimension) +
             " " + condition_label(e.condition.condition) + ": " + e.message +
             "\n";
  }
  return out;
}

struct PredictionRecord {
  std::string response_id;
  std::string task;
  Dimension dimension = Dimension::DCI;
  int gold = 0;
  int pred = 0;
  ConditionSpec condition;
};

inline void write_predictions(const std::vector<PredictionRecord>& records,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot open for writing: " + path);
  for (const PredictionRecord& r : records) {
    nlohmann::ordered_json j = {
        {"response_id", r.response_id},
        {"task", r.task},
        {"dimension", to_string(r.dimension)},
        {"gold", r.gold},
        {"pred", r.pred},
        {"condition", r.condition.condition == Condition::NONRAG ? "nonrag"
                                                                 : "graderag"},
        {"k", r.condition.k},
        {"shots", r.condition.shots}};
    out << j.dump() << "\n";
  }
  if (!out) fail(Errc::IoError, "write failed: " + path);
}

inline std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::vector<PredictionRecord> records;
  detail::for_each_jsonl(path, [&](std::size_t line_no,
                                   const nlohmann::json& j) {
    const std::string where = path + ":" + std::to_string(line_no);
    PredictionRecord r;
    r.response_id = detail::require_string(j, "response_id", where);
    r.task = detail::require_string(j, "task", where);
    r.dimension = parse_dimension(detail::require_string(j, "dimension", where));
    r.gold = detail::require_int(j, "gold", where);
    r.pred = detail::require_int(j, "pred", where);
    r.condition.condition =
        parse_condition(detail::require_string(j, "condition", where));
    r.condition.k = static_cast<std::size_t>(detail::require_int(j, "k", where));
    r.condition.shots =
        static_cast<std::size_t>(detail::require_int(j, "shots", where));
    records.push_back(std::move(r));
  });
  return records;
}

/// Groups predictions by (task, setting, dimension) and computes all three
/// metrics per group.
inline EvalReport report_from_predictions(
    const std::vector<PredictionRecord>& records, const SchemeTable& schemes) {
  std::map<EvalKey, std::pair<std::vector<int>, std::vector<int>>> groups;
  for (const PredictionRecord& r : records) {
    auto& [golds, preds] = groups[{r.task, r.condition, r.dimension}];
    golds.push_back(r.gold);
    preds.push_back(r.pred);
  }
  EvalReport report;
  for (auto& [key, pair] : groups) {
    const ScoreScheme& scheme = scheme_for(schemes, key.task, key.dimension);
    EvalCell cell;
    cell.confusion = confusion(pair.first, pair.second, scheme);
    cell.accuracy = accuracy(cell.confusion);
    cell.weighted_f1 = weighted_f1(cell.confusion);
    cell.kappa = cohens_kappa(cell.confusion);
    cell.n = cell.confusion.n;
    report.cells.emplace(key, std::move(cell));
  }
  return report;
}

}  // namespace graderag
