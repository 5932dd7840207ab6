#include "moira/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moira/error.hpp"

namespace moira {
namespace {

std::size_t class_index(const std::vector<std::string>& classes, const std::string& label,
                        const char* role) {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) {
    throw Error(ErrorCode::kValidation,
                std::string(role) + " label '" + label + "' is not one of the classes");
  }
  return static_cast<std::size_t>(it - classes.begin());
}

std::optional<double> mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// Left-aligned first column, right-aligned rest.
std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) os << "  ";
      if (c == 0) {
        os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        os << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

EvalReport macro_f1(const std::vector<Prediction>& predictions,
                    const std::vector<std::string>& classes) {
  if (classes.empty()) throw Error(ErrorCode::kValidation, "no classes to evaluate");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (std::find(classes.begin(), classes.begin() + static_cast<long>(i), classes[i]) !=
        classes.begin() + static_cast<long>(i)) {
      throw Error(ErrorCode::kValidation, "duplicate class '" + classes[i] + "'");
    }
  }

  const std::size_t n = classes.size();
  EvalReport r;
  r.classes = classes;
  r.confusion.assign(n, std::vector<std::size_t>(n + 1, 0));
  for (const auto& p : predictions) {
    const auto t = class_index(classes, p.truth, "truth");
    const auto c = p.predicted ? class_index(classes, *p.predicted, "predicted") : n;
    ++r.confusion[t][c];
  }
  r.n_tasks = predictions.size();

  r.per_class.resize(n);
  double sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t tp = r.confusion[c][c];
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < n; ++k) predicted += r.confusion[k][c];
    for (std::size_t k = 0; k <= n; ++k) actual += r.confusion[c][k];
    auto& s = r.per_class[c];
    s.support = actual;
    s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    s.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    sum += s.f1;
  }
  r.macro_f1 = sum / static_cast<double>(n);
  return r;
}

EvalReport run_routing_eval(const std::vector<TaskInstruction>& tasks, Strategy strategy,
                            DescriptionStyle style, Router& router) {
  const auto experts = router.registry().snapshot();
  const auto classes = router.registry().categories();

  std::vector<Prediction> predictions;
  std::vector<EvalItem> items;
  for (const auto& task : tasks) {
    if (!task.truth_label) {
      throw Error(ErrorCode::kValidation, "task '" + task.task_id + "' has no truth_label");
    }
    EvalItem item{task.task_id, *task.truth_label, std::nullopt, std::nullopt};
    try {
      const auto d = router.route(task.text, strategy, style);
      if (!d.abstained) {
        item.expert_id = d.expert_id;
        item.predicted = experts.at(static_cast<std::size_t>(d.expert_id)).category_label;
      }
    } catch (const Error& e) {
      // Unrouted. An empty pool leaves nothing to evaluate.
      if (e.code() == ErrorCode::kEmptyPool) throw;
    }
    predictions.push_back({item.truth, item.predicted});
    items.push_back(std::move(item));
  }
  auto report = macro_f1(predictions, classes);
  report.items = std::move(items);
  return report;
}

RobustnessReport run_robustness_eval(const std::vector<PerturbationPair>& pairs,
                                     const std::vector<RoutingCondition>& conditions,
                                     Router& router, const OutcomeProbe& probe) {
  if (pairs.empty()) throw Error(ErrorCode::kValidation, "no perturbation pairs to evaluate");
  std::vector<TaskInstruction> originals;
  std::vector<TaskInstruction> rephrased;
  for (const auto& pair : pairs) {
    originals.push_back(pair.original);
    for (auto& t : pair.perturbed_tasks()) rephrased.push_back(std::move(t));
  }
  std::vector<TaskInstruction> pooled = originals;
  pooled.insert(pooled.end(), rephrased.begin(), rephrased.end());

  RobustnessReport report;
  for (const auto& cond : conditions) {
    RobustnessCondition rc;
    rc.condition = cond;
    rc.original = run_routing_eval(originals, cond.strategy, cond.style, router);
    rc.perturbed = run_routing_eval(rephrased, cond.strategy, cond.style, router);
    rc.pooled = run_routing_eval(pooled, cond.strategy, cond.style, router);
    rc.delta_macro_f1 = rc.perturbed.macro_f1 - rc.original.macro_f1;
    if (probe) {
      auto collect = [&](const std::vector<TaskInstruction>& set) {
        std::vector<double> values;
        for (const auto& t : set) {
          if (auto v = probe(t, cond.strategy, cond.style)) values.push_back(*v);
        }
        return mean(values);
      };
      rc.mean_metric_original = collect(originals);
      rc.mean_metric_perturbed = collect(rephrased);
      if (rc.mean_metric_original && rc.mean_metric_perturbed) {
        rc.delta_metric = *rc.mean_metric_perturbed - *rc.mean_metric_original;
      }
    }
    report.conditions.push_back(std::move(rc));
  }
  return report;
}

ServingReport serving_report(const std::vector<ExecutionResult>& results) {
  ServingReport r;
  r.n_tasks = results.size();
  for (const auto& res : results) {
    if (!res.ok()) ++r.n_failed;
    if (res.swap) {
      ++r.swap_count;
      r.total_swap_ms += res.swap->duration_ms;
    }
    if (res.expert_id) {
      auto& peak = r.peak_memory_by_mode[std::string(to_string(res.mode))];
      peak = std::max(peak, res.memory_used_bytes);
    }
  }
  r.amortized_ms_per_task =
      r.n_tasks ? static_cast<double>(r.total_swap_ms) / static_cast<double>(r.n_tasks) : 0.0;
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  using nlohmann::json;
  json per_class = json::array();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& s = r.per_class[c];
    per_class.push_back({{"class", r.classes[c]},
                         {"precision", s.precision},
                         {"recall", s.recall},
                         {"f1", s.f1},
                         {"support", s.support}});
  }
  json columns = r.classes;
  columns.push_back("unrouted");
  j = json{{"classes", r.classes},
           {"confusion", {{"columns", columns}, {"rows", r.confusion}}},
           {"per_class", per_class},
           {"macro_f1", r.macro_f1},
           {"n_tasks", r.n_tasks}};
  if (!r.items.empty()) {
    json items = json::array();
    for (const auto& it : r.items) {
      items.push_back({{"task_id", it.task_id},
                       {"truth", it.truth},
                       {"predicted", it.predicted ? json(*it.predicted) : json(nullptr)},
                       {"expert_id", it.expert_id ? json(*it.expert_id) : json(nullptr)}});
    }
    j["items"] = std::move(items);
  }
}

void to_json(nlohmann::json& j, const RobustnessReport& r) {
  using nlohmann::json;
  json conditions = json::array();
  for (const auto& c : r.conditions) {
    conditions.push_back({{"strategy", to_string(c.condition.strategy)},
                          {"style", to_string(c.condition.style)},
                          {"original", c.original},
                          {"perturbed", c.perturbed},
                          {"pooled_macro_f1", c.pooled.macro_f1},
                          {"delta_macro_f1", c.delta_macro_f1},
                          {"mean_metric_original", optional_json(c.mean_metric_original)},
                          {"mean_metric_perturbed", optional_json(c.mean_metric_perturbed)},
                          {"delta_metric", optional_json(c.delta_metric)}});
  }
  j = json{{"conditions", conditions}};
}

void to_json(nlohmann::json& j, const ServingReport& r) {
  j = nlohmann::json{{"n_tasks", r.n_tasks},
                     {"n_failed", r.n_failed},
                     {"swap_count", r.swap_count},
                     {"total_swap_ms", r.total_swap_ms},
                     {"amortized_ms_per_task", r.amortized_ms_per_task},
                     {"peak_memory_by_mode", r.peak_memory_by_mode}};
}

std::string render_text(const EvalReport& r) {
  std::vector<std::vector<std::string>> rows{{"class", "precision", "recall", "f1", "support"}};
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& s = r.per_class[c];
    rows.push_back({r.classes[c], fixed(s.precision), fixed(s.recall), fixed(s.f1),
                    std::to_string(s.support)});
  }
  rows.push_back({"macro", "", "", fixed(r.macro_f1), std::to_string(r.n_tasks)});
  return table(rows);
}

std::string render_text(const RobustnessReport& r) {
  std::vector<std::vector<std::string>> rows{
      {"routing", "style", "F1 original", "F1 perturbed", "delta", "F1 pooled"}};
  for (const auto& c : r.conditions) {
    rows.push_back({std::string(to_string(c.condition.strategy)),
                    std::string(to_string(c.condition.style)), fixed(c.original.macro_f1),
                    fixed(c.perturbed.macro_f1), fixed(c.delta_macro_f1),
                    fixed(c.pooled.macro_f1)});
  }
  return table(rows);
}

std::string render_text(const ServingReport& r) {
  std::vector<std::vector<std::string>> rows{
      {"tasks", std::to_string(r.n_tasks)},
      {"failed", std::to_string(r.n_failed)},
      {"swaps", std::to_string(r.swap_count)},
      {"swap ms", std::to_string(r.total_swap_ms)},
      {"amortized ms/task", fixed(r.amortized_ms_per_task, 1)}};
  for (const auto& [mode, bytes] : r.peak_memory_by_mode) {
    rows.push_back({"peak memory (" + mode + ")", std::to_string(bytes)});
  }
  return table(rows);
}

}  // namespace moira
