#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moira/executor.hpp"
#include "moira/ingest.hpp"
#include "moira/router.hpp"

namespace moira {

struct Prediction {
  std::string truth;
  std::optional<std::string> predicted;  // nullopt = unrouted
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalItem {
  std::string task_id;
  std::string truth;
  std::optional<std::string> predicted;
  std::optional<ExpertId> expert_id;
};

struct EvalReport {
  std::vector<std::string> classes;
  /// confusion[truth][predicted]; the last column counts unrouted tasks.
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
  std::size_t n_tasks = 0;
  std::vector<EvalItem> items;  // filled by run_routing_eval
};

/// Per-class precision/recall/F1 (0 on empty denominators) and their
/// unweighted mean over all `classes`, zero-support classes included.
/// Throws kValidation for labels outside `classes`.
EvalReport macro_f1(const std::vector<Prediction>& predictions,
                    const std::vector<std::string>& classes);

/// Routes every task (no dispatch) and scores expert category vs. truth.
/// Routing failures and abstentions count as unrouted. Classes are the
/// registry's categories. Throws kValidation for a task without truth_label.
EvalReport run_routing_eval(const std::vector<TaskInstruction>& tasks, Strategy strategy,
                            DescriptionStyle style, Router& router);

struct RoutingCondition {
  Strategy strategy;
  DescriptionStyle style;
};

/// Downstream metric for one task, e.g. by executing it; nullopt when the
/// task produced none.
using OutcomeProbe =
    std::function<std::optional<double>(const TaskInstruction&, Strategy, DescriptionStyle)>;

struct RobustnessCondition {
  RoutingCondition condition;
  EvalReport original;
  EvalReport perturbed;
  EvalReport pooled;  // originals and rephrasings together
  double delta_macro_f1 = 0.0;  // perturbed - original
  std::optional<double> mean_metric_original;
  std::optional<double> mean_metric_perturbed;
  std::optional<double> delta_metric;
};

struct RobustnessReport {
  std::vector<RobustnessCondition> conditions;
};

/// Throws kValidation for an empty pair list.
RobustnessReport run_robustness_eval(const std::vector<PerturbationPair>& pairs,
                                     const std::vector<RoutingCondition>& conditions,
                                     Router& router, const OutcomeProbe& probe = {});

struct ServingReport {
  std::size_t n_tasks = 0;
  std::size_t n_failed = 0;
  std::size_t swap_count = 0;
  std::int64_t total_swap_ms = 0;
  double amortized_ms_per_task = 0.0;
  std::map<std::string, std::uint64_t> peak_memory_by_mode;
};

ServingReport serving_report(const std::vector<ExecutionResult>& results);

void to_json(nlohmann::json& j, const EvalReport& r);
void to_json(nlohmann::json& j, const RobustnessReport& r);
void to_json(nlohmann::json& j, const ServingReport& r);

/// Aligned plain-text tables.
std::string render_text(const EvalReport& r);
std::string render_text(const RobustnessReport& r);
std::string render_text(const ServingReport& r);

}  // namespace moira
