#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "moira/executor.hpp"

namespace moira {

/// Which JSON keys of a tasks.jsonl line feed which TaskInstruction field.
struct JsonlFieldMap {
  std::string task_id = "task_id";
  std::string text = "instruction";
  std::string label = "category";
};

/// One TaskInstruction per non-blank line. Lines without a task id get
/// "line-<n>" (1-based). Throws kParse naming the line for malformed JSON or
/// invalid UTF-8, kSchema for a missing or non-string instruction.
std::vector<TaskInstruction> parse_tasks_jsonl(std::string_view bytes,
                                               const JsonlFieldMap& fields = {});

/// Task text from a BDDL document: the words of a `(:language ...)` clause if
/// present, otherwise the `(problem <name>)` name with '_' turned into ' '.
/// `fallback_name` becomes the task id. truth_label is left unset.
/// Throws kParse on malformed s-expressions and kExtraction when neither
/// clause is present.
TaskInstruction parse_bddl(std::string_view bytes, std::string_view fallback_name);

struct PerturbationPair {
  TaskInstruction original;
  std::vector<std::string> perturbed;

  /// Each rephrasing as a task sharing the original's label; ids are
  /// "<original id>#p<k>" with k from 1.
  std::vector<TaskInstruction> perturbed_tasks() const;
};

/// JSON array of {"original": {"task_id", "text", "truth_label"},
/// "perturbed": ["...", ...]}. Throws kSchema for an empty perturbed list.
std::vector<PerturbationPair> load_perturbation_pairs(std::string_view bytes);

}  // namespace moira
