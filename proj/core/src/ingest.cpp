#include "moira/ingest.hpp"

#include <nlohmann/json.hpp>

#include "moira/error.hpp"
#include "moira/sexpr.hpp"
#include "utf8.hpp"

namespace moira {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

std::string optional_string(const nlohmann::json& obj, const std::string& key,
                            const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorCode::kSchema, where + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<TaskInstruction> parse_tasks_jsonl(std::string_view bytes, const JsonlFieldMap& fields) {
  std::vector<TaskInstruction> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < bytes.size()) {
    auto end = bytes.find('\n', start);
    if (end == std::string_view::npos) end = bytes.size();
    const auto line = bytes.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    const std::string where = "line " + std::to_string(line_no);
    if (const auto bad = detail::first_invalid_utf8(line)) {
      throw Error(ErrorCode::kParse, where + ": invalid UTF-8 at byte " + std::to_string(*bad));
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::kSchema, where + ": expected a JSON object");

    const auto text = j.find(fields.text);
    if (text == j.end() || !text->is_string()) {
      throw Error(ErrorCode::kSchema, where + ": missing string field '" + fields.text + "'");
    }
    TaskInstruction task;
    task.text = text->get<std::string>();
    task.task_id = optional_string(j, fields.task_id, where);
    if (task.task_id.empty()) task.task_id = "line-" + std::to_string(line_no);
    if (auto label = optional_string(j, fields.label, where); !label.empty()) {
      task.truth_label = std::move(label);
    }
    out.push_back(std::move(task));
  }
  return out;
}

TaskInstruction parse_bddl(std::string_view bytes, std::string_view fallback_name) {
  const auto doc = sexpr::parse(bytes);

  TaskInstruction task;
  task.task_id = std::string(fallback_name);
  if (const auto* language = sexpr::find_form(doc, ":language")) {
    std::string text;
    for (std::size_t k = 1; k < language->children.size(); ++k) {
      const auto& part = language->children[k];
      if (part.kind == sexpr::Node::Kind::kList) {
        throw Error(ErrorCode::kExtraction, "(:language ...) clause contains a nested list");
      }
      if (!text.empty()) text.push_back(' ');
      text += part.text;
    }
    if (!trim(text).empty()) {
      task.text = std::move(text);
      return task;
    }
  }
  if (const auto* problem = sexpr::find_form(doc, "problem");
      problem && problem->children.size() >= 2 &&
      problem->children[1].kind != sexpr::Node::Kind::kList) {
    std::string text = problem->children[1].text;
    for (char& c : text) {
      if (c == '_') c = ' ';
    }
    task.text = std::move(text);
    return task;
  }
  throw Error(ErrorCode::kExtraction, "BDDL document has neither (:language ...) nor (problem ...)");
}

std::vector<TaskInstruction> PerturbationPair::perturbed_tasks() const {
  std::vector<TaskInstruction> out;
  for (std::size_t k = 0; k < perturbed.size(); ++k) {
    out.push_back({original.task_id + "#p" + std::to_string(k + 1), perturbed[k],
                   original.truth_label});
  }
  return out;
}

std::vector<PerturbationPair> load_perturbation_pairs(std::string_view bytes) {
  if (const auto bad = detail::first_invalid_utf8(bytes)) {
    throw Error(ErrorCode::kParse, "invalid UTF-8 at offset " + std::to_string(*bad));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("perturbation file is not JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::kSchema, "perturbation file must be a JSON array");

  std::vector<PerturbationPair> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "pair " + std::to_string(i);
    const auto& item = j[i];
    const auto original = item.is_object() ? item.find("original") : item.end();
    if (original == item.end() || !original->is_object()) {
      throw Error(ErrorCode::kSchema, where + ": missing 'original' object");
    }
    PerturbationPair pair;
    pair.original.task_id = optional_string(*original, "task_id", where);
    if (pair.original.task_id.empty()) pair.original.task_id = "pair-" + std::to_string(i);
    pair.original.text = optional_string(*original, "text", where);
    if (trim(pair.original.text).empty()) {
      throw Error(ErrorCode::kSchema, where + ": original needs non-empty 'text'");
    }
    if (auto label = optional_string(*original, "truth_label", where); !label.empty()) {
      pair.original.truth_label = std::move(label);
    }

    const auto perturbed = item.find("perturbed");
    if (perturbed == item.end() || !perturbed->is_array() || perturbed->empty()) {
      throw Error(ErrorCode::kSchema, where + ": 'perturbed' must be a non-empty array");
    }
    for (const auto& p : *perturbed) {
      if (!p.is_string()) throw Error(ErrorCode::kSchema, where + ": rephrasings must be strings");
      pair.perturbed.push_back(p.get<std::string>());
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace moira
