#include "moira/router_lm.hpp"

#include <charconv>
#include <optional>

#include <nlohmann/json.hpp>

#include "http_client.hpp"
#include "moira/embedder.hpp"
#include "moira/error.hpp"

namespace moira {
namespace {

constexpr std::string_view kExpertsSlot = "{{experts}}";
constexpr std::string_view kExamplesSlot = "{{examples}}";
constexpr std::string_view kTaskSlot = "{{task}}";
constexpr std::string_view kChoicesSlot = "{{choices}}";

constexpr std::string_view kBuiltinTemplate =
    "You route robot manipulation tasks to specialist experts.\n"
    "\n"
    "Experts:\n"
    "{{experts}}\n"
    "\n"
    "Read the task and compare it with each expert description. Reason step by step "
    "about which expert fits best, then finish with a final line of the form "
    "\"Output: <id>\", choosing Output: {{choices}}.\n"
    "\n"
    "Examples:\n"
    "{{examples}}\n"
    "\n"
    "Task: {{task}}\n"
    "Reasoning:";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Leading integer of `s` (after optional blanks); nullopt if there is none.
std::optional<long long> leading_integer(std::string_view s, bool require_whole) {
  s = require_whole ? trim(s) : s.substr(std::min(s.size(), s.find_first_not_of(" \t")));
  long long value = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || end == s.data()) return std::nullopt;
  if (require_whole && end != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace

std::vector<FewShotExample> parse_few_shot_json(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("few-shot file is not JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::kSchema, "few-shot file must be a JSON array");
  std::vector<FewShotExample> out;
  for (const auto& item : j) {
    const auto text = item.find("task_text");
    const auto id = item.find("expert_id");
    if (!item.is_object() || text == item.end() || !text->is_string() || id == item.end() ||
        !id->is_number_integer()) {
      throw Error(ErrorCode::kSchema, "few-shot entries need string task_text and integer expert_id");
    }
    out.push_back({text->get<std::string>(), id->get<ExpertId>()});
  }
  return out;
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  const auto experts = text_.find(kExpertsSlot);
  const auto examples = text_.find(kExamplesSlot);
  const auto task = text_.find(kTaskSlot);
  if (experts == std::string::npos || examples == std::string::npos || task == std::string::npos) {
    throw Error(ErrorCode::kValidation,
                "prompt template needs {{experts}}, {{examples}} and {{task}} slots");
  }
  if (!(experts < examples && examples < task)) {
    throw Error(ErrorCode::kValidation,
                "prompt template slots must appear as {{experts}}, {{examples}}, {{task}}");
  }
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate tmpl{std::string(kBuiltinTemplate)};
  return tmpl;
}

std::string render_choices(std::size_t k) {
  std::string out;
  for (std::size_t i = 0; i < k; ++i) {
    if (i > 0) out += k == 2 ? " " : ", ";
    if (i + 1 == k && k > 1) out += "or ";
    out += std::to_string(i);
  }
  return out;
}

std::string build_prompt(std::string_view task_text, const Catalog& catalog,
                         const std::vector<FewShotExample>& examples,
                         const PromptTemplate& tmpl) {
  if (catalog.empty()) throw Error(ErrorCode::kEmptyPool, "cannot build a prompt without experts");
  const auto k = static_cast<ExpertId>(catalog.size());

  std::string experts;
  for (const auto& entry : catalog) {
    if (!experts.empty()) experts += '\n';
    experts += "ID " + std::to_string(entry.expert_id) + ": " + entry.description;
  }

  std::string shots;
  for (const auto& ex : examples) {
    if (ex.expert_id < 0 || ex.expert_id >= k) {
      throw Error(ErrorCode::kValidation, "few-shot example references expert " +
                                              std::to_string(ex.expert_id) + " but K=" +
                                              std::to_string(k));
    }
    if (!shots.empty()) shots += "\n\n";
    shots += "Task: " + ex.task_text + "\nOutput: " + std::to_string(ex.expert_id);
  }
  if (shots.empty()) shots = "(none)";

  // Fill the task last so text inside descriptions or examples that happens to
  // look like a slot is never expanded.
  std::string prompt = tmpl.text();
  const auto task_pos = prompt.rfind(kTaskSlot);
  std::string head = prompt.substr(0, task_pos);
  std::string tail = prompt.substr(task_pos + kTaskSlot.size());
  replace_all(head, kChoicesSlot, render_choices(catalog.size()));
  replace_all(tail, kChoicesSlot, render_choices(catalog.size()));
  const auto ex_pos = head.rfind(kExamplesSlot);
  std::string before_examples = head.substr(0, ex_pos);
  std::string after_examples = head.substr(ex_pos + kExamplesSlot.size());
  const auto exp_pos = before_examples.rfind(kExpertsSlot);
  return before_examples.substr(0, exp_pos) + experts +
         before_examples.substr(exp_pos + kExpertsSlot.size()) + shots + after_examples +
         std::string(task_text) + tail;
}

ExpertId parse_expert_index(std::string_view response_text, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kValidation, "K must be at least 1");
  constexpr std::string_view kToken = "Output:";
  const auto in_range = [k](long long v) { return v >= 0 && static_cast<std::size_t>(v) < k; };

  if (const auto pos = response_text.rfind(kToken); pos != std::string_view::npos) {
    const auto v = leading_integer(response_text.substr(pos + kToken.size()), false);
    if (v && in_range(*v)) return static_cast<ExpertId>(*v);
  }
  if (const auto v = leading_integer(response_text, true); v && in_range(*v)) {
    return static_cast<ExpertId>(*v);
  }
  throw Error(ErrorCode::kUnparsableResponse,
              "no expert index in [0, " + std::to_string(k) + ") in LM response");
}

RemoteLmClient::RemoteLmClient(Uri endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

LmResponse RemoteLmClient::complete(const LmRequest& request) {
  const nlohmann::json body{{"prompt", request.prompt},
                            {"max_tokens", request.max_tokens},
                            {"temperature", request.temperature}};
  const auto reply = detail::post_json(endpoint_, body, timeout_);
  const auto text = reply.is_object() ? reply.find("text") : reply.end();
  if (text == reply.end() || !text->is_string()) {
    throw Error(ErrorCode::kProtocol, "LM response lacks a string 'text' field");
  }
  return {text->get<std::string>()};
}

RuleBasedMockLm::RuleBasedMockLm(std::vector<KeywordRule> rules, std::string task_marker)
    : rules_(std::move(rules)), task_marker_(std::move(task_marker)) {
  for (auto& rule : rules_) {
    rule.keyword = normalize_text(rule.keyword);
    if (rule.keyword.empty()) throw Error(ErrorCode::kValidation, "mock LM rule keyword is empty");
  }
}

RuleBasedMockLm RuleBasedMockLm::from_json(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("mock LM rules are not JSON: ") + e.what());
  }
  const auto rules = j.is_object() ? j.find("rules") : j.end();
  if (rules == j.end() || !rules->is_array()) {
    throw Error(ErrorCode::kSchema, "mock LM rules need a 'rules' array");
  }
  std::vector<KeywordRule> out;
  for (const auto& r : *rules) {
    const auto kw = r.find("keyword");
    const auto id = r.find("expert_id");
    if (kw == r.end() || !kw->is_string() || id == r.end() || !id->is_number_integer()) {
      throw Error(ErrorCode::kSchema, "mock LM rule needs string keyword and integer expert_id");
    }
    out.push_back({kw->get<std::string>(), id->get<ExpertId>()});
  }
  return RuleBasedMockLm(std::move(out), j.value("task_marker", std::string("Task:")));
}

LmResponse RuleBasedMockLm::complete(const LmRequest& request) {
  std::string_view prompt = request.prompt;
  std::string_view task;
  std::size_t line_start = 0;
  while (line_start <= prompt.size()) {
    auto line_end = prompt.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = prompt.size();
    const auto line = prompt.substr(line_start, line_end - line_start);
    if (line.substr(0, task_marker_.size()) == task_marker_) {
      task = line.substr(task_marker_.size());
    }
    line_start = line_end + 1;
  }

  const std::string haystack = " " + normalize_text(task) + " ";
  for (const auto& rule : rules_) {
    if (haystack.find(" " + rule.keyword + " ") != std::string::npos) {
      return {"The task mentions \"" + rule.keyword + "\", which matches expert " +
              std::to_string(rule.expert_id) + ".\nOutput: " + std::to_string(rule.expert_id)};
    }
  }
  return {"I am not sure which expert fits this task."};
}

RoutingDecision route_by_lm(std::string_view task_text, DescriptionStyle style,
                            const std::vector<FewShotExample>& examples, LmClient& client,
                            const Registry& registry, const Clock& clock,
                            const LmRouteOptions& options) {
  const auto started = clock.now_ms();
  const Catalog catalog = registry.catalog(style);
  if (normalize_text(task_text).empty()) {
    throw Error(ErrorCode::kValidation, "task text is empty after normalization");
  }
  const auto& tmpl = options.prompt_template ? *options.prompt_template : PromptTemplate::builtin();
  LmRequest request{build_prompt(task_text, catalog, examples, tmpl), options.max_tokens, 0.0};

  std::optional<ExpertId> chosen;
  for (int attempt = 0; attempt < 2 && !chosen; ++attempt) {
    LmResponse response;
    try {
      response = client.complete(request);
    } catch (const Error& e) {
      throw Error(ErrorCode::kRoutingTransport, std::string("LM request failed: ") + e.what());
    }
    try {
      chosen = parse_expert_index(response.text, catalog.size());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnparsableResponse) throw;
    }
  }
  if (!chosen) {
    throw Error(ErrorCode::kRoutingFailed, "LM gave no usable expert index after one retry");
  }

  RoutingDecision d;
  d.expert_id = *chosen;
  d.strategy = Strategy::kPromptLm;
  d.style = style;
  for (const auto& entry : catalog) {
    d.scores.push_back({entry.expert_id, entry.expert_id == *chosen ? 1.0 : 0.0});
  }
  d.elapsed_ms = clock.now_ms() - started;
  return d;
}

}  // namespace moira
