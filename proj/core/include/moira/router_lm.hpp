#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "moira/clock.hpp"
#include "moira/registry.hpp"
#include "moira/routing.hpp"
#include "moira/uri.hpp"

namespace moira {

struct FewShotExample {
  std::string task_text;
  ExpertId expert_id = -1;
};

/// Parses a JSON array of {"task_text": ..., "expert_id": ...}.
std::vector<FewShotExample> parse_few_shot_json(std::string_view document);

/// Prompt layout with `{{experts}}`, `{{examples}}` and `{{task}}` slots, in
/// that order. An optional `{{choices}}` slot renders the valid ids as
/// "0, 1, or 2".
class PromptTemplate {
 public:
  /// Throws Error(kValidation) if a required slot is missing or out of order.
  explicit PromptTemplate(std::string text);

  static const PromptTemplate& builtin();

  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

/// Renders the routing prompt. Few-shot ids must be in [0, K).
std::string build_prompt(std::string_view task_text, const Catalog& catalog,
                         const std::vector<FewShotExample>& examples,
                         const PromptTemplate& tmpl = PromptTemplate::builtin());

/// "0", "0 or 1", "0, 1, or 2", ...
std::string render_choices(std::size_t k);

/// Integer after the last "Output:" when it lies in [0, k); otherwise the
/// whole trimmed response if it is a single in-range integer. Throws
/// Error(kUnparsableResponse) when neither applies.
ExpertId parse_expert_index(std::string_view response_text, std::size_t k);

struct LmRequest {
  std::string prompt;
  int max_tokens = 256;
  double temperature = 0.0;
};

struct LmResponse {
  std::string text;
};

/// Implementations must tolerate concurrent complete() calls.
class LmClient {
 public:
  virtual ~LmClient() = default;
  /// Throws Error(kTransport) / Error(kProtocol) on failure.
  virtual LmResponse complete(const LmRequest& request) = 0;
};

/// POST {"prompt", "max_tokens", "temperature"} -> {"text"}.
class RemoteLmClient final : public LmClient {
 public:
  explicit RemoteLmClient(Uri endpoint,
                          std::chrono::milliseconds timeout = std::chrono::seconds(60));
  LmResponse complete(const LmRequest& request) override;

 private:
  Uri endpoint_;
  std::chrono::milliseconds timeout_;
};

struct KeywordRule {
  std::string keyword;  // whole-word phrase, matched after normalize_text
  ExpertId expert_id = -1;
};

/// Deterministic stand-in for a language model: finds the query task (text
/// after the last line starting with `task_marker`) and answers with the id of
/// the first rule whose keyword occurs in it.
class RuleBasedMockLm final : public LmClient {
 public:
  RuleBasedMockLm(std::vector<KeywordRule> rules, std::string task_marker = "Task:");

  /// {"task_marker": "Task:", "rules": [{"keyword": ..., "expert_id": ...}]}
  static RuleBasedMockLm from_json(std::string_view document);

  LmResponse complete(const LmRequest& request) override;

  const std::vector<KeywordRule>& rules() const noexcept { return rules_; }

 private:
  std::vector<KeywordRule> rules_;
  std::string task_marker_;
};

struct LmRouteOptions {
  const PromptTemplate* prompt_template = nullptr;  // null means builtin
  int max_tokens = 256;
};

/// Prompt-driven routing with exactly one retry on an unparsable answer.
/// Throws kRoutingTransport when the client fails and kRoutingFailed after two
/// unparsable answers.
RoutingDecision route_by_lm(std::string_view task_text, DescriptionStyle style,
                            const std::vector<FewShotExample>& examples, LmClient& client,
                            const Registry& registry, const Clock& clock,
                            const LmRouteOptions& options = {});

}  // namespace moira
