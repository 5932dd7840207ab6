#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moira/adapter_manager.hpp"
#include "moira/clock.hpp"
#include "moira/error.hpp"
#include "moira/registry.hpp"
#include "moira/router.hpp"
#include "moira/routing.hpp"

namespace moira {

struct TaskInstruction {
  std::string task_id;
  std::string text;
  std::optional<std::string> truth_label;

  friend bool operator==(const TaskInstruction&, const TaskInstruction&) = default;
};

void to_json(nlohmann::json& j, const TaskInstruction& t);

enum class OutcomeStatus { kSuccess, kFailure };

struct Outcome {
  OutcomeStatus status = OutcomeStatus::kFailure;
  std::string metric_name;
  double metric_value = 0.0;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

/// What an expert sends back for one task.
struct ExpertReply {
  std::string trajectory;  // opaque bytes
  Outcome outcome;
};

struct ErrorInfo {
  ErrorCode code;
  std::string message;
};

struct ExecutionResult {
  std::string task_id;
  std::optional<ExpertId> expert_id;
  std::string trajectory;
  std::optional<Outcome> outcome;  // present iff the expert answered
  std::optional<RoutingDecision> routing;
  std::optional<SwapEvent> swap;
  std::int64_t total_ms = 0;
  ServingMode mode = ServingMode::kDynamicLoad;
  std::uint64_t memory_used_bytes = 0;  // after the swap, if any
  std::optional<ErrorInfo> error;

  bool ok() const noexcept { return !error.has_value(); }
};

void to_json(nlohmann::json& j, const ExecutionResult& r);

/// Expert wire protocol.
///   request:  {"task_id", "text", "adapter_id"}
///   response: {"status": "success"|"failure", "metric_name", "metric_value",
///              "trajectory_b64"?}
nlohmann::json make_dispatch_request(const ExpertProfile& expert, const TaskInstruction& task);
/// Throws Error(kProtocol) on any schema violation.
ExpertReply parse_dispatch_response(const nlohmann::json& body);

std::string base64_encode(std::string_view bytes);
/// Throws Error(kProtocol) on malformed input.
std::string base64_decode(std::string_view text);

class ExpertTransport {
 public:
  virtual ~ExpertTransport() = default;
  /// Throws Error(kDispatchTransport) or Error(kProtocol).
  virtual ExpertReply dispatch(const ExpertProfile& expert, const TaskInstruction& task) = 0;
};

/// POSTs the wire request to the expert's endpoint.
class HttpExpertTransport final : public ExpertTransport {
 public:
  explicit HttpExpertTransport(std::chrono::milliseconds deadline = std::chrono::seconds(60))
      : deadline_(deadline) {}
  ExpertReply dispatch(const ExpertProfile& expert, const TaskInstruction& task) override;

 private:
  std::chrono::milliseconds deadline_;
};

/// Routes wire requests to in-process handlers keyed by endpoint string.
/// Handlers see and return the same JSON bodies as an HTTP expert would; a
/// handler throwing Error(kTransport) simulates an unreachable expert.
class LocalExpertTransport final : public ExpertTransport {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json&)>;

  void add(std::string endpoint, Handler handler);
  ExpertReply dispatch(const ExpertProfile& expert, const TaskInstruction& task) override;

 private:
  std::mutex mutex_;
  std::map<std::string, Handler> handlers_;
};

enum class TracePhase { kRouted, kSwapCompleted, kDispatchStarted, kDispatchCompleted, kFailed };
std::string_view to_string(TracePhase phase) noexcept;

struct TraceEvent {
  std::uint64_t seq = 0;
  std::string task_id;
  TracePhase phase = TracePhase::kRouted;
  std::optional<ExpertId> expert_id;
  std::int64_t at_ms = 0;
};
using TraceObserver = std::function<void(const TraceEvent&)>;

struct ExecutorOptions {
  /// Dispatches to the already-resident expert that may run at once in a
  /// batched group.
  std::size_t max_parallel_dispatch = 1;
};

/// Route, make the expert resident, dispatch; once per task.
class Executor {
 public:
  Executor(const Registry& registry, Router& router, AdapterManager& adapters,
           ExpertTransport& transport, Clock& clock, ExecutorOptions options = {});

  /// Throws Error on failure: kNoExpertSelected when routing fails or
  /// abstains, kDispatchTransport / kProtocol from the expert.
  ExecutionResult execute(const TaskInstruction& task, Strategy strategy, DescriptionStyle style);

  /// Never throws for per-task failures; they are recorded in the result.
  /// Results are in input order. With `batching`, every task is routed first
  /// and the dispatches are grouped by expert.
  std::vector<ExecutionResult> execute_batch(const std::vector<TaskInstruction>& tasks,
                                             Strategy strategy, DescriptionStyle style,
                                             bool batching);

  void set_trace_observer(TraceObserver observer);

 private:
  std::optional<RoutingDecision> route_into(const TaskInstruction& task, Strategy strategy,
                                            DescriptionStyle style, ExecutionResult& result);
  void run_routed(const TaskInstruction& task, const RoutingDecision& routing,
                  ExecutionResult& result);
  void trace(const std::string& task_id, TracePhase phase, std::optional<ExpertId> expert);

  const Registry& registry_;
  Router& router_;
  AdapterManager& adapters_;
  ExpertTransport& transport_;
  Clock& clock_;
  ExecutorOptions options_;
  std::mutex trace_mutex_;
  TraceObserver observer_;
  std::uint64_t seq_ = 0;
};

}  // namespace moira
