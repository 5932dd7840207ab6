#include "moira/executor.hpp"

#include <array>
#include <future>
#include <set>

#include <nlohmann/json.hpp>

#include "http_client.hpp"
#include "moira/embedder.hpp"

namespace moira {
namespace {

constexpr std::string_view kB64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

ErrorInfo info_of(const Error& e) { return {e.code(), e.what()}; }

}  // namespace

void to_json(nlohmann::json& j, const TaskInstruction& t) {
  j = nlohmann::json{{"task_id", t.task_id}, {"text", t.text}};
  j["truth_label"] = t.truth_label ? nlohmann::json(*t.truth_label) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const ExecutionResult& r) {
  using nlohmann::json;
  j = json{{"task_id", r.task_id},
           {"expert_id", r.expert_id ? json(*r.expert_id) : json(nullptr)},
           {"trajectory_b64", base64_encode(r.trajectory)},
           {"routing", r.routing ? json(*r.routing) : json(nullptr)},
           {"swap", r.swap ? json(*r.swap) : json(nullptr)},
           {"total_ms", r.total_ms},
           {"mode", to_string(r.mode)},
           {"memory_used", r.memory_used_bytes}};
  if (r.outcome) {
    j["outcome"] = json{{"status", r.outcome->status == OutcomeStatus::kSuccess ? "success" : "failure"},
                        {"metric_name", r.outcome->metric_name},
                        {"metric_value", r.outcome->metric_value}};
  } else {
    j["outcome"] = nullptr;
  }
  j["error"] = r.error ? json{{"code", to_string(r.error->code)}, {"message", r.error->message}}
                       : json(nullptr);
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                            (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                            std::uint32_t(std::uint8_t(bytes[i + 2]));
    out += kB64Alphabet[(n >> 18) & 63];
    out += kB64Alphabet[(n >> 12) & 63];
    out += kB64Alphabet[(n >> 6) & 63];
    out += kB64Alphabet[n & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kB64Alphabet[(n >> 18) & 63];
    out += kB64Alphabet[(n >> 12) & 63];
    out += rest == 2 ? kB64Alphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kB64Alphabet.size(); ++i) {
    lookup[static_cast<unsigned char>(kB64Alphabet[i])] = static_cast<int>(i);
  }
  while (!text.empty() && text.back() == '=') text.remove_suffix(1);
  if (text.size() % 4 == 1) throw Error(ErrorCode::kProtocol, "invalid base64 length");

  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (const char c : text) {
    const int v = lookup[static_cast<unsigned char>(c)];
    if (v < 0) throw Error(ErrorCode::kProtocol, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xFF);
    }
  }
  return out;
}

nlohmann::json make_dispatch_request(const ExpertProfile& expert, const TaskInstruction& task) {
  return {{"task_id", task.task_id}, {"text", task.text}, {"adapter_id", expert.adapter_id}};
}

ExpertReply parse_dispatch_response(const nlohmann::json& body) {
  if (!body.is_object()) throw Error(ErrorCode::kProtocol, "expert response is not a JSON object");
  const auto status = body.find("status");
  if (status == body.end() || !status->is_string()) {
    throw Error(ErrorCode::kProtocol, "expert response lacks a string 'status'");
  }
  ExpertReply reply;
  const auto s = status->get<std::string>();
  if (s == "success") {
    reply.outcome.status = OutcomeStatus::kSuccess;
  } else if (s == "failure") {
    reply.outcome.status = OutcomeStatus::kFailure;
  } else {
    throw Error(ErrorCode::kProtocol, "expert response has unknown status '" + s + "'");
  }
  const auto name = body.find("metric_name");
  if (name == body.end() || !name->is_string()) {
    throw Error(ErrorCode::kProtocol, "expert response lacks a string 'metric_name'");
  }
  reply.outcome.metric_name = name->get<std::string>();
  const auto value = body.find("metric_value");
  if (value == body.end() || !value->is_number()) {
    throw Error(ErrorCode::kProtocol, "expert response lacks a numeric 'metric_value'");
  }
  reply.outcome.metric_value = value->get<double>();
  if (const auto traj = body.find("trajectory_b64"); traj != body.end() && !traj->is_null()) {
    if (!traj->is_string()) throw Error(ErrorCode::kProtocol, "'trajectory_b64' must be a string");
    reply.trajectory = base64_decode(traj->get<std::string>());
  }
  return reply;
}

ExpertReply HttpExpertTransport::dispatch(const ExpertProfile& expert,
                                          const TaskInstruction& task) {
  nlohmann::json body;
  try {
    body = detail::post_json(parse_uri(expert.endpoint), make_dispatch_request(expert, task),
                             deadline_);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kTransport) throw Error(ErrorCode::kDispatchTransport, e.what());
    throw;
  }
  return parse_dispatch_response(body);
}

void LocalExpertTransport::add(std::string endpoint, Handler handler) {
  std::lock_guard lock(mutex_);
  handlers_[std::move(endpoint)] = std::move(handler);
}

ExpertReply LocalExpertTransport::dispatch(const ExpertProfile& expert,
                                           const TaskInstruction& task) {
  Handler handler;
  {
    std::lock_guard lock(mutex_);
    const auto it = handlers_.find(expert.endpoint);
    if (it == handlers_.end()) {
      throw Error(ErrorCode::kDispatchTransport, "no expert listening at " + expert.endpoint);
    }
    handler = it->second;
  }
  nlohmann::json body;
  try {
    body = handler(make_dispatch_request(expert, task));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kTransport) throw Error(ErrorCode::kDispatchTransport, e.what());
    throw;
  }
  return parse_dispatch_response(body);
}

std::string_view to_string(TracePhase phase) noexcept {
  switch (phase) {
    case TracePhase::kRouted: return "routed";
    case TracePhase::kSwapCompleted: return "swap_completed";
    case TracePhase::kDispatchStarted: return "dispatch_started";
    case TracePhase::kDispatchCompleted: return "dispatch_completed";
    case TracePhase::kFailed: return "failed";
  }
  return "unknown";
}

Executor::Executor(const Registry& registry, Router& router, AdapterManager& adapters,
                   ExpertTransport& transport, Clock& clock, ExecutorOptions options)
    : registry_(registry),
      router_(router),
      adapters_(adapters),
      transport_(transport),
      clock_(clock),
      options_(options) {
  if (options_.max_parallel_dispatch == 0) options_.max_parallel_dispatch = 1;
}

void Executor::set_trace_observer(TraceObserver observer) {
  std::lock_guard lock(trace_mutex_);
  observer_ = std::move(observer);
}

void Executor::trace(const std::string& task_id, TracePhase phase,
                     std::optional<ExpertId> expert) {
  std::lock_guard lock(trace_mutex_);
  TraceEvent event{seq_++, task_id, phase, expert, clock_.now_ms()};
  if (observer_) observer_(event);
}

std::optional<RoutingDecision> Executor::route_into(const TaskInstruction& task,
                                                    Strategy strategy, DescriptionStyle style,
                                                    ExecutionResult& result) {
  result.task_id = task.task_id;
  result.mode = adapters_.mode();
  try {
    if (normalize_text(task.text).empty()) {
      throw Error(ErrorCode::kValidation, "task '" + task.task_id + "' has empty text");
    }
    auto decision = router_.route(task.text, strategy, style);
    result.routing = decision;
    result.total_ms = decision.elapsed_ms;
    if (decision.abstained) {
      throw Error(ErrorCode::kNoExpertSelected,
                  "router abstained on task '" + task.task_id + "': top-two margin too small");
    }
    trace(task.task_id, TracePhase::kRouted, decision.expert_id);
    return decision;
  } catch (const Error& e) {
    ErrorInfo info = info_of(e);
    if (e.code() == ErrorCode::kRoutingFailed || e.code() == ErrorCode::kUnparsableResponse) {
      info.code = ErrorCode::kNoExpertSelected;
    }
    result.error = std::move(info);
    trace(task.task_id, TracePhase::kFailed, std::nullopt);
    return std::nullopt;
  }
}

void Executor::run_routed(const TaskInstruction& task, const RoutingDecision& routing,
                          ExecutionResult& result) {
  const auto started = clock_.now_ms();
  try {
    const ExpertProfile expert = registry_.get_expert(routing.expert_id);
    auto lease = adapters_.acquire(routing.expert_id);
    result.expert_id = routing.expert_id;
    result.swap = lease.swap();
    result.memory_used_bytes = adapters_.memory_used();
    if (result.swap) trace(task.task_id, TracePhase::kSwapCompleted, routing.expert_id);

    trace(task.task_id, TracePhase::kDispatchStarted, routing.expert_id);
    auto reply = transport_.dispatch(expert, task);
    result.trajectory = std::move(reply.trajectory);
    result.outcome = reply.outcome;
    trace(task.task_id, TracePhase::kDispatchCompleted, routing.expert_id);
  } catch (const Error& e) {
    result.error = info_of(e);
    trace(task.task_id, TracePhase::kFailed, routing.expert_id);
  }
  result.total_ms += clock_.now_ms() - started;
}

ExecutionResult Executor::execute(const TaskInstruction& task, Strategy strategy,
                                  DescriptionStyle style) {
  ExecutionResult result;
  if (auto routing = route_into(task, strategy, style, result)) run_routed(task, *routing, result);
  if (result.error) throw Error(result.error->code, result.error->message);
  return result;
}

std::vector<ExecutionResult> Executor::execute_batch(const std::vector<TaskInstruction>& tasks,
                                                     Strategy strategy, DescriptionStyle style,
                                                     bool batching) {
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (!seen.insert(t.task_id).second) {
      throw Error(ErrorCode::kValidation, "duplicate task_id '" + t.task_id + "' in batch");
    }
  }

  std::vector<ExecutionResult> results(tasks.size());
  if (!batching) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (auto routing = route_into(tasks[i], strategy, style, results[i])) {
        run_routed(tasks[i], *routing, results[i]);
      }
    }
    return results;
  }

  std::vector<std::optional<RoutingDecision>> routed(tasks.size());
  std::vector<TaskAssignment> assignments;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    routed[i] = route_into(tasks[i], strategy, style, results[i]);
    if (routed[i]) {
      assignments.push_back({tasks[i].task_id, routed[i]->expert_id});
      index_of[tasks[i].task_id] = i;
    }
  }

  for (const auto& group : plan_batches(assignments)) {
    const auto& ids = group.task_ids;
    // The first task takes the swap; the rest find the adapter resident.
    std::size_t next = 0;
    if (!ids.empty()) {
      const auto i = index_of.at(ids[0]);
      run_routed(tasks[i], *routed[i], results[i]);
      next = 1;
    }
    while (next < ids.size()) {
      const auto end = std::min(ids.size(), next + options_.max_parallel_dispatch);
      if (end - next == 1) {
        const auto i = index_of.at(ids[next]);
        run_routed(tasks[i], *routed[i], results[i]);
      } else {
        std::vector<std::future<void>> inflight;
        for (auto k = next; k < end; ++k) {
          const auto i = index_of.at(ids[k]);
          inflight.push_back(std::async(std::launch::async, [this, &tasks, &routed, &results, i] {
            run_routed(tasks[i], *routed[i], results[i]);
          }));
        }
        for (auto& f : inflight) f.get();
      }
      next = end;
    }
  }
  return results;
}

}  // namespace moira
