#include "moira/adapter_manager.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "moira/error.hpp"

namespace moira {

std::string_view to_string(ServingMode mode) noexcept {
  return mode == ServingMode::kAllInMemory ? "all_in_memory" : "dynamic_load";
}

ServingMode parse_serving_mode(std::string_view text) {
  if (text == "all_in_memory") return ServingMode::kAllInMemory;
  if (text == "dynamic_load") return ServingMode::kDynamicLoad;
  throw Error(ErrorCode::kValidation, "unknown serving mode '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const SwapEvent& e) {
  j = nlohmann::json{{"from", e.from ? nlohmann::json(*e.from) : nlohmann::json(nullptr)},
                     {"to", e.to},
                     {"started_at_ms", e.started_at_ms},
                     {"duration_ms", e.duration_ms}};
}

void from_json(const nlohmann::json& j, SwapEvent& e) {
  const auto& from = j.at("from");
  e.from = from.is_null() ? std::nullopt : std::optional<ExpertId>(from.get<ExpertId>());
  e.to = j.at("to").get<ExpertId>();
  e.started_at_ms = j.at("started_at_ms").get<std::int64_t>();
  e.duration_ms = j.at("duration_ms").get<std::int64_t>();
}

void to_json(nlohmann::json& j, const ServingState& s) {
  j = nlohmann::json{
      {"mode", to_string(s.mode)},
      {"backbone_bytes", s.backbone_bytes},
      {"memory_budget_bytes", s.memory_budget_bytes},
      {"memory_used", s.memory_used_bytes},
      {"peak_memory_used", s.peak_memory_bytes},
      {"loaded", s.loaded},
      {"active", s.active ? nlohmann::json(*s.active) : nlohmann::json(nullptr)},
      {"swap_latency_ms", s.swap_latency_ms},
      {"swap_count", s.swap_count},
      {"total_swap_ms", s.total_swap_ms},
      {"now_ms", s.now_ms}};
}

std::uint64_t expected_memory(ServingMode mode, std::uint64_t backbone,
                              const std::vector<std::uint64_t>& adapter_sizes,
                              std::optional<ExpertId> active) {
  if (mode == ServingMode::kAllInMemory) {
    return std::accumulate(adapter_sizes.begin(), adapter_sizes.end(), backbone);
  }
  if (!active) return backbone;
  return backbone + adapter_sizes.at(static_cast<std::size_t>(*active));
}

AdapterManager::AdapterManager(ServingConfig config, Clock& clock)
    : config_(std::move(config)), clock_(clock) {
  if (config_.backbone_bytes == 0) {
    throw Error(ErrorCode::kValidation, "backbone_bytes must be positive");
  }
  if (config_.memory_budget_bytes == 0) {
    throw Error(ErrorCode::kValidation, "memory_budget_bytes must be positive");
  }
  if (config_.swap_latency_ms < 0) {
    throw Error(ErrorCode::kValidation, "swap_latency_ms must be non-negative");
  }
  if (std::find(config_.adapter_sizes.begin(), config_.adapter_sizes.end(), 0U) !=
      config_.adapter_sizes.end()) {
    throw Error(ErrorCode::kValidation, "adapter sizes must be positive");
  }
  const auto need = required_bytes(config_.adapter_sizes);
  if (need > config_.memory_budget_bytes) {
    throw Error(ErrorCode::kBudgetExceeded,
                std::string(to_string(config_.mode)) + " needs " + std::to_string(need) +
                    " bytes but the budget is " + std::to_string(config_.memory_budget_bytes) +
                    " (short by " + std::to_string(need - config_.memory_budget_bytes) + ")");
  }
  peak_memory_ = memory_used_locked();
}

std::uint64_t AdapterManager::required_bytes(const std::vector<std::uint64_t>& sizes) const {
  if (config_.mode == ServingMode::kAllInMemory) {
    return std::accumulate(sizes.begin(), sizes.end(), config_.backbone_bytes);
  }
  const auto largest = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  return config_.backbone_bytes + largest;
}

std::uint64_t AdapterManager::memory_used_locked() const {
  return expected_memory(config_.mode, config_.backbone_bytes, config_.adapter_sizes, active_);
}

std::optional<SwapEvent> AdapterManager::ensure_loaded_locked(ExpertId id) {
  std::optional<ExpertId> from;
  {
    std::lock_guard lock(state_mutex_);
    if (id < 0 || static_cast<std::size_t>(id) >= config_.adapter_sizes.size()) {
      throw Error(ErrorCode::kNotFound, "no adapter for expert " + std::to_string(id));
    }
    if (config_.mode == ServingMode::kAllInMemory || active_ == id) return std::nullopt;
    from = active_;
  }

  SwapEvent event{from, id, clock_.now_ms(), config_.swap_latency_ms};
  clock_.advance(config_.swap_latency_ms);

  std::lock_guard lock(state_mutex_);
  active_ = id;
  peak_memory_ = std::max(peak_memory_, memory_used_locked());
  swaps_.push_back(event);
  if (sink_) {
    *sink_ << nlohmann::json(event).dump() << '\n';
    sink_->flush();
  }
  return event;
}

std::optional<SwapEvent> AdapterManager::ensure_loaded(ExpertId id) {
  std::unique_lock gate(gate_);
  return ensure_loaded_locked(id);
}

AdapterManager::Lease AdapterManager::acquire(ExpertId id) {
  {
    std::shared_lock shared(gate_);
    bool resident = false;
    {
      std::lock_guard lock(state_mutex_);
      if (id < 0 || static_cast<std::size_t>(id) >= config_.adapter_sizes.size()) {
        throw Error(ErrorCode::kNotFound, "no adapter for expert " + std::to_string(id));
      }
      resident = config_.mode == ServingMode::kAllInMemory || active_ == id;
    }
    if (resident) return Lease(id, std::nullopt, std::move(shared));
  }
  std::unique_lock exclusive(gate_);
  auto swap = ensure_loaded_locked(id);
  return Lease(id, std::move(swap), std::move(exclusive));
}

bool AdapterManager::can_add_adapter(std::uint64_t size_bytes) const {
  if (size_bytes == 0) return false;
  std::lock_guard lock(state_mutex_);
  auto sizes = config_.adapter_sizes;
  sizes.push_back(size_bytes);
  return required_bytes(sizes) <= config_.memory_budget_bytes;
}

void AdapterManager::add_adapter(std::uint64_t size_bytes) {
  if (size_bytes == 0) throw Error(ErrorCode::kValidation, "adapter size must be positive");
  std::unique_lock gate(gate_);
  std::lock_guard lock(state_mutex_);
  auto sizes = config_.adapter_sizes;
  sizes.push_back(size_bytes);
  const auto need = required_bytes(sizes);
  if (need > config_.memory_budget_bytes) {
    throw Error(ErrorCode::kBudgetExceeded,
                "adding a " + std::to_string(size_bytes) + "-byte adapter needs " +
                    std::to_string(need) + " bytes, budget is " +
                    std::to_string(config_.memory_budget_bytes));
  }
  config_.adapter_sizes = std::move(sizes);
  peak_memory_ = std::max(peak_memory_, memory_used_locked());
}

std::uint64_t AdapterManager::memory_used() const {
  std::lock_guard lock(state_mutex_);
  return memory_used_locked();
}

ServingState AdapterManager::state() const {
  std::lock_guard lock(state_mutex_);
  ServingState s;
  s.mode = config_.mode;
  s.backbone_bytes = config_.backbone_bytes;
  s.memory_budget_bytes = config_.memory_budget_bytes;
  s.memory_used_bytes = memory_used_locked();
  s.peak_memory_bytes = peak_memory_;
  if (config_.mode == ServingMode::kAllInMemory) {
    for (std::size_t i = 0; i < config_.adapter_sizes.size(); ++i) {
      s.loaded.insert(static_cast<ExpertId>(i));
    }
  } else if (active_) {
    s.loaded.insert(*active_);
  }
  s.active = active_;
  s.swap_latency_ms = config_.swap_latency_ms;
  s.swap_count = swaps_.size();
  for (const auto& e : swaps_) s.total_swap_ms += e.duration_ms;
  s.now_ms = clock_.now_ms();
  return s;
}

std::vector<SwapEvent> AdapterManager::swap_log() const {
  std::lock_guard lock(state_mutex_);
  return swaps_;
}

void AdapterManager::set_event_sink(std::ostream* sink) {
  std::lock_guard lock(state_mutex_);
  sink_ = sink;
}

Schedule plan_batches(const std::vector<TaskAssignment>& assignments) {
  Schedule schedule;
  std::unordered_map<ExpertId, std::size_t> slot;
  for (const auto& a : assignments) {
    auto [it, inserted] = slot.try_emplace(a.expert_id, schedule.size());
    if (inserted) schedule.push_back({a.expert_id, {}});
    schedule[it->second].task_ids.push_back(a.task_id);
  }
  return schedule;
}

std::size_t count_swaps(const std::vector<ExpertId>& sequence, std::optional<ExpertId> active,
                        ServingMode mode) {
  if (mode == ServingMode::kAllInMemory) return 0;
  std::size_t swaps = 0;
  for (const auto id : sequence) {
    if (active != id) {
      ++swaps;
      active = id;
    }
  }
  return swaps;
}

double amortized_swap_cost(const Schedule& schedule, const ServingState& state) {
  std::size_t tasks = 0;
  std::vector<ExpertId> order;
  for (const auto& group : schedule) {
    tasks += group.task_ids.size();
    order.push_back(group.expert_id);
  }
  if (tasks == 0) throw Error(ErrorCode::kValidation, "schedule has no tasks");
  const auto swaps = count_swaps(order, state.active, state.mode);
  return static_cast<double>(swaps) * static_cast<double>(state.swap_latency_ms) /
         static_cast<double>(tasks);
}

}  // namespace moira
