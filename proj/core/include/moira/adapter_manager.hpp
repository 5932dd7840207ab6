#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moira/clock.hpp"
#include "moira/registry.hpp"

namespace moira {

enum class ServingMode { kAllInMemory, kDynamicLoad };

/// "all_in_memory" / "dynamic_load".
std::string_view to_string(ServingMode mode) noexcept;
ServingMode parse_serving_mode(std::string_view text);

inline constexpr std::int64_t kDefaultSwapLatencyMs = 9400;

struct SwapEvent {
  std::optional<ExpertId> from;
  ExpertId to = -1;
  std::int64_t started_at_ms = 0;
  std::int64_t duration_ms = 0;

  friend bool operator==(const SwapEvent&, const SwapEvent&) = default;
};

void to_json(nlohmann::json& j, const SwapEvent& e);
void from_json(const nlohmann::json& j, SwapEvent& e);

struct ServingConfig {
  ServingMode mode = ServingMode::kDynamicLoad;
  std::uint64_t backbone_bytes = 0;
  std::vector<std::uint64_t> adapter_sizes;  // indexed by expert id
  std::uint64_t memory_budget_bytes = 0;
  std::int64_t swap_latency_ms = kDefaultSwapLatencyMs;
};

/// Point-in-time copy of the serving bookkeeping.
struct ServingState {
  ServingMode mode = ServingMode::kDynamicLoad;
  std::uint64_t backbone_bytes = 0;
  std::uint64_t memory_budget_bytes = 0;
  std::uint64_t memory_used_bytes = 0;
  std::uint64_t peak_memory_bytes = 0;
  std::set<ExpertId> loaded;
  std::optional<ExpertId> active;
  std::int64_t swap_latency_ms = 0;
  std::size_t swap_count = 0;
  std::int64_t total_swap_ms = 0;
  std::int64_t now_ms = 0;
};

void to_json(nlohmann::json& j, const ServingState& s);

/// Closed-form memory for a mode: AllInMemory holds every adapter, DynamicLoad
/// holds the active one (if any).
std::uint64_t expected_memory(ServingMode mode, std::uint64_t backbone,
                              const std::vector<std::uint64_t>& adapter_sizes,
                              std::optional<ExpertId> active);

/// Tracks which adapters are resident and charges swap latency to the clock.
///
/// At most one swap runs at a time. A Lease keeps the chosen adapter resident
/// while a dispatch is in flight: leases for the active adapter are shared,
/// and a lease that had to swap holds the manager exclusively until released.
class AdapterManager {
 public:
  /// Throws Error(kBudgetExceeded) when the mode's worst case does not fit.
  AdapterManager(ServingConfig config, Clock& clock);
  AdapterManager(const AdapterManager&) = delete;
  AdapterManager& operator=(const AdapterManager&) = delete;

  class Lease {
   public:
    Lease(Lease&&) noexcept = default;
    Lease& operator=(Lease&&) noexcept = default;

    const std::optional<SwapEvent>& swap() const noexcept { return swap_; }
    ExpertId expert_id() const noexcept { return expert_id_; }

   private:
    friend class AdapterManager;
    Lease(ExpertId id, std::optional<SwapEvent> swap,
          std::variant<std::shared_lock<std::shared_mutex>, std::unique_lock<std::shared_mutex>>
              lock)
        : expert_id_(id), swap_(std::move(swap)), lock_(std::move(lock)) {}

    ExpertId expert_id_;
    std::optional<SwapEvent> swap_;
    std::variant<std::shared_lock<std::shared_mutex>, std::unique_lock<std::shared_mutex>> lock_;
  };

  /// Makes `id` the resident adapter. Returns the swap when one happened.
  /// Throws Error(kNotFound) for an unknown id.
  std::optional<SwapEvent> ensure_loaded(ExpertId id);

  /// ensure_loaded() plus a guard that blocks other swaps until destroyed.
  Lease acquire(ExpertId id);

  /// Accounts a newly registered adapter. In AllInMemory mode it becomes
  /// resident; throws kBudgetExceeded (and changes nothing) when it would not
  /// fit.
  void add_adapter(std::uint64_t size_bytes);
  /// Whether add_adapter(size_bytes) would succeed.
  bool can_add_adapter(std::uint64_t size_bytes) const;

  std::uint64_t memory_used() const;
  ServingState state() const;
  std::vector<SwapEvent> swap_log() const;
  ServingMode mode() const noexcept { return config_.mode; }
  std::int64_t swap_latency_ms() const noexcept { return config_.swap_latency_ms; }

  /// Each swap is also written to `sink` as one JSON line. Pass null to stop.
  void set_event_sink(std::ostream* sink);

 private:
  std::optional<SwapEvent> ensure_loaded_locked(ExpertId id);
  std::uint64_t memory_used_locked() const;
  std::uint64_t required_bytes(const std::vector<std::uint64_t>& sizes) const;

  ServingConfig config_;
  Clock& clock_;
  std::shared_mutex gate_;  // held shared by dispatching leases, exclusive for swaps
  mutable std::mutex state_mutex_;
  std::optional<ExpertId> active_;
  std::uint64_t peak_memory_ = 0;
  std::vector<SwapEvent> swaps_;
  std::ostream* sink_ = nullptr;
};

/// Assignment of one task to an expert, as input to batching.
struct TaskAssignment {
  std::string task_id;
  ExpertId expert_id = -1;
};

struct ScheduleGroup {
  ExpertId expert_id = -1;
  std::vector<std::string> task_ids;

  friend bool operator==(const ScheduleGroup&, const ScheduleGroup&) = default;
};
using Schedule = std::vector<ScheduleGroup>;

/// Groups tasks by expert, keeping first-appearance order of experts and
/// submission order within each expert.
Schedule plan_batches(const std::vector<TaskAssignment>& assignments);

/// Number of adapter switches when visiting `sequence` in order from `active`.
/// Always 0 for AllInMemory.
std::size_t count_swaps(const std::vector<ExpertId>& sequence, std::optional<ExpertId> active,
                        ServingMode mode);

/// Total swap milliseconds the schedule incurs from the manager's current
/// state, divided by the number of tasks. Throws kValidation for an empty
/// schedule.
double amortized_swap_cost(const Schedule& schedule, const ServingState& state);

}  // namespace moira
