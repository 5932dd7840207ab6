#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moira/registry.hpp"

namespace moira {

enum class Strategy { kEmbeddingSim, kPromptLm };

/// "embedding" / "lm".
std::string_view to_string(Strategy strategy) noexcept;
Strategy parse_strategy(std::string_view text);

struct ExpertScore {
  ExpertId expert_id;
  double score;

  friend bool operator==(const ExpertScore&, const ExpertScore&) = default;
};

struct RoutingDecision {
  ExpertId expert_id = -1;
  std::vector<ExpertScore> scores;  // one per registered expert, id order
  Strategy strategy = Strategy::kEmbeddingSim;
  DescriptionStyle style = DescriptionStyle::kSimple;
  std::int64_t elapsed_ms = 0;
  bool abstained = false;

  friend bool operator==(const RoutingDecision&, const RoutingDecision&) = default;
};

void to_json(nlohmann::json& j, const RoutingDecision& d);
void from_json(const nlohmann::json& j, RoutingDecision& d);

}  // namespace moira
