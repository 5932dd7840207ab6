#include "moira/routing.hpp"

#include <nlohmann/json.hpp>

#include "moira/error.hpp"

namespace moira {

std::string_view to_string(Strategy strategy) noexcept {
  return strategy == Strategy::kEmbeddingSim ? "embedding" : "lm";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "embedding") return Strategy::kEmbeddingSim;
  if (text == "lm") return Strategy::kPromptLm;
  throw Error(ErrorCode::kValidation, "unknown routing strategy '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const RoutingDecision& d) {
  auto scores = nlohmann::json::array();
  for (const auto& s : d.scores) scores.push_back({{"expert_id", s.expert_id}, {"score", s.score}});
  j = nlohmann::json{{"expert_id", d.expert_id},
                     {"scores", std::move(scores)},
                     {"strategy", to_string(d.strategy)},
                     {"style", to_string(d.style)},
                     {"elapsed_ms", d.elapsed_ms},
                     {"abstained", d.abstained}};
}

void from_json(const nlohmann::json& j, RoutingDecision& d) {
  d.expert_id = j.at("expert_id").get<ExpertId>();
  d.scores.clear();
  for (const auto& s : j.at("scores")) {
    d.scores.push_back({s.at("expert_id").get<ExpertId>(), s.at("score").get<double>()});
  }
  d.strategy = parse_strategy(j.at("strategy").get<std::string>());
  d.style = parse_style(j.at("style").get<std::string>());
  d.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  d.abstained = j.at("abstained").get<bool>();
}

}  // namespace moira
