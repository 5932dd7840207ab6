#include "moira/router_embedding.hpp"

#include <limits>

#include "moira/error.hpp"

namespace moira {

SimilaritySelection select_by_similarity(const Embedding& task, const EmbeddingCache& cache,
                                         const SimilarityOptions& options) {
  if (cache.entries.empty()) throw Error(ErrorCode::kEmptyPool, "embedding cache is empty");
  SimilaritySelection out;
  out.scores.reserve(cache.entries.size());
  double best = -std::numeric_limits<double>::infinity();
  double runner_up = -std::numeric_limits<double>::infinity();
  // std::map iterates in ascending id order, so strict '>' keeps the lowest id on ties.
  for (const auto& [id, meta] : cache.entries) {
    const double s = cosine(task, meta);
    out.scores.push_back({id, s});
    if (s > best) {
      runner_up = best;
      best = s;
      out.expert_id = id;
    } else if (s > runner_up) {
      runner_up = s;
    }
  }
  if (options.abstain_margin > 0.0 && out.scores.size() > 1) {
    out.abstained = best - runner_up < options.abstain_margin;
  }
  return out;
}

RoutingDecision route_by_similarity(std::string_view task_text, DescriptionStyle style,
                                    const EmbeddingCache& cache, const Registry& registry,
                                    const Embedder& embedder, const Clock& clock,
                                    const SimilarityOptions& options) {
  const auto started = clock.now_ms();
  const Catalog current = registry.catalog(style);
  if (cache.style != style || cache.fingerprint != catalog_fingerprint(current) ||
      cache.entries.size() != current.size()) {
    throw Error(ErrorCode::kCacheInvalid,
                "embedding cache does not match the current " + std::string(to_string(style)) +
                    " catalog");
  }
  if (normalize_text(task_text).empty()) {
    throw Error(ErrorCode::kValidation, "task text is empty after normalization");
  }

  auto selection = select_by_similarity(embedder.embed(task_text), cache, options);
  RoutingDecision d;
  d.expert_id = selection.expert_id;
  d.scores = std::move(selection.scores);
  d.abstained = selection.abstained;
  d.strategy = Strategy::kEmbeddingSim;
  d.style = style;
  d.elapsed_ms = clock.now_ms() - started;
  return d;
}

}  // namespace moira
