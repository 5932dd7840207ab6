#pragma once

#include <string_view>

#include "moira/clock.hpp"
#include "moira/embedder.hpp"
#include "moira/registry.hpp"
#include "moira/routing.hpp"

namespace moira {

struct SimilarityOptions {
  /// Abstain when top1 - top2 < margin. 0 disables abstention.
  double abstain_margin = 0.0;
};

struct SimilaritySelection {
  ExpertId expert_id = -1;
  std::vector<ExpertScore> scores;
  bool abstained = false;
};

/// argmax_i cos(task, cache[i]); ties go to the smallest id.
SimilaritySelection select_by_similarity(const Embedding& task, const EmbeddingCache& cache,
                                         const SimilarityOptions& options = {});

/// Embedding-similarity routing against a cache built for `registry`.
///
/// Throws kEmptyPool for an empty registry, kCacheInvalid when the cache was
/// built for a different catalog or style, and kValidation when the task
/// text normalizes to nothing.
RoutingDecision route_by_similarity(std::string_view task_text, DescriptionStyle style,
                                    const EmbeddingCache& cache, const Registry& registry,
                                    const Embedder& embedder, const Clock& clock,
                                    const SimilarityOptions& options = {});

}  // namespace moira
