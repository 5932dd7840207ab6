#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "moira/clock.hpp"
#include "moira/embedder.hpp"
#include "moira/registry.hpp"
#include "moira/router_embedding.hpp"
#include "moira/router_lm.hpp"
#include "moira/routing.hpp"

namespace moira {

struct RouterOptions {
  SimilarityOptions similarity;
  std::vector<FewShotExample> few_shot;
  std::optional<PromptTemplate> prompt_template;
  int lm_max_tokens = 256;
};

/// Both routing strategies over one registry. Embedding caches are built
/// lazily per style and rebuilt when the registry's catalog changes.
class Router {
 public:
  /// `lm` may be null, in which case Strategy::kPromptLm is rejected.
  Router(const Registry& registry, std::shared_ptr<const Embedder> embedder,
         std::shared_ptr<LmClient> lm, const Clock& clock, RouterOptions options = {});

  RoutingDecision route(std::string_view task_text, Strategy strategy, DescriptionStyle style);

  /// Current cache for `style`, rebuilding it if stale.
  std::shared_ptr<const EmbeddingCache> cache(DescriptionStyle style);

  const Registry& registry() const noexcept { return registry_; }
  bool has_lm() const noexcept { return lm_ != nullptr; }

 private:
  const Registry& registry_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<LmClient> lm_;
  const Clock& clock_;
  RouterOptions options_;
  std::mutex cache_mutex_;
  std::shared_ptr<const EmbeddingCache> caches_[2];
};

}  // namespace moira
