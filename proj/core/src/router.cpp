#include "moira/router.hpp"

#include "moira/error.hpp"

namespace moira {

Router::Router(const Registry& registry, std::shared_ptr<const Embedder> embedder,
               std::shared_ptr<LmClient> lm, const Clock& clock, RouterOptions options)
    : registry_(registry),
      embedder_(std::move(embedder)),
      lm_(std::move(lm)),
      clock_(clock),
      options_(std::move(options)) {
  if (!embedder_) throw Error(ErrorCode::kValidation, "router needs an embedder");
}

std::shared_ptr<const EmbeddingCache> Router::cache(DescriptionStyle style) {
  const Catalog catalog = registry_.catalog(style);
  const auto fingerprint = catalog_fingerprint(catalog);
  std::lock_guard lock(cache_mutex_);
  auto& slot = caches_[style == DescriptionStyle::kSimple ? 0 : 1];
  if (!slot || slot->fingerprint != fingerprint) {
    slot = std::make_shared<const EmbeddingCache>(build_cache(catalog, style, *embedder_));
  }
  return slot;
}

RoutingDecision Router::route(std::string_view task_text, Strategy strategy,
                              DescriptionStyle style) {
  if (strategy == Strategy::kPromptLm) {
    if (!lm_) throw Error(ErrorCode::kValidation, "no LM backend configured");
    LmRouteOptions lm_options;
    lm_options.prompt_template = options_.prompt_template ? &*options_.prompt_template : nullptr;
    lm_options.max_tokens = options_.lm_max_tokens;
    return route_by_lm(task_text, style, options_.few_shot, *lm_, registry_, clock_, lm_options);
  }
  // A registration can land between cache() and routing; one refresh covers it.
  for (int attempt = 0;; ++attempt) {
    try {
      return route_by_similarity(task_text, style, *cache(style), registry_, *embedder_, clock_,
                                 options_.similarity);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kCacheInvalid || attempt > 0) throw;
    }
  }
}

}  // namespace moira
