#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace moira {

using ExpertId = int;

enum class DescriptionStyle { kSimple, kAbstract };

std::string_view to_string(DescriptionStyle style) noexcept;
/// Accepts "simple" / "abstract". Throws Error(kValidation) otherwise.
DescriptionStyle parse_style(std::string_view text);

/// An expert as submitted for registration; `expert_id` is assigned by the
/// registry and ignored on input.
struct ExpertProfile {
  ExpertId expert_id = -1;
  std::string name;
  std::string meta_simple;
  std::string meta_abstract;
  std::string category_label;
  std::string adapter_id;
  std::uint64_t adapter_size_bytes = 0;
  std::string endpoint;

  const std::string& description(DescriptionStyle style) const {
    return style == DescriptionStyle::kSimple ? meta_simple : meta_abstract;
  }

  friend bool operator==(const ExpertProfile&, const ExpertProfile&) = default;
};

struct CatalogEntry {
  ExpertId expert_id;
  std::string description;

  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};
using Catalog = std::vector<CatalogEntry>;

/// Append-only pool of experts with dense ids 0..K-1.
///
/// Reads may run concurrently; registrations take an exclusive lock.
class Registry {
 public:
  Registry() = default;
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  /// Validates and stores `profile`, returning the new id (== previous size).
  ExpertId register_expert(ExpertProfile profile);

  ExpertProfile get_expert(ExpertId id) const;
  std::optional<ExpertProfile> find_by_name(std::string_view name) const;

  /// (id, description) pairs in id order. Throws kEmptyPool when empty.
  Catalog catalog(DescriptionStyle style) const;

  std::vector<ExpertProfile> snapshot() const;
  std::size_t size() const;

  /// Ordered distinct category labels (first appearance by id).
  std::vector<std::string> categories() const;

 private:
  mutable std::shared_mutex mutex_;
  std::vector<ExpertProfile> experts_;
};

/// Throws Error(kValidation) if a profile breaks the registration contract.
void validate_profile(const ExpertProfile& profile);

void to_json(nlohmann::json& j, const ExpertProfile& p);
void from_json(const nlohmann::json& j, ExpertProfile& p);

/// Registry snapshot: a top-level JSON array of profile objects.
std::string save_registry_json(const Registry& registry);
/// Registers every profile in array order; ids in the document must be
/// absent or equal to their array position.
void load_registry_json(std::string_view document, Registry& registry);

}  // namespace moira
