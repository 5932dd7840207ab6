#include "moira/registry.hpp"

#include <algorithm>
#include <mutex>

#include <nlohmann/json.hpp>

#include "moira/error.hpp"
#include "moira/uri.hpp"

namespace moira {

std::string_view to_string(DescriptionStyle style) noexcept {
  return style == DescriptionStyle::kSimple ? "simple" : "abstract";
}

DescriptionStyle parse_style(std::string_view text) {
  if (text == "simple") return DescriptionStyle::kSimple;
  if (text == "abstract") return DescriptionStyle::kAbstract;
  throw Error(ErrorCode::kValidation,
              "unknown description style '" + std::string(text) + "'");
}

void validate_profile(const ExpertProfile& p) {
  if (p.name.empty()) throw Error(ErrorCode::kValidation, "expert name is empty");
  if (p.meta_simple.empty()) {
    throw Error(ErrorCode::kValidation, "meta_simple is empty for expert '" + p.name + "'");
  }
  if (p.meta_abstract.empty()) {
    throw Error(ErrorCode::kValidation, "meta_abstract is empty for expert '" + p.name + "'");
  }
  if (p.adapter_size_bytes == 0) {
    throw Error(ErrorCode::kValidation,
                "adapter_size_bytes must be positive for expert '" + p.name + "'");
  }
  parse_uri(p.endpoint);
}

ExpertId Registry::register_expert(ExpertProfile profile) {
  validate_profile(profile);
  std::unique_lock lock(mutex_);
  const bool taken = std::any_of(experts_.begin(), experts_.end(),
                                 [&](const ExpertProfile& e) { return e.name == profile.name; });
  if (taken) {
    throw Error(ErrorCode::kDuplicateName, "expert name '" + profile.name + "' already registered");
  }
  profile.expert_id = static_cast<ExpertId>(experts_.size());
  experts_.push_back(std::move(profile));
  return experts_.back().expert_id;
}

ExpertProfile Registry::get_expert(ExpertId id) const {
  std::shared_lock lock(mutex_);
  if (id < 0 || static_cast<std::size_t>(id) >= experts_.size()) {
    throw Error(ErrorCode::kNotFound, "no expert with id " + std::to_string(id));
  }
  return experts_[static_cast<std::size_t>(id)];
}

std::optional<ExpertProfile> Registry::find_by_name(std::string_view name) const {
  std::shared_lock lock(mutex_);
  for (const auto& e : experts_) {
    if (e.name == name) return e;
  }
  return std::nullopt;
}

Catalog Registry::catalog(DescriptionStyle style) const {
  std::shared_lock lock(mutex_);
  if (experts_.empty()) throw Error(ErrorCode::kEmptyPool, "expert registry is empty");
  Catalog out;
  out.reserve(experts_.size());
  for (const auto& e : experts_) out.push_back({e.expert_id, e.description(style)});
  return out;
}

std::vector<ExpertProfile> Registry::snapshot() const {
  std::shared_lock lock(mutex_);
  return experts_;
}

std::size_t Registry::size() const {
  std::shared_lock lock(mutex_);
  return experts_.size();
}

std::vector<std::string> Registry::categories() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& e : experts_) {
    if (std::find(out.begin(), out.end(), e.category_label) == out.end()) {
      out.push_back(e.category_label);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const ExpertProfile& p) {
  j = nlohmann::json{{"expert_id", p.expert_id},
                     {"name", p.name},
                     {"meta_simple", p.meta_simple},
                     {"meta_abstract", p.meta_abstract},
                     {"category_label", p.category_label},
                     {"adapter_id", p.adapter_id},
                     {"adapter_size_bytes", p.adapter_size_bytes},
                     {"endpoint", p.endpoint}};
}

void from_json(const nlohmann::json& j, ExpertProfile& p) {
  if (!j.is_object()) throw Error(ErrorCode::kSchema, "expert profile must be a JSON object");
  auto str = [&](const char* key, bool required) -> std::string {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) throw Error(ErrorCode::kSchema, std::string("missing field '") + key + "'");
      return {};
    }
    if (!it->is_string()) {
      throw Error(ErrorCode::kSchema, std::string("field '") + key + "' must be a string");
    }
    return it->get<std::string>();
  };
  p.name = str("name", true);
  p.meta_simple = str("meta_simple", true);
  p.meta_abstract = str("meta_abstract", true);
  p.category_label = str("category_label", false);
  p.adapter_id = str("adapter_id", false);
  p.endpoint = str("endpoint", true);

  const auto size = j.find("adapter_size_bytes");
  if (size == j.end() || !size->is_number_integer() || size->get<std::int64_t>() <= 0) {
    throw Error(ErrorCode::kSchema, "adapter_size_bytes must be a positive integer");
  }
  p.adapter_size_bytes = size->get<std::uint64_t>();

  p.expert_id = -1;
  if (const auto id = j.find("expert_id"); id != j.end() && !id->is_null()) {
    if (!id->is_number_integer()) throw Error(ErrorCode::kSchema, "expert_id must be an integer");
    p.expert_id = id->get<ExpertId>();
  }
}

std::string save_registry_json(const Registry& registry) {
  return nlohmann::json(registry.snapshot()).dump(2);
}

void load_registry_json(std::string_view document, Registry& registry) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("registry snapshot is not JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error(ErrorCode::kSchema, "registry snapshot must be a JSON array");
  const auto base = static_cast<ExpertId>(registry.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto profile = j[i].get<ExpertProfile>();
    const auto expected = base + static_cast<ExpertId>(i);
    if (profile.expert_id != -1 && profile.expert_id != expected) {
      throw Error(ErrorCode::kSchema, "expert_id " + std::to_string(profile.expert_id) +
                                          " does not match its position " +
                                          std::to_string(expected));
    }
    registry.register_expert(std::move(profile));
  }
}

}  // namespace moira
