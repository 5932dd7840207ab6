#include "moira/embedder.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "http_client.hpp"
#include "moira/error.hpp"

namespace moira {

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kValidation, "cosine of embeddings with dims " +
                                            std::to_string(a.dim()) + " and " +
                                            std::to_string(b.dim()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<Embedding> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    const bool word = c >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9');
    if (!word) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : raw);
  }
  return out;
}

std::vector<std::string> text_features(std::string_view normalized) {
  std::vector<std::string_view> words;
  std::size_t start = 0;
  while (start < normalized.size()) {
    auto end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) words.push_back(normalized.substr(start, end - start));
    start = end + 1;
  }

  std::vector<std::string> features;
  for (std::size_t i = 0; i < words.size(); ++i) {
    features.push_back("w:" + std::string(words[i]));
    if (i + 1 < words.size()) {
      features.push_back("b:" + std::string(words[i]) + " " + std::string(words[i + 1]));
    }
    const std::string padded = "#" + std::string(words[i]) + "#";
    for (std::size_t k = 0; k + 3 <= padded.size(); ++k) {
      features.push_back("c:" + padded.substr(k, 3));
    }
  }
  return features;
}

std::uint64_t murmur64a(std::string_view data, std::uint64_t seed) noexcept {
  constexpr std::uint64_t m = 0xc6a4a7935bd1e995ULL;
  constexpr int r = 47;
  const std::size_t len = data.size();
  std::uint64_t h = seed ^ (len * m);

  const char* p = data.data();
  const std::size_t blocks = len / 8;
  for (std::size_t i = 0; i < blocks; ++i) {
    std::uint64_t k;
    std::memcpy(&k, p + i * 8, sizeof k);
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }

  const auto* tail = reinterpret_cast<const unsigned char*>(p + blocks * 8);
  switch (len & 7) {
    case 7: h ^= std::uint64_t(tail[6]) << 48; [[fallthrough]];
    case 6: h ^= std::uint64_t(tail[5]) << 40; [[fallthrough]];
    case 5: h ^= std::uint64_t(tail[4]) << 32; [[fallthrough]];
    case 4: h ^= std::uint64_t(tail[3]) << 24; [[fallthrough]];
    case 3: h ^= std::uint64_t(tail[2]) << 16; [[fallthrough]];
    case 2: h ^= std::uint64_t(tail[1]) << 8; [[fallthrough]];
    case 1:
      h ^= std::uint64_t(tail[0]);
      h *= m;
  }

  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return h;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::kValidation, "embedding dimension must be positive");
}

Embedding HashingEmbedder::embed(std::string_view text) const {
  Embedding e{std::vector<double>(dim_, 0.0)};
  for (const auto& f : text_features(normalize_text(text))) {
    const std::uint64_t h = murmur64a(f, kFeatureHashSeed);
    const auto bucket = static_cast<std::size_t>((h >> 1) % dim_);
    e.values[bucket] += (h & 1U) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double v : e.values) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& v : e.values) v /= norm;
  }
  return e;
}

std::vector<Embedding> remote_embed(std::span<const std::string> texts, const Uri& endpoint,
                                    std::chrono::milliseconds timeout) {
  const nlohmann::json request{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto reply = detail::post_json(endpoint, request, timeout);

  const auto emb = reply.find("embeddings");
  if (!reply.is_object() || emb == reply.end() || !emb->is_array()) {
    throw Error(ErrorCode::kProtocol, "embedding response lacks an 'embeddings' array");
  }
  if (emb->size() != texts.size()) {
    throw Error(ErrorCode::kProtocol, "embedding response has " + std::to_string(emb->size()) +
                                          " vectors for " + std::to_string(texts.size()) +
                                          " texts");
  }
  std::optional<std::size_t> dim;
  if (const auto d = reply.find("dim"); d != reply.end()) {
    if (!d->is_number_integer() || d->get<long long>() <= 0) {
      throw Error(ErrorCode::kProtocol, "embedding response 'dim' must be a positive integer");
    }
    dim = d->get<std::size_t>();
  }

  std::vector<Embedding> out;
  out.reserve(emb->size());
  for (const auto& row : *emb) {
    if (!row.is_array()) throw Error(ErrorCode::kProtocol, "embedding row is not an array");
    if (!dim) dim = row.size();
    if (row.size() != *dim) {
      throw Error(ErrorCode::kProtocol, "inconsistent embedding dimensions: " +
                                            std::to_string(row.size()) + " vs " +
                                            std::to_string(*dim));
    }
    Embedding e;
    e.values.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number()) throw Error(ErrorCode::kProtocol, "embedding value is not a number");
      e.values.push_back(v.get<double>());
    }
    out.push_back(std::move(e));
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(Uri endpoint, std::size_t dim, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), dim_(dim), timeout_(timeout) {}

Embedding RemoteEmbedder::embed(std::string_view text) const {
  const std::string one(text);
  return embed_batch(std::span(&one, 1)).front();
}

std::vector<Embedding> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
  auto out = remote_embed(texts, endpoint_, timeout_);
  for (const auto& e : out) {
    if (e.dim() != dim_) {
      throw Error(ErrorCode::kProtocol, "embedding service returned dim " +
                                            std::to_string(e.dim()) + ", expected " +
                                            std::to_string(dim_));
    }
  }
  return out;
}

std::uint64_t catalog_fingerprint(const Catalog& catalog) {
  std::string buf;
  for (const auto& [id, text] : catalog) {
    buf += std::to_string(id);
    buf += ':';
    buf += std::to_string(text.size());
    buf += ':';
    buf += text;
    buf += ';';
  }
  return murmur64a(buf, kFeatureHashSeed);
}

EmbeddingCache build_cache(const Catalog& catalog, DescriptionStyle style,
                           const Embedder& embedder) {
  if (catalog.empty()) throw Error(ErrorCode::kEmptyPool, "cannot build cache for empty catalog");
  std::vector<std::string> texts;
  texts.reserve(catalog.size());
  for (const auto& entry : catalog) texts.push_back(entry.description);
  auto vectors = embedder.embed_batch(texts);

  EmbeddingCache cache;
  cache.style = style;
  cache.fingerprint = catalog_fingerprint(catalog);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    cache.entries.emplace(catalog[i].expert_id, std::move(vectors[i]));
  }
  return cache;
}

}  // namespace moira
