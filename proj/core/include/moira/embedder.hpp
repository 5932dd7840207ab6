#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moira/registry.hpp"
#include "moira/uri.hpp"

namespace moira {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// dot(a, b) / (|a| |b|); 0 when either vector is zero.
/// Throws Error(kValidation) when dimensions differ.
double cosine(const Embedding& a, const Embedding& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const noexcept = 0;
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::vector<Embedding> embed_batch(std::span<const std::string> texts) const;
};

/// Lowercases ASCII letters, maps every ASCII character that is not a letter
/// or digit to a space, collapses runs of spaces and trims. Non-ASCII bytes
/// are kept as word characters.
std::string normalize_text(std::string_view text);

/// Features of normalized text: "w:<word>" unigrams, "b:<w1> <w2>" bigrams
/// and "c:<tri>" character trigrams of each word padded as "#word#".
std::vector<std::string> text_features(std::string_view normalized);

/// MurmurHash64A over `data` with the given seed.
std::uint64_t murmur64a(std::string_view data, std::uint64_t seed) noexcept;

inline constexpr std::uint64_t kFeatureHashSeed = 0x4d6f4952415f3031ULL;  // "MoIRA_01"
inline constexpr std::size_t kDefaultEmbeddingDim = 256;

/// Signed feature hashing of text_features() with term-frequency weights,
/// L2-normalized. Bucket is (h >> 1) % dim, sign is + when h is even.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = kDefaultEmbeddingDim);

  std::size_t dim() const noexcept override { return dim_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

/// Remote embedding service client.
/// Wire format: POST {"texts": [...]} -> {"embeddings": [[...], ...], "dim": D}.
std::vector<Embedding> remote_embed(std::span<const std::string> texts, const Uri& endpoint,
                                    std::chrono::milliseconds timeout);

class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(Uri endpoint, std::size_t dim,
                 std::chrono::milliseconds timeout = std::chrono::seconds(30));

  std::size_t dim() const noexcept override { return dim_; }
  Embedding embed(std::string_view text) const override;
  std::vector<Embedding> embed_batch(std::span<const std::string> texts) const override;

 private:
  Uri endpoint_;
  std::size_t dim_;
  std::chrono::milliseconds timeout_;
};

/// Fingerprint of an (id, description) list; any change in order, id or text
/// changes it.
std::uint64_t catalog_fingerprint(const Catalog& catalog);

struct EmbeddingCache {
  DescriptionStyle style = DescriptionStyle::kSimple;
  std::map<ExpertId, Embedding> entries;
  std::uint64_t fingerprint = 0;
};

/// One embedding per catalog entry. Throws kEmptyPool on an empty catalog.
EmbeddingCache build_cache(const Catalog& catalog, DescriptionStyle style,
                           const Embedder& embedder);

}  // namespace moira
