#pragma once

// Embedding providers and exact cosine top-k search.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amrevol/domain.hpp"

namespace amrevol {

enum class EmbedKind { remote, local_hash };

/// Which text of a module is embedded.
enum class EmbedMode { signature_only, header, full };

std::string_view to_string(EmbedKind v) noexcept;
std::string_view to_string(EmbedMode v) noexcept;
EmbedKind parse_embed_kind(std::string_view s);
EmbedMode parse_embed_mode(std::string_view s);

/// signature_only: signature; header: + "\n" + description; full: + "\n" + code
/// (trailing whitespace of the code dropped).
std::string module_text(const FunctionModule& m, EmbedMode mode);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  /// L2-normalized vector of length dim(). Throws EmptyText on "".
  virtual Vector embed(std::string_view text) const = 0;
  virtual std::size_t dim() const noexcept = 0;
  virtual EmbedKind kind() const noexcept = 0;
};

/// Hashed character 3-gram counts folded into `dim` buckets.
///
/// Text is decoded as UTF-8 into code points (invalid bytes become U+FFFD).
/// Every window of three consecutive code points is re-encoded as UTF-8 and
/// hashed with FNV-1a 64; bucket = hash % dim. Text shorter than three code
/// points counts as a single gram. The counts are L2-normalized.
class LocalHashEmbedder final : public EmbeddingProvider {
 public:
  explicit LocalHashEmbedder(std::size_t dim);

  Vector embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return dim_; }
  EmbedKind kind() const noexcept override { return EmbedKind::local_hash; }

 private:
  std::size_t dim_;
};

struct RemoteEmbedderConfig {
  std::string url;  // full endpoint URL, e.g. https://host/v1/embeddings
  std::string model;
  std::string api_key;
  std::size_t dim = 0;  // expected dimension; 0 accepts the first response's
  double timeout_seconds = 30.0;
  int max_retries = 3;
};

/// POSTs {model, input:[text]} and reads {data:[{embedding:[...]}]}.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);

  Vector embed(std::string_view text) const override;
  std::size_t dim() const noexcept override { return config_.dim; }
  EmbedKind kind() const noexcept override { return EmbedKind::remote; }

 private:
  RemoteEmbedderConfig config_;
};

/// Scales to unit L2 norm. Throws ZeroVector on an all-zero input.
Vector normalized(Vector v);

double dot(std::span<const double> a, std::span<const double> b);

/// dot(a,b) / (|a| |b|), clamped to [-1, 1]. Vectors flagged normalized skip the norm.
/// Throws DimensionMismatch or ZeroVector.
double cosine_similarity(const Vector& a, const Vector& b);

struct ScoredMatch {
  std::string module_id;
  double score = 0.0;

  bool operator==(const ScoredMatch&) const = default;
};

/// Descending score, ties by ascending id.
bool ranks_before(const ScoredMatch& a, const ScoredMatch& b) noexcept;

struct IndexedVector {
  std::string id;
  Vector vector;
};

/// Exact exhaustive top-k by cosine similarity. Throws DimensionMismatch.
std::vector<ScoredMatch> top_k(const Vector& query, std::span<const IndexedVector> corpus,
                               std::size_t k);

/// Same, over a corpus addressed through pointers (no copies).
std::vector<ScoredMatch> top_k(const Vector& query, std::span<const IndexedVector* const> corpus,
                               std::size_t k);

}  // namespace amrevol
