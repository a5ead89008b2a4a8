#pragma once

// Store of verified function modules with cosine retrieval, novelty checks and
// verification-gated admission.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "amrevol/domain.hpp"
#include "amrevol/embedding.hpp"

namespace amrevol {

inline constexpr double kDefaultNoveltyThreshold = 0.90;

enum class AdmissionOutcome { admitted, duplicate, rejected_unverified };

std::string_view to_string(AdmissionOutcome v) noexcept;
AdmissionOutcome parse_admission_outcome(std::string_view s);

struct AdmissionDecision {
  AdmissionOutcome outcome = AdmissionOutcome::rejected_unverified;
  std::optional<ScoredMatch> nearest;
};

Json encode(const AdmissionDecision& d);

class ModuleDatabase {
 public:
  explicit ModuleDatabase(std::size_t dim, double novelty_threshold = kDefaultNoveltyThreshold,
                          EmbedMode embed_mode = EmbedMode::full);

  ModuleDatabase(const ModuleDatabase& other);
  ModuleDatabase& operator=(const ModuleDatabase& other);
  ModuleDatabase(ModuleDatabase&& other) noexcept;
  ModuleDatabase& operator=(ModuleDatabase&& other) noexcept;

  std::size_t dim() const noexcept { return dim_; }
  double novelty_threshold() const noexcept { return novelty_threshold_; }
  EmbedMode embed_mode() const noexcept { return embed_mode_; }
  int version() const noexcept { return kFormatVersion; }

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  bool contains(const std::string& module_id) const;
  /// Entries in insertion order.
  std::vector<FunctionModule> entries() const;

  /// Best-scoring entry for `v`, if any. Throws DimensionMismatch.
  std::optional<ScoredMatch> nearest(const Vector& v) const;

  /// For each decomposed module its top `k_per_module` entries; the union is
  /// deduplicated by id in first-seen order and cut to `cap`. Modules without
  /// an embedding are embedded with `embedder` (required in that case).
  std::vector<FunctionModule> retrieve_for(std::span<const FunctionModule> decomposed,
                                           std::size_t k_per_module, std::size_t cap,
                                           const EmbeddingProvider* embedder = nullptr) const;

  /// Atomic novelty check + verification gate + insert.
  /// Throws InvalidArgument when the candidate has no embedding or the report
  /// is for another subject, DimensionMismatch on a wrong-sized embedding.
  AdmissionDecision admit(FunctionModule candidate, const VerificationReport& verification);

  /// Inserts a module that already carries a passing verification (replay of
  /// a recorded admission). Returns false if the id is already present.
  bool restore(FunctionModule module);

  /// Header line {kind, version, dim, novelty_threshold, embed_mode}, then one
  /// module per line. Written via temp file + rename.
  void save(const std::filesystem::path& path) const;
  /// Throws IoError, VersionMismatch, CorruptRecord(line).
  static ModuleDatabase load(const std::filesystem::path& path);

  bool operator==(const ModuleDatabase& other) const;

 private:
  std::optional<ScoredMatch> nearest_locked(const Vector& v) const;
  void insert_locked(FunctionModule m);

  std::size_t dim_;
  double novelty_threshold_;
  EmbedMode embed_mode_;
  mutable std::shared_mutex mutex_;
  std::vector<FunctionModule> entries_;
  std::vector<IndexedVector> index_;
  std::map<std::string, std::size_t> by_id_;
};

/// Embeds `m` per `mode` when it has no embedding yet.
void ensure_embedding(FunctionModule& m, const EmbeddingProvider& embedder, EmbedMode mode);

}  // namespace amrevol
