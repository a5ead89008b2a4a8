#include "amrevol/module_db.hpp"

#include <mutex>
#include <set>
#include <utility>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"

namespace amrevol {

std::string_view to_string(AdmissionOutcome v) noexcept {
  switch (v) {
    case AdmissionOutcome::admitted: return "admitted";
    case AdmissionOutcome::duplicate: return "duplicate";
    case AdmissionOutcome::rejected_unverified: return "rejected_unverified";
  }
  return "rejected_unverified";
}

AdmissionOutcome parse_admission_outcome(std::string_view s) {
  if (s == "admitted") return AdmissionOutcome::admitted;
  if (s == "duplicate") return AdmissionOutcome::duplicate;
  if (s == "rejected_unverified") return AdmissionOutcome::rejected_unverified;
  throw InvalidArgument("unknown admission outcome: " + std::string(s));
}

Json encode(const AdmissionDecision& d) {
  Json j;
  j["outcome"] = to_string(d.outcome);
  if (d.nearest) {
    j["nearest"] = Json{{"module_id", d.nearest->module_id}, {"score", d.nearest->score}};
  } else {
    j["nearest"] = nullptr;
  }
  return j;
}

ModuleDatabase::ModuleDatabase(std::size_t dim, double novelty_threshold, EmbedMode embed_mode)
    : dim_(dim), novelty_threshold_(novelty_threshold), embed_mode_(embed_mode) {
  if (dim == 0) throw InvalidArgument("module database dim must be positive");
  if (!(novelty_threshold > 0.0 && novelty_threshold <= 1.0)) {
    throw InvalidArgument("novelty_threshold must be in (0, 1]");
  }
}

ModuleDatabase::ModuleDatabase(const ModuleDatabase& other)
    : dim_(other.dim_), novelty_threshold_(other.novelty_threshold_),
      embed_mode_(other.embed_mode_) {
  std::shared_lock lock(other.mutex_);
  entries_ = other.entries_;
  index_ = other.index_;
  by_id_ = other.by_id_;
}

ModuleDatabase& ModuleDatabase::operator=(const ModuleDatabase& other) {
  if (this == &other) return *this;
  ModuleDatabase copy(other);
  *this = std::move(copy);
  return *this;
}

ModuleDatabase::ModuleDatabase(ModuleDatabase&& other) noexcept
    : dim_(other.dim_), novelty_threshold_(other.novelty_threshold_),
      embed_mode_(other.embed_mode_), entries_(std::move(other.entries_)),
      index_(std::move(other.index_)), by_id_(std::move(other.by_id_)) {}

ModuleDatabase& ModuleDatabase::operator=(ModuleDatabase&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dim_ = other.dim_;
  novelty_threshold_ = other.novelty_threshold_;
  embed_mode_ = other.embed_mode_;
  entries_ = std::move(other.entries_);
  index_ = std::move(other.index_);
  by_id_ = std::move(other.by_id_);
  return *this;
}

std::size_t ModuleDatabase::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

bool ModuleDatabase::contains(const std::string& module_id) const {
  std::shared_lock lock(mutex_);
  return by_id_.count(module_id) != 0;
}

std::vector<FunctionModule> ModuleDatabase::entries() const {
  std::shared_lock lock(mutex_);
  return entries_;
}

std::optional<ScoredMatch> ModuleDatabase::nearest_locked(const Vector& v) const {
  if (v.dim() != dim_) throw DimensionMismatch(dim_, v.dim());
  if (index_.empty()) return std::nullopt;
  auto best = top_k(v, std::span<const IndexedVector>(index_), 1);
  return best.front();
}

std::optional<ScoredMatch> ModuleDatabase::nearest(const Vector& v) const {
  std::shared_lock lock(mutex_);
  return nearest_locked(v);
}

void ensure_embedding(FunctionModule& m, const EmbeddingProvider& embedder, EmbedMode mode) {
  if (m.embedding) return;
  m.embedding = embedder.embed(module_text(m, mode));
}

std::vector<FunctionModule> ModuleDatabase::retrieve_for(
    std::span<const FunctionModule> decomposed, std::size_t k_per_module, std::size_t cap,
    const EmbeddingProvider* embedder) const {
  if (k_per_module == 0) throw InvalidArgument("k_per_module must be positive");
  if (cap == 0) throw InvalidArgument("cap must be positive");

  std::vector<Vector> queries;
  queries.reserve(decomposed.size());
  for (const auto& m : decomposed) {
    if (m.embedding) {
      queries.push_back(*m.embedding);
    } else {
      if (embedder == nullptr) {
        throw InvalidArgument("module '" + m.name + "' has no embedding and no embedder given");
      }
      queries.push_back(embedder->embed(module_text(m, embed_mode_)));
    }
  }

  std::shared_lock lock(mutex_);
  std::vector<FunctionModule> out;
  if (entries_.empty()) return out;
  std::set<std::string> seen;
  for (const auto& q : queries) {
    if (q.dim() != dim_) throw DimensionMismatch(dim_, q.dim());
    for (const auto& match : top_k(q, std::span<const IndexedVector>(index_), k_per_module)) {
      if (!seen.insert(match.module_id).second) continue;
      out.push_back(entries_[by_id_.at(match.module_id)]);
      if (out.size() == cap) return out;
    }
  }
  return out;
}

void ModuleDatabase::insert_locked(FunctionModule m) {
  m.verified = true;
  Vector v = std::move(*m.embedding);
  if (!v.normalized) v = normalized(std::move(v));
  m.embedding = v;
  by_id_[m.module_id] = entries_.size();
  index_.push_back({m.module_id, std::move(v)});
  entries_.push_back(std::move(m));
}

AdmissionDecision ModuleDatabase::admit(FunctionModule candidate,
                                        const VerificationReport& verification) {
  if (!candidate.embedding) throw InvalidArgument("candidate has no embedding");
  if (candidate.embedding->dim() != dim_) {
    throw DimensionMismatch(dim_, candidate.embedding->dim());
  }
  if (verification.subject_id != candidate.module_id) {
    throw InvalidArgument("verification report is for '" + verification.subject_id +
                          "', not '" + candidate.module_id + "'");
  }

  std::unique_lock lock(mutex_);
  AdmissionDecision decision;
  decision.nearest = nearest_locked(*candidate.embedding);
  if (decision.nearest && decision.nearest->score >= novelty_threshold_) {
    decision.outcome = AdmissionOutcome::duplicate;
    return decision;
  }
  if (auto it = by_id_.find(candidate.module_id); it != by_id_.end()) {
    // Same content id but a distant embedding: the stored vector came from a
    // different embedder. The incumbent stays.
    throw InvalidArgument("module '" + candidate.module_id +
                          "' is already stored with an embedding that does not match");
  }
  if (verification.status != VerificationStatus::pass) {
    decision.outcome = AdmissionOutcome::rejected_unverified;
    return decision;
  }
  candidate.verification = verification;
  insert_locked(std::move(candidate));
  decision.outcome = AdmissionOutcome::admitted;
  return decision;
}

bool ModuleDatabase::restore(FunctionModule module) {
  if (!module.embedding) throw InvalidArgument("restored module has no embedding");
  if (module.embedding->dim() != dim_) throw DimensionMismatch(dim_, module.embedding->dim());
  if (!module.verified) throw InvalidArgument("restored module is not verified");
  std::unique_lock lock(mutex_);
  if (by_id_.count(module.module_id)) return false;
  insert_locked(std::move(module));
  return true;
}

void ModuleDatabase::save(const std::filesystem::path& path) const {
  std::vector<Json> records;
  {
    std::shared_lock lock(mutex_);
    records = encode_records(entries_);
  }
  Json extra;
  extra["dim"] = dim_;
  extra["novelty_threshold"] = novelty_threshold_;
  extra["embed_mode"] = to_string(embed_mode_);
  write_jsonl(path, make_header("modules", std::move(extra)), records);
}

ModuleDatabase ModuleDatabase::load(const std::filesystem::path& path) {
  JsonlFile file = read_jsonl(path, "modules");
  std::vector<FunctionModule> modules = decode_records<FunctionModule>(file);

  std::size_t dim = 0;
  double threshold = kDefaultNoveltyThreshold;
  EmbedMode mode = EmbedMode::full;
  if (file.header) {
    const Json& h = *file.header;
    try {
      if (h.contains("dim")) dim = h["dim"].get<std::size_t>();
      if (h.contains("novelty_threshold")) threshold = h["novelty_threshold"].get<double>();
      if (h.contains("embed_mode")) mode = parse_embed_mode(h["embed_mode"].get<std::string>());
    } catch (const std::exception& e) {
      throw CorruptRecord(1, std::string("bad modules header: ") + e.what());
    }
  }
  if (dim == 0) {
    for (const auto& m : modules) {
      if (m.embedding) {
        dim = m.embedding->dim();
        break;
      }
    }
  }
  if (dim == 0) throw CorruptRecord(1, "modules file does not state an embedding dim");

  ModuleDatabase db(dim, threshold, mode);
  for (std::size_t i = 0; i < modules.size(); ++i) {
    const std::size_t line = file.records[i].line;
    auto& m = modules[i];
    if (!m.verified) throw CorruptRecord(line, "stored module is not verified");
    if (!m.embedding) throw CorruptRecord(line, "stored module has no embedding");
    if (m.embedding->dim() != dim) {
      throw CorruptRecord(line, "embedding dim " + std::to_string(m.embedding->dim()) +
                                    " differs from database dim " + std::to_string(dim));
    }
    if (db.by_id_.count(m.module_id)) throw CorruptRecord(line, "duplicate module_id");
    db.by_id_[m.module_id] = db.entries_.size();
    db.index_.push_back({m.module_id, *m.embedding});
    db.entries_.push_back(std::move(m));
  }
  return db;
}

bool ModuleDatabase::operator==(const ModuleDatabase& other) const {
  if (this == &other) return true;
  std::shared_lock a(mutex_);
  std::shared_lock b(other.mutex_);
  return dim_ == other.dim_ && novelty_threshold_ == other.novelty_threshold_ &&
         embed_mode_ == other.embed_mode_ && entries_ == other.entries_;
}

}  // namespace amrevol
