#include "amrevol/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <thread>
#include <tuple>

#include "amrevol/error.hpp"
#include "amrevol/hash.hpp"
#include "http.hpp"

namespace amrevol {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (!ok || overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

template <class Range>
std::vector<ScoredMatch> top_k_impl(const Vector& query, const Range& corpus, std::size_t k,
                                    auto&& vector_of) {
  std::vector<ScoredMatch> scored;
  scored.reserve(corpus.size());
  for (const auto& entry : corpus) {
    const auto& [id, vec] = vector_of(entry);
    if (vec.dim() != query.dim()) throw DimensionMismatch(query.dim(), vec.dim());
    scored.push_back({id, cosine_similarity(query, vec)});
  }
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    ranks_before);
  scored.resize(n);
  return scored;
}

}  // namespace

std::string_view to_string(EmbedKind v) noexcept {
  return v == EmbedKind::remote ? "remote" : "local_hash";
}

std::string_view to_string(EmbedMode v) noexcept {
  switch (v) {
    case EmbedMode::signature_only: return "signature_only";
    case EmbedMode::header: return "header";
    case EmbedMode::full: return "full";
  }
  return "full";
}

EmbedKind parse_embed_kind(std::string_view s) {
  if (s == "remote") return EmbedKind::remote;
  if (s == "local_hash") return EmbedKind::local_hash;
  throw InvalidArgument("unknown embedder kind: '" + std::string(s) + "'");
}

EmbedMode parse_embed_mode(std::string_view s) {
  if (s == "signature_only") return EmbedMode::signature_only;
  if (s == "header") return EmbedMode::header;
  if (s == "full") return EmbedMode::full;
  throw InvalidArgument("unknown embed mode: '" + std::string(s) + "'");
}

std::string module_text(const FunctionModule& m, EmbedMode mode) {
  std::string text = m.signature;
  if (mode == EmbedMode::signature_only) return text;
  text += '\n';
  text += m.description;
  if (mode == EmbedMode::header) return text;
  text += '\n';
  std::string_view code = m.code;
  while (!code.empty() && std::isspace(static_cast<unsigned char>(code.back()))) code.remove_suffix(1);
  text += code;
  return text;
}

LocalHashEmbedder::LocalHashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InvalidArgument("embedding dim must be positive");
}

Vector LocalHashEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw EmptyText();
  const auto cps = decode_utf8(text);
  std::vector<double> counts(dim_, 0.0);
  const std::size_t width = std::min<std::size_t>(3, cps.size());
  std::string gram;
  for (std::size_t i = 0; i + width <= cps.size(); ++i) {
    gram.clear();
    for (std::size_t k = 0; k < width; ++k) append_utf8(gram, cps[i + k]);
    counts[fnv1a64(gram) % dim_] += 1.0;
  }
  return normalized(Vector{std::move(counts), false});
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw InvalidArgument("remote embedder needs a URL");
}

Vector RemoteEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw EmptyText();
  Json body;
  body["model"] = config_.model;
  body["input"] = Json::array({std::string(text)});
  detail::Headers headers{{"Content-Type", "application/json"}};
  if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);

  detail::HttpResult result;
  for (int attempt = 0;; ++attempt) {
    result = detail::http_post_json(config_.url, body.dump(), headers, config_.timeout_seconds);
    const bool transient = result.status == 0 || result.status == 429 || result.status >= 500;
    if (!transient || attempt >= config_.max_retries) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(250LL << attempt));
  }
  if (result.status == 401 || result.status == 403) {
    throw AuthError("embedding endpoint rejected credentials (HTTP " + std::to_string(result.status) + ")");
  }
  if (result.status != 200) {
    throw TransportError("embedding request failed: " +
                         (result.status ? "HTTP " + std::to_string(result.status) : result.error));
  }
  Vector v;
  try {
    const auto j = Json::parse(result.body);
    for (const auto& x : j.at("data").at(0).at("embedding")) v.values.push_back(x.get<double>());
  } catch (const std::exception& e) {
    throw TransportError(std::string("malformed embedding response: ") + e.what());
  }
  if (config_.dim != 0 && v.dim() != config_.dim) throw DimensionMismatch(config_.dim, v.dim());
  return normalized(std::move(v));
}

Vector normalized(Vector v) {
  double norm2 = 0.0;
  for (double x : v.values) norm2 += x * x;
  if (norm2 == 0.0) throw ZeroVector();
  const double norm = std::sqrt(norm2);
  for (double& x : v.values) x /= norm;
  v.normalized = true;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch(a.dim(), b.dim());
  const double ab = dot(a.values, b.values);
  double sim = ab;
  if (!(a.normalized && b.normalized)) {
    const double na = dot(a.values, a.values);
    const double nb = dot(b.values, b.values);
    if (na == 0.0 || nb == 0.0) throw ZeroVector();
    sim = ab / (std::sqrt(na) * std::sqrt(nb));
  }
  return std::clamp(sim, -1.0, 1.0);
}

bool ranks_before(const ScoredMatch& a, const ScoredMatch& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.module_id < b.module_id;
}

std::vector<ScoredMatch> top_k(const Vector& query, std::span<const IndexedVector> corpus,
                               std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be positive");
  return top_k_impl(query, corpus, k, [](const IndexedVector& e) {
    return std::tie(e.id, e.vector);
  });
}

std::vector<ScoredMatch> top_k(const Vector& query, std::span<const IndexedVector* const> corpus,
                               std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be positive");
  return top_k_impl(query, corpus, k, [](const IndexedVector* e) {
    return std::tie(e->id, e->vector);
  });
}

}  // namespace amrevol
