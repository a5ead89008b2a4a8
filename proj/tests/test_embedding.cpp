#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <random>

#include "amrevol/embedding.hpp"
#include "amrevol/error.hpp"
#include "local_server.hpp"
#include "oracles.hpp"

using namespace amrevol;

TEST(LocalHash, MatchesOracle) {
  const LocalHashEmbedder e(64);
  for (std::string text : {"ab", "abc", "def gcd(a, b):\n    return a", "héllo wörld ✓", "x"}) {
    SCOPED_TRACE(text);
    auto got = e.embed(text);
    auto want = oracle::hash_embedding(text, 64);
    ASSERT_EQ(got.dim(), 64u);
    EXPECT_TRUE(got.normalized);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(got.values[i], want[i], 1e-15);
  }
}

TEST(LocalHash, DeterministicAndRejectsEmpty) {
  const LocalHashEmbedder e(32);
  EXPECT_EQ(e.embed("same text"), e.embed("same text"));
  EXPECT_THROW(e.embed(""), EmptyText);
  EXPECT_THROW(LocalHashEmbedder(0), InvalidArgument);
  EXPECT_DOUBLE_EQ(cosine_similarity(e.embed("def f(x): return x"), e.embed("def f(x): return x")), 1.0);
}

TEST(ModuleText, Modes) {
  FunctionModule m;
  m.signature = "def f(x):";
  m.description = "Identity.";
  m.code = "def f(x):\n    return x\n\n";
  EXPECT_EQ(module_text(m, EmbedMode::signature_only), "def f(x):");
  EXPECT_EQ(module_text(m, EmbedMode::header), "def f(x):\nIdentity.");
  EXPECT_EQ(module_text(m, EmbedMode::full), "def f(x):\nIdentity.\ndef f(x):\n    return x");
  EXPECT_EQ(parse_embed_mode("header"), EmbedMode::header);
  EXPECT_THROW(parse_embed_mode("all"), InvalidArgument);
}

TEST(Cosine, SpecExamples) {
  EXPECT_NEAR(cosine_similarity(Vector{{1, 0}}, Vector{{1, 0}}), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(Vector{{1, 0}}, Vector{{0, 1}}), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(Vector{{1, 0}}, Vector{{-1, 0}}), -1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(Vector{{3, 4}}, Vector{{6, 8}}), 1.0, 1e-12);
  EXPECT_THROW(cosine_similarity(Vector{{1, 0}}, Vector{{1, 0, 0}}), DimensionMismatch);
  EXPECT_THROW(cosine_similarity(Vector{{0, 0}}, Vector{{1, 0}}), ZeroVector);
  EXPECT_THROW(normalized(Vector{{0, 0}}), ZeroVector);
}

TEST(Cosine, AgreesWithLongDoubleOracle) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(17), b(17);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    EXPECT_NEAR(cosine_similarity(Vector{a}, Vector{b}), static_cast<double>(oracle::cosine(a, b)), 1e-12);
    EXPECT_NEAR(cosine_similarity(normalized(Vector{a}), normalized(Vector{b})),
                static_cast<double>(oracle::cosine(a, b)), 1e-12);
  }
}

TEST(TopK, EqualsFullSortWithTies) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coarse(-2, 2);  // few distinct directions, many ties
  std::vector<IndexedVector> corpus;
  for (int i = 0; i < 300; ++i) {
    Vector v{{static_cast<double>(coarse(rng)), static_cast<double>(coarse(rng)), 1.0}};
    corpus.push_back({"id" + std::to_string(1000 + (i * 7919) % 300), normalized(v)});
  }
  for (int q = 0; q < 20; ++q) {
    Vector query = normalized(Vector{{static_cast<double>(coarse(rng)), 1.0, static_cast<double>(coarse(rng))}});
    std::vector<ScoredMatch> all;
    for (const auto& e : corpus) all.push_back({e.id, cosine_similarity(query, e.vector)});
    std::sort(all.begin(), all.end(), [](const ScoredMatch& a, const ScoredMatch& b) {
      return a.score != b.score ? a.score > b.score : a.module_id < b.module_id;
    });
    for (std::size_t k : {1u, 5u, 50u, 300u, 400u}) {
      auto got = top_k(query, std::span<const IndexedVector>(corpus), k);
      std::vector<ScoredMatch> want(all.begin(), all.begin() + static_cast<long>(std::min(k, all.size())));
      EXPECT_EQ(got, want) << "k=" << k;
    }
  }
}

TEST(TopK, EdgeCases) {
  std::vector<IndexedVector> empty;
  EXPECT_TRUE(top_k(Vector{{1, 0}}, std::span<const IndexedVector>(empty), 3).empty());
  std::vector<IndexedVector> one{{"a", Vector{{1, 0}}}};
  EXPECT_THROW(top_k(Vector{{1, 0}}, std::span<const IndexedVector>(one), 0), InvalidArgument);
  EXPECT_THROW(top_k(Vector{{1, 0, 0}}, std::span<const IndexedVector>(one), 1), DimensionMismatch);
}

TEST(RemoteEmbedder, ReadsOpenAiShapeAndNormalizes) {
  amrevol::testing::LocalServer srv;
  std::atomic<int> calls{0};
  std::string auth;
  srv.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    auth = req.get_header_value("Authorization");
    auto body = Json::parse(req.body);
    EXPECT_EQ(body["model"], "gte");
    EXPECT_EQ(body["input"][0], "hello");
    res.set_content(R"({"data":[{"embedding":[3.0, 4.0]}]})", "application/json");
  });
  srv.start();
  RemoteEmbedder e({srv.url("/v1/embeddings"), "gte", "k123", 2, 5.0, 0});
  auto v = e.embed("hello");
  EXPECT_TRUE(v.normalized);
  EXPECT_NEAR(v.values[0], 0.6, 1e-12);
  EXPECT_NEAR(v.values[1], 0.8, 1e-12);
  EXPECT_EQ(auth, "Bearer k123");
  EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteEmbedder, ErrorMapping) {
  amrevol::testing::LocalServer srv;
  std::atomic<int> flaky{0};
  srv.server().Post("/auth", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  srv.server().Post("/dim", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"embedding":[1.0, 2.0, 3.0]}]})", "application/json");
  });
  srv.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (flaky++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"data":[{"embedding":[1.0, 0.0]}]})", "application/json");
  });
  srv.server().Post("/junk", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  srv.start();
  EXPECT_THROW(RemoteEmbedder({srv.url("/auth"), "m", "", 0, 5.0, 0}).embed("x"), AuthError);
  EXPECT_THROW(RemoteEmbedder({srv.url("/dim"), "m", "", 2, 5.0, 0}).embed("x"), DimensionMismatch);
  EXPECT_THROW(RemoteEmbedder({srv.url("/junk"), "m", "", 0, 5.0, 0}).embed("x"), TransportError);
  EXPECT_EQ(RemoteEmbedder({srv.url("/flaky"), "m", "", 2, 5.0, 2}).embed("x").values[0], 1.0);
  EXPECT_EQ(flaky.load(), 2);
  EXPECT_THROW(RemoteEmbedder({srv.url("/dim"), "m", "", 0, 5.0, 0}).embed(""), EmptyText);
}
