#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "graderag/embed.hpp"
#include "gtest_util.hpp"
#include "http_test_server.hpp"

using namespace graderag;
using testutil::HttpTestServer;
using testutil::throws_errc;

namespace {

EmbeddingProviderConfig local_cfg(std::size_t dim = 64) {
  EmbeddingProviderConfig cfg;
  cfg.kind = ProviderKind::LOCAL;
  cfg.dim = dim;
  return cfg;
}

double norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(LocalEmbed, DeterministicForSameText) {
  auto cfg = local_cfg();
  auto a = embed_text("the gas is a new substance", cfg);
  auto b = embed_text("the gas is a new substance", cfg);
  EXPECT_EQ(a.values, b.values);
}

TEST(LocalEmbed, EmptyTextIsZeroVector) {
  auto v = embed_text("", local_cfg(32));
  EXPECT_EQ(v.dim(), 32u);
  EXPECT_TRUE(v.is_zero());
  EXPECT_TRUE(embed_text("  ,. !", local_cfg(32)).is_zero());
}

TEST(LocalEmbed, DisjointBucketTextsAreOrthogonal) {
  const std::size_t dim = 64;
  std::set<std::size_t> left, right;
  for (const char* w : {"alpha", "beta"}) left.insert(fnv1a64(w) % dim);
  for (const char* w : {"gamma", "delta"}) right.insert(fnv1a64(w) % dim);
  for (std::size_t b : left) ASSERT_EQ(right.count(b), 0u);

  auto a = local_embed("alpha beta", dim);
  auto b = local_embed("gamma delta", dim);
  EXPECT_EQ(cosine(a, b), 0.0);
}

TEST(LocalEmbed, CountScaleCancelsUnderNormalization) {
  EXPECT_EQ(local_embed("word word", 64).values, local_embed("word", 64).values);
}

TEST(LocalEmbed, NonEmptyTextHasUnitNorm) {
  EXPECT_NEAR(norm(local_embed("soap and glycerol", 64)), 1.0, 1e-9);
  EXPECT_NEAR(norm(local_embed("x", 8)), 1.0, 1e-9);
}

TEST(LocalEmbed, BagOfWordsIgnoresOrder) {
  EXPECT_EQ(local_embed("a b", 64).values, local_embed("b a", 64).values);
}

TEST(LocalEmbed, DimBelowEightFails) {
  EXPECT_TRUE(throws_errc(Errc::ConfigError, [] { local_embed("x", 7); }));
  EXPECT_TRUE(throws_errc(Errc::ConfigError,
                          [] { validate_provider(local_cfg(4)); }));
}

TEST(Cosine, SelfSimilarityIsOne) {
  auto v = local_embed("substances have characteristic properties", 64);
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-9);
}

TEST(Cosine, OrthogonalUnitVectors) {
  EmbeddingVector e1{{1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}};
  EmbeddingVector e2{{0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}};
  EXPECT_EQ(cosine(e1, e2), 0.0);
}

TEST(Cosine, HandComputedCase) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  EmbeddingVector a{{inv_sqrt2, inv_sqrt2, 0.0}};
  EmbeddingVector b{{1.0, 0.0, 0.0}};
  EXPECT_NEAR(cosine(a, b), inv_sqrt2, 1e-9);
}

TEST(Cosine, ZeroVectorYieldsZero) {
  EmbeddingVector z{{0.0, 0.0, 0.0}};
  EmbeddingVector v{{1.0, 2.0, 3.0}};
  EXPECT_EQ(cosine(z, v), 0.0);
  EXPECT_EQ(cosine(v, z), 0.0);
  EXPECT_EQ(cosine(z, z), 0.0);
}

TEST(Cosine, DimensionMismatchFails) {
  EmbeddingVector a{{1.0, 0.0}};
  EmbeddingVector b{{1.0, 0.0, 0.0}};
  EXPECT_TRUE(throws_errc(Errc::DimensionMismatch, [&] { cosine(a, b); }));
}

TEST(Cosine, SymmetricAndBounded) {
  std::mt19937 rng(7u);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    EmbeddingVector a, b;
    for (int i = 0; i < 16; ++i) {
      a.values.push_back(dist(rng));
      b.values.push_back(dist(rng));
    }
    double ab = cosine(a, b);
    EXPECT_DOUBLE_EQ(ab, cosine(b, a));
    EXPECT_LE(std::abs(ab), 1.0 + 1e-9);
  }
}

TEST(EmbedBatch, LocalPreservesOrder) {
  std::vector<std::string> texts = {"first text", "", "third text"};
  auto batch = embed_batch(texts, local_cfg());
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_EQ(batch[0].values, local_embed("first text", 64).values);
  EXPECT_TRUE(batch[1].is_zero());
  EXPECT_EQ(batch[2].values, local_embed("third text", 64).values);
}

namespace {

EmbeddingProviderConfig remote_cfg(const std::string& endpoint) {
  EmbeddingProviderConfig cfg;
  cfg.kind = ProviderKind::REMOTE;
  cfg.endpoint = endpoint;
  cfg.model_name = "test-embedder";
  cfg.retry_limit = 2;
  cfg.backoff_ms = 1;
  return cfg;
}

}  // namespace

TEST(RemoteEmbed, ReturnsVectorsInRequestOrder) {
  HttpTestServer srv;
  srv.server().Post("/v1/embeddings", [](const httplib::Request& req,
                                         httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    ASSERT_EQ(body["model"], "test-embedder");
    nlohmann::json data = nlohmann::json::array();
    for (std::size_t i = 0; i < body["input"].size(); ++i) {
      double x = static_cast<double>(i + 1);
      data.push_back({{"embedding", {x, 0.0, 0.0}}});
    }
    res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
  });
  srv.start();

  auto batch =
      embed_batch({"one", "two", "three"}, remote_cfg(srv.url("/v1/embeddings")));
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_DOUBLE_EQ(batch[0].values[0], 1.0);
  EXPECT_DOUBLE_EQ(batch[1].values[0], 2.0);
  EXPECT_DOUBLE_EQ(batch[2].values[0], 3.0);
}

TEST(RemoteEmbed, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  HttpTestServer srv;
  srv.server().Post("/emb", [&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) < 2) {
      res.status = 503;
      return;
    }
    res.set_content(
        nlohmann::json{{"data", {{{"embedding", {1.0, 2.0}}}}}}.dump(),
        "application/json");
  });
  srv.start();

  auto batch = embed_batch({"only"}, remote_cfg(srv.url("/emb")));
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(calls.load(), 3);
}

TEST(RemoteEmbed, ClientErrorIsNotRetried) {
  std::atomic<int> calls{0};
  HttpTestServer srv;
  srv.server().Post("/emb", [&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.status = 401;
    res.set_content("unauthorized", "text/plain");
  });
  srv.start();

  EXPECT_TRUE(throws_errc(Errc::ProviderRejected, [&] {
    embed_batch({"x"}, remote_cfg(srv.url("/emb")));
  }));
  EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteEmbed, MalformedResponseIsRejected) {
  HttpTestServer srv;
  srv.server().Post("/emb", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"data", nlohmann::json::array()}}.dump(),
                    "application/json");
  });
  srv.start();

  EXPECT_TRUE(throws_errc(Errc::ProviderRejected, [&] {
    embed_batch({"x"}, remote_cfg(srv.url("/emb")));
  }));
}

TEST(RemoteEmbed, TransportFailureExhaustsRetries) {
  HttpTestServer srv;
  srv.server().Post("/emb", [](const httplib::Request&, httplib::Response&) {});
  srv.start();
  auto cfg = remote_cfg(srv.url("/emb"));
  srv.stop();

  cfg.retry_limit = 1;
  EXPECT_TRUE(throws_errc(Errc::ProviderUnavailable,
                          [&] { embed_batch({"x"}, cfg); }));
}

TEST(RemoteEmbed, BearerTokenComesFromEnvironment) {
  std::string seen_auth;
  HttpTestServer srv;
  srv.server().Post("/emb", [&](const httplib::Request& req,
                                httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    res.set_content(
        nlohmann::json{{"data", {{{"embedding", {1.0, 2.0}}}}}}.dump(),
        "application/json");
  });
  srv.start();

  ::setenv("GRADERAG_TEST_KEY", "sekrit", 1);
  auto cfg = remote_cfg(srv.url("/emb"));
  cfg.api_key_env = "GRADERAG_TEST_KEY";
  embed_batch({"x"}, cfg);
  ::unsetenv("GRADERAG_TEST_KEY");

  EXPECT_EQ(seen_auth, "Bearer sekrit");
}

TEST(RemoteEmbed, ConfigRequiresEndpointAndModel) {
  EmbeddingProviderConfig cfg;
  cfg.kind = ProviderKind::REMOTE;
  EXPECT_TRUE(throws_errc(Errc::ConfigError, [&] { validate_provider(cfg); }));
  cfg.endpoint = "http://127.0.0.1:1/x";
  EXPECT_TRUE(throws_errc(Errc::ConfigError, [&] { validate_provider(cfg); }));
}
