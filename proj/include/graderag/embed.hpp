#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "graderag/text.hpp"
#include "graderag/types.hpp"

namespace graderag {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool is_zero() const {
    for (double v : values)
      if (v != 0.0) return false;
    return true;
  }
};

enum class ProviderKind { LOCAL, REMOTE };

struct EmbeddingProviderConfig {
  ProviderKind kind = ProviderKind::LOCAL;
  std::string endpoint;           // remote only
  std::string model_name;         // remote only
  std::size_t dim = 64;           // local only
  std::string api_key_env;        // env var holding the bearer token
  int retry_limit = 3;
  int backoff_ms = 100;
  int max_parallel = 4;
};

inline void validate_provider(const EmbeddingProviderConfig& cfg) {
  if (cfg.kind == ProviderKind::LOCAL) {
    if (cfg.dim < 8)
      fail(Errc::ConfigError, "local embedder requires dim >= 8");
  } else {
    if (cfg.endpoint.empty() || cfg.model_name.empty())
      fail(Errc::ConfigError,
           "remote embedding provider requires endpoint and model_name");
  }
}

/// Deterministic offline embedder: hashed bag-of-words over lowercased word
/// tokens. Each word lands in bucket fnv1a64(word) % dim with +1 count, then
/// the vector is L2-normalized. Empty text yields the zero vector.
inline EmbeddingVector local_embed(std::string_view text, std::size_t dim) {
  if (dim < 8) fail(Errc::ConfigError, "local embedder requires dim >= 8");
  EmbeddingVector v;
  v.values.assign(dim, 0.0);
  for (const std::string& word : word_tokens(text))
    v.values[fnv1a64(word) % dim] += 1.0;
  double norm_sq = 0.0;
  for (double x : v.values) norm_sq += x * x;
  if (norm_sq > 0.0) {
    double norm = std::sqrt(norm_sq);
    for (double& x : v.values) x /= norm;
  }
  return v;
}

/// Cosine similarity in [-1, 1]; zero vectors compare as 0.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    fail(Errc::DimensionMismatch,
         "cosine: dim " + std::to_string(a.dim()) + " vs " +
             std::to_string(b.dim()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace detail {

struct UrlParts {
  std::string base;  // scheme://host[:port]
  std::string path;  // /path, defaults to "/"
};

inline UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    fail(Errc::ConfigError, "endpoint URL missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline httplib::Headers auth_headers(const std::string& api_key_env) {
  httplib::Headers headers;
  if (!api_key_env.empty()) {
    if (const char* key = std::getenv(api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

/// POSTs a JSON body, retrying transport failures and 5xx responses with
/// exponential backoff. Non-retryable statuses raise ProviderRejected;
/// exhausted retries raise ProviderUnavailable.
inline nlohmann::json post_json(const std::string& endpoint,
                                const httplib::Headers& headers,
                                const nlohmann::json& body, int retry_limit,
                                int backoff_ms) {
  const UrlParts url = split_url(endpoint);
  const std::string payload = body.dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= retry_limit; ++attempt) {
    if (attempt > 0 && backoff_ms > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(backoff_ms << (attempt - 1)));
    httplib::Client client(url.base);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(60, 0);
    auto res = client.Post(url.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      fail(Errc::ProviderRejected, endpoint + " returned status " +
                                       std::to_string(res->status) + ": " +
                                       res->body);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ProviderRejected,
           endpoint + " returned malformed JSON: " + std::string(e.what()));
    }
  }
  fail(Errc::ProviderUnavailable,
       endpoint + " unavailable after " + std::to_string(retry_limit + 1) +
           " attempts (" + last_error + ")");
}

/// Remote embeddings call: {model, input: [texts]} -> one vector per input,
/// in order, under data[i].embedding.
inline std::vector<EmbeddingVector> remote_embed_batch(
    const std::vector<std::string>& texts, const EmbeddingProviderConfig& cfg) {
  nlohmann::json body = {{"model", cfg.model_name}, {"input", texts}};
  nlohmann::json reply = post_json(cfg.endpoint, auth_headers(cfg.api_key_env),
                                   body, cfg.retry_limit, cfg.backoff_ms);
  if (!reply.contains("data") || !reply["data"].is_array() ||
      reply["data"].size() != texts.size())
    fail(Errc::ProviderRejected,
         "embeddings response missing data[] or wrong count");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::size_t expected_dim = 0;
  for (const auto& item : reply["data"]) {
    if (!item.contains("embedding") || !item["embedding"].is_array())
      fail(Errc::ProviderRejected, "embeddings response item missing embedding");
    EmbeddingVector v;
    v.values = item["embedding"].get<std::vector<double>>();
    if (expected_dim == 0) expected_dim = v.dim();
    if (v.dim() != expected_dim || v.dim() == 0)
      fail(Errc::DimensionMismatch,
           "embeddings response has inconsistent dimensions");
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace detail

/// Embeds a batch of texts through the configured provider. Order is
/// preserved; LOCAL output is deterministic.
inline std::vector<EmbeddingVector> embed_batch(
    const std::vector<std::string>& texts, const EmbeddingProviderConfig& cfg) {
  validate_provider(cfg);
  if (cfg.kind == ProviderKind::LOCAL) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(local_embed(t, cfg.dim));
    return out;
  }
  if (texts.empty()) return {};
  return detail::remote_embed_batch(texts, cfg);
}

inline EmbeddingVector embed_text(const std::string& text,
                                  const EmbeddingProviderConfig& cfg) {
  return embed_batch({text}, cfg).front();
}

}  // namespace graderag
