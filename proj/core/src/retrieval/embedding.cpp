// SPDX-License-Identifier: Apache-2.0
#include "quarry/retrieval/embedding.hpp"

#include <httplib.h>

#include <cctype>
#include <cmath>
#include <nlohmann/json.hpp>

#include "quarry/errors.hpp"

namespace quarry::retrieval {

Vector EmbeddingProvider::embed(const std::string& text) { return embed_batch({text}).at(0); }

std::uint64_t fnv1a(std::string_view data, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void normalize(Vector& v) {
  double norm = 0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm == 0) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}

double dot(const Vector& a, const Vector& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double cosine(const Vector& a, const Vector& b) {
  double na = std::sqrt(dot(a, a));
  double nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0;
  return dot(a, b) / (na * nb);
}

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension < 2) throw ConfigError("mock embedding dimension must be at least 2");
}

std::string MockEmbeddingProvider::model_id() const {
  return "mock-hash-" + std::to_string(dimension_) + "-" + std::to_string(seed_);
}

namespace {

void add_direction(Vector& v, std::uint64_t state, float weight) {
  for (auto& x : v) {
    // Uniform in [-1, 1).
    double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x += weight * static_cast<float>(2.0 * u - 1.0);
  }
}

}  // namespace

std::vector<Vector> MockEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  const std::uint64_t basis = fnv1a(std::to_string(seed_));
  for (const auto& text : texts) {
    Vector v(dimension_, 0.0f);
    std::string token;
    auto flush = [&] {
      if (!token.empty()) add_direction(v, fnv1a(token, basis), 1.0f);
      token.clear();
    };
    for (unsigned char c : text) {
      if (std::isalnum(c) || c >= 0x80) {
        token += static_cast<char>(std::tolower(c));
      } else {
        flush();
      }
    }
    flush();
    add_direction(v, fnv1a(text, basis ^ 0x5bd1e995ULL), 0.5f);
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(Options options) : options_(std::move(options)) {
  if (options_.dimension == 0) throw ConfigError("embedding dimension must be set");
  if (options_.base_url.find("://") == std::string::npos) {
    throw ConfigError("embedding base_url must be absolute: '" + options_.base_url + "'");
  }
}

std::vector<Vector> HttpEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
  const auto scheme = options_.base_url.find("://");
  const auto slash = options_.base_url.find('/', scheme + 3);
  const std::string origin = options_.base_url.substr(0, slash);
  const std::string path =
      (slash == std::string::npos ? std::string() : options_.base_url.substr(slash)) + "/embeddings";
  httplib::Client cli(origin);
  cli.set_read_timeout(options_.timeout_seconds, 0);
  cli.set_connection_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  nlohmann::json body = {{"model", options_.model}, {"input", texts}};
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) throw ProviderError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ProviderError("embedding endpoint returned HTTP " + std::to_string(res->status) + ": " +
                        res->body);
  }
  std::vector<Vector> out(texts.size());
  try {
    auto doc = nlohmann::json::parse(res->body);
    for (const auto& item : doc.at("data")) {
      std::size_t i = item.value("index", std::size_t{0});
      if (i >= out.size()) throw ProviderError("embedding response index out of range");
      out[i] = item.at("embedding").get<Vector>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  for (const auto& v : out) {
    if (v.size() != options_.dimension) {
      throw DimensionMismatch("embedding has " + std::to_string(v.size()) + " components, expected " +
                              std::to_string(options_.dimension));
    }
  }
  return out;
}

}  // namespace quarry::retrieval
