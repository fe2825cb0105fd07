// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace quarry::retrieval {

using Vector = std::vector<float>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string model_id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual bool multilingual() const { return false; }
  /// One vector of exactly dimension() components per input text.
  virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts) = 0;
  Vector embed(const std::string& text);
};

/// Deterministic, non-semantic embedder for offline use. Each lower-cased
/// alphanumeric token contributes a pseudo-random direction derived from
/// FNV-1a(seed, token) through splitmix64, plus half a direction for the
/// whole text. Texts sharing tokens therefore score higher than unrelated
/// ones, and distinct texts get distinct vectors.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed);
  std::string model_id() const override;
  std::size_t dimension() const override { return dimension_; }
  bool multilingual() const override { return true; }
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// OpenAI-compatible POST {base_url}/embeddings adapter.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  struct Options {
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string model;
    std::size_t dimension = 0;
    std::string api_key;
    bool multilingual = false;
    int timeout_seconds = 60;
  };
  explicit HttpEmbeddingProvider(Options options);
  std::string model_id() const override { return options_.model; }
  std::size_t dimension() const override { return options_.dimension; }
  bool multilingual() const override { return options_.multilingual; }
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override;

 private:
  Options options_;
};

std::uint64_t fnv1a(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t& state);

/// In-place L2 normalization; zero vectors stay zero.
void normalize(Vector& v);
double dot(const Vector& a, const Vector& b);
double cosine(const Vector& a, const Vector& b);

}  // namespace quarry::retrieval
