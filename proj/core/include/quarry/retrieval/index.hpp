// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/harvest/harvest.hpp"
#include "quarry/retrieval/embedding.hpp"
#include "quarry/schema/schema.hpp"

namespace quarry::retrieval {

enum class ItemKind { example, schema_class, endpoint_info };

std::string_view to_string(ItemKind kind);
ItemKind item_kind_from_string(std::string_view text);

struct IndexInput {
  std::string item_id;
  ItemKind kind = ItemKind::example;
  std::string payload_text;
  /// Serialized QueryExample, SchemaShape or EndpointDescriptor.
  nlohmann::json source;
};

struct IndexedItem {
  std::string item_id;
  ItemKind kind = ItemKind::example;
  std::string payload_text;
  nlohmann::json source;
  Vector vector;  // L2-normalized
};

struct RetrievalHit {
  const IndexedItem* item = nullptr;
  double score = 0.0;
};

/// Exact cosine-similarity index. Immutable once built; concurrent search is safe.
class Index {
 public:
  static constexpr int kFormatVersion = 1;

  Index() = default;
  Index(std::string model_id, std::size_t dimension);

  /// Embeds every input in batches. Throws DimensionMismatch, ProviderError
  /// (with the failing item ids) and Error on duplicate item ids.
  static Index build(const std::vector<IndexInput>& inputs, EmbeddingProvider& provider,
                     std::size_t batch_size = 64);

  /// min(k, matching items) hits by descending score, ties by ascending item_id.
  /// Throws InvalidK for k == 0 and ProviderMismatch for a different model.
  std::vector<RetrievalHit> search(const std::string& query_text, std::optional<ItemKind> kind,
                                   std::size_t k, EmbeddingProvider& provider) const;
  std::vector<RetrievalHit> search_vector(const Vector& query, std::optional<ItemKind> kind,
                                          std::size_t k) const;

  /// Writes manifest.json, vectors.bin and items.jsonl.
  void save(const std::filesystem::path& dir) const;
  /// Throws IndexFormatError on version, checksum or size mismatch.
  static Index load(const std::filesystem::path& dir);

  /// SHA-256 over the serialized vectors and items, hex encoded.
  std::string checksum() const;

  const std::string& model_id() const { return model_id_; }
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return items_.size(); }
  std::size_t count(ItemKind kind) const;
  const std::vector<IndexedItem>& items() const { return items_; }
  const IndexedItem* find(const std::string& item_id) const;

 private:
  std::string serialized_vectors() const;
  std::string serialized_items() const;

  std::string model_id_;
  std::size_t dimension_ = 0;
  std::vector<IndexedItem> items_;
};

/// Index inputs for one endpoint: every usable example (payload = question),
/// every shape (payload = summary + ShEx) and the endpoint description.
std::vector<IndexInput> index_inputs(const harvest::EndpointMetadata& metadata,
                                     const std::vector<schema::SchemaShape>& shapes);

nlohmann::json to_json(const schema::SchemaShape& shape, const std::string& endpoint_url);

std::string sha256_hex(std::string_view data);

}  // namespace quarry::retrieval
