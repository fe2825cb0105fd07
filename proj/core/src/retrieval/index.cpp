// SPDX-License-Identifier: Apache-2.0
#include "quarry/retrieval/index.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "quarry/errors.hpp"

namespace quarry::retrieval {

using nlohmann::json;

std::string_view to_string(ItemKind kind) {
  switch (kind) {
    case ItemKind::example: return "example";
    case ItemKind::schema_class: return "schema_class";
    case ItemKind::endpoint_info: return "endpoint_info";
  }
  return "example";
}

ItemKind item_kind_from_string(std::string_view text) {
  if (text == "example") return ItemKind::example;
  if (text == "schema_class") return ItemKind::schema_class;
  if (text == "endpoint_info") return ItemKind::endpoint_info;
  throw IndexFormatError("unknown item kind '" + std::string(text) + "'");
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

Index::Index(std::string model_id, std::size_t dimension)
    : model_id_(std::move(model_id)), dimension_(dimension) {}

Index Index::build(const std::vector<IndexInput>& inputs, EmbeddingProvider& provider,
                   std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  Index index(provider.model_id(), provider.dimension());
  std::set<std::string> ids;
  for (const auto& in : inputs) {
    if (!ids.insert(in.item_id).second) throw Error("duplicate index item id '" + in.item_id + "'");
  }
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t end = std::min(inputs.size(), start + batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < end; ++i) texts.push_back(inputs[i].payload_text);
    std::vector<Vector> vectors;
    try {
      vectors = provider.embed_batch(texts);
    } catch (const ProviderError& e) {
      throw ProviderError(std::string(e.what()) + " (while embedding items " + inputs[start].item_id +
                          " .. " + inputs[end - 1].item_id + ")");
    }
    if (vectors.size() != texts.size()) {
      throw ProviderError("provider returned " + std::to_string(vectors.size()) + " vectors for " +
                          std::to_string(texts.size()) + " texts");
    }
    for (std::size_t i = start; i < end; ++i) {
      Vector v = std::move(vectors[i - start]);
      if (v.size() != index.dimension_) {
        throw DimensionMismatch("item " + inputs[i].item_id + ": vector has " +
                                std::to_string(v.size()) + " components, expected " +
                                std::to_string(index.dimension_));
      }
      normalize(v);
      index.items_.push_back(
          {inputs[i].item_id, inputs[i].kind, inputs[i].payload_text, inputs[i].source, std::move(v)});
    }
  }
  return index;
}

std::vector<RetrievalHit> Index::search(const std::string& query_text, std::optional<ItemKind> kind,
                                        std::size_t k, EmbeddingProvider& provider) const {
  if (k == 0) throw InvalidK("k must be positive");
  if (provider.model_id() != model_id_) {
    throw ProviderMismatch("index was built with '" + model_id_ + "' but the provider is '" +
                           provider.model_id() + "'");
  }
  Vector q = provider.embed(query_text);
  if (q.size() != dimension_) {
    throw DimensionMismatch("query vector has " + std::to_string(q.size()) + " components, expected " +
                            std::to_string(dimension_));
  }
  return search_vector(q, kind, k);
}

std::vector<RetrievalHit> Index::search_vector(const Vector& query, std::optional<ItemKind> kind,
                                               std::size_t k) const {
  if (k == 0) throw InvalidK("k must be positive");
  Vector q = query;
  normalize(q);
  std::vector<RetrievalHit> hits;
  for (const auto& item : items_) {
    if (kind && item.kind != *kind) continue;
    hits.push_back({&item, dot(q, item.vector)});
  }
  auto order = [](const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item->item_id < b.item->item_id;
  };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), order);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), order);
  }
  return hits;
}

std::size_t Index::count(ItemKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(items_.begin(), items_.end(), [&](const auto& i) { return i.kind == kind; }));
}

const IndexedItem* Index::find(const std::string& item_id) const {
  for (const auto& item : items_) {
    if (item.item_id == item_id) return &item;
  }
  return nullptr;
}

std::string Index::serialized_vectors() const {
  std::string out;
  out.reserve(items_.size() * dimension_ * 4);
  for (const auto& item : items_) {
    for (float x : item.vector) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      for (int b = 0; b < 4; ++b) out += static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  return out;
}

std::string Index::serialized_items() const {
  std::string out;
  for (const auto& item : items_) {
    json j = {{"item_id", item.item_id},
              {"kind", to_string(item.kind)},
              {"payload_text", item.payload_text},
              {"source", item.source}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string Index::checksum() const { return sha256_hex(serialized_vectors() + serialized_items()); }

void Index::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::string vectors = serialized_vectors();
  const std::string items = serialized_items();
  json manifest = {{"format_version", kFormatVersion},
                   {"model_id", model_id_},
                   {"dimension", dimension_},
                   {"item_count", items_.size()},
                   {"checksum", sha256_hex(vectors + items)}};
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("cannot write " + (dir / name).string());
  };
  write("vectors.bin", vectors);
  write("items.jsonl", items);
  write("manifest.json", manifest.dump(2) + "\n");
}

Index Index::load(const std::filesystem::path& dir) {
  auto read = [&](const std::string& name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw IndexFormatError("missing " + (dir / name).string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  json manifest;
  try {
    manifest = json::parse(read("manifest.json"));
  } catch (const json::exception& e) {
    throw IndexFormatError(std::string("unreadable manifest: ") + e.what());
  }
  if (manifest.value("format_version", 0) != kFormatVersion) {
    throw IndexFormatError("unsupported index format version " +
                           manifest.value("format_version", json(nullptr)).dump() + ", expected " +
                           std::to_string(kFormatVersion));
  }
  const std::string vectors = read("vectors.bin");
  const std::string items = read("items.jsonl");
  if (sha256_hex(vectors + items) != manifest.value("checksum", std::string())) {
    throw IndexFormatError("index checksum mismatch in " + dir.string());
  }
  Index index(manifest.at("model_id").get<std::string>(), manifest.at("dimension").get<std::size_t>());
  const std::size_t count = manifest.at("item_count").get<std::size_t>();
  if (vectors.size() != count * index.dimension_ * 4) {
    throw IndexFormatError("vector payload size does not match the manifest");
  }
  std::istringstream lines(items);
  std::string line;
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    if (row >= count) throw IndexFormatError("more items than the manifest declares");
    auto j = json::parse(line);
    IndexedItem item{j.at("item_id"), item_kind_from_string(j.at("kind").get<std::string>()),
                     j.at("payload_text"), j.at("source"), Vector(index.dimension_)};
    for (std::size_t d = 0; d < index.dimension_; ++d) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(vectors[(row * index.dimension_ + d) * 4 + b]))
                << (8 * b);
      }
      std::memcpy(&item.vector[d], &bits, sizeof bits);
    }
    index.items_.push_back(std::move(item));
    ++row;
  }
  if (row != count) throw IndexFormatError("fewer items than the manifest declares");
  return index;
}

json to_json(const schema::SchemaShape& shape, const std::string& endpoint_url) {
  json preds = json::array();
  for (const auto& [p, cell] : shape.predicate_constraints) {
    preds.push_back({{"predicate", p},
                     {"object_classes", cell.object_classes},
                     {"object_datatypes", cell.object_datatypes},
                     {"untyped", cell.untyped},
                     {"triple_count", cell.triple_count}});
  }
  return {{"class_iri", shape.class_iri},
          {"label", shape.label},
          {"shex", shape.rendered_shex},
          {"predicates", preds},
          {"endpoint_url", endpoint_url}};
}

std::vector<IndexInput> index_inputs(const harvest::EndpointMetadata& metadata,
                                     const std::vector<schema::SchemaShape>& shapes) {
  const std::string& url = metadata.endpoint.endpoint_url;
  std::vector<IndexInput> out;
  for (const auto& e : metadata.examples.examples) {
    out.push_back({"example:" + url + "#" + e.id, ItemKind::example, e.question, harvest::to_json(e)});
  }
  for (const auto& s : shapes) {
    out.push_back({"class:" + url + "#" + s.class_iri, ItemKind::schema_class,
                   schema::shape_summary_text(s) + "\n" + s.rendered_shex, to_json(s, url)});
  }
  const auto& ep = metadata.endpoint;
  std::string info = ep.label.empty() ? url : ep.label + " (" + url + ")";
  if (!ep.description.empty()) info += ": " + ep.description;
  out.push_back({"endpoint:" + url, ItemKind::endpoint_info, info,
                 {{"endpoint_url", url}, {"label", ep.label}, {"description", ep.description}}});
  return out;
}

}  // namespace quarry::retrieval
