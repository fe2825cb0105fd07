// SPDX-License-Identifier: Apache-2.0
#include "quarry/qa/knowledge.hpp"

namespace quarry::qa {

KnowledgeBase build_knowledge_base(std::vector<harvest::EndpointMetadata> endpoints,
                                   retrieval::EmbeddingProvider& embedder, const KnowledgeOptions& options) {
  KnowledgeBase kb;
  std::vector<retrieval::IndexInput> inputs;
  for (const auto& m : endpoints) {
    auto matrix = schema::build_matrix(m.void_records);
    auto shapes = schema::render_shapes(schema::truncate_matrix(matrix, options.schema_fraction), options.prefixes);
    auto items = retrieval::index_inputs(m, shapes);
    inputs.insert(inputs.end(), std::make_move_iterator(items.begin()), std::make_move_iterator(items.end()));
    for (auto& s : shapes) kb.shapes.emplace_back(m.endpoint.endpoint_url, std::move(s));
    kb.schemas[m.endpoint.endpoint_url] = std::move(matrix);
  }
  kb.index = retrieval::Index::build(inputs, embedder, options.batch_size);
  kb.endpoints = std::move(endpoints);
  return kb;
}

}  // namespace quarry::qa
