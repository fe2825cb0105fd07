// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "quarry/harvest/harvest.hpp"
#include "quarry/qa/pipeline.hpp"
#include "quarry/retrieval/index.hpp"
#include "quarry/schema/schema.hpp"

namespace quarry::qa {

/// Everything answer() reads: harvested metadata, per-endpoint schemas and the
/// shared retrieval index. Immutable once built.
struct KnowledgeBase {
  std::vector<harvest::EndpointMetadata> endpoints;
  /// Full matrices, used for validation.
  SchemaCatalog schemas;
  /// Shapes of the truncated matrices, as indexed.
  std::vector<std::pair<std::string, schema::SchemaShape>> shapes;
  retrieval::Index index;
};

struct KnowledgeOptions {
  /// Share of classes and predicates kept for the indexed shapes.
  double schema_fraction = 1.0;
  schema::PrefixMap prefixes = schema::PrefixMap::well_known();
  std::size_t batch_size = 64;
};

KnowledgeBase build_knowledge_base(std::vector<harvest::EndpointMetadata> endpoints,
                                   retrieval::EmbeddingProvider& embedder, const KnowledgeOptions& options = {});

}  // namespace quarry::qa
