// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "quarry/sparql/ast.hpp"

namespace quarry::sparql {

/// Flattens the query's WHERE clause into per-endpoint pattern groups.
/// Triples under OPTIONAL, UNION, MINUS, GRAPH, sub-selects and (NOT) EXISTS
/// are included; same-endpoint SERVICE blocks stay separate groups.
std::vector<PatternGroup> extract_pattern_groups(const ParsedQuery& query);

std::size_t count_triple_patterns(const ParsedQuery& query);

/// Variables visible in a group pattern, in order of first appearance.
std::vector<std::string> in_scope_variables(const GroupPattern& group);

/// Serializes a query back to SPARQL text with every IRI written in full.
std::string to_sparql(const ParsedQuery& query);

std::string to_sparql(const Expr& expr);

}  // namespace quarry::sparql
