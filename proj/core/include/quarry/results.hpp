// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/term.hpp"

namespace quarry {

/// One solution: variable name to bound value. Unbound variables are absent.
using Binding = std::map<std::string, Term>;

struct ResultSet {
  std::vector<std::string> variables;
  std::vector<Binding> rows;
  /// Set for ASK results; `variables` and `rows` are then empty.
  std::optional<bool> boolean;
  bool truncated = false;
  /// Endpoints that contributed: the home endpoint, then SERVICE targets.
  std::vector<std::string> origin;

  bool is_boolean() const noexcept { return boolean.has_value(); }
  bool empty() const noexcept { return !boolean && rows.empty(); }

  friend bool operator==(const ResultSet&, const ResultSet&) = default;
};

/// W3C SPARQL 1.1 Query Results JSON.
nlohmann::json to_sparql_json(const ResultSet& results);

/// Parses W3C SPARQL JSON results. Throws quarry::Error on malformed input.
ResultSet from_sparql_json(const nlohmann::json& doc);

/// Term as a SPARQL JSON binding object ({"type": ..., "value": ...}).
nlohmann::json term_to_json(const Term& term);
Term term_from_json(const nlohmann::json& value);

/// SPARQL JSON plus the `truncated` and `origin` fields, for turn logs.
nlohmann::json to_json(const ResultSet& results);
ResultSet result_set_from_json(const nlohmann::json& doc);

}  // namespace quarry
