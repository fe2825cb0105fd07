// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/schema/schema.hpp"
#include "quarry/sparql/ast.hpp"

namespace quarry::validation {

enum class Severity { error, warning };

enum class IssueKind {
  unknown_class,
  unknown_predicate,
  predicate_not_on_class,
  object_type_mismatch,
  unknown_endpoint,
};

std::string_view to_string(Severity s);
std::string_view to_string(IssueKind k);

struct ValidationIssue {
  Severity severity = Severity::error;
  IssueKind kind = IssueKind::unknown_predicate;
  sparql::TriplePattern location;
  /// Endpoint whose schema the pattern was checked against.
  std::string endpoint;
  std::string message;
  std::vector<std::string> alternatives;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool passed = true;

  std::size_t error_count() const;
  std::size_t warning_count() const;
};

struct ValidationOptions {
  /// Normalized edit distance on local names, inclusive.
  double max_distance = 0.5;
  std::size_t max_alternatives = 5;
  schema::PrefixMap prefixes = schema::PrefixMap::well_known();
};

/// Schemas are keyed by endpoint URL (trailing slashes ignored).
ValidationReport validate(const sparql::ParsedQuery& query,
                          const std::map<std::string, schema::ClassPropertyMatrix>& schemas,
                          const std::string& home_endpoint, const ValidationOptions& options = {});

std::size_t levenshtein(std::string_view a, std::string_view b);

/// Levenshtein distance divided by the longer length; 0 for two empty strings.
double normalized_distance(std::string_view a, std::string_view b);

/// Ranks by ascending distance between local names, then descending count,
/// then ascending IRI.
std::vector<std::string> suggest_alternatives(std::string_view bad_iri,
                                              const std::vector<schema::RankedIri>& candidates,
                                              std::size_t limit = 5, double max_distance = 0.5);

/// Requires a failed report. Output never exceeds `budget` characters.
/// Warnings are dropped first, then alternatives are trimmed, then the
/// query text is shortened.
std::string render_repair_prompt(const ValidationReport& report, const std::string& original_query,
                                 std::size_t budget = 4000);

nlohmann::json to_json(const ValidationIssue& issue);
nlohmann::json to_json(const ValidationReport& report);
ValidationReport report_from_json(const nlohmann::json& doc);

}  // namespace quarry::validation
