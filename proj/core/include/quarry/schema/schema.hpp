// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/harvest/harvest.hpp"

namespace quarry::schema {

/// Prefix name to namespace IRI, used to compact IRIs for display.
class PrefixMap {
 public:
  PrefixMap() = default;
  PrefixMap(std::initializer_list<std::pair<const std::string, std::string>> entries);

  /// rdf, rdfs, xsd, owl plus common life-science and DBpedia namespaces.
  static PrefixMap well_known();

  void add(const std::string& prefix, const std::string& ns);
  /// Adds entries whose prefix is not yet bound.
  void merge(const std::map<std::string, std::string>& entries);

  /// `prefix:local` using the longest matching namespace, or nullopt when the
  /// remainder is not a valid local name.
  std::optional<std::string> compact(const std::string& iri) const;
  /// compact() or `<iri>`.
  std::string display(const std::string& iri) const;
  std::optional<std::string> expand(const std::string& pname) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct CellConstraint {
  std::set<std::string> object_classes;
  std::set<std::string> object_datatypes;
  /// Some objects are IRIs or blank nodes without a class.
  bool untyped = false;
  std::uint64_t triple_count = 0;
  friend bool operator==(const CellConstraint&, const CellConstraint&) = default;
};

struct RankedIri {
  std::string iri;
  std::uint64_t count = 0;
  friend bool operator==(const RankedIri&, const RankedIri&) = default;
};

/// Sparse class x predicate matrix. Classes are sorted by descending instance
/// count and predicates by descending usage count, ties by ascending IRI.
struct ClassPropertyMatrix {
  std::vector<RankedIri> classes;
  std::vector<RankedIri> predicates;
  std::map<std::pair<std::size_t, std::size_t>, CellConstraint> cells;
  friend bool operator==(const ClassPropertyMatrix&, const ClassPropertyMatrix&) = default;
};

/// Aggregates VoID records. A class's instance count is the largest
/// subject_instance_count seen for it, or the sum of its triple counts when
/// none is published. rdf:type records are skipped.
ClassPropertyMatrix build_matrix(const std::vector<harvest::RawVoidRecord>& records);

/// Number of rows kept for a fraction: ceil(fraction * n).
std::size_t kept_count(std::size_t n, double fraction);

/// Keeps the top ceil(fraction * n) classes and predicates. Throws
/// InvalidFraction unless 0 < fraction <= 1.
ClassPropertyMatrix truncate_matrix(const ClassPropertyMatrix& m, double fraction);

struct SchemaShape {
  std::string class_iri;
  std::vector<std::pair<std::string, CellConstraint>> predicate_constraints;
  std::string label;
  std::string rendered_shex;
  friend bool operator==(const SchemaShape&, const SchemaShape&) = default;
};

/// One self-contained shape per class with at least one predicate, in
/// matrix class order. Object classes are listed, never shape references.
std::vector<SchemaShape> render_shapes(const ClassPropertyMatrix& m,
                                       const PrefixMap& prefixes = PrefixMap::well_known());

/// Class local name and predicate local names in one deterministic paragraph.
std::string shape_summary_text(const SchemaShape& shape);

/// PREFIX declarations for the namespaces used, then every shape.
std::string render_shex_document(const std::vector<SchemaShape>& shapes,
                                 const PrefixMap& prefixes = PrefixMap::well_known());

/// Reads back (class, predicate constraints) from rendered shape text.
/// Triple counts are not part of the text and stay zero.
SchemaShape parse_shape(const std::string& text, const PrefixMap& prefixes = PrefixMap::well_known());

/// "Disease_Annotation" -> "Disease Annotation", "encodedBy" -> "encoded by".
std::string humanize(std::string_view local);

nlohmann::json to_json(const ClassPropertyMatrix& m);
ClassPropertyMatrix matrix_from_json(const nlohmann::json& doc);

}  // namespace quarry::schema
