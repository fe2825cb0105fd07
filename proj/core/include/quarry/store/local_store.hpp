// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "quarry/results.hpp"
#include "quarry/sparql/ast.hpp"
#include "quarry/sparql/parser.hpp"

namespace quarry::store {

/// In-memory quad store with a SPARQL SELECT/ASK/CONSTRUCT evaluator.
///
/// Covers basic graph patterns, property paths, OPTIONAL, UNION, MINUS,
/// GRAPH, SERVICE (resolved to other local stores), FILTER, BIND, VALUES,
/// sub-selects, aggregates and solution modifiers. Intended for fixture
/// endpoints and tests, not for large data.
///
/// Loading is single-writer; `query` is safe from many threads once loading
/// has finished.
class LocalStore {
 public:
  /// Maps a SERVICE endpoint IRI to a store, or nullptr when unknown.
  using ServiceResolver = std::function<const LocalStore*(const std::string& endpoint)>;

  LocalStore();
  ~LocalStore();
  LocalStore(LocalStore&&) noexcept;
  LocalStore& operator=(LocalStore&&) noexcept;

  /// Adds a quad; duplicates are ignored.
  void add(const sparql::Quad& quad);
  void add(const Term& subject, const Term& predicate, const Term& object,
           const std::string& graph = {});

  /// Parses Turtle (with optional GRAPH blocks) and adds every statement.
  void load_turtle(std::string_view text);

  std::size_t size() const;
  std::vector<sparql::Quad> quads() const;

  void set_service_resolver(ServiceResolver resolver);

  /// Throws SyntaxError for unparseable text and ExecutionError for
  /// unsupported forms (DESCRIBE) or unreachable SERVICE endpoints.
  ResultSet query(std::string_view sparql) const;
  ResultSet query(const sparql::ParsedQuery& query) const;

 private:
  friend class Evaluator;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace quarry::store
