// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "quarry/term.hpp"

namespace quarry::sparql {

/// Property path tree. Single-IRI predicates never reach this type; the parser
/// turns them into plain IRI terms.
struct PathExpr {
  enum class Op {
    iri,
    inverse,
    sequence,
    alternative,
    zero_or_more,
    one_or_more,
    zero_or_one,
    negated_set,  // args: iri or inverse(iri)
  };
  Op op = Op::iri;
  std::string iri;
  std::vector<PathExpr> args;

  friend bool operator==(const PathExpr&, const PathExpr&) = default;
};

/// Canonical, re-parseable rendering of a path using full IRIs.
std::string path_to_string(const PathExpr& path);

struct TriplePattern {
  Term subject;
  Term predicate;
  Term object;
  /// Set when the pattern only appears under FILTER NOT EXISTS.
  bool negated = false;
  /// Present iff predicate is a path term.
  std::shared_ptr<const PathExpr> path;

  friend bool operator==(const TriplePattern& a, const TriplePattern& b) {
    return a.subject == b.subject && a.predicate == b.predicate &&
           a.object == b.object && a.negated == b.negated;
  }
};

struct GroupPattern;
struct SelectQuery;

struct Expr {
  enum class Kind {
    term,        // constant or variable
    unary,       // op: "!", "-", "+"
    binary,      // op: "||", "&&", "=", "!=", "<", ">", "<=", ">=", "+", "-", "*", "/"
    in,          // args[0] IN (args[1..])
    not_in,
    call,        // op: upper-case builtin name, or full IRI for function calls
    aggregate,   // op: COUNT, SUM, MIN, MAX, AVG, SAMPLE, GROUP_CONCAT
    exists,
    not_exists,
  };
  Kind kind = Kind::term;
  std::string op;
  Term term;
  std::vector<Expr> args;
  bool distinct = false;
  bool star = false;          // COUNT(*)
  std::string separator = " ";  // GROUP_CONCAT
  std::shared_ptr<GroupPattern> pattern;  // EXISTS / NOT EXISTS
};

struct ValuesBlock {
  std::vector<std::string> variables;
  /// One entry per row; nullopt is UNDEF.
  std::vector<std::vector<std::optional<Term>>> rows;
};

struct Element;

struct GroupPattern {
  std::vector<Element> elements;
};

struct Element {
  enum class Kind {
    triples,
    group,
    optional,
    union_of,
    minus,
    graph,
    service,
    filter,
    bind,
    values,
    subselect,
  };
  Kind kind = Kind::triples;
  std::vector<TriplePattern> triples;
  /// group/optional/minus/graph/service: exactly one; union_of: two or more.
  std::vector<GroupPattern> groups;
  /// graph name, service endpoint, or bind target variable.
  Term target;
  bool silent = false;
  Expr expr;
  ValuesBlock values;
  std::shared_ptr<SelectQuery> subquery;
};

struct Projection {
  std::string variable;
  std::optional<Expr> expression;
};

struct GroupCondition {
  Expr expr;
  std::optional<std::string> alias;
};

struct OrderCondition {
  Expr expr;
  bool descending = false;
};

/// SELECT body, also used for sub-selects and for the WHERE part of the other
/// query forms.
struct SelectQuery {
  bool distinct = false;
  bool reduced = false;
  bool select_all = false;
  std::vector<Projection> projection;
  GroupPattern where;
  std::vector<GroupCondition> group_by;
  std::vector<Expr> having;
  std::vector<OrderCondition> order_by;
  std::optional<std::size_t> limit;
  std::optional<std::size_t> offset;
  std::optional<ValuesBlock> values;
};

enum class QueryType { select, ask, construct, describe };

std::string_view to_string(QueryType type);

/// All triple patterns evaluated at one endpoint. The home group (no SERVICE)
/// comes first; each SERVICE block contributes one further group, in source
/// order, tagged with its innermost endpoint.
struct PatternGroup {
  std::optional<std::string> service_endpoint;
  bool silent = false;
  std::vector<TriplePattern> triples;

  friend bool operator==(const PatternGroup& a, const PatternGroup& b) {
    return a.service_endpoint == b.service_endpoint && a.triples == b.triples;
  }
};

struct ParsedQuery {
  QueryType query_type = QueryType::select;
  std::string base;
  /// Prefixes declared in the query text (defaults are implicit).
  std::map<std::string, std::string> prefixes;
  std::vector<std::string> projected_variables;
  std::vector<PatternGroup> pattern_groups;

  SelectQuery body;
  std::vector<TriplePattern> construct_template;
  std::vector<Term> describe_terms;
  bool describe_all = false;
  std::vector<std::string> from;
  std::vector<std::string> from_named;

  bool has_order() const { return !body.order_by.empty(); }
  std::optional<std::size_t> limit() const { return body.limit; }
  std::optional<std::size_t> offset() const { return body.offset; }
};

}  // namespace quarry::sparql
