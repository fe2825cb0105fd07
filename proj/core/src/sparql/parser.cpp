// SPDX-License-Identifier: Apache-2.0
#include "quarry/sparql/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "lexer.hpp"
#include "quarry/sparql/analysis.hpp"

namespace quarry::sparql {

using detail::Tok;
using detail::Token;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

const std::set<std::string>& builtin_functions() {
  static const std::set<std::string> names = {
      "STR", "LANG", "LANGMATCHES", "DATATYPE", "BOUND", "IRI", "URI", "BNODE",
      "RAND", "ABS", "CEIL", "FLOOR", "ROUND", "CONCAT", "STRLEN", "UCASE",
      "LCASE", "ENCODE_FOR_URI", "CONTAINS", "STRSTARTS", "STRENDS",
      "STRBEFORE", "STRAFTER", "YEAR", "MONTH", "DAY", "HOURS", "MINUTES",
      "SECONDS", "TIMEZONE", "TZ", "NOW", "UUID", "STRUUID", "MD5", "SHA1",
      "SHA256", "SHA384", "SHA512", "COALESCE", "IF", "STRLANG", "STRDT",
      "SAMETERM", "ISIRI", "ISURI", "ISBLANK", "ISLITERAL", "ISNUMERIC",
      "REGEX", "SUBSTR", "REPLACE"};
  return names;
}

const std::set<std::string>& aggregate_functions() {
  static const std::set<std::string> names = {"COUNT", "SUM", "MIN", "MAX",
                                              "AVG", "SAMPLE", "GROUP_CONCAT"};
  return names;
}

const std::set<std::string>& update_keywords() {
  static const std::set<std::string> names = {
      "INSERT", "DELETE", "LOAD", "CLEAR", "DROP", "CREATE",
      "ADD", "MOVE", "COPY", "WITH"};
  return names;
}

bool is_absolute_iri(std::string_view iri) {
  if (iri.empty() || !std::isalpha(static_cast<unsigned char>(iri[0]))) return false;
  for (char c : iri) {
    if (c == ':') return true;
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.')) {
      return false;
    }
  }
  return false;
}

PathExpr path_iri(std::string iri) {
  PathExpr p;
  p.op = PathExpr::Op::iri;
  p.iri = std::move(iri);
  return p;
}

PathExpr path_node(PathExpr::Op op, std::vector<PathExpr> args) {
  PathExpr p;
  p.op = op;
  p.args = std::move(args);
  return p;
}

class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& options, bool turtle)
      : text_(text), tokens_(detail::tokenize(text)), turtle_(turtle) {
    defaults_ = {
        {"rdf", std::string(vocab::rdf)},
        {"rdfs", std::string(vocab::rdfs)},
        {"xsd", std::string(vocab::xsd)},
        {"owl", std::string(vocab::owl)},
    };
    for (const auto& [p, ns] : options.extra_prefixes) defaults_[p] = ns;
  }

  ParsedQuery query() {
    ParsedQuery q;
    prologue(q);
    const Token& head = peek();
    if (head.type != Tok::keyword) {
      fail(head, "expected SELECT, ASK, CONSTRUCT or DESCRIBE but found " + describe(head));
    }
    std::string kw = upper(head.text);
    if (update_keywords().count(kw)) {
      fail(head, "SPARQL Update operations (" + kw +
                     ") are not supported; only SELECT, ASK, CONSTRUCT and DESCRIBE queries are accepted");
    }
    if (kw == "SELECT") {
      q.query_type = QueryType::select;
      select_clause(q.body);
      dataset_clauses(q);
      where_clause(q.body);
      solution_modifiers(q.body);
    } else if (kw == "ASK") {
      advance();
      q.query_type = QueryType::ask;
      dataset_clauses(q);
      where_clause(q.body);
      solution_modifiers(q.body);
    } else if (kw == "CONSTRUCT") {
      advance();
      q.query_type = QueryType::construct;
      construct_query(q);
    } else if (kw == "DESCRIBE") {
      advance();
      q.query_type = QueryType::describe;
      describe_query(q);
    } else {
      fail(head, "expected SELECT, ASK, CONSTRUCT or DESCRIBE but found " + describe(head));
    }
    if (at_keyword("VALUES")) {
      q.body.values = values_block();
    }
    if (peek().type != Tok::end) {
      fail(peek(), "unexpected " + describe(peek()) + " after the end of the query");
    }
    q.prefixes = declared_;
    if (q.query_type == QueryType::select) {
      if (q.body.select_all) {
        q.projected_variables = in_scope_variables(q.body.where);
      } else {
        for (const auto& p : q.body.projection) q.projected_variables.push_back(p.variable);
      }
    }
    q.pattern_groups = extract_pattern_groups(q);
    return q;
  }

  std::vector<Quad> turtle() {
    std::vector<Quad> quads;
    while (peek().type != Tok::end) {
      const Token& t = peek();
      if (t.type == Tok::langtag && (t.text == "prefix" || t.text == "base")) {
        advance();
        if (t.text == "prefix") {
          prefix_decl();
        } else {
          base_ = expect(Tok::iri, "an IRI after @base").text;
        }
        expect(Tok::dot, "'.' after the directive");
        continue;
      }
      if (at_keyword("PREFIX")) {
        advance();
        prefix_decl();
        continue;
      }
      if (at_keyword("BASE")) {
        advance();
        base_ = expect(Tok::iri, "an IRI after BASE").text;
        continue;
      }
      std::string graph;
      bool graph_block = false;
      if (at_keyword("GRAPH")) {
        advance();
        graph = iri_value(advance());
        graph_block = true;
      } else if ((t.type == Tok::iri || t.type == Tok::pname_ln) &&
                 peek(1).type == Tok::lbrace) {
        graph = iri_value(advance());
        graph_block = true;
      }
      if (graph_block) {
        expect(Tok::lbrace, "'{' to open the graph block");
        while (peek().type != Tok::rbrace) {
          std::vector<TriplePattern> triples;
          triples_same_subject(triples);
          append_quads(quads, triples, graph);
          if (peek().type == Tok::dot) {
            advance();
          } else {
            break;
          }
        }
        expect(Tok::rbrace, "'}' to close the graph block");
        continue;
      }
      std::vector<TriplePattern> triples;
      triples_same_subject(triples);
      append_quads(quads, triples, "");
      expect(Tok::dot, "'.' at the end of the statement");
    }
    return quads;
  }

 private:
  // ---------------------------------------------------------------- tokens

  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }

  const Token& advance() {
    const Token& t = tokens_[pos_];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    return t;
  }

  bool at_keyword(std::string_view kw, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.type == Tok::keyword && upper(t.text) == kw;
  }

  [[noreturn]] void fail(const Token& at, const std::string& message) const {
    auto [line, col] = detail::line_column(text_, at.offset);
    throw SyntaxError(at.offset, line, col, message);
  }

  const Token& expect(Tok type, const std::string& what) {
    if (peek().type != type) fail(peek(), "expected " + what + " but found " + describe(peek()));
    return advance();
  }

  void expect_keyword(std::string_view kw) {
    if (!at_keyword(kw)) {
      fail(peek(), "expected '" + std::string(kw) + "' but found " + describe(peek()));
    }
    advance();
  }

  // ---------------------------------------------------------------- terms

  std::string resolve(const std::string& iri) const {
    if (base_.empty() || is_absolute_iri(iri)) return iri;
    if (!iri.empty() && iri[0] == '#') return base_ + iri;
    auto slash = base_.find_last_of('/');
    return (slash == std::string::npos ? base_ : base_.substr(0, slash + 1)) + iri;
  }

  std::string expand(const Token& t) const {
    std::string text = t.text;
    auto colon = text.find(':');
    std::string prefix = text.substr(0, colon);
    std::string local = t.type == Tok::pname_ns ? "" : text.substr(colon + 1);
    if (auto it = declared_.find(prefix); it != declared_.end()) return it->second + local;
    if (auto it = defaults_.find(prefix); it != defaults_.end()) return it->second + local;
    fail(t, "undefined prefix '" + prefix + ":' in " + describe(t) +
                "; declare it with PREFIX " + prefix + ": <namespace IRI>");
  }

  std::string iri_value(const Token& t) const {
    switch (t.type) {
      case Tok::iri: return resolve(t.text);
      case Tok::pname_ln:
      case Tok::pname_ns: return expand(t);
      default: fail(t, "expected an IRI but found " + describe(t));
    }
  }

  bool at_iri() const {
    auto type = peek().type;
    return type == Tok::iri || type == Tok::pname_ln || type == Tok::pname_ns;
  }

  void prefix_decl() {
    const Token& name = peek();
    if (name.type != Tok::pname_ns) {
      fail(name, "expected a prefix name such as 'ex:' but found " + describe(name));
    }
    advance();
    std::string ns = resolve(expect(Tok::iri, "a namespace IRI").text);
    declared_[name.text] = ns;
  }

  void prologue(ParsedQuery& q) {
    while (true) {
      if (at_keyword("PREFIX")) {
        advance();
        prefix_decl();
      } else if (at_keyword("BASE")) {
        advance();
        base_ = expect(Tok::iri, "an IRI after BASE").text;
        q.base = base_;
      } else {
        break;
      }
    }
  }

  Term numeric_literal(const Token& t, bool negative) {
    std::string lexical = (negative ? "-" : "") + t.text;
    switch (t.type) {
      case Tok::integer: return Term::literal(lexical, std::string(vocab::xsd_integer));
      case Tok::decimal: return Term::literal(lexical, std::string(vocab::xsd_decimal));
      default: return Term::literal(lexical, std::string(vocab::xsd_double));
    }
  }

  static bool is_number(Tok type) {
    return type == Tok::integer || type == Tok::decimal || type == Tok::double_;
  }

  Term rdf_literal() {
    const Token& s = advance();
    if (peek().type == Tok::langtag) {
      return Term::lang_literal(s.text, advance().text);
    }
    if (peek().type == Tok::caret2) {
      advance();
      if (!at_iri()) fail(peek(), "expected a datatype IRI after '^^' but found " + describe(peek()));
      return Term::literal(s.text, iri_value(advance()));
    }
    return Term::literal(s.text);
  }

  std::string fresh_blank() { return "anon" + std::to_string(anon_counter_++); }

  /// Var, IRI, literal, blank node label, or NIL.
  Term var_or_term() {
    const Token& t = peek();
    switch (t.type) {
      case Tok::var:
        if (turtle_) fail(t, "variables are not allowed in RDF data");
        advance();
        return Term::variable(t.text);
      case Tok::iri:
      case Tok::pname_ln:
      case Tok::pname_ns:
        return Term::iri(iri_value(advance()));
      case Tok::blank_label:
        advance();
        return Term::blank(t.text);
      case Tok::string:
        return rdf_literal();
      case Tok::integer:
      case Tok::decimal:
      case Tok::double_:
        advance();
        return numeric_literal(t, false);
      case Tok::plus:
      case Tok::minus:
        if (is_number(peek(1).type)) {
          bool negative = t.type == Tok::minus;
          advance();
          return numeric_literal(advance(), negative);
        }
        break;
      case Tok::keyword: {
        auto kw = upper(t.text);
        if (kw == "TRUE" || kw == "FALSE") {
          advance();
          return Term::literal(kw == "TRUE" ? "true" : "false",
                               std::string(vocab::xsd_boolean));
        }
        break;
      }
      case Tok::lparen:
        if (peek(1).type == Tok::rparen) {
          advance();
          advance();
          return Term::iri(std::string(vocab::rdf_nil));
        }
        break;
      case Tok::lbracket:
        if (peek(1).type == Tok::rbracket) {
          advance();
          advance();
          return Term::blank(fresh_blank());
        }
        break;
      default:
        break;
    }
    fail(t, "expected a variable, IRI, literal or blank node but found " + describe(t));
  }

  bool at_term_start() const {
    switch (peek().type) {
      case Tok::var:
      case Tok::iri:
      case Tok::pname_ln:
      case Tok::pname_ns:
      case Tok::blank_label:
      case Tok::string:
      case Tok::integer:
      case Tok::decimal:
      case Tok::double_:
      case Tok::lparen:
      case Tok::lbracket:
        return true;
      case Tok::plus:
      case Tok::minus:
        return is_number(peek(1).type);
      case Tok::keyword: {
        auto kw = upper(peek().text);
        return kw == "TRUE" || kw == "FALSE";
      }
      default:
        return false;
    }
  }

  // ---------------------------------------------------------------- triples

  void emit(std::vector<TriplePattern>& out, const Term& s, const Term& verb,
            const std::shared_ptr<const PathExpr>& path, const Term& o) {
    TriplePattern t;
    if (path && path->op == PathExpr::Op::inverse && path->args.size() == 1 &&
        path->args[0].op == PathExpr::Op::iri) {
      t.subject = o;
      t.predicate = Term::iri(path->args[0].iri);
      t.object = s;
    } else {
      t.subject = s;
      t.predicate = verb;
      t.object = o;
      t.path = path;
    }
    out.push_back(std::move(t));
  }

  /// Parses one graph node, emitting the triples of nested blank-node property
  /// lists and collections, and returns the node's term.
  Term graph_node(std::vector<TriplePattern>& out) {
    if (peek().type == Tok::lbracket && peek(1).type != Tok::rbracket) {
      advance();
      Term node = Term::blank(fresh_blank());
      property_list_not_empty(node, out);
      expect(Tok::rbracket, "']' to close the blank node property list");
      return node;
    }
    if (peek().type == Tok::lparen && peek(1).type != Tok::rparen) {
      advance();
      std::vector<Term> items;
      while (peek().type != Tok::rparen) {
        if (peek().type == Tok::end) fail(peek(), "unterminated collection");
        items.push_back(graph_node(out));
      }
      advance();
      std::vector<Term> cells;
      for (std::size_t i = 0; i < items.size(); ++i) cells.push_back(Term::blank(fresh_blank()));
      const Term first = Term::iri(std::string(vocab::rdf_first));
      const Term rest = Term::iri(std::string(vocab::rdf_rest));
      for (std::size_t i = 0; i < items.size(); ++i) {
        emit(out, cells[i], first, nullptr, items[i]);
        emit(out, cells[i], rest, nullptr,
             i + 1 < items.size() ? cells[i + 1] : Term::iri(std::string(vocab::rdf_nil)));
      }
      return cells.front();
    }
    return var_or_term();
  }

  bool at_verb_start() const {
    switch (peek().type) {
      case Tok::var:
      case Tok::iri:
      case Tok::pname_ln:
      case Tok::pname_ns:
      case Tok::caret:
      case Tok::bang:
      case Tok::lparen:
        return true;
      case Tok::keyword:
        return peek().text == "a";
      default:
        return false;
    }
  }

  void property_list_not_empty(const Term& subject, std::vector<TriplePattern>& out) {
    while (true) {
      Term verb;
      std::shared_ptr<const PathExpr> path;
      if (peek().type == Tok::var) {
        if (turtle_) fail(peek(), "variables are not allowed in RDF data");
        verb = Term::variable(advance().text);
      } else if (!at_verb_start()) {
        fail(peek(), "expected a predicate but found " + describe(peek()));
      } else if (turtle_) {
        if (peek().type == Tok::keyword && peek().text == "a") {
          advance();
          verb = Term::iri(std::string(vocab::rdf_type));
        } else {
          verb = Term::iri(iri_value(advance()));
        }
      } else {
        PathExpr p = path_alternative();
        if (p.op == PathExpr::Op::iri) {
          verb = Term::iri(p.iri);
        } else {
          verb = Term::path(path_to_string(p));
          path = std::make_shared<const PathExpr>(std::move(p));
        }
      }
      do {
        if (peek().type == Tok::comma) advance();
        Term object = graph_node(out);
        emit(out, subject, verb, path, object);
      } while (peek().type == Tok::comma);

      if (peek().type != Tok::semicolon) return;
      while (peek().type == Tok::semicolon) advance();
      if (!at_verb_start()) return;
    }
  }

  void triples_same_subject(std::vector<TriplePattern>& out) {
    const bool node_subject =
        (peek().type == Tok::lbracket && peek(1).type != Tok::rbracket) ||
        (peek().type == Tok::lparen && peek(1).type != Tok::rparen);
    Term subject = graph_node(out);
    if (node_subject && !at_verb_start()) return;
    property_list_not_empty(subject, out);
  }

  // ---------------------------------------------------------------- paths

  PathExpr path_alternative() {
    std::vector<PathExpr> alts{path_sequence()};
    while (peek().type == Tok::pipe) {
      advance();
      alts.push_back(path_sequence());
    }
    if (alts.size() == 1) return std::move(alts.front());
    std::vector<PathExpr> flat;
    for (auto& a : alts) {
      if (a.op == PathExpr::Op::alternative) {
        for (auto& x : a.args) flat.push_back(std::move(x));
      } else {
        flat.push_back(std::move(a));
      }
    }
    return path_node(PathExpr::Op::alternative, std::move(flat));
  }

  PathExpr path_sequence() {
    std::vector<PathExpr> steps{path_elt_or_inverse()};
    while (peek().type == Tok::slash) {
      advance();
      steps.push_back(path_elt_or_inverse());
    }
    if (steps.size() == 1) return std::move(steps.front());
    std::vector<PathExpr> flat;
    for (auto& s : steps) {
      if (s.op == PathExpr::Op::sequence) {
        for (auto& x : s.args) flat.push_back(std::move(x));
      } else {
        flat.push_back(std::move(s));
      }
    }
    return path_node(PathExpr::Op::sequence, std::move(flat));
  }

  PathExpr path_elt_or_inverse() {
    if (peek().type == Tok::caret) {
      advance();
      return path_node(PathExpr::Op::inverse, {path_elt()});
    }
    return path_elt();
  }

  PathExpr path_elt() {
    PathExpr primary = path_primary();
    const Token& t = peek();
    // '+' glued to a number is a sign, not a path modifier.
    if (t.type == Tok::plus && is_number(peek(1).type) && peek(1).offset == t.end) {
      return primary;
    }
    if (t.type == Tok::question) {
      advance();
      return path_node(PathExpr::Op::zero_or_one, {std::move(primary)});
    }
    if (t.type == Tok::star) {
      advance();
      return path_node(PathExpr::Op::zero_or_more, {std::move(primary)});
    }
    if (t.type == Tok::plus) {
      advance();
      return path_node(PathExpr::Op::one_or_more, {std::move(primary)});
    }
    return primary;
  }

  PathExpr path_one_in_set() {
    if (peek().type == Tok::caret) {
      advance();
      return path_node(PathExpr::Op::inverse, {path_one_in_set()});
    }
    if (peek().type == Tok::keyword && peek().text == "a") {
      advance();
      return path_iri(std::string(vocab::rdf_type));
    }
    return path_iri(iri_value(advance()));
  }

  PathExpr path_primary() {
    const Token& t = peek();
    if (t.type == Tok::keyword && t.text == "a") {
      advance();
      return path_iri(std::string(vocab::rdf_type));
    }
    if (t.type == Tok::iri || t.type == Tok::pname_ln || t.type == Tok::pname_ns) {
      return path_iri(iri_value(advance()));
    }
    if (t.type == Tok::bang) {
      advance();
      std::vector<PathExpr> set;
      if (peek().type == Tok::lparen) {
        advance();
        if (peek().type != Tok::rparen) {
          set.push_back(path_one_in_set());
          while (peek().type == Tok::pipe) {
            advance();
            set.push_back(path_one_in_set());
          }
        }
        expect(Tok::rparen, "')' to close the negated property set");
      } else {
        set.push_back(path_one_in_set());
      }
      return path_node(PathExpr::Op::negated_set, std::move(set));
    }
    if (t.type == Tok::lparen) {
      advance();
      PathExpr inner = path_alternative();
      expect(Tok::rparen, "')' to close the property path");
      return inner;
    }
    fail(t, "expected a predicate or property path but found " + describe(t));
  }

  // ---------------------------------------------------------------- groups

  void select_clause(SelectQuery& s) {
    expect_keyword("SELECT");
    if (at_keyword("DISTINCT")) {
      advance();
      s.distinct = true;
    } else if (at_keyword("REDUCED")) {
      advance();
      s.reduced = true;
    }
    if (peek().type == Tok::star) {
      advance();
      s.select_all = true;
      return;
    }
    while (true) {
      if (peek().type == Tok::var) {
        s.projection.push_back(Projection{advance().text, std::nullopt});
      } else if (peek().type == Tok::lparen) {
        advance();
        Expr e = expression();
        expect_keyword("AS");
        std::string var = expect(Tok::var, "a variable after AS").text;
        expect(Tok::rparen, "')' after the projected expression");
        s.projection.push_back(Projection{var, std::move(e)});
      } else {
        break;
      }
    }
    if (s.projection.empty()) {
      fail(peek(), "expected '*' or at least one variable after SELECT but found " + describe(peek()));
    }
  }

  void dataset_clauses(ParsedQuery& q) {
    while (at_keyword("FROM")) {
      advance();
      if (at_keyword("NAMED")) {
        advance();
        q.from_named.push_back(iri_value(advance()));
      } else {
        q.from.push_back(iri_value(advance()));
      }
    }
  }

  void where_clause(SelectQuery& s) {
    if (at_keyword("WHERE")) advance();
    if (peek().type != Tok::lbrace) {
      fail(peek(), "expected '{' to open the WHERE clause but found " + describe(peek()));
    }
    s.where = group_graph_pattern();
  }

  void construct_query(ParsedQuery& q) {
    if (peek().type == Tok::lbrace) {
      advance();
      q.construct_template = triples_template();
      expect(Tok::rbrace, "'}' to close the CONSTRUCT template");
      dataset_clauses(q);
      where_clause(q.body);
    } else {
      dataset_clauses(q);
      expect_keyword("WHERE");
      expect(Tok::lbrace, "'{' after CONSTRUCT WHERE");
      q.construct_template = triples_template();
      expect(Tok::rbrace, "'}' to close CONSTRUCT WHERE");
      Element e;
      e.kind = Element::Kind::triples;
      e.triples = q.construct_template;
      if (!e.triples.empty()) q.body.where.elements.push_back(std::move(e));
    }
    solution_modifiers(q.body);
  }

  std::vector<TriplePattern> triples_template() {
    std::vector<TriplePattern> out;
    while (at_term_start()) {
      triples_same_subject(out);
      if (peek().type != Tok::dot) break;
      advance();
    }
    for (const auto& t : out) {
      if (t.path) fail(peek(), "property paths are not allowed in a CONSTRUCT template");
    }
    return out;
  }

  void describe_query(ParsedQuery& q) {
    if (peek().type == Tok::star) {
      advance();
      q.describe_all = true;
    } else {
      while (peek().type == Tok::var || at_iri()) {
        if (peek().type == Tok::var) {
          q.describe_terms.push_back(Term::variable(advance().text));
        } else {
          q.describe_terms.push_back(Term::iri(iri_value(advance())));
        }
      }
      if (q.describe_terms.empty()) {
        fail(peek(), "expected '*', a variable or an IRI after DESCRIBE but found " + describe(peek()));
      }
    }
    dataset_clauses(q);
    if (at_keyword("WHERE") || peek().type == Tok::lbrace) where_clause(q.body);
    solution_modifiers(q.body);
  }

  void solution_modifiers(SelectQuery& s) {
    if (at_keyword("GROUP")) {
      advance();
      expect_keyword("BY");
      do {
        GroupCondition c;
        if (peek().type == Tok::var) {
          c.expr = var_expr(advance().text);
        } else if (peek().type == Tok::lparen) {
          advance();
          c.expr = expression();
          if (at_keyword("AS")) {
            advance();
            c.alias = expect(Tok::var, "a variable after AS").text;
          }
          expect(Tok::rparen, "')' after the grouping expression");
        } else {
          c.expr = constraint();
        }
        s.group_by.push_back(std::move(c));
      } while (peek().type == Tok::var || peek().type == Tok::lparen || at_call_start());
    }
    if (at_keyword("HAVING")) {
      advance();
      do {
        s.having.push_back(constraint());
      } while (peek().type == Tok::lparen || at_call_start());
    }
    if (at_keyword("ORDER")) {
      advance();
      expect_keyword("BY");
      do {
        OrderCondition c;
        if (at_keyword("ASC") || at_keyword("DESC")) {
          c.descending = at_keyword("DESC");
          advance();
          expect(Tok::lparen, "'(' after ASC/DESC");
          c.expr = expression();
          expect(Tok::rparen, "')' to close the order expression");
        } else if (peek().type == Tok::var) {
          c.expr = var_expr(advance().text);
        } else {
          c.expr = constraint();
        }
        s.order_by.push_back(std::move(c));
      } while (peek().type == Tok::var || peek().type == Tok::lparen ||
               at_keyword("ASC") || at_keyword("DESC") || at_call_start());
    }
    for (int i = 0; i < 2; ++i) {
      if (at_keyword("LIMIT") && !s.limit) {
        advance();
        s.limit = std::stoull(expect(Tok::integer, "an integer after LIMIT").text);
      } else if (at_keyword("OFFSET") && !s.offset) {
        advance();
        s.offset = std::stoull(expect(Tok::integer, "an integer after OFFSET").text);
      }
    }
  }

  ValuesBlock values_block() {
    expect_keyword("VALUES");
    ValuesBlock v;
    bool multi = false;
    if (peek().type == Tok::var) {
      v.variables.push_back(advance().text);
    } else {
      expect(Tok::lparen, "a variable or '(' after VALUES");
      multi = true;
      while (peek().type == Tok::var) v.variables.push_back(advance().text);
      expect(Tok::rparen, "')' to close the VALUES variable list");
    }
    expect(Tok::lbrace, "'{' to open the VALUES data block");
    while (peek().type != Tok::rbrace) {
      std::vector<std::optional<Term>> row;
      if (multi) {
        expect(Tok::lparen, "'(' to open a VALUES row");
        while (peek().type != Tok::rparen) row.push_back(data_value());
        advance();
      } else {
        row.push_back(data_value());
      }
      if (row.size() != v.variables.size()) {
        fail(peek(), "VALUES row has " + std::to_string(row.size()) + " values but " +
                         std::to_string(v.variables.size()) + " variables were declared");
      }
      v.rows.push_back(std::move(row));
    }
    advance();
    return v;
  }

  std::optional<Term> data_value() {
    if (at_keyword("UNDEF")) {
      advance();
      return std::nullopt;
    }
    if (peek().type == Tok::var || peek().type == Tok::lbracket || peek().type == Tok::lparen) {
      fail(peek(), "VALUES data may only contain IRIs, literals or UNDEF");
    }
    return var_or_term();
  }

  GroupPattern group_graph_pattern() {
    expect(Tok::lbrace, "'{'");
    GroupPattern g;
    if (at_keyword("SELECT")) {
      auto sub = std::make_shared<SelectQuery>();
      select_clause(*sub);
      where_clause(*sub);
      solution_modifiers(*sub);
      if (at_keyword("VALUES")) sub->values = values_block();
      Element e;
      e.kind = Element::Kind::subselect;
      e.subquery = std::move(sub);
      g.elements.push_back(std::move(e));
      expect(Tok::rbrace, "'}' after the sub-query");
      return g;
    }
    while (peek().type != Tok::rbrace) {
      if (peek().type == Tok::end) fail(peek(), "expected '}' but reached the end of the query");
      if (at_term_start()) {
        triples_block(g);
        continue;
      }
      if (peek().type == Tok::dot) {
        advance();
        continue;
      }
      graph_pattern_not_triples(g);
    }
    advance();
    return g;
  }

  void triples_block(GroupPattern& g) {
    if (g.elements.empty() || g.elements.back().kind != Element::Kind::triples) {
      Element e;
      e.kind = Element::Kind::triples;
      g.elements.push_back(std::move(e));
    }
    auto& triples = g.elements.back().triples;
    while (true) {
      triples_same_subject(triples);
      if (peek().type != Tok::dot) break;
      advance();
      if (!at_term_start()) break;
    }
  }

  void graph_pattern_not_triples(GroupPattern& g) {
    const Token& t = peek();
    Element e;
    if (t.type == Tok::lbrace) {
      GroupPattern first = group_graph_pattern();
      if (at_keyword("UNION")) {
        e.kind = Element::Kind::union_of;
        e.groups.push_back(std::move(first));
        while (at_keyword("UNION")) {
          advance();
          e.groups.push_back(group_graph_pattern());
        }
      } else {
        e.kind = Element::Kind::group;
        e.groups.push_back(std::move(first));
      }
    } else if (at_keyword("OPTIONAL")) {
      advance();
      e.kind = Element::Kind::optional;
      e.groups.push_back(group_graph_pattern());
    } else if (at_keyword("MINUS")) {
      advance();
      e.kind = Element::Kind::minus;
      e.groups.push_back(group_graph_pattern());
    } else if (at_keyword("GRAPH")) {
      advance();
      e.kind = Element::Kind::graph;
      e.target = var_or_iri();
      e.groups.push_back(group_graph_pattern());
    } else if (at_keyword("SERVICE")) {
      advance();
      e.kind = Element::Kind::service;
      if (at_keyword("SILENT")) {
        advance();
        e.silent = true;
      }
      e.target = var_or_iri();
      e.groups.push_back(group_graph_pattern());
    } else if (at_keyword("FILTER")) {
      advance();
      e.kind = Element::Kind::filter;
      e.expr = constraint();
    } else if (at_keyword("BIND")) {
      advance();
      e.kind = Element::Kind::bind;
      expect(Tok::lparen, "'(' after BIND");
      e.expr = expression();
      expect_keyword("AS");
      e.target = Term::variable(expect(Tok::var, "a variable after AS").text);
      expect(Tok::rparen, "')' to close BIND");
    } else if (at_keyword("VALUES")) {
      e.kind = Element::Kind::values;
      e.values = values_block();
    } else {
      fail(t, "unexpected " + describe(t) + " inside a group graph pattern");
    }
    g.elements.push_back(std::move(e));
  }

  Term var_or_iri() {
    if (peek().type == Tok::var) return Term::variable(advance().text);
    if (at_iri()) return Term::iri(iri_value(advance()));
    fail(peek(), "expected a variable or IRI but found " + describe(peek()));
  }

  // ---------------------------------------------------------------- expressions

  static Expr var_expr(const std::string& name) {
    Expr e;
    e.kind = Expr::Kind::term;
    e.term = Term::variable(name);
    return e;
  }

  static Expr term_expr(Term t) {
    Expr e;
    e.kind = Expr::Kind::term;
    e.term = std::move(t);
    return e;
  }

  static Expr binary(std::string op, Expr lhs, Expr rhs) {
    Expr e;
    e.kind = Expr::Kind::binary;
    e.op = std::move(op);
    e.args.push_back(std::move(lhs));
    e.args.push_back(std::move(rhs));
    return e;
  }

  bool at_call_start() const {
    const Token& t = peek();
    if (t.type == Tok::keyword) {
      auto kw = upper(t.text);
      return builtin_functions().count(kw) || aggregate_functions().count(kw) ||
             kw == "EXISTS" || (kw == "NOT" && at_keyword("EXISTS", 1));
    }
    return (t.type == Tok::iri || t.type == Tok::pname_ln) && peek(1).type == Tok::lparen;
  }

  /// FILTER / HAVING / ORDER BY constraint: bracketted expression or call.
  Expr constraint() {
    if (peek().type == Tok::lparen) {
      advance();
      Expr e = expression();
      expect(Tok::rparen, "')' to close the expression");
      return e;
    }
    if (at_call_start()) return primary();
    fail(peek(), "expected '(' or a function call but found " + describe(peek()));
  }

  Expr expression() {
    Expr lhs = and_expression();
    while (peek().type == Tok::or_) {
      advance();
      lhs = binary("||", std::move(lhs), and_expression());
    }
    return lhs;
  }

  Expr and_expression() {
    Expr lhs = relational();
    while (peek().type == Tok::and_) {
      advance();
      lhs = binary("&&", std::move(lhs), relational());
    }
    return lhs;
  }

  Expr relational() {
    Expr lhs = additive();
    static const std::array<std::pair<Tok, const char*>, 6> ops = {{
        {Tok::eq, "="}, {Tok::ne, "!="}, {Tok::lt, "<"},
        {Tok::gt, ">"}, {Tok::le, "<="}, {Tok::ge, ">="},
    }};
    for (const auto& [tok, sym] : ops) {
      if (peek().type == tok) {
        advance();
        return binary(sym, std::move(lhs), additive());
      }
    }
    bool negated = false;
    if (at_keyword("NOT") && at_keyword("IN", 1)) {
      advance();
      negated = true;
    }
    if (at_keyword("IN")) {
      advance();
      Expr e;
      e.kind = negated ? Expr::Kind::not_in : Expr::Kind::in;
      e.args.push_back(std::move(lhs));
      auto list = arg_list();
      for (auto& a : list) e.args.push_back(std::move(a));
      return e;
    }
    return lhs;
  }

  Expr additive() {
    Expr lhs = multiplicative();
    while (true) {
      if (peek().type == Tok::plus) {
        advance();
        lhs = binary("+", std::move(lhs), multiplicative());
      } else if (peek().type == Tok::minus) {
        advance();
        lhs = binary("-", std::move(lhs), multiplicative());
      } else {
        return lhs;
      }
    }
  }

  Expr multiplicative() {
    Expr lhs = unary();
    while (true) {
      if (peek().type == Tok::star) {
        advance();
        lhs = binary("*", std::move(lhs), unary());
      } else if (peek().type == Tok::slash) {
        advance();
        lhs = binary("/", std::move(lhs), unary());
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    const Token& t = peek();
    if (t.type == Tok::bang || t.type == Tok::minus || t.type == Tok::plus) {
      if ((t.type == Tok::minus || t.type == Tok::plus) && is_number(peek(1).type) &&
          peek(1).offset == t.end) {
        bool negative = t.type == Tok::minus;
        advance();
        return term_expr(numeric_literal(advance(), negative));
      }
      advance();
      Expr e;
      e.kind = Expr::Kind::unary;
      e.op = t.type == Tok::bang ? "!" : (t.type == Tok::minus ? "-" : "+");
      e.args.push_back(unary());
      return e;
    }
    return primary();
  }

  std::vector<Expr> arg_list() {
    std::vector<Expr> args;
    expect(Tok::lparen, "'(' to open the argument list");
    if (peek().type == Tok::rparen) {
      advance();
      return args;
    }
    args.push_back(expression());
    while (peek().type == Tok::comma) {
      advance();
      args.push_back(expression());
    }
    expect(Tok::rparen, "')' to close the argument list");
    return args;
  }

  Expr aggregate(const std::string& name) {
    Expr e;
    e.kind = Expr::Kind::aggregate;
    e.op = name;
    expect(Tok::lparen, "'(' after " + name);
    if (at_keyword("DISTINCT")) {
      advance();
      e.distinct = true;
    }
    if (name == "COUNT" && peek().type == Tok::star) {
      advance();
      e.star = true;
    } else {
      e.args.push_back(expression());
    }
    if (name == "GROUP_CONCAT" && peek().type == Tok::semicolon) {
      advance();
      expect_keyword("SEPARATOR");
      expect(Tok::eq, "'=' after SEPARATOR");
      e.separator = expect(Tok::string, "a separator string").text;
    }
    expect(Tok::rparen, "')' to close " + name);
    return e;
  }

  Expr primary() {
    const Token& t = peek();
    switch (t.type) {
      case Tok::lparen: {
        advance();
        Expr e = expression();
        expect(Tok::rparen, "')' to close the expression");
        return e;
      }
      case Tok::var:
        advance();
        return var_expr(t.text);
      case Tok::string:
        return term_expr(rdf_literal());
      case Tok::integer:
      case Tok::decimal:
      case Tok::double_:
        advance();
        return term_expr(numeric_literal(t, false));
      case Tok::iri:
      case Tok::pname_ln:
      case Tok::pname_ns: {
        std::string iri = iri_value(advance());
        if (peek().type == Tok::lparen) {
          Expr e;
          e.kind = Expr::Kind::call;
          e.op = iri;
          if (peek(1).type == Tok::keyword && upper(peek(1).text) == "DISTINCT") {
            advance();
            advance();
            e.distinct = true;
            e.args.push_back(expression());
            while (peek().type == Tok::comma) {
              advance();
              e.args.push_back(expression());
            }
            expect(Tok::rparen, "')' to close the argument list");
          } else {
            e.args = arg_list();
          }
          return e;
        }
        return term_expr(Term::iri(std::move(iri)));
      }
      case Tok::keyword: {
        std::string kw = upper(t.text);
        if (kw == "TRUE" || kw == "FALSE") {
          advance();
          return term_expr(Term::literal(kw == "TRUE" ? "true" : "false",
                                         std::string(vocab::xsd_boolean)));
        }
        if (kw == "EXISTS" || (kw == "NOT" && at_keyword("EXISTS", 1))) {
          advance();
          if (kw == "NOT") advance();
          Expr e;
          e.kind = kw == "NOT" ? Expr::Kind::not_exists : Expr::Kind::exists;
          e.pattern = std::make_shared<GroupPattern>(group_graph_pattern());
          return e;
        }
        if (aggregate_functions().count(kw)) {
          advance();
          return aggregate(kw);
        }
        if (builtin_functions().count(kw)) {
          advance();
          Expr e;
          e.kind = Expr::Kind::call;
          e.op = kw == "URI" ? "IRI" : (kw == "ISURI" ? "ISIRI" : kw);
          e.args = arg_list();
          return e;
        }
        fail(t, "unknown function or keyword '" + t.text + "' in expression");
      }
      default:
        fail(t, "expected an expression but found " + describe(t));
    }
  }

  void append_quads(std::vector<Quad>& quads, const std::vector<TriplePattern>& triples,
                    const std::string& graph) {
    for (const auto& t : triples) {
      if (t.predicate.kind != Term::Kind::iri) {
        fail(peek(), "predicates in RDF data must be IRIs");
      }
      if (t.subject.is_literal()) fail(peek(), "literals cannot be subjects");
      quads.push_back(Quad{t.subject, t.predicate, t.object, graph});
    }
  }

  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  bool turtle_;
  std::string base_;
  std::map<std::string, std::string> declared_;
  std::map<std::string, std::string> defaults_;
  std::size_t anon_counter_ = 0;
};

int precedence(const PathExpr& p) {
  switch (p.op) {
    case PathExpr::Op::alternative: return 1;
    case PathExpr::Op::sequence: return 2;
    case PathExpr::Op::inverse:
    case PathExpr::Op::zero_or_more:
    case PathExpr::Op::one_or_more:
    case PathExpr::Op::zero_or_one: return 3;
    case PathExpr::Op::iri:
    case PathExpr::Op::negated_set: return 4;
  }
  return 4;
}

std::string wrap(const PathExpr& p, int required) {
  std::string s = path_to_string(p);
  return precedence(p) < required ? "(" + s + ")" : s;
}

}  // namespace

std::string path_to_string(const PathExpr& p) {
  switch (p.op) {
    case PathExpr::Op::iri:
      return "<" + p.iri + ">";
    case PathExpr::Op::inverse: {
      const PathExpr& inner = p.args.front();
      bool bare = inner.op == PathExpr::Op::iri || inner.op == PathExpr::Op::negated_set ||
                  inner.op == PathExpr::Op::zero_or_more ||
                  inner.op == PathExpr::Op::one_or_more || inner.op == PathExpr::Op::zero_or_one;
      return "^" + (bare ? path_to_string(inner) : "(" + path_to_string(inner) + ")");
    }
    case PathExpr::Op::sequence: {
      std::string out;
      for (std::size_t i = 0; i < p.args.size(); ++i) {
        if (i) out += "/";
        out += wrap(p.args[i], 3);
      }
      return out;
    }
    case PathExpr::Op::alternative: {
      std::string out;
      for (std::size_t i = 0; i < p.args.size(); ++i) {
        if (i) out += "|";
        out += wrap(p.args[i], 2);
      }
      return out;
    }
    case PathExpr::Op::zero_or_more:
      return wrap(p.args.front(), 4) + "*";
    case PathExpr::Op::one_or_more:
      return wrap(p.args.front(), 4) + "+";
    case PathExpr::Op::zero_or_one:
      return wrap(p.args.front(), 4) + "?";
    case PathExpr::Op::negated_set: {
      auto one = [](const PathExpr& x) {
        return x.op == PathExpr::Op::inverse ? "^<" + x.args.front().iri + ">"
                                             : "<" + x.iri + ">";
      };
      if (p.args.size() == 1) return "!" + one(p.args.front());
      std::string out = "!(";
      for (std::size_t i = 0; i < p.args.size(); ++i) {
        if (i) out += "|";
        out += one(p.args[i]);
      }
      return out + ")";
    }
  }
  return {};
}

std::string_view to_string(QueryType type) {
  switch (type) {
    case QueryType::select: return "SELECT";
    case QueryType::ask: return "ASK";
    case QueryType::construct: return "CONSTRUCT";
    case QueryType::describe: return "DESCRIBE";
  }
  return "SELECT";
}

ParsedQuery parse_query(std::string_view text, const ParseOptions& options) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw SyntaxError(0, 1, 1, "the query text is empty");
  }
  return Parser(text, options, false).query();
}

std::vector<Quad> parse_turtle(std::string_view text) {
  return Parser(text, {}, true).turtle();
}

}  // namespace quarry::sparql
