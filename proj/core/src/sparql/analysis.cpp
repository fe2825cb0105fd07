// SPDX-License-Identifier: Apache-2.0
#include "quarry/sparql/analysis.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace quarry::sparql {

namespace {

class GroupCollector {
 public:
  explicit GroupCollector(std::vector<PatternGroup>& out) : out_(out) {
    out_.push_back(PatternGroup{});
  }

  void walk(const GroupPattern& g, std::size_t current, bool negated) {
    for (const auto& e : g.elements) element(e, current, negated);
  }

 private:
  void element(const Element& e, std::size_t current, bool negated) {
    switch (e.kind) {
      case Element::Kind::triples:
        for (auto t : e.triples) {
          t.negated = t.negated || negated;
          out_[current].triples.push_back(std::move(t));
        }
        break;
      case Element::Kind::service: {
        PatternGroup group;
        group.service_endpoint =
            e.target.is_variable() ? "?" + e.target.value : e.target.value;
        group.silent = e.silent;
        out_.push_back(std::move(group));
        walk(e.groups.front(), out_.size() - 1, negated);
        break;
      }
      case Element::Kind::group:
      case Element::Kind::optional:
      case Element::Kind::union_of:
      case Element::Kind::minus:
      case Element::Kind::graph:
        for (const auto& g : e.groups) walk(g, current, negated);
        break;
      case Element::Kind::filter:
      case Element::Kind::bind:
        expr(e.expr, current, negated);
        break;
      case Element::Kind::subselect:
        select(*e.subquery, current, negated);
        break;
      case Element::Kind::values:
        break;
    }
  }

  void select(const SelectQuery& s, std::size_t current, bool negated) {
    for (const auto& p : s.projection) {
      if (p.expression) expr(*p.expression, current, negated);
    }
    walk(s.where, current, negated);
    for (const auto& h : s.having) expr(h, current, negated);
  }

  void expr(const Expr& x, std::size_t current, bool negated) {
    if (x.kind == Expr::Kind::exists || x.kind == Expr::Kind::not_exists) {
      walk(*x.pattern, current, negated || x.kind == Expr::Kind::not_exists);
      return;
    }
    for (const auto& a : x.args) expr(a, current, negated);
  }

  std::vector<PatternGroup>& out_;
};

void add_var(std::vector<std::string>& vars, std::set<std::string>& seen,
             const std::string& name) {
  if (seen.insert(name).second) vars.push_back(name);
}

void add_term(std::vector<std::string>& vars, std::set<std::string>& seen, const Term& t) {
  if (t.is_variable()) add_var(vars, seen, t.value);
}

void scope(const GroupPattern& g, std::vector<std::string>& vars, std::set<std::string>& seen) {
  for (const auto& e : g.elements) {
    switch (e.kind) {
      case Element::Kind::triples:
        for (const auto& t : e.triples) {
          add_term(vars, seen, t.subject);
          add_term(vars, seen, t.predicate);
          add_term(vars, seen, t.object);
        }
        break;
      case Element::Kind::group:
      case Element::Kind::optional:
      case Element::Kind::union_of:
        for (const auto& sub : e.groups) scope(sub, vars, seen);
        break;
      case Element::Kind::graph:
      case Element::Kind::service:
        add_term(vars, seen, e.target);
        scope(e.groups.front(), vars, seen);
        break;
      case Element::Kind::bind:
        add_term(vars, seen, e.target);
        break;
      case Element::Kind::values:
        for (const auto& v : e.values.variables) add_var(vars, seen, v);
        break;
      case Element::Kind::subselect:
        if (e.subquery->select_all) {
          scope(e.subquery->where, vars, seen);
        } else {
          for (const auto& p : e.subquery->projection) add_var(vars, seen, p.variable);
        }
        break;
      case Element::Kind::minus:
      case Element::Kind::filter:
        break;
    }
  }
}

// ---------------------------------------------------------------- serializer

std::string term_text(const Term& t) {
  switch (t.kind) {
    case Term::Kind::variable: return "?" + t.value;
    case Term::Kind::iri: return "<" + t.value + ">";
    case Term::Kind::blank: return "_:" + t.value;
    case Term::Kind::path: return t.value;
    case Term::Kind::literal: {
      std::string out = "\"" + escape_string(t.value) + "\"";
      if (!t.language.empty()) return out + "@" + t.language;
      if (t.datatype != vocab::xsd_string) out += "^^<" + t.datatype + ">";
      return out;
    }
  }
  return {};
}

class Writer {
 public:
  std::string query(const ParsedQuery& q) {
    if (!q.base.empty()) out_ << "BASE <" << q.base << ">\n";
    switch (q.query_type) {
      case QueryType::select:
        select_head(q.body);
        break;
      case QueryType::ask:
        out_ << "ASK";
        break;
      case QueryType::construct:
        out_ << "CONSTRUCT {";
        for (const auto& t : q.construct_template) {
          out_ << ' ';
          triple(t);
        }
        out_ << " }";
        break;
      case QueryType::describe:
        out_ << "DESCRIBE";
        if (q.describe_all) out_ << " *";
        for (const auto& t : q.describe_terms) out_ << ' ' << term_text(t);
        break;
    }
    for (const auto& f : q.from) out_ << "\nFROM <" << f << ">";
    for (const auto& f : q.from_named) out_ << "\nFROM NAMED <" << f << ">";
    if (q.query_type != QueryType::describe || !q.body.where.elements.empty()) {
      out_ << "\nWHERE ";
      group(q.body.where, 0);
    }
    modifiers(q.body);
    if (q.body.values) {
      out_ << "\n";
      values(*q.body.values);
    }
    out_ << "\n";
    return out_.str();
  }

  std::string expression(const Expr& e) {
    expr(e);
    return out_.str();
  }

 private:
  void indent(int depth) {
    for (int i = 0; i < depth; ++i) out_ << "  ";
  }

  void select_head(const SelectQuery& s) {
    out_ << "SELECT";
    if (s.distinct) out_ << " DISTINCT";
    if (s.reduced) out_ << " REDUCED";
    if (s.select_all) {
      out_ << " *";
      return;
    }
    for (const auto& p : s.projection) {
      if (p.expression) {
        out_ << " (";
        expr(*p.expression);
        out_ << " AS ?" << p.variable << ")";
      } else {
        out_ << " ?" << p.variable;
      }
    }
  }

  void modifiers(const SelectQuery& s) {
    if (!s.group_by.empty()) {
      out_ << "\nGROUP BY";
      for (const auto& c : s.group_by) {
        out_ << " (";
        expr(c.expr);
        if (c.alias) out_ << " AS ?" << *c.alias;
        out_ << ")";
      }
    }
    if (!s.having.empty()) {
      out_ << "\nHAVING";
      for (const auto& h : s.having) {
        out_ << " (";
        expr(h);
        out_ << ")";
      }
    }
    if (!s.order_by.empty()) {
      out_ << "\nORDER BY";
      for (const auto& c : s.order_by) {
        out_ << (c.descending ? " DESC(" : " ASC(");
        expr(c.expr);
        out_ << ")";
      }
    }
    if (s.limit) out_ << "\nLIMIT " << *s.limit;
    if (s.offset) out_ << "\nOFFSET " << *s.offset;
  }

  void triple(const TriplePattern& t) {
    out_ << term_text(t.subject) << ' '
         << (t.path ? path_to_string(*t.path) : term_text(t.predicate)) << ' '
         << term_text(t.object) << " .";
  }

  void values(const ValuesBlock& v) {
    out_ << "VALUES (";
    for (std::size_t i = 0; i < v.variables.size(); ++i) {
      out_ << (i ? " ?" : "?") << v.variables[i];
    }
    out_ << ") {";
    for (const auto& row : v.rows) {
      out_ << " (";
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out_ << ' ';
        out_ << (row[i] ? term_text(*row[i]) : "UNDEF");
      }
      out_ << ")";
    }
    out_ << " }";
  }

  void group(const GroupPattern& g, int depth) {
    if (g.elements.size() == 1 && g.elements.front().kind == Element::Kind::subselect) {
      subselect(*g.elements.front().subquery, depth);
      return;
    }
    out_ << "{\n";
    for (const auto& e : g.elements) element(e, depth + 1);
    indent(depth);
    out_ << "}";
  }

  void element(const Element& e, int depth) {
    switch (e.kind) {
      case Element::Kind::triples:
        for (const auto& t : e.triples) {
          indent(depth);
          triple(t);
          out_ << "\n";
        }
        return;
      case Element::Kind::group:
        indent(depth);
        group(e.groups.front(), depth);
        break;
      case Element::Kind::optional:
        indent(depth);
        out_ << "OPTIONAL ";
        group(e.groups.front(), depth);
        break;
      case Element::Kind::minus:
        indent(depth);
        out_ << "MINUS ";
        group(e.groups.front(), depth);
        break;
      case Element::Kind::union_of:
        indent(depth);
        for (std::size_t i = 0; i < e.groups.size(); ++i) {
          if (i) out_ << " UNION ";
          group(e.groups[i], depth);
        }
        break;
      case Element::Kind::graph:
        indent(depth);
        out_ << "GRAPH " << term_text(e.target) << ' ';
        group(e.groups.front(), depth);
        break;
      case Element::Kind::service:
        indent(depth);
        out_ << "SERVICE " << (e.silent ? "SILENT " : "") << term_text(e.target) << ' ';
        group(e.groups.front(), depth);
        break;
      case Element::Kind::filter:
        indent(depth);
        out_ << "FILTER (";
        expr(e.expr);
        out_ << ")";
        break;
      case Element::Kind::bind:
        indent(depth);
        out_ << "BIND (";
        expr(e.expr);
        out_ << " AS " << term_text(e.target) << ")";
        break;
      case Element::Kind::values:
        indent(depth);
        values(e.values);
        break;
      case Element::Kind::subselect:
        indent(depth);
        subselect(*e.subquery, depth);
        break;
    }
    out_ << "\n";
  }

  void subselect(const SelectQuery& s, int depth) {
    out_ << "{ ";
    select_head(s);
    out_ << " WHERE ";
    group(s.where, depth);
    modifiers(s);
    if (s.values) {
      out_ << ' ';
      values(*s.values);
    }
    out_ << " }";
  }

  void expr(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::term:
        out_ << term_text(e.term);
        return;
      case Expr::Kind::unary:
        out_ << e.op << '(';
        expr(e.args.front());
        out_ << ')';
        return;
      case Expr::Kind::binary:
        out_ << '(';
        expr(e.args[0]);
        out_ << ' ' << e.op << ' ';
        expr(e.args[1]);
        out_ << ')';
        return;
      case Expr::Kind::in:
      case Expr::Kind::not_in:
        out_ << '(';
        expr(e.args[0]);
        out_ << (e.kind == Expr::Kind::in ? " IN (" : " NOT IN (");
        for (std::size_t i = 1; i < e.args.size(); ++i) {
          if (i > 1) out_ << ", ";
          expr(e.args[i]);
        }
        out_ << "))";
        return;
      case Expr::Kind::call:
        if (e.op.find(':') != std::string::npos) {
          out_ << '<' << e.op << '>';
        } else {
          out_ << e.op;
        }
        out_ << '(';
        if (e.distinct) out_ << "DISTINCT ";
        args(e.args);
        out_ << ')';
        return;
      case Expr::Kind::aggregate:
        out_ << e.op << '(';
        if (e.distinct) out_ << "DISTINCT ";
        if (e.star) {
          out_ << '*';
        } else {
          args(e.args);
        }
        if (e.op == "GROUP_CONCAT" && e.separator != " ") {
          out_ << "; SEPARATOR=\"" << escape_string(e.separator) << '"';
        }
        out_ << ')';
        return;
      case Expr::Kind::exists:
      case Expr::Kind::not_exists:
        out_ << (e.kind == Expr::Kind::exists ? "EXISTS " : "NOT EXISTS ");
        group(*e.pattern, 1);
        return;
    }
  }

  void args(const std::vector<Expr>& list) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i) out_ << ", ";
      expr(list[i]);
    }
  }

  std::ostringstream out_;
};

}  // namespace

std::vector<PatternGroup> extract_pattern_groups(const ParsedQuery& query) {
  std::vector<PatternGroup> groups;
  GroupCollector collector(groups);
  collector.walk(query.body.where, 0, false);
  return groups;
}

std::size_t count_triple_patterns(const ParsedQuery& query) {
  std::size_t n = 0;
  for (const auto& g : query.pattern_groups) n += g.triples.size();
  return n;
}

std::vector<std::string> in_scope_variables(const GroupPattern& group) {
  std::vector<std::string> vars;
  std::set<std::string> seen;
  scope(group, vars, seen);
  return vars;
}

std::string to_sparql(const ParsedQuery& query) { return Writer().query(query); }

std::string to_sparql(const Expr& expr) { return Writer().expression(expr); }

}  // namespace quarry::sparql
