// SPDX-License-Identifier: Apache-2.0
#include "quarry/store/local_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "quarry/errors.hpp"
#include "quarry/sparql/analysis.hpp"

namespace quarry::store {

using sparql::Element;
using sparql::Expr;
using sparql::GroupPattern;
using sparql::ParsedQuery;
using sparql::PathExpr;
using sparql::QueryType;
using sparql::SelectQuery;
using sparql::TriplePattern;

namespace {

struct Triple {
  Term s;
  Term p;
  Term o;
};

struct Graph {
  std::vector<Triple> triples;
  std::unordered_map<Term, std::vector<std::uint32_t>> by_s;
  std::unordered_map<Term, std::vector<std::uint32_t>> by_p;
  std::unordered_map<Term, std::vector<std::uint32_t>> by_o;
  std::unordered_set<std::string> keys;

  void add(const Term& s, const Term& p, const Term& o) {
    std::string key = s.to_string() + ' ' + p.to_string() + ' ' + o.to_string();
    if (!keys.insert(std::move(key)).second) return;
    auto id = static_cast<std::uint32_t>(triples.size());
    triples.push_back({s, p, o});
    by_s[s].push_back(id);
    by_p[p].push_back(id);
    by_o[o].push_back(id);
  }

  const std::vector<std::uint32_t>* lookup(
      const std::unordered_map<Term, std::vector<std::uint32_t>>& index, const Term& t) const {
    auto it = index.find(t);
    return it == index.end() ? nullptr : &it->second;
  }

  std::vector<Term> nodes() const {
    std::set<Term> seen;
    for (const auto& t : triples) {
      seen.insert(t.s);
      seen.insert(t.o);
    }
    return {seen.begin(), seen.end()};
  }
};

using Solutions = std::vector<Binding>;

// ---------------------------------------------------------------- values

bool is_integer_type(const std::string& dt) {
  static const std::set<std::string> types = {
      "integer", "int", "long", "short", "byte", "nonNegativeInteger",
      "positiveInteger", "negativeInteger", "nonPositiveInteger", "unsignedInt",
      "unsignedLong", "unsignedShort", "unsignedByte"};
  return dt.rfind(vocab::xsd, 0) == 0 && types.count(dt.substr(vocab::xsd.size()));
}

bool is_numeric(const Term& t) {
  if (!t.is_literal()) return false;
  return is_integer_type(t.datatype) || t.datatype == vocab::xsd_decimal ||
         t.datatype == vocab::xsd_double || t.datatype == std::string(vocab::xsd) + "float";
}

enum class NumKind { integer, decimal, dbl };

struct Number {
  NumKind kind;
  long double value;
};

std::optional<Number> to_number(const Term& t) {
  if (!is_numeric(t)) return std::nullopt;
  try {
    std::size_t used = 0;
    long double v = std::stold(t.value, &used);
    if (used != t.value.size()) return std::nullopt;
    NumKind kind = is_integer_type(t.datatype) ? NumKind::integer
                   : t.datatype == vocab::xsd_decimal ? NumKind::decimal
                                                      : NumKind::dbl;
    return Number{kind, v};
  } catch (const std::exception&) {
    if (t.value == "NaN") return Number{NumKind::dbl, NAN};
    if (t.value == "INF") return Number{NumKind::dbl, INFINITY};
    if (t.value == "-INF") return Number{NumKind::dbl, -INFINITY};
    return std::nullopt;
  }
}

std::string format_decimal(long double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12Lf", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s += '0';
  return s;
}

Term from_number(const Number& n) {
  switch (n.kind) {
    case NumKind::integer:
      return Term::literal(std::to_string(static_cast<long long>(n.value)),
                           std::string(vocab::xsd_integer));
    case NumKind::decimal:
      return Term::literal(format_decimal(n.value), std::string(vocab::xsd_decimal));
    case NumKind::dbl: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.15Lg", n.value);
      std::string s = buf;
      if (s == "nan") s = "NaN";
      if (s == "inf") s = "INF";
      if (s == "-inf") s = "-INF";
      return Term::literal(s, std::string(vocab::xsd_double));
    }
  }
  return {};
}

Term boolean(bool b) {
  return Term::literal(b ? "true" : "false", std::string(vocab::xsd_boolean));
}

bool is_string_literal(const Term& t) {
  return t.is_literal() && (t.datatype == vocab::xsd_string || t.datatype == vocab::rdf_lang_string);
}

std::optional<bool> effective_boolean(const Term& t) {
  if (!t.is_literal()) return std::nullopt;
  if (t.datatype == vocab::xsd_boolean) return t.value == "true" || t.value == "1";
  if (auto n = to_number(t)) return !(n->value == 0 || std::isnan(n->value));
  if (is_string_literal(t)) return !t.value.empty();
  return std::nullopt;
}

int kind_rank(const std::optional<Term>& t) {
  if (!t) return 0;
  switch (t->kind) {
    case Term::Kind::blank: return 1;
    case Term::Kind::iri: return 2;
    case Term::Kind::literal: return 3;
    default: return 4;
  }
}

/// Total order used by ORDER BY, MIN and MAX.
int order_compare(const std::optional<Term>& a, const std::optional<Term>& b) {
  int ra = kind_rank(a);
  int rb = kind_rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  if (!a) return 0;
  if (a->is_literal()) {
    auto na = to_number(*a);
    auto nb = to_number(*b);
    if (na && nb) {
      if (na->value < nb->value) return -1;
      if (na->value > nb->value) return 1;
      return 0;
    }
    if (na && !nb) return -1;
    if (!na && nb) return 1;
  }
  if (a->value != b->value) return a->value < b->value ? -1 : 1;
  if (a->datatype != b->datatype) return a->datatype < b->datatype ? -1 : 1;
  if (a->language != b->language) return a->language < b->language ? -1 : 1;
  return 0;
}

/// SPARQL value comparison; nullopt is a type error.
std::optional<int> value_compare(const Term& a, const Term& b) {
  auto na = to_number(a);
  auto nb = to_number(b);
  if (na && nb) {
    if (na->value < nb->value) return -1;
    if (na->value > nb->value) return 1;
    return 0;
  }
  if (a.is_literal() && b.is_literal() && a.datatype == b.datatype && a.language == b.language) {
    return a.value < b.value ? -1 : (a.value > b.value ? 1 : 0);
  }
  return std::nullopt;
}

std::optional<bool> value_equal(const Term& a, const Term& b) {
  if (auto c = value_compare(a, b)) return *c == 0;
  if (a == b) return true;
  if (a.is_literal() && b.is_literal() && !is_string_literal(a) && !is_string_literal(b) &&
      a.datatype != b.datatype) {
    return std::nullopt;
  }
  return false;
}

bool compatible(const Binding& a, const Binding& b) {
  const Binding& small = a.size() <= b.size() ? a : b;
  const Binding& large = a.size() <= b.size() ? b : a;
  for (const auto& [k, v] : small) {
    auto it = large.find(k);
    if (it != large.end() && !(it->second == v)) return false;
  }
  return true;
}

Binding merge(const Binding& a, const Binding& b) {
  Binding out = a;
  for (const auto& [k, v] : b) out.emplace(k, v);
  return out;
}

Solutions join(const Solutions& left, const Solutions& right) {
  Solutions out;
  for (const auto& l : left) {
    for (const auto& r : right) {
      if (compatible(l, r)) out.push_back(merge(l, r));
    }
  }
  return out;
}

std::string var_key(const Term& t) {
  return t.is_blank() ? "_:" + t.value : t.value;
}

bool is_var_like(const Term& t) { return t.is_variable() || t.is_blank(); }

}  // namespace

struct LocalStore::Impl {
  Graph default_graph;
  std::map<std::string, Graph> named;
  ServiceResolver resolver;
  std::size_t quad_count = 0;
};

class Evaluator {
 public:
  Evaluator(const LocalStore::Impl& store, const Graph* active)
      : store_(store), graph_(active) {}

  Solutions group(const GroupPattern& g, Solutions input) {
    Solutions current = std::move(input);
    std::vector<const Expr*> filters;
    for (const auto& e : g.elements) {
      if (e.kind == Element::Kind::filter) {
        filters.push_back(&e.expr);
        continue;
      }
      current = element(e, std::move(current));
    }
    if (filters.empty()) return current;
    Solutions kept;
    for (auto& mu : current) {
      bool pass = true;
      for (const Expr* f : filters) {
        auto v = eval(*f, mu, nullptr);
        auto ebv = v ? effective_boolean(*v) : std::nullopt;
        if (!ebv || !*ebv) {
          pass = false;
          break;
        }
      }
      if (pass) kept.push_back(std::move(mu));
    }
    return kept;
  }

  Solutions select(const SelectQuery& s, const std::vector<std::string>& projected) {
    Solutions where = group(s.where, Solutions{Binding{}});
    if (s.values) where = join(where, values_solutions(*s.values));

    struct Row {
      Binding binding;
      const Solutions* members = nullptr;
    };
    std::vector<Row> rows;
    std::vector<Solutions> groups;

    const bool grouped = !s.group_by.empty() || has_aggregate(s);
    if (grouped) {
      std::map<std::vector<std::optional<Term>>, std::size_t> index;
      std::vector<Binding> keys;
      for (auto& mu : where) {
        std::vector<std::optional<Term>> key;
        Binding key_binding;
        for (const auto& c : s.group_by) {
          auto v = eval(c.expr, mu, nullptr);
          key.push_back(v);
          std::optional<std::string> name = c.alias;
          if (!name && c.expr.kind == Expr::Kind::term && c.expr.term.is_variable()) {
            name = c.expr.term.value;
          }
          if (name && v) key_binding[*name] = *v;
        }
        auto [it, inserted] = index.emplace(key, groups.size());
        if (inserted) {
          groups.emplace_back();
          keys.push_back(key_binding);
        }
        groups[it->second].push_back(std::move(mu));
      }
      if (groups.empty() && s.group_by.empty()) {
        groups.emplace_back();
        keys.emplace_back();
      }
      for (std::size_t i = 0; i < groups.size(); ++i) {
        Row row{keys[i], &groups[i]};
        for (const auto& p : s.projection) {
          if (p.expression) {
            if (auto v = eval(*p.expression, row.binding, row.members)) {
              row.binding[p.variable] = *v;
            }
          } else if (!row.binding.count(p.variable) && !groups[i].empty()) {
            auto it = groups[i].front().find(p.variable);
            if (it != groups[i].front().end()) row.binding[p.variable] = it->second;
          }
        }
        bool keep = true;
        for (const auto& h : s.having) {
          auto v = eval(h, row.binding, row.members);
          auto ebv = v ? effective_boolean(*v) : std::nullopt;
          if (!ebv || !*ebv) {
            keep = false;
            break;
          }
        }
        if (keep) rows.push_back(std::move(row));
      }
    } else {
      for (auto& mu : where) {
        Row row{std::move(mu), nullptr};
        for (const auto& p : s.projection) {
          if (!p.expression) continue;
          if (auto v = eval(*p.expression, row.binding, nullptr)) {
            if (!row.binding.count(p.variable)) row.binding[p.variable] = *v;
          }
        }
        rows.push_back(std::move(row));
      }
    }

    if (!s.order_by.empty()) {
      std::vector<std::vector<std::optional<Term>>> keys(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& c : s.order_by) {
          keys[i].push_back(eval(c.expr, rows[i].binding, rows[i].members));
        }
      }
      std::vector<std::size_t> order(rows.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t k = 0; k < s.order_by.size(); ++k) {
          int c = order_compare(keys[a][k], keys[b][k]);
          if (c != 0) return s.order_by[k].descending ? c > 0 : c < 0;
        }
        return false;
      });
      std::vector<Row> sorted;
      sorted.reserve(rows.size());
      for (auto i : order) sorted.push_back(std::move(rows[i]));
      rows = std::move(sorted);
    }

    Solutions out;
    std::set<Binding> seen;
    for (auto& row : rows) {
      Binding projectedRow;
      for (const auto& v : projected) {
        auto it = row.binding.find(v);
        if (it != row.binding.end()) projectedRow.emplace(v, it->second);
      }
      if (s.distinct || s.reduced) {
        if (!seen.insert(projectedRow).second) continue;
      }
      out.push_back(std::move(projectedRow));
    }
    std::size_t offset = s.offset.value_or(0);
    if (offset >= out.size()) return {};
    out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(offset));
    if (s.limit && out.size() > *s.limit) out.resize(*s.limit);
    return out;
  }

 private:
  // ---------------------------------------------------------------- patterns

  Solutions element(const Element& e, Solutions input) {
    switch (e.kind) {
      case Element::Kind::triples:
        for (const auto& t : e.triples) input = match(t, input);
        return input;
      case Element::Kind::group:
        return group(e.groups.front(), std::move(input));
      case Element::Kind::optional: {
        Solutions out;
        for (auto& mu : input) {
          Solutions ext = group(e.groups.front(), Solutions{mu});
          if (ext.empty()) {
            out.push_back(std::move(mu));
          } else {
            for (auto& x : ext) out.push_back(std::move(x));
          }
        }
        return out;
      }
      case Element::Kind::union_of: {
        Solutions out;
        for (const auto& branch : e.groups) {
          for (auto& x : group(branch, input)) out.push_back(std::move(x));
        }
        return out;
      }
      case Element::Kind::minus: {
        Solutions right = group(e.groups.front(), Solutions{Binding{}});
        Solutions out;
        for (auto& mu : input) {
          bool removed = false;
          for (const auto& r : right) {
            bool shares = false;
            for (const auto& [k, v] : r) {
              if (mu.count(k)) shares = true;
            }
            if (shares && compatible(mu, r)) {
              removed = true;
              break;
            }
          }
          if (!removed) out.push_back(std::move(mu));
        }
        return out;
      }
      case Element::Kind::graph:
        return graph_element(e, std::move(input));
      case Element::Kind::service:
        return service(e, std::move(input));
      case Element::Kind::bind: {
        Solutions out;
        const std::string& var = e.target.value;
        for (auto& mu : input) {
          auto v = eval(e.expr, mu, nullptr);
          if (v) {
            auto it = mu.find(var);
            if (it != mu.end()) {
              if (!(it->second == *v)) continue;
            } else {
              mu.emplace(var, *v);
            }
          }
          out.push_back(std::move(mu));
        }
        return out;
      }
      case Element::Kind::values:
        return join(input, values_solutions(e.values));
      case Element::Kind::subselect: {
        const SelectQuery& sub = *e.subquery;
        std::vector<std::string> vars;
        if (sub.select_all) {
          vars = sparql::in_scope_variables(sub.where);
        } else {
          for (const auto& p : sub.projection) vars.push_back(p.variable);
        }
        Evaluator inner(store_, graph_);
        return join(input, inner.select(sub, vars));
      }
      case Element::Kind::filter:
        return input;
    }
    return input;
  }

  Solutions graph_element(const Element& e, Solutions input) {
    Solutions out;
    if (e.target.is_iri()) {
      auto it = store_.named.find(e.target.value);
      if (it == store_.named.end()) return out;
      Evaluator inner(store_, &it->second);
      return inner.group(e.groups.front(), std::move(input));
    }
    const std::string var = e.target.value;
    for (const auto& [name, graph] : store_.named) {
      Term g = Term::iri(name);
      Solutions seeded;
      for (const auto& mu : input) {
        auto it = mu.find(var);
        if (it != mu.end() && !(it->second == g)) continue;
        Binding b = mu;
        b[var] = g;
        seeded.push_back(std::move(b));
      }
      if (seeded.empty()) continue;
      Evaluator inner(store_, &graph);
      for (auto& x : inner.group(e.groups.front(), std::move(seeded))) out.push_back(std::move(x));
    }
    return out;
  }

  Solutions service(const Element& e, Solutions input) {
    Solutions out;
    for (auto& mu : input) {
      std::string endpoint = e.target.value;
      if (e.target.is_variable()) {
        auto it = mu.find(e.target.value);
        if (it == mu.end() || !it->second.is_iri()) {
          if (e.silent) {
            out.push_back(mu);
            continue;
          }
          throw ExecutionError("", 400, "SERVICE variable ?" + e.target.value + " is unbound");
        }
        endpoint = it->second.value;
      }
      const LocalStore* remote = store_.resolver ? store_.resolver(endpoint) : nullptr;
      if (!remote) {
        if (e.silent) {
          out.push_back(mu);
          continue;
        }
        throw EndpointUnreachable(endpoint, "SERVICE endpoint " + endpoint + " is not reachable");
      }
      Evaluator inner(*remote->impl_, &remote->impl_->default_graph);
      for (auto& x : inner.group(e.groups.front(), Solutions{mu})) out.push_back(std::move(x));
    }
    return out;
  }

  Solutions values_solutions(const sparql::ValuesBlock& v) {
    Solutions out;
    for (const auto& row : v.rows) {
      Binding b;
      for (std::size_t i = 0; i < v.variables.size(); ++i) {
        if (row[i]) b[v.variables[i]] = *row[i];
      }
      out.push_back(std::move(b));
    }
    return out;
  }

  std::optional<Term> resolve(const Term& t, const Binding& mu) const {
    if (!is_var_like(t)) return t;
    auto it = mu.find(var_key(t));
    if (it == mu.end()) return std::nullopt;
    return it->second;
  }

  /// Extends `mu` with `value` bound at pattern position `t`; false on conflict.
  static bool bind_position(Binding& mu, const Term& t, const Term& value) {
    if (!is_var_like(t)) return t == value;
    auto [it, inserted] = mu.emplace(var_key(t), value);
    return inserted || it->second == value;
  }

  Solutions match(const TriplePattern& tp, const Solutions& input) {
    Solutions out;
    for (const auto& mu : input) {
      auto s = resolve(tp.subject, mu);
      auto o = resolve(tp.object, mu);
      if (tp.path) {
        for (const auto& [x, y] : path_pairs(*tp.path, s, o)) {
          Binding b = mu;
          if (bind_position(b, tp.subject, x) && bind_position(b, tp.object, y)) {
            out.push_back(std::move(b));
          }
        }
        continue;
      }
      auto p = resolve(tp.predicate, mu);
      const std::vector<std::uint32_t>* candidates = nullptr;
      if (s) {
        candidates = graph_->lookup(graph_->by_s, *s);
      } else if (o) {
        candidates = graph_->lookup(graph_->by_o, *o);
      } else if (p) {
        candidates = graph_->lookup(graph_->by_p, *p);
      }
      auto visit = [&](const Triple& t) {
        if (s && !(t.s == *s)) return;
        if (p && !(t.p == *p)) return;
        if (o && !(t.o == *o)) return;
        Binding b = mu;
        if (bind_position(b, tp.subject, t.s) && bind_position(b, tp.predicate, t.p) &&
            bind_position(b, tp.object, t.o)) {
          out.push_back(std::move(b));
        }
      };
      if (s || o || p) {
        if (!candidates) continue;
        for (auto id : *candidates) visit(graph_->triples[id]);
      } else {
        for (const auto& t : graph_->triples) visit(t);
      }
    }
    return out;
  }

  // ---------------------------------------------------------------- paths

  std::vector<Term> step(const std::string& iri, const Term& node, bool forward) const {
    std::vector<Term> out;
    const auto* ids = graph_->lookup(forward ? graph_->by_s : graph_->by_o, node);
    if (!ids) return out;
    for (auto id : *ids) {
      const auto& t = graph_->triples[id];
      if (t.p.value == iri && t.p.is_iri()) out.push_back(forward ? t.o : t.s);
    }
    return out;
  }

  std::vector<Term> ends(const PathExpr& p, const Term& node, bool forward) const {
    switch (p.op) {
      case PathExpr::Op::iri:
        return step(p.iri, node, forward);
      case PathExpr::Op::inverse:
        return ends(p.args.front(), node, !forward);
      case PathExpr::Op::sequence: {
        std::vector<Term> frontier{node};
        auto visit = [&](const PathExpr& part) {
          std::vector<Term> next;
          for (const auto& n : frontier) {
            for (auto& e : ends(part, n, forward)) next.push_back(std::move(e));
          }
          frontier = std::move(next);
        };
        if (forward) {
          for (const auto& part : p.args) visit(part);
        } else {
          for (auto it = p.args.rbegin(); it != p.args.rend(); ++it) visit(*it);
        }
        return frontier;
      }
      case PathExpr::Op::alternative: {
        std::vector<Term> out;
        for (const auto& a : p.args) {
          for (auto& e : ends(a, node, forward)) out.push_back(std::move(e));
        }
        return out;
      }
      case PathExpr::Op::zero_or_more:
      case PathExpr::Op::one_or_more: {
        std::set<Term> seen;
        std::vector<Term> order;
        std::vector<Term> frontier;
        if (p.op == PathExpr::Op::zero_or_more) {
          seen.insert(node);
          order.push_back(node);
          frontier.push_back(node);
        } else {
          for (auto& e : ends(p.args.front(), node, forward)) {
            if (seen.insert(e).second) {
              order.push_back(e);
              frontier.push_back(e);
            }
          }
        }
        while (!frontier.empty()) {
          std::vector<Term> next;
          for (const auto& n : frontier) {
            for (auto& e : ends(p.args.front(), n, forward)) {
              if (seen.insert(e).second) {
                order.push_back(e);
                next.push_back(e);
              }
            }
          }
          frontier = std::move(next);
        }
        return order;
      }
      case PathExpr::Op::zero_or_one: {
        std::vector<Term> out{node};
        for (auto& e : ends(p.args.front(), node, forward)) {
          if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(std::move(e));
        }
        return out;
      }
      case PathExpr::Op::negated_set: {
        std::set<std::string> fwd;
        std::set<std::string> inv;
        for (const auto& a : p.args) {
          if (a.op == PathExpr::Op::inverse) {
            inv.insert(a.args.front().iri);
          } else {
            fwd.insert(a.iri);
          }
        }
        std::vector<Term> out;
        auto scan = [&](bool along, const std::set<std::string>& excluded) {
          const auto* ids = graph_->lookup(along ? graph_->by_s : graph_->by_o, node);
          if (!ids) return;
          for (auto id : *ids) {
            const auto& t = graph_->triples[id];
            if (!excluded.count(t.p.value)) out.push_back(along ? t.o : t.s);
          }
        };
        if (!fwd.empty() || inv.empty()) scan(forward, fwd);
        if (!inv.empty()) scan(!forward, inv);
        return out;
      }
    }
    return {};
  }

  std::vector<std::pair<Term, Term>> path_pairs(const PathExpr& p, const std::optional<Term>& s,
                                                const std::optional<Term>& o) const {
    std::vector<std::pair<Term, Term>> out;
    if (s) {
      for (auto& e : ends(p, *s, true)) {
        if (!o || e == *o) out.emplace_back(*s, std::move(e));
      }
    } else if (o) {
      for (auto& e : ends(p, *o, false)) out.emplace_back(std::move(e), *o);
    } else {
      for (const auto& n : graph_->nodes()) {
        for (auto& e : ends(p, n, true)) out.emplace_back(n, std::move(e));
      }
    }
    return out;
  }

  // ---------------------------------------------------------------- expressions

  static bool has_aggregate(const Expr& e) {
    if (e.kind == Expr::Kind::aggregate) return true;
    return std::any_of(e.args.begin(), e.args.end(), [](const Expr& a) { return has_aggregate(a); });
  }

  static bool has_aggregate(const SelectQuery& s) {
    for (const auto& p : s.projection) {
      if (p.expression && has_aggregate(*p.expression)) return true;
    }
    for (const auto& h : s.having) {
      if (has_aggregate(h)) return true;
    }
    return false;
  }

  std::optional<Term> eval(const Expr& e, const Binding& mu, const Solutions* group) {
    switch (e.kind) {
      case Expr::Kind::term:
        return resolve(e.term, mu);
      case Expr::Kind::unary: {
        auto v = eval(e.args.front(), mu, group);
        if (!v) return std::nullopt;
        if (e.op == "!") {
          auto b = effective_boolean(*v);
          if (!b) return std::nullopt;
          return boolean(!*b);
        }
        auto n = to_number(*v);
        if (!n) return std::nullopt;
        if (e.op == "-") n->value = -n->value;
        return from_number(*n);
      }
      case Expr::Kind::binary:
        return binary(e, mu, group);
      case Expr::Kind::in:
      case Expr::Kind::not_in: {
        auto lhs = eval(e.args.front(), mu, group);
        if (!lhs) return std::nullopt;
        bool found = false;
        bool error = false;
        for (std::size_t i = 1; i < e.args.size(); ++i) {
          auto rhs = eval(e.args[i], mu, group);
          auto eq = rhs ? value_equal(*lhs, *rhs) : std::nullopt;
          if (!eq) {
            error = true;
          } else if (*eq) {
            found = true;
            break;
          }
        }
        if (!found && error) return std::nullopt;
        return boolean(e.kind == Expr::Kind::in ? found : !found);
      }
      case Expr::Kind::exists:
      case Expr::Kind::not_exists: {
        bool any = !group_exists(*e.pattern, mu);
        return boolean(e.kind == Expr::Kind::exists ? !any : any);
      }
      case Expr::Kind::aggregate:
        if (!group) return std::nullopt;
        return aggregate(e, *group);
      case Expr::Kind::call:
        return call(e, mu, group);
    }
    return std::nullopt;
  }

  bool group_exists(const GroupPattern& g, const Binding& mu) {
    return !group(g, Solutions{mu}).empty();
  }

  std::optional<Term> binary(const Expr& e, const Binding& mu, const Solutions* group) {
    if (e.op == "||" || e.op == "&&") {
      auto l = eval(e.args[0], mu, group);
      auto r = eval(e.args[1], mu, group);
      // -1 error, 0 false, 1 true
      auto truth = [](const std::optional<Term>& v) {
        auto b = v ? effective_boolean(*v) : std::nullopt;
        return b ? static_cast<int>(*b) : -1;
      };
      int lb = truth(l);
      int rb = truth(r);
      if (e.op == "||") {
        if (lb == 1 || rb == 1) return boolean(true);
        if (lb == 0 && rb == 0) return boolean(false);
        return std::nullopt;
      }
      if (lb == 0 || rb == 0) return boolean(false);
      if (lb == 1 && rb == 1) return boolean(true);
      return std::nullopt;
    }
    auto l = eval(e.args[0], mu, group);
    auto r = eval(e.args[1], mu, group);
    if (!l || !r) return std::nullopt;
    if (e.op == "=" || e.op == "!=") {
      auto eq = value_equal(*l, *r);
      if (!eq) return std::nullopt;
      return boolean(e.op == "=" ? *eq : !*eq);
    }
    if (e.op == "<" || e.op == ">" || e.op == "<=" || e.op == ">=") {
      auto c = value_compare(*l, *r);
      if (!c) return std::nullopt;
      if (e.op == "<") return boolean(*c < 0);
      if (e.op == ">") return boolean(*c > 0);
      if (e.op == "<=") return boolean(*c <= 0);
      return boolean(*c >= 0);
    }
    auto a = to_number(*l);
    auto b = to_number(*r);
    if (!a || !b) return std::nullopt;
    NumKind kind = std::max(a->kind, b->kind);
    Number out{kind, 0};
    if (e.op == "+") out.value = a->value + b->value;
    if (e.op == "-") out.value = a->value - b->value;
    if (e.op == "*") out.value = a->value * b->value;
    if (e.op == "/") {
      if (b->value == 0 && kind != NumKind::dbl) return std::nullopt;
      out.value = a->value / b->value;
      if (kind == NumKind::integer) out.kind = NumKind::decimal;
    }
    return from_number(out);
  }

  std::optional<Term> aggregate(const Expr& e, const Solutions& members) {
    std::vector<Term> values;
    if (e.star) {
      if (!e.distinct) {
        return Term::literal(std::to_string(members.size()), std::string(vocab::xsd_integer));
      }
      std::set<Binding> distinct(members.begin(), members.end());
      return Term::literal(std::to_string(distinct.size()), std::string(vocab::xsd_integer));
    }
    for (const auto& mu : members) {
      if (auto v = eval(e.args.front(), mu, nullptr)) values.push_back(std::move(*v));
    }
    if (e.distinct) {
      std::vector<Term> unique;
      std::set<Term> seen;
      for (auto& v : values) {
        if (seen.insert(v).second) unique.push_back(std::move(v));
      }
      values = std::move(unique);
    }
    if (e.op == "COUNT") {
      return Term::literal(std::to_string(values.size()), std::string(vocab::xsd_integer));
    }
    if (e.op == "SUM" || e.op == "AVG") {
      Number total{NumKind::integer, 0};
      for (const auto& v : values) {
        auto n = to_number(v);
        if (!n) return std::nullopt;
        total.kind = std::max(total.kind, n->kind);
        total.value += n->value;
      }
      if (e.op == "SUM") return from_number(total);
      if (values.empty()) return from_number(Number{NumKind::integer, 0});
      total.value /= static_cast<long double>(values.size());
      if (total.kind == NumKind::integer) total.kind = NumKind::decimal;
      return from_number(total);
    }
    if (e.op == "MIN" || e.op == "MAX") {
      if (values.empty()) return std::nullopt;
      const Term* best = &values.front();
      for (const auto& v : values) {
        int c = order_compare(v, *best);
        if ((e.op == "MIN" && c < 0) || (e.op == "MAX" && c > 0)) best = &v;
      }
      return *best;
    }
    if (e.op == "SAMPLE") {
      if (values.empty()) return std::nullopt;
      return values.front();
    }
    if (e.op == "GROUP_CONCAT") {
      std::string out;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += e.separator;
        out += values[i].value;
      }
      return Term::literal(out);
    }
    return std::nullopt;
  }

  std::optional<Term> call(const Expr& e, const Binding& mu, const Solutions* group) {
    const std::string& f = e.op;
    if (f == "BOUND") {
      const Expr& a = e.args.front();
      if (a.kind != Expr::Kind::term || !a.term.is_variable()) return std::nullopt;
      return boolean(mu.count(a.term.value) > 0);
    }
    if (f == "COALESCE") {
      for (const auto& a : e.args) {
        if (auto v = eval(a, mu, group)) return v;
      }
      return std::nullopt;
    }
    if (f == "IF") {
      if (e.args.size() != 3) return std::nullopt;
      auto c = eval(e.args[0], mu, group);
      auto b = c ? effective_boolean(*c) : std::nullopt;
      if (!b) return std::nullopt;
      return eval(e.args[*b ? 1 : 2], mu, group);
    }
    std::vector<Term> args;
    for (const auto& a : e.args) {
      auto v = eval(a, mu, group);
      if (!v) return std::nullopt;
      args.push_back(std::move(*v));
    }
    auto arity = [&](std::size_t n) { return args.size() == n; };
    auto literal_like = [&](const Term& t, const std::string& lex) {
      // String functions keep the language tag of their first argument.
      return t.language.empty() ? Term::literal(lex) : Term::lang_literal(lex, t.language);
    };

    if (f == "STR" && arity(1)) {
      if (args[0].is_blank()) return std::nullopt;
      return Term::literal(args[0].value);
    }
    if (f == "LANG" && arity(1)) {
      if (!args[0].is_literal()) return std::nullopt;
      return Term::literal(args[0].language);
    }
    if (f == "LANGMATCHES" && arity(2)) {
      std::string tag = args[0].value;
      std::string range = args[1].value;
      auto lower = [](std::string s) {
        for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
      };
      tag = lower(tag);
      range = lower(range);
      if (range == "*") return boolean(!tag.empty());
      return boolean(tag == range || tag.rfind(range + "-", 0) == 0);
    }
    if (f == "DATATYPE" && arity(1)) {
      if (!args[0].is_literal()) return std::nullopt;
      return Term::iri(args[0].datatype);
    }
    if (f == "IRI" && arity(1)) {
      if (args[0].is_iri()) return args[0];
      if (is_string_literal(args[0])) return Term::iri(args[0].value);
      return std::nullopt;
    }
    if (f == "ISIRI" && arity(1)) return boolean(args[0].is_iri());
    if (f == "ISBLANK" && arity(1)) return boolean(args[0].is_blank());
    if (f == "ISLITERAL" && arity(1)) return boolean(args[0].is_literal());
    if (f == "ISNUMERIC" && arity(1)) return boolean(to_number(args[0]).has_value());
    if (f == "SAMETERM" && arity(2)) return boolean(args[0] == args[1]);
    if (f == "STRLEN" && arity(1)) {
      std::size_t n = 0;
      for (unsigned char c : args[0].value) n += (c & 0xC0) != 0x80;
      return Term::literal(std::to_string(n), std::string(vocab::xsd_integer));
    }
    if ((f == "UCASE" || f == "LCASE") && arity(1)) {
      std::string s = args[0].value;
      for (auto& c : s) {
        c = static_cast<char>(f == "UCASE" ? std::toupper(static_cast<unsigned char>(c))
                                           : std::tolower(static_cast<unsigned char>(c)));
      }
      return literal_like(args[0], s);
    }
    if (f == "CONTAINS" && arity(2)) {
      return boolean(args[0].value.find(args[1].value) != std::string::npos);
    }
    if (f == "STRSTARTS" && arity(2)) return boolean(args[0].value.rfind(args[1].value, 0) == 0);
    if (f == "STRENDS" && arity(2)) {
      const auto& s = args[0].value;
      const auto& x = args[1].value;
      return boolean(s.size() >= x.size() && s.compare(s.size() - x.size(), x.size(), x) == 0);
    }
    if ((f == "STRBEFORE" || f == "STRAFTER") && arity(2)) {
      auto pos = args[0].value.find(args[1].value);
      if (pos == std::string::npos) return Term::literal("");
      if (f == "STRBEFORE") return literal_like(args[0], args[0].value.substr(0, pos));
      return literal_like(args[0], args[0].value.substr(pos + args[1].value.size()));
    }
    if (f == "CONCAT") {
      std::string s;
      for (const auto& a : args) s += a.value;
      return Term::literal(s);
    }
    if (f == "SUBSTR" && (arity(2) || arity(3))) {
      auto start = to_number(args[1]);
      if (!start) return std::nullopt;
      long long from = std::llround(start->value) - 1;
      long long len = static_cast<long long>(args[0].value.size());
      if (arity(3)) {
        auto l = to_number(args[2]);
        if (!l) return std::nullopt;
        len = std::llround(l->value);
      }
      if (from < 0) {
        len += from;
        from = 0;
      }
      if (len <= 0 || from >= static_cast<long long>(args[0].value.size())) {
        return literal_like(args[0], "");
      }
      return literal_like(args[0], args[0].value.substr(static_cast<std::size_t>(from),
                                                        static_cast<std::size_t>(len)));
    }
    if ((f == "REGEX" && (arity(2) || arity(3))) || (f == "REPLACE" && (arity(3) || arity(4)))) {
      std::size_t flag_index = f == "REGEX" ? 2 : 3;
      auto flags = std::regex::ECMAScript;
      if (args.size() > flag_index && args[flag_index].value.find('i') != std::string::npos) {
        flags |= std::regex::icase;
      }
      try {
        std::regex re(args[1].value, flags);
        if (f == "REGEX") return boolean(std::regex_search(args[0].value, re));
        return literal_like(args[0], std::regex_replace(args[0].value, re, args[2].value));
      } catch (const std::regex_error&) {
        return std::nullopt;
      }
    }
    if ((f == "ABS" || f == "CEIL" || f == "FLOOR" || f == "ROUND") && arity(1)) {
      auto n = to_number(args[0]);
      if (!n) return std::nullopt;
      if (f == "ABS") n->value = std::fabs(n->value);
      if (f == "CEIL") n->value = std::ceil(n->value);
      if (f == "FLOOR") n->value = std::floor(n->value);
      if (f == "ROUND") n->value = std::floor(n->value + 0.5L);
      return from_number(*n);
    }
    if ((f == "YEAR" || f == "MONTH" || f == "DAY") && arity(1)) {
      const auto& s = args[0].value;
      std::size_t offset = (!s.empty() && s[0] == '-') ? 1 : 0;
      auto dash1 = s.find('-', offset);
      if (dash1 == std::string::npos) return std::nullopt;
      auto dash2 = s.find('-', dash1 + 1);
      std::string part;
      if (f == "YEAR") part = s.substr(0, dash1);
      if (f == "MONTH") part = s.substr(dash1 + 1, 2);
      if (f == "DAY" && dash2 != std::string::npos) part = s.substr(dash2 + 1, 2);
      try {
        return Term::literal(std::to_string(std::stoll(part)), std::string(vocab::xsd_integer));
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
    if (f == "STRDT" && arity(2)) return Term::literal(args[0].value, args[1].value);
    if (f == "STRLANG" && arity(2)) return Term::lang_literal(args[0].value, args[1].value);
    if (f == "ENCODE_FOR_URI" && arity(1)) {
      static const char* hex = "0123456789ABCDEF";
      std::string out;
      for (unsigned char c : args[0].value) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
          out += static_cast<char>(c);
        } else {
          out += '%';
          out += hex[c >> 4];
          out += hex[c & 15];
        }
      }
      return Term::literal(out);
    }
    return std::nullopt;
  }

  const LocalStore::Impl& store_;
  const Graph* graph_;
};

LocalStore::LocalStore() : impl_(std::make_unique<Impl>()) {}
LocalStore::~LocalStore() = default;
LocalStore::LocalStore(LocalStore&&) noexcept = default;
LocalStore& LocalStore::operator=(LocalStore&&) noexcept = default;

void LocalStore::add(const sparql::Quad& quad) {
  add(quad.subject, quad.predicate, quad.object, quad.graph);
}

void LocalStore::add(const Term& subject, const Term& predicate, const Term& object,
                     const std::string& graph) {
  Graph& g = graph.empty() ? impl_->default_graph : impl_->named[graph];
  std::size_t before = g.triples.size();
  g.add(subject, predicate, object);
  impl_->quad_count += g.triples.size() - before;
}

void LocalStore::load_turtle(std::string_view text) {
  for (const auto& q : sparql::parse_turtle(text)) add(q);
}

std::size_t LocalStore::size() const { return impl_->quad_count; }

std::vector<sparql::Quad> LocalStore::quads() const {
  std::vector<sparql::Quad> out;
  for (const auto& t : impl_->default_graph.triples) out.push_back({t.s, t.p, t.o, ""});
  for (const auto& [name, g] : impl_->named) {
    for (const auto& t : g.triples) out.push_back({t.s, t.p, t.o, name});
  }
  return out;
}

void LocalStore::set_service_resolver(ServiceResolver resolver) {
  impl_->resolver = std::move(resolver);
}

ResultSet LocalStore::query(std::string_view text) const { return query(sparql::parse_query(text)); }

ResultSet LocalStore::query(const ParsedQuery& q) const {
  Graph merged;
  const Graph* active = &impl_->default_graph;
  if (!q.from.empty()) {
    for (const auto& name : q.from) {
      auto it = impl_->named.find(name);
      if (it == impl_->named.end()) continue;
      for (const auto& t : it->second.triples) merged.add(t.s, t.p, t.o);
    }
    active = &merged;
  }
  Evaluator ev(*impl_, active);
  ResultSet rs;
  switch (q.query_type) {
    case QueryType::select: {
      rs.variables = q.projected_variables;
      rs.rows = ev.select(q.body, q.projected_variables);
      return rs;
    }
    case QueryType::ask: {
      SelectQuery body = q.body;
      body.limit = 1;
      rs.boolean = !ev.select(body, {}).empty();
      return rs;
    }
    case QueryType::construct: {
      std::vector<std::string> vars = sparql::in_scope_variables(q.body.where);
      auto solutions = ev.select(q.body, vars);
      rs.variables = {"subject", "predicate", "object"};
      std::set<Binding> seen;
      for (std::size_t i = 0; i < solutions.size(); ++i) {
        const auto& mu = solutions[i];
        for (const auto& t : q.construct_template) {
          auto inst = [&](const Term& x) -> std::optional<Term> {
            if (x.is_blank()) return Term::blank(x.value + "_" + std::to_string(i));
            if (x.is_variable()) {
              auto it = mu.find(x.value);
              if (it == mu.end()) return std::nullopt;
              return it->second;
            }
            return x;
          };
          auto s = inst(t.subject);
          auto p = inst(t.predicate);
          auto o = inst(t.object);
          if (!s || !p || !o || s->is_literal() || !p->is_iri()) continue;
          Binding row{{"subject", *s}, {"predicate", *p}, {"object", *o}};
          if (seen.insert(row).second) rs.rows.push_back(std::move(row));
        }
      }
      return rs;
    }
    case QueryType::describe:
      break;
  }
  throw ExecutionError("", 400, "DESCRIBE queries are not supported by the local store");
}

}  // namespace quarry::store
