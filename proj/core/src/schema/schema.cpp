// SPDX-License-Identifier: Apache-2.0
#include "quarry/schema/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "quarry/errors.hpp"

namespace quarry::schema {

using harvest::RawVoidRecord;

// ---------------------------------------------------------------- prefixes

PrefixMap::PrefixMap(std::initializer_list<std::pair<const std::string, std::string>> entries)
    : entries_(entries) {}

PrefixMap PrefixMap::well_known() {
  return {
      {"rdf", std::string(vocab::rdf)},
      {"rdfs", std::string(vocab::rdfs)},
      {"xsd", std::string(vocab::xsd)},
      {"owl", std::string(vocab::owl)},
      {"skos", "http://www.w3.org/2004/02/skos/core#"},
      {"dcterms", "http://purl.org/dc/terms/"},
      {"foaf", "http://xmlns.com/foaf/0.1/"},
      {"schema", "https://schema.org/"},
      {"sh", "http://www.w3.org/ns/shacl#"},
      {"void", "http://rdfs.org/ns/void#"},
      {"up", "http://purl.uniprot.org/core/"},
      {"taxon", "http://purl.uniprot.org/taxonomy/"},
      {"uniprotkb", "http://purl.uniprot.org/uniprot/"},
      {"rh", "http://rdf.rhea-db.org/"},
      {"orth", "http://purl.org/net/orth#"},
      {"genex", "http://purl.org/genex#"},
      {"lscr", "http://purl.org/lscr#"},
      {"obo", "http://purl.obolibrary.org/obo/"},
      {"dbo", "http://dbpedia.org/ontology/"},
      {"dbr", "http://dbpedia.org/resource/"},
      {"dbp", "http://dbpedia.org/property/"},
      {"wd", "http://www.wikidata.org/entity/"},
      {"wdt", "http://www.wikidata.org/prop/direct/"},
  };
}

void PrefixMap::add(const std::string& prefix, const std::string& ns) { entries_[prefix] = ns; }

void PrefixMap::merge(const std::map<std::string, std::string>& entries) {
  for (const auto& [p, ns] : entries) entries_.emplace(p, ns);
}

namespace {

bool valid_local(std::string_view local) {
  if (local.empty()) return false;
  if (local.back() == '.') return false;
  for (std::size_t i = 0; i < local.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(local[i]);
    bool ok = std::isalnum(c) || c == '_' || c >= 0x80 || (i > 0 && (c == '-' || c == '.'));
    if (!ok) return false;
  }
  return true;
}

}  // namespace

std::optional<std::string> PrefixMap::compact(const std::string& iri) const {
  const std::pair<const std::string, std::string>* best = nullptr;
  for (const auto& entry : entries_) {
    const auto& ns = entry.second;
    if (iri.size() > ns.size() && iri.compare(0, ns.size(), ns) == 0 &&
        (!best || ns.size() > best->second.size())) {
      best = &entry;
    }
  }
  if (!best) return std::nullopt;
  std::string_view local(iri);
  local.remove_prefix(best->second.size());
  if (!valid_local(local)) return std::nullopt;
  return best->first + ":" + std::string(local);
}

std::string PrefixMap::display(const std::string& iri) const {
  if (auto c = compact(iri)) return *c;
  return "<" + iri + ">";
}

std::optional<std::string> PrefixMap::expand(const std::string& pname) const {
  if (pname.size() >= 2 && pname.front() == '<' && pname.back() == '>') {
    return pname.substr(1, pname.size() - 2);
  }
  auto colon = pname.find(':');
  if (colon == std::string::npos) return std::nullopt;
  auto it = entries_.find(pname.substr(0, colon));
  if (it == entries_.end()) return std::nullopt;
  return it->second + pname.substr(colon + 1);
}

// ---------------------------------------------------------------- matrix

namespace {

void rank(std::vector<RankedIri>& v) {
  std::sort(v.begin(), v.end(), [](const RankedIri& a, const RankedIri& b) {
    return a.count != b.count ? a.count > b.count : a.iri < b.iri;
  });
}

}  // namespace

ClassPropertyMatrix build_matrix(const std::vector<RawVoidRecord>& records) {
  struct ClassStats {
    std::uint64_t max_instances = 0;
    std::uint64_t triples = 0;
  };
  std::map<std::string, ClassStats> class_stats;
  std::map<std::string, std::uint64_t> usage;
  std::map<std::pair<std::string, std::string>, CellConstraint> cells;
  for (const auto& r : records) {
    if (r.predicate == vocab::rdf_type) continue;
    auto& cs = class_stats[r.subject_class];
    cs.max_instances = std::max(cs.max_instances, r.subject_instance_count);
    cs.triples += r.triple_count;
    usage[r.predicate] += r.triple_count;
    auto& cell = cells[{r.subject_class, r.predicate}];
    if (r.object_class) {
      cell.object_classes.insert(*r.object_class);
    } else if (r.object_datatype) {
      cell.object_datatypes.insert(*r.object_datatype);
    } else {
      cell.untyped = true;
    }
    cell.triple_count += r.triple_count;
  }

  ClassPropertyMatrix m;
  for (const auto& [iri, s] : class_stats) {
    m.classes.push_back({iri, s.max_instances > 0 ? s.max_instances : s.triples});
  }
  for (const auto& [iri, n] : usage) m.predicates.push_back({iri, n});
  rank(m.classes);
  rank(m.predicates);
  std::map<std::string, std::size_t> ci;
  std::map<std::string, std::size_t> pi;
  for (std::size_t i = 0; i < m.classes.size(); ++i) ci[m.classes[i].iri] = i;
  for (std::size_t i = 0; i < m.predicates.size(); ++i) pi[m.predicates[i].iri] = i;
  for (auto& [key, cell] : cells) m.cells[{ci.at(key.first), pi.at(key.second)}] = std::move(cell);
  return m;
}

std::size_t kept_count(std::size_t n, double fraction) {
  // The epsilon absorbs binary rounding, e.g. 0.1 * 30 = 3.0000000000000004.
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::min(n, k);
}

ClassPropertyMatrix truncate_matrix(const ClassPropertyMatrix& m, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidFraction(fraction);
  ClassPropertyMatrix out;
  const std::size_t nc = kept_count(m.classes.size(), fraction);
  const std::size_t np = kept_count(m.predicates.size(), fraction);
  out.classes.assign(m.classes.begin(), m.classes.begin() + static_cast<std::ptrdiff_t>(nc));
  out.predicates.assign(m.predicates.begin(), m.predicates.begin() + static_cast<std::ptrdiff_t>(np));
  for (const auto& [key, cell] : m.cells) {
    if (key.first < nc && key.second < np) out.cells.emplace(key, cell);
  }
  return out;
}

// ---------------------------------------------------------------- shapes

namespace {

std::string shape_label(const std::string& class_iri, const PrefixMap& prefixes) {
  auto c = prefixes.compact(class_iri);
  if (!c) return "<" + class_iri + ">";
  std::string label = *c;
  std::replace(label.begin(), label.end(), ':', '_');
  return "shape:" + label;
}

std::string object_text(const CellConstraint& cell, const PrefixMap& prefixes) {
  std::vector<std::string> parts;
  if (!cell.object_classes.empty()) {
    std::string list = "[";
    for (const auto& c : cell.object_classes) list += " " + prefixes.display(c);
    parts.push_back(list + " ]");
  }
  for (const auto& d : cell.object_datatypes) parts.push_back(prefixes.display(d));
  if (cell.untyped || parts.empty()) parts.emplace_back("IRI");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " " : "") + parts[i];
  return out;
}

}  // namespace

std::vector<SchemaShape> render_shapes(const ClassPropertyMatrix& m, const PrefixMap& prefixes) {
  std::vector<std::vector<std::pair<std::size_t, const CellConstraint*>>> rows(m.classes.size());
  for (const auto& [key, cell] : m.cells) rows[key.first].emplace_back(key.second, &cell);

  std::vector<SchemaShape> out;
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    if (rows[c].empty()) continue;
    SchemaShape shape;
    shape.class_iri = m.classes[c].iri;
    shape.label = shape_label(shape.class_iri, prefixes);
    std::ostringstream text;
    text << shape.label << " {\n  a [ " << prefixes.display(shape.class_iri) << " ]";
    for (const auto& [p, cell] : rows[c]) {
      const std::string& pred = m.predicates[p].iri;
      shape.predicate_constraints.emplace_back(pred, *cell);
      text << " ;\n  " << prefixes.display(pred) << " " << object_text(*cell, prefixes);
    }
    text << "\n}";
    shape.rendered_shex = text.str();
    out.push_back(std::move(shape));
  }
  return out;
}

std::string humanize(std::string_view local) {
  std::string out;
  for (std::size_t i = 0; i < local.size(); ++i) {
    char c = local[i];
    if (c == '_' || c == '-') {
      if (!out.empty() && out.back() != ' ') out += ' ';
      continue;
    }
    bool upper = std::isupper(static_cast<unsigned char>(c));
    bool prev_lower = i > 0 && std::islower(static_cast<unsigned char>(local[i - 1]));
    if (upper && prev_lower) {
      out += ' ';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      continue;
    }
    out += c;
  }
  return out;
}

std::string shape_summary_text(const SchemaShape& shape) {
  auto name = [](const std::string& iri) { return std::string(local_name(iri)); };
  std::string cls = name(shape.class_iri);
  std::string human = humanize(cls);
  if (!human.empty()) human[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(human[0])));
  std::ostringstream out;
  out << human << " (" << cls << ", " << shape.class_iri << ") has the properties ";
  for (std::size_t i = 0; i < shape.predicate_constraints.size(); ++i) {
    const auto& [pred, cell] = shape.predicate_constraints[i];
    if (i > 0) out << (i + 1 == shape.predicate_constraints.size() ? " and " : ", ");
    out << name(pred);
    std::vector<std::string> targets;
    for (const auto& c : cell.object_classes) targets.push_back(humanize(local_name(c)));
    for (const auto& d : cell.object_datatypes) targets.push_back(name(d));
    if (cell.untyped) targets.emplace_back("IRI");
    if (!targets.empty()) {
      out << " (";
      for (std::size_t t = 0; t < targets.size(); ++t) out << (t ? ", " : "") << targets[t];
      out << ")";
    }
  }
  out << ".";
  return out.str();
}

std::string render_shex_document(const std::vector<SchemaShape>& shapes, const PrefixMap& prefixes) {
  std::set<std::string> used;
  auto note = [&](const std::string& iri) {
    if (auto c = prefixes.compact(iri)) used.insert(c->substr(0, c->find(':')));
  };
  for (const auto& s : shapes) {
    note(s.class_iri);
    for (const auto& [p, cell] : s.predicate_constraints) {
      note(p);
      for (const auto& c : cell.object_classes) note(c);
      for (const auto& d : cell.object_datatypes) note(d);
    }
  }
  std::ostringstream out;
  out << "PREFIX shape: <urn:shape:>\n";
  for (const auto& p : used) out << "PREFIX " << p << ": <" << prefixes.entries().at(p) << ">\n";
  for (const auto& s : shapes) out << "\n" << s.rendered_shex << "\n";
  return out.str();
}

namespace {

std::vector<std::string> shex_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  bool in_iri = false;
  for (char c : text) {
    if (in_iri) {
      cur += c;
      if (c == '>') {
        in_iri = false;
        flush();
      }
      continue;
    }
    if (c == '<') {
      flush();
      cur += c;
      in_iri = true;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == '{' || c == '}' || c == '[' || c == ']' || c == ';') {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

}  // namespace

SchemaShape parse_shape(const std::string& text, const PrefixMap& prefixes) {
  auto tokens = shex_tokens(text);
  std::size_t i = 0;
  auto expect = [&](const std::string& t) {
    if (i >= tokens.size() || tokens[i] != t) {
      throw Error("malformed shape text: expected '" + t + "' at token " + std::to_string(i));
    }
    ++i;
  };
  auto iri = [&]() {
    if (i >= tokens.size()) throw Error("malformed shape text: unexpected end");
    auto e = prefixes.expand(tokens[i]);
    if (!e) throw Error("malformed shape text: cannot expand '" + tokens[i] + "'");
    ++i;
    return *e;
  };
  SchemaShape shape;
  if (tokens.empty()) throw Error("malformed shape text: empty");
  shape.label = tokens[i++];
  expect("{");
  expect("a");
  expect("[");
  shape.class_iri = iri();
  expect("]");
  while (i < tokens.size() && tokens[i] == ";") {
    ++i;
    std::string pred = iri();
    CellConstraint cell;
    while (i < tokens.size() && tokens[i] != ";" && tokens[i] != "}") {
      if (tokens[i] == "[") {
        ++i;
        while (i < tokens.size() && tokens[i] != "]") cell.object_classes.insert(iri());
        expect("]");
      } else if (tokens[i] == "IRI") {
        cell.untyped = true;
        ++i;
      } else {
        cell.object_datatypes.insert(iri());
      }
    }
    shape.predicate_constraints.emplace_back(std::move(pred), std::move(cell));
  }
  expect("}");
  shape.rendered_shex = text;
  return shape;
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const ClassPropertyMatrix& m) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : m.classes) classes.push_back({{"iri", c.iri}, {"instance_count", c.count}});
  nlohmann::json predicates = nlohmann::json::array();
  for (const auto& p : m.predicates) predicates.push_back({{"iri", p.iri}, {"usage_count", p.count}});
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, cell] : m.cells) {
    cells.push_back({{"class", key.first},
                     {"predicate", key.second},
                     {"object_classes", cell.object_classes},
                     {"object_datatypes", cell.object_datatypes},
                     {"untyped", cell.untyped},
                     {"triple_count", cell.triple_count}});
  }
  return {{"classes", classes}, {"predicates", predicates}, {"cells", cells}};
}

ClassPropertyMatrix matrix_from_json(const nlohmann::json& doc) {
  ClassPropertyMatrix m;
  for (const auto& c : doc.at("classes")) m.classes.push_back({c.at("iri"), c.at("instance_count")});
  for (const auto& p : doc.at("predicates")) m.predicates.push_back({p.at("iri"), p.at("usage_count")});
  for (const auto& c : doc.at("cells")) {
    std::size_t ci = c.at("class");
    std::size_t pi = c.at("predicate");
    if (ci >= m.classes.size() || pi >= m.predicates.size()) {
      throw Error("matrix cell index out of range");
    }
    CellConstraint cell;
    cell.object_classes = c.at("object_classes").get<std::set<std::string>>();
    cell.object_datatypes = c.at("object_datatypes").get<std::set<std::string>>();
    cell.untyped = c.value("untyped", false);
    cell.triple_count = c.value("triple_count", std::uint64_t{0});
    m.cells[{ci, pi}] = std::move(cell);
  }
  return m;
}

}  // namespace quarry::schema
