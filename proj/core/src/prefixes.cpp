// SPDX-License-Identifier: Apache-2.0
#include "quarry/prefixes.hpp"

#include <cctype>

#include "quarry/term.hpp"

namespace quarry {

namespace {

PrefixMap make_well_known() {
  PrefixMap m;
  m.add("rdf", std::string(vocab::rdf));
  m.add("rdfs", std::string(vocab::rdfs));
  m.add("xsd", std::string(vocab::xsd));
  m.add("owl", std::string(vocab::owl));
  m.add("skos", "http://www.w3.org/2004/02/skos/core#");
  m.add("foaf", "http://xmlns.com/foaf/0.1/");
  m.add("dcterms", "http://purl.org/dc/terms/");
  m.add("schema", "https://schema.org/");
  m.add("sh", "http://www.w3.org/ns/shacl#");
  m.add("void", "http://rdfs.org/ns/void#");
  m.add("sd", "http://www.w3.org/ns/sparql-service-description#");
  m.add("up", "http://purl.uniprot.org/core/");
  m.add("taxon", "http://purl.uniprot.org/taxonomy/");
  m.add("uniprotkb", "http://purl.uniprot.org/uniprot/");
  m.add("keywords", "http://purl.uniprot.org/keywords/");
  m.add("faldo", "http://biohackathon.org/resource/faldo#");
  m.add("orth", "http://purl.org/net/orth#");
  m.add("genex", "http://purl.org/genex#");
  m.add("lscr", "http://purl.org/lscr#");
  m.add("obo", "http://purl.obolibrary.org/obo/");
  m.add("cco", "http://rdf.ebi.ac.uk/terms/chembl#");
  m.add("cello", "https://purl.expasy.org/cellosaurus/rdf/ontology/");
  m.add("dbo", "http://dbpedia.org/ontology/");
  m.add("dbr", "http://dbpedia.org/resource/");
  m.add("dbp", "http://dbpedia.org/property/");
  m.add("wd", "http://www.wikidata.org/entity/");
  m.add("wdt", "http://www.wikidata.org/prop/direct/");
  return m;
}

bool local_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '-' || c == '.' || u >= 0x80;
}

}  // namespace

const PrefixMap& PrefixMap::well_known() {
  static const PrefixMap instance = make_well_known();
  return instance;
}

void PrefixMap::add(std::string prefix, std::string ns) {
  if (auto it = by_prefix_.find(prefix); it != by_prefix_.end()) {
    by_namespace_.erase(it->second);
  }
  by_namespace_[ns] = prefix;
  by_prefix_[std::move(prefix)] = std::move(ns);
}

void PrefixMap::merge(const PrefixMap& other) {
  for (const auto& [p, ns] : other.by_prefix_) add(p, ns);
}

bool is_simple_local_name(std::string_view local) {
  if (local.empty()) return false;
  auto first = static_cast<unsigned char>(local.front());
  if (!(std::isalnum(first) || local.front() == '_' || first >= 0x80)) return false;
  if (local.back() == '.') return false;
  for (char c : local) {
    if (!local_char(c)) return false;
  }
  return true;
}

std::optional<std::string> PrefixMap::compact(std::string_view iri) const {
  std::optional<std::string> best;
  std::size_t best_len = 0;
  for (const auto& [ns, prefix] : by_namespace_) {
    if (ns.size() <= best_len || iri.size() <= ns.size()) continue;
    if (iri.substr(0, ns.size()) != ns) continue;
    auto local = iri.substr(ns.size());
    if (!is_simple_local_name(local)) continue;
    best = prefix + ":" + std::string(local);
    best_len = ns.size();
  }
  return best;
}

std::string PrefixMap::render(std::string_view iri) const {
  if (auto c = compact(iri)) return *c;
  return "<" + std::string(iri) + ">";
}

std::optional<std::string> PrefixMap::expand(std::string_view prefixed) const {
  auto colon = prefixed.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto it = by_prefix_.find(std::string(prefixed.substr(0, colon)));
  if (it == by_prefix_.end()) return std::nullopt;
  return it->second + std::string(prefixed.substr(colon + 1));
}

}  // namespace quarry
