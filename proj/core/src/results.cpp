// SPDX-License-Identifier: Apache-2.0
#include "quarry/results.hpp"

#include "quarry/errors.hpp"

namespace quarry {

using nlohmann::json;

json term_to_json(const Term& term) {
  json out;
  switch (term.kind) {
    case Term::Kind::iri:
      out["type"] = "uri";
      break;
    case Term::Kind::blank:
      out["type"] = "bnode";
      break;
    case Term::Kind::literal:
      out["type"] = "literal";
      if (!term.language.empty()) {
        out["xml:lang"] = term.language;
      } else if (!term.datatype.empty() && term.datatype != vocab::xsd_string) {
        out["datatype"] = term.datatype;
      }
      break;
    default:
      throw Error("cannot serialize a " + std::string(to_string(term.kind)) +
                  " term as a result value");
  }
  out["value"] = term.value;
  return out;
}

Term term_from_json(const json& value) {
  if (!value.is_object() || !value.contains("type") || !value.contains("value")) {
    throw Error("malformed SPARQL JSON binding: " + value.dump());
  }
  const std::string type = value.at("type");
  const std::string lexical = value.at("value");
  if (type == "uri") return Term::iri(lexical);
  if (type == "bnode") return Term::blank(lexical);
  if (type == "literal" || type == "typed-literal") {
    if (value.contains("xml:lang")) return Term::lang_literal(lexical, value.at("xml:lang"));
    if (value.contains("datatype")) return Term::literal(lexical, value.at("datatype"));
    return Term::literal(lexical);
  }
  throw Error("unknown SPARQL JSON term type '" + type + "'");
}

json to_sparql_json(const ResultSet& results) {
  json doc;
  doc["head"] = json::object();
  if (results.boolean) {
    doc["boolean"] = *results.boolean;
    return doc;
  }
  doc["head"]["vars"] = results.variables;
  json bindings = json::array();
  for (const auto& row : results.rows) {
    json b = json::object();
    for (const auto& [var, term] : row) b[var] = term_to_json(term);
    bindings.push_back(std::move(b));
  }
  doc["results"]["bindings"] = std::move(bindings);
  return doc;
}

ResultSet from_sparql_json(const json& doc) {
  if (!doc.is_object()) throw Error("SPARQL JSON results must be an object");
  ResultSet rs;
  if (doc.contains("boolean")) {
    if (!doc.at("boolean").is_boolean()) throw Error("SPARQL JSON 'boolean' must be true or false");
    rs.boolean = doc.at("boolean").get<bool>();
    return rs;
  }
  if (doc.contains("head") && doc.at("head").contains("vars")) {
    rs.variables = doc.at("head").at("vars").get<std::vector<std::string>>();
  }
  if (!doc.contains("results") || !doc.at("results").contains("bindings")) {
    throw Error("SPARQL JSON results lack results.bindings");
  }
  for (const auto& b : doc.at("results").at("bindings")) {
    Binding row;
    for (const auto& [var, value] : b.items()) row.emplace(var, term_from_json(value));
    rs.rows.push_back(std::move(row));
  }
  return rs;
}

json to_json(const ResultSet& results) {
  json doc = to_sparql_json(results);
  doc["truncated"] = results.truncated;
  doc["origin"] = results.origin;
  return doc;
}

ResultSet result_set_from_json(const json& doc) {
  ResultSet rs = from_sparql_json(doc);
  rs.truncated = doc.value("truncated", false);
  if (doc.contains("origin")) rs.origin = doc.at("origin").get<std::vector<std::string>>();
  return rs;
}

}  // namespace quarry
