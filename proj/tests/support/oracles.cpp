// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"

namespace quarry::testing {

namespace {
const std::string kM = "http://example.org/m#";
}  // namespace

std::vector<harvest::RawVoidRecord> brute_force_void(const std::vector<sparql::Quad>& quads) {
  const std::string rdf_type(vocab::rdf_type);
  std::map<Term, std::set<std::string>> types;
  for (const auto& q : quads) {
    if (q.graph.empty() && q.predicate.value == rdf_type && q.object.is_iri()) {
      types[q.subject].insert(q.object.value);
    }
  }
  std::map<std::string, std::uint64_t> instances;
  for (const auto& [s, cs] : types) {
    for (const auto& c : cs) ++instances[c];
  }
  std::map<std::tuple<std::string, std::string, std::optional<std::string>, std::optional<std::string>>,
           std::uint64_t>
      counts;
  for (const auto& q : quads) {
    if (!q.graph.empty() || q.predicate.value == rdf_type) continue;
    auto st = types.find(q.subject);
    if (st == types.end()) continue;
    for (const auto& c : st->second) {
      if (q.object.is_literal()) {
        ++counts[{c, q.predicate.value, std::nullopt, q.object.datatype}];
        continue;
      }
      auto ot = types.find(q.object);
      if (ot == types.end()) {
        ++counts[{c, q.predicate.value, std::nullopt, std::nullopt}];
        continue;
      }
      for (const auto& oc : ot->second) ++counts[{c, q.predicate.value, oc, std::nullopt}];
    }
  }
  std::vector<harvest::RawVoidRecord> out;
  for (const auto& [k, n] : counts) {
    const auto& [c, p, oc, dt] = k;
    out.push_back({c, p, oc, dt, n, instances[c]});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<harvest::RawVoidRecord> load_void_records(const std::string& fixture) {
  std::vector<harvest::RawVoidRecord> out;
  for (const auto& j : nlohmann::json::parse(read_fixture(fixture))) out.push_back(harvest::void_record_from_json(j));
  return out;
}

std::vector<harvest::RawVoidRecord> random_void_records(std::mt19937& rng, std::size_t classes, std::size_t preds,
                                                        std::size_t n) {
  std::uniform_int_distribution<std::size_t> cd(0, classes - 1);
  std::uniform_int_distribution<std::size_t> pd(0, preds - 1);
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<std::uint64_t> count(1, 50);
  std::vector<harvest::RawVoidRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    harvest::RawVoidRecord r;
    r.subject_class = kM + "C" + std::to_string(cd(rng));
    r.predicate = kM + "p" + std::to_string(pd(rng));
    r.triple_count = count(rng);
    int k = kind(rng);
    if (k == 0) r.object_class = kM + "O" + std::to_string(cd(rng));
    if (k == 1) r.object_datatype = "http://www.w3.org/2001/XMLSchema#integer";
    if (k == 2) r.object_datatype = "http://www.w3.org/2001/XMLSchema#string";
    out.push_back(r);
  }
  return out;
}

std::vector<std::string> shex_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '[' || c == ']' || c == '{' || c == '}' || c == ';') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
      if (!std::isspace(static_cast<unsigned char>(c))) out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Hand-counted triple patterns for every corpus query.
const std::map<std::string, ExpectedCount>& expected_triple_counts() {
  static const std::map<std::string, ExpectedCount> counts = {
      {"kgqa-01", {1, {1}}},  {"kgqa-02", {2, {2}}},  {"kgqa-03", {1, {1}}},
      {"kgqa-04", {1, {1}}},  {"kgqa-05", {1, {1}}},  {"kgqa-06", {1, {1}}},
      {"kgqa-07", {2, {2}}},  {"kgqa-08", {1, {1}}},  {"kgqa-09", {2, {2}}},
      {"kgqa-10", {3, {3}}},  {"kgqa-11", {1, {1}}},  {"kgqa-12", {2, {2}}},
      {"kgqa-13", {1, {1}}},  {"kgqa-14", {1, {1}}},  {"kgqa-15", {2, {2}}},
      {"kgqa-16", {1, {1}}},  {"kgqa-17", {2, {2}}},  {"kgqa-18", {3, {3}}},
      {"bio-01", {1, {1}}},   {"bio-02", {3, {3}}},   {"bio-03", {3, {3}}},
      {"bio-04", {3, {3}}},   {"bio-05", {7, {7}}},   {"bio-06", {3, {3}}},
      {"bio-07", {3, {3}}},   {"bio-08", {8, {3, 5}}}, {"bio-09", {6, {6}}},
      {"bio-10", {10, {2, 8}}}, {"bio-11", {4, {4}}}, {"bio-12", {4, {4}}},
      {"bio-13", {6, {6}}},   {"bio-14", {33, {21, 6, 6}}}, {"bio-15", {5, {4, 1}}},
      {"bio-16", {5, {2, 2, 1}}}, {"bio-17", {3, {1, 1, 1}}}, {"bio-18", {4, {4}}},
      {"bio-19", {2, {2}}},   {"bio-20", {1, {1}}},   {"bio-21", {3, {3}}},
      {"bio-22", {1, {1}}},
  };
  return counts;
}

const std::vector<std::function<std::string(std::string)>>& predicate_mutators() {
  static const std::vector<std::function<std::string(std::string)>> mutators = {
      [](std::string s) { return s + "s"; },
      [](std::string s) {
        s.pop_back();
        return s;
      },
      [](std::string s) {
        std::swap(s[s.size() - 2], s[s.size() - 3]);
        return s;
      },
      [](std::string s) {
        s[s.size() / 2] = s[s.size() / 2] == 'x' ? 'y' : 'x';
        return s;
      },
  };
  return mutators;
}

std::vector<retrieval::IndexInput> random_index_inputs(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words = {
      "protein", "gene",  "human", "mouse",   "disease", "enzyme", "reaction", "taxon",
      "orthology", "expression", "tissue", "sequence", "variant", "pathway", "drug", "cell"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> wd(0, words.size() - 1);
  std::uniform_int_distribution<int> len(2, 7);
  std::vector<retrieval::IndexInput> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    for (int w = len(rng); w > 0; --w) text += words[wd(rng)] + " ";
    char id[32];
    std::snprintf(id, sizeof id, "item-%03zu", i);
    out.push_back({id, i % 3 == 0 ? retrieval::ItemKind::schema_class : retrieval::ItemKind::example, text + id, {}});
  }
  return out;
}

double manual_cosine(const retrieval::Vector& a, const retrieval::Vector& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}

}  // namespace quarry::testing
