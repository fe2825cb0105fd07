// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "quarry/harvest/harvest.hpp"
#include "quarry/retrieval/index.hpp"
#include "quarry/sparql/parser.hpp"

namespace quarry::testing {

/// Exhaustive scan: every (class of subject, predicate, object type) with triple counts.
std::vector<harvest::RawVoidRecord> brute_force_void(const std::vector<sparql::Quad>& quads);

std::vector<harvest::RawVoidRecord> load_void_records(const std::string& fixture);

/// Random records over classes C0..C{classes-1} and predicates p0..p{preds-1}.
std::vector<harvest::RawVoidRecord> random_void_records(std::mt19937& rng, std::size_t classes, std::size_t preds,
                                                        std::size_t n);

/// Whitespace-insensitive token stream; brackets, braces and ';' are separate tokens.
std::vector<std::string> shex_tokens(const std::string& text);

struct ExpectedCount {
  std::size_t total;
  std::vector<std::size_t> groups;
};

/// Hand-counted triple patterns (total and per pattern group) for every corpus query.
const std::map<std::string, ExpectedCount>& expected_triple_counts();

/// Near-miss edits applied to a predicate IRI.
const std::vector<std::function<std::string(std::string)>>& predicate_mutators();

/// n inputs of 2-7 domain words; every third is a schema class.
std::vector<retrieval::IndexInput> random_index_inputs(std::size_t n, std::uint64_t seed);

/// Cosine in long double, independent of the index's float arithmetic.
double manual_cosine(const retrieval::Vector& a, const retrieval::Vector& b);

}  // namespace quarry::testing
