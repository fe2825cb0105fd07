// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "quarry/sparql/parser.hpp"
#include "quarry/validation/validator.hpp"
#include "toy_world.hpp"

namespace {

void BM_ValidateConforming(benchmark::State& state) {
  quarry::testing::ToyWorld world;
  std::vector<quarry::sparql::ParsedQuery> parsed;
  for (const auto& row : quarry::testing::read_jsonl("queries/toy_conforming.jsonl")) {
    parsed.push_back(quarry::sparql::parse_query(row.at("sparql").get<std::string>()));
  }
  for (auto _ : state) {
    for (const auto& q : parsed) {
      benchmark::DoNotOptimize(quarry::validation::validate(q, world.kb.schemas, quarry::testing::kToyEndpoint));
    }
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * parsed.size()));
}

void BM_ValidateMisspelled(benchmark::State& state) {
  quarry::testing::ToyWorld world;
  auto q = quarry::sparql::parse_query(
      "PREFIX up: <http://purl.uniprot.org/core/>\n"
      "SELECT ?p ?g WHERE { ?p a up:Protein ; up:encodedBye ?g ; up:organismm ?t . }");
  for (auto _ : state) {
    benchmark::DoNotOptimize(quarry::validation::validate(q, world.kb.schemas, quarry::testing::kToyEndpoint));
  }
}

}  // namespace

BENCHMARK(BM_ValidateConforming);
BENCHMARK(BM_ValidateMisspelled);
