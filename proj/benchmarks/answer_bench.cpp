// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "quarry/eval/eval.hpp"
#include "quarry/qa/pipeline.hpp"
#include "toy_world.hpp"

namespace {

// Full turn with a zero-latency provider: everything except the model.
void BM_AnswerEcho(benchmark::State& state) {
  quarry::testing::ToyWorld world;
  auto corpus = quarry::eval::parse_corpus(quarry::testing::read_fixture("corpora/toy_qa.jsonl"));
  std::map<std::string, std::string> refs;
  for (const auto& e : corpus) refs[e.question] = e.sparql;
  quarry::qa::EchoReferenceLlm llm(refs);
  quarry::qa::PipelineConfig config;
  config.interpret = state.range(0) != 0;
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& e = corpus[i++ % corpus.size()];
    benchmark::DoNotOptimize(quarry::qa::answer(e.question, "en", config, world.resources(llm)));
  }
}

}  // namespace

BENCHMARK(BM_AnswerEcho)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
