// SPDX-License-Identifier: Apache-2.0
#include <gmock/gmock.h>
#include <gtest/gtest.h>
#include <httplib.h>

#include <cmath>
#include <set>
#include <thread>

#include "fixtures.hpp"
#include "quarry/errors.hpp"
#include "quarry/qa/pipeline.hpp"
#include "toy_world.hpp"

using namespace quarry;
using namespace quarry::qa;
using quarry::testing::kToyEndpoint;
using quarry::testing::ToyWorld;
using ::testing::HasSubstr;
using ::testing::Not;

namespace {

const std::string kUp = "http://purl.uniprot.org/core/";
const std::string kGenesQuestion = "Which genes encode each protein?";

ToyWorld& world() {
  static ToyWorld w;
  return w;
}

ScriptedLlm transcript(const std::string& name) {
  return ScriptedLlm::from_file(quarry::testing::fixture_path("transcripts/" + name));
}

std::vector<std::string> types(const std::vector<TurnEvent>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) out.push_back(e.type);
  return out;
}

nlohmann::json without_wall(nlohmann::json j) {
  j["accounting"].erase("wall_ms");
  return j;
}

std::size_t count_rows_in_tsv_block(const std::string& prompt) {
  auto start = prompt.find("```tsv\n");
  auto end = prompt.find("```", start + 7);
  std::string block = prompt.substr(start + 7, end - start - 7);
  return static_cast<std::size_t>(std::count(block.begin(), block.end(), '\n')) - 1;  // minus header
}

}  // namespace

// ---------------------------------------------------------------- providers

TEST(ScriptedLlmTest, ReplaysEntriesAndCountsTokens) {
  ScriptedLlm llm(ScriptedLlm::parse_transcript(
      R"([{"response": "one two three"}, {"response": "x", "input_tokens": 7, "output_tokens": 9}])"));
  auto a = llm.complete("four words in prompt", {});
  EXPECT_EQ(a.text, "one two three");
  EXPECT_EQ(a.input_tokens, 4u);
  EXPECT_EQ(a.output_tokens, 3u);
  auto b = llm.complete("p", {});
  EXPECT_EQ(b.input_tokens, 7u);
  EXPECT_EQ(b.output_tokens, 9u);
  EXPECT_EQ(llm.remaining(), 0u);
  EXPECT_THROW(llm.complete("p", {}), TranscriptExhausted);
  EXPECT_EQ(llm.calls().size(), 3u);
}

TEST(ScriptedLlmTest, PurposeMismatchAndErrorsFailLoudly) {
  ScriptedLlm llm(ScriptedLlm::parse_transcript(
      "{\"purpose\": \"decompose\", \"response\": \"{}\"}\n{\"error\": \"rate limited\"}\n"));
  EXPECT_THROW(llm.complete("p", {Purpose::generate}), TranscriptExhausted);
  try {
    llm.complete("p", {});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_THAT(e.what(), HasSubstr("rate limited"));
  }
  EXPECT_THROW(ScriptedLlm::parse_transcript("not json\n"), ConfigError);
}

TEST(ScriptedLlmTest, StructuredReadsFirstJsonObject) {
  ScriptedLlm llm(ScriptedLlm::parse_transcript(
      R"([{"response": "Sure! {\"a\": [1, \"}\"]} trailing"}, {"response": "no json here"}])"));
  auto out = llm.structured("p", {{"type", "object"}}, {});
  EXPECT_EQ(out.value, (nlohmann::json{{"a", {1, "}"}}}));
  EXPECT_THROW(llm.structured("p", {}, {}), ProviderError);
  EXPECT_FALSE(find_json_object("{ broken").has_value());
}

TEST(OpenAiChatLlmTest, SpeaksChatCompletionsWireFormat) {
  httplib::Server server;
  int calls = 0;
  nlohmann::json last_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 503;
      return;
    }
    last_body = nlohmann::json::parse(req.body);
    std::string content = last_body.contains("response_format") ? R"({"sub_questions": ["q"], "concepts": []})"
                                                                  : "```sparql\nASK {}\n```";
    nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                            {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 5}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  OpenAiChatLlm llm({"http://127.0.0.1:" + std::to_string(port) + "/v1", "gpt-test", "k", 5, 2, true});
  auto c = llm.complete("hello", {});
  EXPECT_EQ(c.text, "```sparql\nASK {}\n```");
  EXPECT_EQ(c.input_tokens, 11u);
  EXPECT_EQ(c.output_tokens, 5u);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(last_body["temperature"], 0.0);
  EXPECT_EQ(last_body["messages"][0]["content"], "hello");
  auto s = llm.structured("q", {{"type", "object"}}, {});
  EXPECT_EQ(s.value["sub_questions"][0], "q");
  EXPECT_EQ(last_body["response_format"]["type"], "json_schema");
  server.stop();
  t.join();

  OpenAiChatLlm down({"http://127.0.0.1:" + std::to_string(port) + "/v1", "gpt-test", "", 1, 0, true});
  EXPECT_THROW(down.complete("hello", {}), ProviderError);
}

// ---------------------------------------------------------------- decompose

TEST(Decompose, PassesScriptedStructureThrough) {
  ScriptedLlm llm(ScriptedLlm::parse_transcript(
      R"([{"response": "{\"sub_questions\": [\"Which proteins are encoded by gene X?\", \"Which of those proteins are linked to disease Y?\"], \"concepts\": [\"Protein\", \"Gene\", \"Disease\"]}", "input_tokens": 10, "output_tokens": 4}])"));
  Accounting acc;
  auto d = decompose("Which proteins encoded by gene X are linked to disease Y?", llm, acc);
  EXPECT_THAT(d.sub_questions, ::testing::ElementsAre("Which proteins are encoded by gene X?",
                                                      "Which of those proteins are linked to disease Y?"));
  EXPECT_THAT(d.concepts, ::testing::ElementsAre("Protein", "Gene", "Disease"));
  EXPECT_EQ(acc.llm_calls, 1u);
  EXPECT_EQ(acc.input_tokens, 10u);
  EXPECT_TRUE(acc.notes.empty());
}

TEST(Decompose, MalformedOrFailingProviderFallsBack) {
  for (const char* script : {R"([{"response": "{\"subquestions\": 3}"}])", R"([{"response": "plain prose"}])",
                             R"([{"response": "{\"sub_questions\": []}"}])", R"([{"error": "HTTP 500"}])"}) {
    ScriptedLlm llm(ScriptedLlm::parse_transcript(script));
    Accounting acc;
    auto d = decompose("What is insulin?", llm, acc);
    EXPECT_EQ(d, (Decomposition{{"What is insulin?"}, {}})) << script;
    EXPECT_EQ(acc.notes.size(), 1u) << script;
    EXPECT_EQ(acc.llm_calls, 1u);
  }
}

TEST(Decompose, EmptyQuestionIsRejectedBeforeAnyCall) {
  ScriptedLlm llm({});
  Accounting acc;
  EXPECT_THROW(decompose("  ", llm, acc), std::invalid_argument);
  EXPECT_TRUE(llm.calls().empty());
}

// ---------------------------------------------------------------- context

TEST(BuildContext, ZeroKGivesEmptyLists) {
  auto& w = world();
  auto ctx = build_context(kGenesQuestion, {{kGenesQuestion}, {"Protein"}}, w.kb.index, 0, 0, w.embedder);
  EXPECT_TRUE(ctx.examples.empty());
  EXPECT_TRUE(ctx.shapes.empty());
  EXPECT_TRUE(ctx.endpoint_info.has_value());
}

TEST(BuildContext, IdenticalQuestionRanksFirst) {
  auto& w = world();
  auto ctx = build_context(kGenesQuestion, {{kGenesQuestion}, {}}, w.kb.index, 3, 3, w.embedder);
  ASSERT_EQ(ctx.examples.size(), 3u);
  EXPECT_EQ(ctx.examples[0].example.question, kGenesQuestion);
  EXPECT_NEAR(ctx.examples[0].score, 1.0, 1e-6);
  EXPECT_EQ(ctx.examples[0].example.endpoint_url, kToyEndpoint);
  EXPECT_EQ(ctx.shapes.size(), 3u);
}

TEST(BuildContext, MergeMatchesMaxScoreOracle) {
  auto& w = world();
  Decomposition d{{"Which genes encode proteins?", "Which diseases are linked to annotations?"},
                  {"Gene", "Disease annotation"}};
  for (std::size_t k : {1u, 2u, 4u, 8u, 20u}) {
    auto ctx = build_context("q", d, w.kb.index, k, k, w.embedder);
    auto oracle = [&](retrieval::ItemKind kind, const std::vector<std::string>& queries) {
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& item : w.kb.index.items()) {
        if (item.kind != kind) continue;
        double best = -2;
        for (const auto& q : queries) {
          auto v = w.embedder.embed(q);
          retrieval::normalize(v);
          double s = 0;
          for (std::size_t i = 0; i < v.size(); ++i) s += static_cast<double>(v[i]) * item.vector[i];
          best = std::max(best, s);
        }
        scored.emplace_back(best, item.item_id);
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      if (scored.size() > k) scored.resize(k);
      return scored;
    };
    auto ex = oracle(retrieval::ItemKind::example, d.sub_questions);
    ASSERT_EQ(ctx.examples.size(), ex.size());
    for (std::size_t i = 0; i < ex.size(); ++i) {
      EXPECT_EQ(ctx.examples[i].item_id, ex[i].second);
      EXPECT_NEAR(ctx.examples[i].score, ex[i].first, 1e-5);
    }
    auto sh = oracle(retrieval::ItemKind::schema_class, d.concepts);
    ASSERT_EQ(ctx.shapes.size(), sh.size());
    for (std::size_t i = 0; i < sh.size(); ++i) EXPECT_EQ(ctx.shapes[i].item_id, sh[i].second);
  }
}

// ---------------------------------------------------------------- prompt

TEST(GenerationPrompt, ContainsContextVerbatim) {
  auto& w = world();
  auto ctx = build_context(kGenesQuestion, {{kGenesQuestion}, {"Protein"}}, w.kb.index, 1, 1, w.embedder);
  auto prompt = render_generation_prompt(ctx);
  EXPECT_THAT(prompt, HasSubstr(ctx.examples[0].example.sparql));
  EXPECT_THAT(prompt, HasSubstr(ctx.shapes[0].rendered_shex));
  EXPECT_THAT(prompt, HasSubstr("Endpoint: " + kToyEndpoint + "\n```sparql\n"));
  EXPECT_EQ(prompt.substr(prompt.size() - kGenesQuestion.size() - 1), kGenesQuestion + "\n");
  EXPECT_EQ(prompt, render_generation_prompt(ctx));

  PromptContext empty{"What is a protein?", {}, {}, std::nullopt};
  auto bare = render_generation_prompt(empty);
  EXPECT_THAT(bare, Not(HasSubstr("## Example")));
  EXPECT_THAT(bare, Not(HasSubstr("## Schema")));
  EXPECT_THAT(bare, HasSubstr("What is a protein?"));
}

TEST(GenerationPrompt, ExamplesInScoreOrder) {
  auto& w = world();
  auto ctx = build_context("protein gene taxon", {{"protein gene taxon"}, {}}, w.kb.index, 10, 0, w.embedder);
  ASSERT_EQ(ctx.examples.size(), 10u);
  auto prompt = render_generation_prompt(ctx);
  std::size_t last = 0;
  for (std::size_t i = 0; i < ctx.examples.size(); ++i) {
    if (i) EXPECT_GE(ctx.examples[i - 1].score, ctx.examples[i].score);
    auto pos = prompt.find("Question: " + ctx.examples[i].example.question + "\n");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_GT(pos, last);
    last = pos;
  }
}

// ---------------------------------------------------------------- extraction

TEST(ExtractSparql, FencedBareAndFirstParsingBlock) {
  EXPECT_EQ(extract_sparql_block("Here:\n```sparql\nSELECT ?s WHERE { ?s ?p ?o }\n```\nDone."),
            "SELECT ?s WHERE { ?s ?p ?o }");
  EXPECT_EQ(extract_sparql_block("  SELECT ?s WHERE { ?s ?p ?o }\n"), "SELECT ?s WHERE { ?s ?p ?o }");
  EXPECT_EQ(extract_sparql_block("```\nSELEC nope\n```\nor\n```sparql\nASK { ?s ?p ?o }\n```"),
            "ASK { ?s ?p ?o }");
  EXPECT_FALSE(extract_sparql_block("no query at all").has_value());
  EXPECT_FALSE(extract_sparql_block("```sparql\nSELECT WHERE\n```").has_value());
}

TEST(ExtractSparql, UndeclaredKnownPrefixesAreAdded) {
  sparql::ParseOptions lenient;
  lenient.extra_prefixes = schema::PrefixMap::well_known().entries();
  auto block = extract_sparql_block("```sparql\nSELECT ?p WHERE { ?p a up:Protein }\n```", lenient);
  ASSERT_TRUE(block);
  auto fixed = add_missing_prefixes(*block, schema::PrefixMap::well_known());
  EXPECT_EQ(fixed, "PREFIX up: <" + kUp + ">\nSELECT ?p WHERE { ?p a up:Protein }");
  EXPECT_NO_THROW(sparql::parse_query(fixed));
  EXPECT_EQ(add_missing_prefixes("ASK {}", schema::PrefixMap::well_known()), "ASK {}");
}

// ---------------------------------------------------------------- repair loop

struct LoopCase {
  std::string transcript;
  std::size_t attempts;
  bool final_present;
  bool fallback;
  std::uint64_t input_tokens;
  std::uint64_t output_tokens;
};

class RepairLoop : public ::testing::TestWithParam<LoopCase> {};

TEST_P(RepairLoop, MatchesTranscript) {
  const auto& c = GetParam();
  auto& w = world();
  auto llm = transcript(c.transcript);
  auto entries = ScriptedLlm::parse_transcript(quarry::testing::read_fixture("transcripts/" + c.transcript));
  Accounting acc;
  auto d = decompose(kGenesQuestion, llm, acc);
  auto ctx = build_context(kGenesQuestion, d, w.kb.index, 10, 10, w.embedder);
  std::vector<std::size_t> seen;
  GenerationOutcome out;
  if (c.final_present) {
    out = generate_and_repair(ctx, llm, w.kb.schemas, kToyEndpoint, 3, acc, schema::PrefixMap::well_known(),
                              [&](std::size_t n, const Attempt&) { seen.push_back(n); });
  } else {
    EXPECT_THROW(generate_and_repair(ctx, llm, w.kb.schemas, kToyEndpoint, 3, acc, schema::PrefixMap::well_known(),
                                     [&](std::size_t n, const Attempt&) { seen.push_back(n); }),
                 NoQueryProduced);
  }
  EXPECT_EQ(seen.size(), c.attempts);
  if (c.final_present) {
    EXPECT_EQ(out.attempts.size(), c.attempts);
    ASSERT_TRUE(out.final_query);
    EXPECT_EQ(out.fallback, c.fallback);
    for (std::size_t i = 0; i + 1 < out.attempts.size(); ++i) EXPECT_FALSE(out.attempts[i].passed());
    EXPECT_EQ(out.attempts.back().passed(), !c.fallback);
  }
  std::uint64_t in = 0, outt = 0;
  for (std::size_t i = 0; i <= c.attempts; ++i) {
    in += *entries[i].input_tokens;
    outt += *entries[i].output_tokens;
  }
  EXPECT_EQ(acc.input_tokens, in);
  EXPECT_EQ(acc.output_tokens, outt);
  EXPECT_EQ(acc.input_tokens, c.input_tokens);
  EXPECT_EQ(acc.output_tokens, c.output_tokens);
  EXPECT_EQ(acc.llm_calls, 1 + c.attempts);
}

INSTANTIATE_TEST_SUITE_P(Transcripts, RepairLoop,
                         ::testing::Values(LoopCase{"pass_at_0.jsonl", 1, true, false, 1020, 80},
                                           LoopCase{"pass_at_1.jsonl", 2, true, false, 2120, 138},
                                           LoopCase{"pass_at_3.jsonl", 4, true, false, 4470, 249},
                                           LoopCase{"exhausted.jsonl", 4, true, true, 4470, 231},
                                           LoopCase{"no_query.jsonl", 4, false, false, 4020, 45}),
                         [](const auto& info) {
                           auto name = info.param.transcript.substr(0, info.param.transcript.find('.'));
                           return name;
                         });

TEST(RepairLoopDetails, RepairPromptCarriesAlternatives) {
  auto& w = world();
  auto llm = transcript("pass_at_1.jsonl");
  Accounting acc;
  auto d = decompose(kGenesQuestion, llm, acc);
  auto ctx = build_context(kGenesQuestion, d, w.kb.index, 10, 10, w.embedder);
  auto out = generate_and_repair(ctx, llm, w.kb.schemas, kToyEndpoint, 3, acc);
  ASSERT_EQ(out.attempts.size(), 2u);
  const auto& issue = out.attempts[0].report.issues.at(0);
  EXPECT_EQ(issue.kind, validation::IssueKind::unknown_predicate);
  EXPECT_EQ(issue.alternatives.at(0), kUp + "encodedBy");
  auto calls = llm.calls();
  ASSERT_EQ(calls.size(), 3u);
  EXPECT_EQ(calls[2].purpose, Purpose::repair);
  EXPECT_THAT(calls[2].prompt, HasSubstr("<" + kUp + "encodedBy>"));
  EXPECT_THAT(calls[2].prompt, HasSubstr("up:encodedBye"));
  EXPECT_THAT(calls[2].prompt, HasSubstr(kGenesQuestion));
}

TEST(RepairLoopDetails, AttemptCountNeverExceedsBudget) {
  auto& w = world();
  PromptContext ctx{kGenesQuestion, {}, {}, std::nullopt};
  for (std::size_t max_revisions = 0; max_revisions <= 5; ++max_revisions) {
    std::size_t calls = 0;
    FunctionLlm llm("always-wrong", [&](const std::string&, const CompletionOptions&) {
      ++calls;
      return Completion{"```sparql\nSELECT ?x WHERE { ?x <" + kUp + "nope> ?y }\n```", 1, 1};
    });
    Accounting acc;
    auto out = generate_and_repair(ctx, llm, w.kb.schemas, kToyEndpoint, max_revisions, acc);
    EXPECT_EQ(out.attempts.size(), max_revisions + 1);
    EXPECT_EQ(calls, max_revisions + 1);
    EXPECT_TRUE(out.fallback);
  }
}

// ---------------------------------------------------------------- execution

TEST(Execute, BooleanEmptyAndTruncated) {
  auto& w = world();
  ExecutionLimits limits{std::chrono::milliseconds(5000), 10};
  auto ask = execute("ASK { ?s a <" + kUp + "Protein> }", kToyEndpoint, w.client, limits);
  ASSERT_TRUE(ask.is_boolean());
  EXPECT_TRUE(*ask.boolean);

  auto none = execute("SELECT ?s WHERE { ?s a <" + kUp + "Nothing> }", kToyEndpoint, w.client, limits);
  EXPECT_TRUE(none.rows.empty());
  EXPECT_FALSE(none.truncated);

  auto all = execute("SELECT * WHERE { ?s ?p ?o } LIMIT 25", kToyEndpoint, w.client, {std::chrono::seconds(5), 100});
  ASSERT_EQ(all.rows.size(), 25u);
  auto clipped = execute("SELECT * WHERE { ?s ?p ?o } LIMIT 25", kToyEndpoint, w.client, limits);
  EXPECT_EQ(clipped.rows.size(), 10u);
  EXPECT_TRUE(clipped.truncated);
  EXPECT_EQ(clipped.origin, std::vector<std::string>{kToyEndpoint});
}

TEST(Execute, FederatedOriginAndUnreachable) {
  auto reg = quarry::testing::toy_registry();
  auto remote = std::make_shared<store::LocalStore>();
  remote->load_turtle("<http://example.org/toy#G1> <http://example.org/x#symbol> \"INS\" .");
  reg->add("https://remote.example.org/sparql", remote);
  endpoint::LocalSparqlClient client(reg);
  auto rs = execute(
      "SELECT ?g ?sym WHERE { ?p <" + kUp + "encodedBy> ?g . SERVICE <https://remote.example.org/sparql> { ?g "
      "<http://example.org/x#symbol> ?sym } }",
      kToyEndpoint, client, {});
  ASSERT_EQ(rs.rows.size(), 1u);
  EXPECT_EQ(rs.origin, (std::vector<std::string>{kToyEndpoint, "https://remote.example.org/sparql"}));
  EXPECT_THROW(execute("ASK {}", "https://down.example.org/sparql", client, {}), ExecutionError);
}

// ---------------------------------------------------------------- interpret

TEST(Interpret, ScriptedEmptyAndRowBudget) {
  ResultSet rs;
  rs.variables = {"n"};
  for (int i = 0; i < 1000; ++i) rs.rows.push_back({{"n", Term::literal(std::to_string(i), std::string(vocab::xsd_integer))}});

  ScriptedLlm llm(ScriptedLlm::parse_transcript(R"([{"response": "There are 1000 numbers."}])"));
  Accounting acc;
  EXPECT_EQ(interpret("How many?", rs, llm, acc, 50), "There are 1000 numbers.");
  EXPECT_EQ(count_rows_in_tsv_block(llm.calls()[0].prompt), 50u);
  EXPECT_THAT(llm.calls()[0].prompt, HasSubstr("1000 rows, first 50 shown"));

  ScriptedLlm unused({});
  EXPECT_EQ(interpret("How many?", ResultSet{{"n"}, {}, std::nullopt, false, {}}, unused, acc), kNoResultsText);
  EXPECT_TRUE(unused.calls().empty());
}

TEST(Interpret, ProviderErrorFallsBackToTable) {
  ResultSet rs;
  rs.variables = {"name"};
  rs.rows.push_back({{"name", Term::literal("Insulin")}});
  ScriptedLlm llm(ScriptedLlm::parse_transcript(R"([{"error": "overloaded"}])"));
  Accounting acc;
  auto text = interpret("Name?", rs, llm, acc);
  EXPECT_THAT(text, HasSubstr("1 row"));
  EXPECT_THAT(text, HasSubstr("Insulin"));
  ASSERT_EQ(acc.notes.size(), 1u);
  EXPECT_THAT(acc.notes[0], HasSubstr("overloaded"));
}

// ---------------------------------------------------------------- answer

TEST(Answer, ProteinDiseaseEndToEnd) {
  auto& w = world();
  auto llm = transcript("protein_disease.jsonl");
  std::vector<TurnEvent> live;
  auto turn = answer("Which human proteins are linked to a disease, and which genes encode them?", "en", {},
                     w.resources(llm), [&](const TurnEvent& e) { live.push_back(e); });
  ASSERT_FALSE(turn.error) << turn.error->message;
  EXPECT_EQ(turn.decomposition.sub_questions.size(), 3u);
  EXPECT_THAT(turn.decomposition.concepts, ::testing::ElementsAre("Protein", "Gene", "Disease"));
  ASSERT_EQ(turn.attempts.size(), 2u);
  EXPECT_FALSE(turn.attempts[0].passed());
  EXPECT_EQ(turn.attempts[0].report.issues[0].alternatives[0], kUp + "annotation");
  EXPECT_TRUE(turn.attempts[1].passed());
  EXPECT_EQ(turn.final_query, turn.attempts[1].sparql);
  EXPECT_EQ(turn.endpoint_url, kToyEndpoint);
  ASSERT_TRUE(turn.results);
  ASSERT_EQ(turn.results->rows.size(), 2u);
  std::set<std::string> genes;
  for (const auto& row : turn.results->rows) {
    EXPECT_EQ(row.at("protein").value, "http://example.org/toy#P2");
    EXPECT_EQ(row.at("disease").value, "http://example.org/toy#Thal");
    genes.insert(row.at("gene").value);
  }
  EXPECT_EQ(genes, (std::set<std::string>{"http://example.org/toy#G2", "http://example.org/toy#G3"}));
  EXPECT_THAT(*turn.interpretation, HasSubstr("thalassemia"));
  EXPECT_EQ(turn.accounting.llm_calls, 4u);
  EXPECT_EQ(turn.accounting.input_tokens, 150u + 2400 + 2700 + 420);
  EXPECT_EQ(turn.accounting.output_tokens, 45u + 110 + 108 + 32);
  EXPECT_GT(turn.accounting.wall_ms, 0.0);

  EXPECT_EQ(types(live), (std::vector<std::string>{"decomposition", "context", "attempt", "validation_report",
                                                   "attempt", "validation_report", "final_query", "results",
                                                   "interpretation", "accounting", "done"}));
  EXPECT_EQ(live[3].payload["passed"], false);
  EXPECT_EQ(live[5].payload["passed"], true);
  EXPECT_EQ(live, events_from_turn(turn));
  EXPECT_EQ(live, events_from_turn(turn_from_json(nlohmann::json::parse(to_json(turn).dump()))));
}

TEST(Answer, HappyPathMakesThreeCalls) {
  auto& w = world();
  auto llm = transcript("pass_at_0.jsonl");
  auto turn = answer(kGenesQuestion, "en", {}, w.resources(llm));
  ASSERT_FALSE(turn.error);
  EXPECT_EQ(turn.accounting.llm_calls, 3u);
  EXPECT_EQ(turn.attempts.size(), 1u);
  EXPECT_EQ(turn.results->rows.size(), 4u);
  EXPECT_EQ(types(events_from_turn(turn)),
            (std::vector<std::string>{"decomposition", "context", "attempt", "validation_report", "final_query",
                                      "results", "interpretation", "accounting", "done"}));
}

TEST(Answer, DeterministicUnderScriptedStack) {
  auto& w = world();
  auto a = transcript("pass_at_1.jsonl");
  auto b = transcript("pass_at_1.jsonl");
  auto t1 = answer(kGenesQuestion, "en", {}, w.resources(a));
  auto t2 = answer(kGenesQuestion, "en", {}, w.resources(b));
  EXPECT_EQ(without_wall(to_json(t1)), without_wall(to_json(t2)));
}

TEST(Answer, UnreachableEndpointIsRecorded) {
  auto& w = world();
  auto llm = transcript("pass_at_0.jsonl");
  PipelineConfig config;
  config.endpoint_override = "https://down.example.org/sparql";
  auto turn = answer(kGenesQuestion, "en", config, w.resources(llm));
  ASSERT_TRUE(turn.error);
  EXPECT_EQ(turn.error->stage, "execute");
  EXPECT_EQ(turn.error->kind, "endpoint_unreachable");
  EXPECT_TRUE(turn.final_query);
  EXPECT_FALSE(turn.results);
  auto ev = types(events_from_turn(turn));
  EXPECT_EQ(std::vector<std::string>(ev.end() - 3, ev.end()),
            (std::vector<std::string>{"final_query", "error", "done"}));
}

TEST(Answer, FailuresNeverEscape) {
  auto& w = world();
  ScriptedLlm empty({});
  auto t1 = answer(kGenesQuestion, "en", {}, w.resources(empty));
  ASSERT_TRUE(t1.error);
  EXPECT_EQ(t1.error->kind, "transcript_exhausted");
  EXPECT_EQ(t1.error->stage, "decompose");

  auto llm = transcript("no_query.jsonl");
  auto t2 = answer(kGenesQuestion, "en", {}, w.resources(llm));
  ASSERT_TRUE(t2.error);
  EXPECT_EQ(t2.error->kind, "no_query_produced");
  EXPECT_EQ(t2.attempts.size(), 4u);
  EXPECT_FALSE(t2.final_query);
  EXPECT_EQ(types(events_from_turn(t2)).back(), "done");

  ScriptedLlm unused({});
  auto t3 = answer("", "en", {}, w.resources(unused));
  ASSERT_TRUE(t3.error);
  EXPECT_EQ(t3.error->kind, "invalid_request");
}

TEST(Answer, ExhaustedRevisionsExecuteFallback) {
  auto& w = world();
  auto llm = transcript("exhausted.jsonl");
  auto turn = answer(kGenesQuestion, "en", {}, w.resources(llm));
  ASSERT_FALSE(turn.error) << turn.error->message;
  EXPECT_TRUE(turn.fallback);
  EXPECT_EQ(turn.attempts.size(), 4u);
  ASSERT_TRUE(turn.results);
  EXPECT_TRUE(turn.results->rows.empty());
  EXPECT_EQ(turn.interpretation, std::string(kNoResultsText));
  EXPECT_EQ(turn.accounting.llm_calls, 5u);
  EXPECT_EQ(llm.remaining(), 0u);
}
