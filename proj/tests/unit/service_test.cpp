// SPDX-License-Identifier: Apache-2.0
#include <gmock/gmock.h>
#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <latch>
#include <mutex>
#include <regex>
#include <thread>

#include "fixtures.hpp"
#include "quarry/errors.hpp"
#include "quarry/eval/eval.hpp"
#include "quarry/service/service.hpp"
#include "toy_world.hpp"

using namespace quarry;
using namespace quarry::service;
using quarry::testing::kToyEndpoint;
using nlohmann::json;
using ::testing::ElementsAre;

namespace {

const std::string kDown = "https://down.example.org/sparql";
const std::string kGenesQuestion = "Which genes encode each protein?";

/// Sleeps per batch so that reindexing takes long enough to overlap requests.
class SlowEmbedder : public retrieval::EmbeddingProvider {
 public:
  explicit SlowEmbedder(std::chrono::milliseconds delay) : delay_(delay) {}
  std::string model_id() const override { return inner_.model_id(); }
  std::size_t dimension() const override { return inner_.dimension(); }
  std::vector<retrieval::Vector> embed_batch(const std::vector<std::string>& texts) override {
    std::this_thread::sleep_for(delay_);
    return inner_.embed_batch(texts);
  }

 private:
  retrieval::MockEmbeddingProvider inner_{64, 7};
  std::chrono::milliseconds delay_;
};

/// Answers generation with the first SPARQL block of its prompt, i.e. the top retrieved example.
std::shared_ptr<qa::LlmProvider> top_example_llm() {
  return std::make_shared<qa::FunctionLlm>("top-example", [](const std::string& prompt, const qa::CompletionOptions& o) {
    if (o.purpose == qa::Purpose::decompose) return qa::Completion{"{}", 1, 1};
    auto start = prompt.find("```sparql\n");
    if (start == std::string::npos) return qa::Completion{"no examples", 1, 1};
    auto end = prompt.find("\n```", start + 10);
    return qa::Completion{prompt.substr(start, end + 4 - start), 1, 1};
  });
}

std::shared_ptr<qa::LlmProvider> echo_llm() {
  std::map<std::string, std::string> refs;
  for (const auto& e : eval::parse_corpus(quarry::testing::read_fixture("corpora/toy_qa.jsonl"))) {
    refs[e.question] = e.sparql;
  }
  return std::make_shared<qa::EchoReferenceLlm>(refs);
}

struct Harness {
  std::shared_ptr<endpoint::StoreRegistry> registry = quarry::testing::toy_registry();
  std::vector<json> logs;
  std::mutex log_mu;
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> http;

  explicit Harness(std::shared_ptr<qa::LlmProvider> llm, ServiceConfig config = {},
                   std::shared_ptr<retrieval::EmbeddingProvider> embedder = nullptr) {
    if (config.datasets.empty()) {
      config.datasets = {{"toy", kToyEndpoint, "Toy"}, {"down", kDown, "Unreachable"}};
    }
    config.harvest.void_mode = harvest::VoidMode::complete;
    if (!config.admin_token) config.admin_token = "s3cret";
    if (!embedder) embedder = std::make_shared<retrieval::MockEmbeddingProvider>(64, 7);
    ServiceDependencies deps{std::move(llm), std::move(embedder),
                             std::make_shared<endpoint::LocalSparqlClient>(registry), [this](const json& line) {
                               std::lock_guard lock(log_mu);
                               logs.push_back(line);
                             }};
    service = std::make_unique<Service>(std::move(config), std::move(deps));
    service->start();
    http = std::make_unique<httplib::Client>("127.0.0.1", service->port());
    http->set_read_timeout(30, 0);
  }

  /// Indexes "toy" from the live fixture and "down" from the same metadata.
  void index() {
    service->index_all();
    endpoint::LocalSparqlClient client(registry);
    harvest::HarvestOptions opts;
    opts.void_mode = harvest::VoidMode::complete;
    service->install("down", harvest::harvest_endpoint(client, harvest::EndpointDescriptor(kToyEndpoint, "Toy"), opts));
  }

  httplib::Result ask(const std::string& dataset, const std::string& question) {
    return http->Get("/v1/ask", httplib::Params{{"dataset", dataset}, {"question", question}}, httplib::Headers{});
  }

  httplib::Result chat(const json& body) { return http->Post("/v1/chat", body.dump(), "application/json"); }

  httplib::Result reindex(const std::string& dataset, const std::string& token = "s3cret") {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return http->Post("/v1/admin/reindex", h, json{{"dataset", dataset}}.dump(), "application/json");
  }
};

std::vector<std::string> types(const std::vector<qa::TurnEvent>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) out.push_back(e.type);
  return out;
}

std::shared_ptr<qa::LlmProvider> transcript(const std::string& name) {
  return std::make_shared<qa::ScriptedLlm>(
      qa::ScriptedLlm::parse_transcript(quarry::testing::read_fixture("transcripts/" + name)), "scripted:" + name);
}

}  // namespace

TEST(ServiceApi, PreIndexStatusAndAsk) {
  Harness h(echo_llm());
  auto status = h.http->Get("/v1/status");
  ASSERT_TRUE(status);
  EXPECT_EQ(status->status, 503);
  auto body = json::parse(status->body);
  EXPECT_EQ(body["indexed"], false);
  EXPECT_EQ(body["datasets"][0]["indexed"], false);

  auto ask = h.ask("toy", kGenesQuestion);
  EXPECT_EQ(ask->status, 503);
  EXPECT_EQ(json::parse(ask->body)["error"], "not_indexed");
  EXPECT_EQ(h.http->Get("/v1/health")->status, 200);
}

TEST(ServiceApi, AskReturnsQueryAndErrors) {
  Harness h(echo_llm());
  h.index();
  auto reference = eval::parse_corpus(quarry::testing::read_fixture("corpora/toy_qa.jsonl"))[0].sparql;

  auto res = h.ask("toy", kGenesQuestion);
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(json::parse(res->body), (json{{"dataset", "toy"}, {"question", kGenesQuestion}, {"query", reference}}));
  EXPECT_FALSE(res->get_header_value("X-Index-Checksum").empty());
  EXPECT_EQ(h.ask("toy", kGenesQuestion)->body, res->body);

  auto unknown = h.ask("nope", kGenesQuestion);
  EXPECT_EQ(unknown->status, 404);
  EXPECT_EQ(json::parse(unknown->body)["error"], "unknown_dataset");
  EXPECT_EQ(h.ask("toy", "")->status, 400);
  EXPECT_EQ(h.ask("toy", "   ")->status, 400);
  EXPECT_EQ(h.http->Get("/v1/ask?question=x")->status, 400);

  auto noquery = h.ask("toy", "A question the mock cannot answer");
  ASSERT_EQ(noquery->status, 200);
  EXPECT_EQ(json::parse(noquery->body)["query"], "");

  std::lock_guard lock(h.log_mu);
  ASSERT_GE(h.logs.size(), 3u);
  EXPECT_EQ(h.logs[0]["route"], "/v1/ask");
  EXPECT_EQ(h.logs[0]["dataset"], "toy");
  EXPECT_EQ(h.logs[0]["ok"], true);
  EXPECT_TRUE(h.logs[0].contains("input_tokens"));
}

TEST(ServiceApi, ChatStreamsStagesInOrder) {
  struct Case {
    std::string transcript;
    std::string dataset;
    std::vector<std::string> expected;
  };
  std::vector<Case> cases = {
      {"pass_at_0.jsonl", "toy",
       {"decomposition", "context", "attempt", "validation_report", "final_query", "results", "interpretation",
        "accounting", "done"}},
      {"pass_at_1.jsonl", "toy",
       {"decomposition", "context", "attempt", "validation_report", "attempt", "validation_report", "final_query",
        "results", "interpretation", "accounting", "done"}},
      {"pass_at_0.jsonl", "down",
       {"decomposition", "context", "attempt", "validation_report", "final_query", "error", "done"}},
      {"no_query.jsonl", "toy",
       {"decomposition", "context", "attempt", "validation_report", "attempt", "validation_report", "attempt",
        "validation_report", "attempt", "validation_report", "error", "done"}},
  };
  for (const auto& c : cases) {
    Harness h(transcript(c.transcript));
    h.index();
    auto res = h.chat({{"question", kGenesQuestion}, {"dataset", c.dataset}, {"language", "en"}});
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    EXPECT_EQ(res->get_header_value("Content-Type"), "text/event-stream");
    auto events = parse_sse(res->body);
    EXPECT_EQ(types(events), c.expected) << c.transcript << " on " << c.dataset;
    if (c.transcript == "pass_at_1.jsonl") {
      EXPECT_EQ(events[2].payload["n"], 0);
      EXPECT_EQ(events[3].payload["passed"], false);
      EXPECT_FALSE(events[3].payload["issues"][0]["alternatives"].empty());
      EXPECT_EQ(events[4].payload["n"], 1);
      EXPECT_EQ(events[5].payload["passed"], true);
    }
    if (c.dataset == "down") EXPECT_EQ(events[5].payload["stage"], "execute");
  }
}

TEST(ServiceApi, ChatRejectsBeforeStreaming) {
  Harness h(echo_llm());
  EXPECT_EQ(h.chat({{"question", kGenesQuestion}, {"dataset", "toy"}})->status, 503);
  h.index();
  EXPECT_EQ(h.chat({{"question", kGenesQuestion}, {"dataset", "nope"}})->status, 404);
  EXPECT_EQ(h.chat({{"question", ""}, {"dataset", "toy"}})->status, 400);
  EXPECT_EQ(h.http->Post("/v1/chat", "{not json", "application/json")->status, 400);
  EXPECT_EQ(h.http->Post("/v1/chat", "[1]", "application/json")->status, 400);
}

TEST(ServiceApi, ChatReplayMatchesPersistedTurn) {
  Harness h(transcript("protein_disease.jsonl"));
  h.index();
  auto res = h.chat({{"question", "Which human proteins are linked to a disease?"}, {"dataset", "toy"}});
  auto live = parse_sse(res->body);

  quarry::testing::ToyWorld world;
  auto llm = transcript("protein_disease.jsonl");
  qa::PipelineConfig config;
  config.endpoint_override = kToyEndpoint;
  auto turn = qa::answer("Which human proteins are linked to a disease?", "und", config, world.resources(*llm));
  auto replay = qa::events_from_turn(qa::turn_from_json(qa::to_json(turn)));
  ASSERT_EQ(live.size(), replay.size());
  for (std::size_t i = 0; i < live.size(); ++i) {
    EXPECT_EQ(live[i].type, replay[i].type);
    if (live[i].type == "accounting") continue;  // wall time differs between the two runs
    EXPECT_EQ(live[i].payload, replay[i].payload) << live[i].type;
  }
}

TEST(ServiceApi, StatusReportsCatalogCounts) {
  const std::string url = "https://catalog.example.org/sparql";
  ServiceConfig config;
  config.datasets = {{"catalog", url, "Catalog"}};
  Harness h(echo_llm(), config);
  h.registry->add(url, quarry::testing::example_catalog_store(url, 126));
  h.service->index_all();
  auto res = h.http->Get("/v1/status");
  ASSERT_EQ(res->status, 200);
  auto ds = json::parse(res->body)["datasets"][0];
  EXPECT_EQ(ds["dataset"], "catalog");
  EXPECT_EQ(ds["indexed"], true);
  EXPECT_EQ(ds["example_count"], 126);
  EXPECT_EQ(ds["metadata_status"]["has_examples"], true);
  EXPECT_EQ(ds["metadata_status"]["has_void"], false);  // generated, not published
  EXPECT_EQ(ds["metadata_status"]["has_description"], false);
  EXPECT_GT(ds["class_count"].get<int>(), 0);
  EXPECT_EQ(ds["generation"], 1);
}

TEST(ServiceApi, ReindexAuthConflictAndDeterminism) {
  ServiceConfig config;
  config.knowledge.batch_size = 1;
  Harness h(echo_llm(), config, std::make_shared<SlowEmbedder>(std::chrono::milliseconds(10)));
  h.index();
  auto before = *h.service->status("toy");

  EXPECT_EQ(h.reindex("toy", "")->status, 401);
  EXPECT_EQ(h.reindex("toy", "wrong")->status, 401);
  EXPECT_EQ(h.reindex("nope")->status, 404);

  auto accepted = h.reindex("toy");
  ASSERT_EQ(accepted->status, 202);
  EXPECT_EQ(json::parse(h.http->Get("/v1/status")->body)["datasets"][0]["reindex_in_flight"], true);
  EXPECT_EQ(h.reindex("toy")->status, 409);
  h.service->wait_for_reindex();

  auto after = *h.service->status("toy");
  EXPECT_FALSE(after.reindex_in_flight);
  EXPECT_EQ(after.generation, before.generation + 1);
  EXPECT_EQ(after.index_checksum, before.index_checksum);
  EXPECT_GE(after.harvested_at, before.harvested_at);
  EXPECT_EQ(h.reindex("toy")->status, 202);
  h.service->wait_for_reindex();
}

TEST(ServiceApi, AdminDisabledWithoutToken) {
  ServiceConfig config;
  config.admin_token = "";
  Harness h(echo_llm(), config);
  EXPECT_EQ(h.reindex("toy", "")->status, 401);
  EXPECT_EQ(h.reindex("toy", " ")->status, 401);
}

TEST(ServiceApi, SwapIsAtomicUnderConcurrentAsks) {
  ServiceConfig config;
  config.knowledge.batch_size = 1;
  config.pipeline.k_examples = 1;
  config.max_concurrent_turns = 16;
  config.http_threads = 64;
  Harness h(top_example_llm(), config, std::make_shared<SlowEmbedder>(std::chrono::milliseconds(4)));
  h.index();
  auto v1 = *h.service->status("toy");
  auto q1 = json::parse(h.ask("toy", kGenesQuestion)->body)["query"].get<std::string>();
  ASSERT_THAT(q1, ::testing::HasSubstr("up:encodedBy ?gene"));

  auto metadata = quarry::testing::read_fixture("endpoints/toy_metadata.ttl");
  const std::string needle = "up:encodedBy ?gene .\\n}\"";
  auto pos = metadata.find(needle);
  ASSERT_NE(pos, std::string::npos);
  metadata.replace(pos, needle.size(), "up:encodedBy ?gene .\\n} LIMIT 2\"");
  auto v2store = std::make_shared<store::LocalStore>();
  v2store->load_turtle(quarry::testing::read_fixture("data/toy.ttl"));
  v2store->load_turtle(metadata);
  h.registry->add(kToyEndpoint, v2store);

  constexpr int kRequests = 120;
  std::latch go(kRequests + 1);
  std::vector<std::pair<std::string, std::string>> seen(kRequests);
  std::vector<int> codes(kRequests);
  std::vector<std::thread> threads;
  for (int i = 0; i < kRequests; ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", h.service->port());
      c.set_read_timeout(60, 0);
      go.arrive_and_wait();
      std::this_thread::sleep_for(std::chrono::milliseconds(i));
      auto r = c.Get("/v1/ask", httplib::Params{{"dataset", "toy"}, {"question", kGenesQuestion}}, {});
      codes[i] = r ? r->status : -1;
      if (r && r->status == 200) {
        seen[i] = {r->get_header_value("X-Index-Checksum"), json::parse(r->body)["query"].get<std::string>()};
      }
    });
  }
  go.arrive_and_wait();
  ASSERT_EQ(h.reindex("toy")->status, 202);
  for (auto& t : threads) t.join();
  h.service->wait_for_reindex();
  auto v2 = *h.service->status("toy");
  ASSERT_NE(v1.index_checksum, v2.index_checksum);
  auto q2 = json::parse(h.ask("toy", kGenesQuestion)->body)["query"].get<std::string>();
  ASSERT_THAT(q2, ::testing::HasSubstr("LIMIT 2"));

  int old_count = 0, new_count = 0;
  for (int i = 0; i < kRequests; ++i) {
    ASSERT_EQ(codes[i], 200) << i;
    const auto& [checksum, query] = seen[i];
    if (checksum == v1.index_checksum) {
      EXPECT_EQ(query, q1) << i;
      ++old_count;
    } else {
      EXPECT_EQ(checksum, v2.index_checksum) << i;
      EXPECT_EQ(query, q2) << i;
      ++new_count;
    }
  }
  EXPECT_GT(old_count, 0);
  RecordProperty("old_index_responses", old_count);
  RecordProperty("new_index_responses", new_count);
}

TEST(ServiceApi, TurnCapAnswers429WhenSaturated) {
  ServiceConfig config;
  config.max_concurrent_turns = 1;
  config.queue_timeout = std::chrono::milliseconds(1);
  auto slow = std::make_shared<qa::FunctionLlm>("slow", [](const std::string&, const qa::CompletionOptions& o) {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    if (o.purpose == qa::Purpose::decompose) return qa::Completion{"{}", 1, 1};
    return qa::Completion{"```sparql\nASK {}\n```", 1, 1};
  });
  Harness h(slow, config);
  h.index();
  std::atomic<int> busy{0}, ok{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 3; ++i) {
    threads.emplace_back([&] {
      httplib::Client c("127.0.0.1", h.service->port());
      auto r = c.Get("/v1/ask", httplib::Params{{"dataset", "toy"}, {"question", "q"}}, {});
      if (r && r->status == 429) ++busy;
      if (r && r->status == 200) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_GE(ok.load(), 1);
  EXPECT_GE(busy.load(), 1);
}

TEST(ServiceConfigTest, ParsesBindingsAndEnvironment) {
  ::setenv("QUARRY_TEST_ADMIN", "tok", 1);
  auto c = service_config_from_json(json::parse(R"({
    "port": 8080,
    "admin_token_env": "QUARRY_TEST_ADMIN",
    "schema_fraction": 0.5,
    "pipeline": {"k_examples": 5, "max_revisions": 2, "timeout_ms": 1000},
    "prices": {"input_per_token": 0.000001},
    "datasets": [{"id": "uniprot", "endpoint_url": "https://sparql.uniprot.org/sparql/", "k_classes": 4}]
  })"));
  EXPECT_EQ(c.port, 8080);
  EXPECT_EQ(c.admin_token, "tok");
  EXPECT_EQ(c.knowledge.schema_fraction, 0.5);
  EXPECT_EQ(c.pipeline.k_examples, 5u);
  EXPECT_EQ(c.pipeline.max_revisions, 2u);
  EXPECT_EQ(c.pipeline.limits.timeout, std::chrono::milliseconds(1000));
  EXPECT_EQ(c.prices.input_per_token, 0.000001);
  ASSERT_EQ(c.datasets.size(), 1u);
  EXPECT_EQ(c.datasets[0].label, "uniprot");
  EXPECT_EQ(c.datasets[0].k_classes, 4u);
  EXPECT_FALSE(c.datasets[0].k_examples);

  EXPECT_THROW(service_config_from_json(json::parse(
                   R"({"datasets": [{"id": "a", "endpoint_url": "https://x/"}, {"id": "a", "endpoint_url": "https://y/"}]})")),
               ConfigError);
  EXPECT_THROW(service_config_from_json(json::parse(R"({"datasets": [{"id": "a"}]})")), ConfigError);
}

TEST(Sse, FormatAndParseRoundTrip) {
  std::vector<qa::TurnEvent> events = {{"attempt", {{"n", 0}, {"sparql", "ASK {\n}"}}}, {"done", {{"ok", true}}}};
  std::string stream;
  for (std::size_t i = 0; i < events.size(); ++i) stream += format_sse(events[i], i);
  EXPECT_EQ(stream.substr(0, 22), "id: 0\nevent: attempt\nd");
  EXPECT_EQ(parse_sse(stream), events);
}
