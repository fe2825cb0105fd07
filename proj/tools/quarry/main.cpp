// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "quarry/endpoint/server.hpp"
#include "quarry/errors.hpp"
#include "quarry/eval/eval.hpp"
#include "quarry/qa/knowledge.hpp"
#include "quarry/qa/pipeline.hpp"
#include "quarry/retrieval/index.hpp"
#include "quarry/schema/schema.hpp"
#include "quarry/service/service.hpp"
#include "quarry/sparql/analysis.hpp"
#include "quarry/sparql/parser.hpp"
#include "setup.hpp"

using namespace quarry;
using nlohmann::json;

namespace {

harvest::VoidMode void_mode(const std::string& s) {
  if (s == "complete") return harvest::VoidMode::complete;
  if (s == "sampled") return harvest::VoidMode::sampled;
  throw ConfigError("void mode must be sampled or complete");
}

struct EndpointOpts {
  std::vector<std::string> stores;
  std::vector<std::string> headers;
  std::string void_mode = "sampled";
  std::size_t sample_limit = 100;
  std::string language = "en";

  void attach(CLI::App* cmd) {
    cmd->add_option("--store", stores, "Serve an endpoint URL from local Turtle files: URL=a.ttl[,b.ttl]");
    cmd->add_option("--header", headers, "Extra HTTP header for endpoint requests, 'Name: value'");
    cmd->add_option("--void-mode", void_mode, "sampled or complete")->check(CLI::IsMember({"sampled", "complete"}));
    cmd->add_option("--sample-limit", sample_limit, "Predicates sampled per class");
    cmd->add_option("--lang", language, "Preferred language for questions and labels");
  }
  harvest::HarvestOptions harvest() const {
    harvest::HarvestOptions o;
    o.void_mode = ::void_mode(void_mode);
    o.sample_limit = sample_limit;
    o.preferred_language = language;
    return o;
  }
};

int cmd_parse(const std::string& file, const std::string& text, bool as_json) {
  auto q = sparql::parse_query(file.empty() ? text : cli::read_file(file));
  json groups = json::array();
  for (const auto& g : q.pattern_groups) {
    groups.push_back({{"endpoint", g.service_endpoint ? json(*g.service_endpoint) : json(nullptr)},
                      {"triple_patterns", g.triples.size()}});
  }
  if (as_json) {
    std::cout << json{{"query_type", sparql::to_string(q.query_type)},
                      {"triple_patterns", sparql::count_triple_patterns(q)},
                      {"groups", groups},
                      {"normalized", sparql::to_sparql(q)}}
                     .dump(2)
              << "\n";
    return 0;
  }
  std::cout << sparql::to_string(q.query_type) << ", " << sparql::count_triple_patterns(q) << " triple pattern(s)\n";
  for (const auto& g : groups) {
    std::cout << "  " << (g["endpoint"].is_null() ? "<home>" : g["endpoint"].get<std::string>()) << ": "
              << g["triple_patterns"] << "\n";
  }
  std::cout << sparql::to_sparql(q) << "\n";
  return 0;
}

int cmd_profile(const std::string& corpus, bool as_json, double dup_threshold, const std::string& embedder_id) {
  auto examples = eval::read_corpus(corpus);
  auto profile = eval::profile_corpus(examples);
  json out = eval::to_json(profile);
  if (dup_threshold > 0) {
    auto embedder = cli::make_embedder(embedder_id);
    json dups = json::array();
    for (const auto& d : eval::near_duplicates(examples, *embedder, dup_threshold)) {
      dups.push_back({{"a", d.a}, {"b", d.b}, {"score", d.score}});
    }
    out["near_duplicates"] = dups;
  }
  if (as_json) {
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  std::cout << "queries: " << profile.counts.size() << " parsed, " << profile.unparseable.size() << " unparseable\n"
            << "triple patterns: min " << profile.min << ", max " << profile.max << ", mean " << profile.mean
            << ", median " << profile.median << ", mode " << profile.mode << "\n";
  std::size_t peak = 0;
  for (const auto& [_, n] : profile.histogram) peak = std::max(peak, n);
  for (const auto& [count, n] : profile.histogram) {
    std::cout << (count < 10 ? " " : "") << count << " | " << std::string((n * 40 + peak - 1) / peak, '#') << " " << n
              << "\n";
  }
  for (const auto& [id, err] : profile.unparseable) std::cout << "unparseable " << id << ": " << err << "\n";
  if (out.contains("near_duplicates")) {
    for (const auto& d : out["near_duplicates"]) {
      std::cout << "near-duplicate " << d["a"].get<std::string>() << " ~ " << d["b"].get<std::string>() << " ("
                << d["score"].get<double>() << ")\n";
    }
  }
  return 0;
}

std::map<std::string, std::string> references_by_question(const std::vector<harvest::QueryExample>& corpus) {
  std::map<std::string, std::string> refs;
  for (const auto& e : corpus) refs[e.question] = e.sparql;
  return refs;
}

std::vector<std::string> corpus_endpoints(const std::vector<harvest::QueryExample>& corpus) {
  std::set<std::string> urls;
  for (const auto& e : corpus) urls.insert(e.endpoint_url);
  return {urls.begin(), urls.end()};
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Question answering over SPARQL endpoints"};
  app.require_subcommand(1);

  // parse
  auto* parse = app.add_subcommand("parse", "Parse a SPARQL query and report its triple patterns");
  std::string parse_file, parse_text;
  bool parse_json = false;
  auto* pf = parse->add_option("-f,--file", parse_file, "Query file");
  parse->add_option("-q,--query", parse_text, "Query text")->excludes(pf);
  parse->add_flag("--json", parse_json);

  // profile
  auto* profile = app.add_subcommand("profile", "Triple-pattern statistics for a JSONL corpus");
  std::string profile_corpus, profile_embedder = "mock";
  bool profile_json = false;
  double dup_threshold = 0;
  profile->add_option("--corpus", profile_corpus)->required()->check(CLI::ExistingFile);
  profile->add_flag("--json", profile_json);
  profile->add_option("--near-duplicates", dup_threshold, "Report question pairs with cosine >= threshold");
  profile->add_option("--embedder", profile_embedder);

  // harvest
  auto* harvest_cmd = app.add_subcommand("harvest", "Harvest examples, description and VoID from endpoints");
  EndpointOpts harvest_opts;
  std::vector<std::string> harvest_urls;
  std::string harvest_out, harvest_cache;
  harvest_cmd->add_option("--endpoint", harvest_urls)->required();
  harvest_cmd->add_option("-o,--out", harvest_out, "Write metadata JSON (single endpoint) or JSON array");
  harvest_cmd->add_option("--cache", harvest_cache, "Store timestamped metadata under this directory");
  harvest_opts.attach(harvest_cmd);

  // generate-void
  auto* gen_void = app.add_subcommand("generate-void", "Compute class/property statistics by querying data");
  EndpointOpts void_opts;
  std::string void_url;
  gen_void->add_option("--endpoint", void_url)->required();
  void_opts.attach(gen_void);

  // export-shapes
  auto* shapes = app.add_subcommand("export-shapes", "Render ShEx shapes from harvested statistics");
  std::string shapes_metadata;
  double shapes_fraction = 1.0;
  bool shapes_json = false;
  shapes->add_option("--metadata", shapes_metadata)->required()->check(CLI::ExistingFile);
  shapes->add_option("--fraction", shapes_fraction, "Share of classes and predicates kept")
      ->check(CLI::Range(0.0, 1.0));
  shapes->add_flag("--json", shapes_json, "One JSON object per shape");

  // build-index
  auto* build_index = app.add_subcommand("build-index", "Embed examples, shapes and descriptions into an index");
  std::vector<std::string> index_metadata;
  std::string index_out, index_embedder = "mock";
  double index_fraction = 1.0;
  build_index->add_option("--metadata", index_metadata)->required()->check(CLI::ExistingFile);
  build_index->add_option("-o,--out", index_out)->required();
  build_index->add_option("--embedder", index_embedder);
  build_index->add_option("--fraction", index_fraction)->check(CLI::Range(0.0, 1.0));

  // ask
  auto* ask = app.add_subcommand("ask", "Answer one question");
  EndpointOpts ask_opts;
  std::string ask_question, ask_provider, ask_embedder = "mock", ask_endpoint;
  std::vector<std::string> ask_metadata;
  bool ask_json = false, ask_events = false, ask_no_exec = false;
  std::size_t ask_revisions = 3;
  ask->add_option("question", ask_question)->required();
  ask->add_option("--provider", ask_provider)->required();
  ask->add_option("--embedder", ask_embedder);
  ask->add_option("--endpoint", ask_endpoint, "Harvest this endpoint (and execute against it)");
  ask->add_option("--metadata", ask_metadata, "Use harvested metadata instead of harvesting");
  ask->add_option("--max-revisions", ask_revisions);
  ask->add_flag("--json", ask_json, "Print the full turn as JSON");
  ask->add_flag("--events", ask_events, "Print stage events as JSON lines while answering");
  ask->add_flag("--no-execute", ask_no_exec);
  ask_opts.attach(ask);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "k-fold cross-validation on a question/query corpus");
  EndpointOpts eval_opts;
  std::string eval_corpus, eval_provider, eval_embedder = "mock", eval_refs, eval_write_refs, eval_out;
  std::vector<std::string> eval_metadata;
  std::size_t eval_k = 3, eval_repeats = 3, eval_parallel = 1;
  std::uint64_t eval_seed = 0;
  bool eval_strict = false, eval_keep_empty = false;
  double price_in = 0, price_out = 0;
  evaluate->add_option("--corpus", eval_corpus)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--k", eval_k);
  evaluate->add_option("--seed", eval_seed);
  evaluate->add_option("--repeats", eval_repeats);
  evaluate->add_option("--provider", eval_provider, "echo | mock:<transcript> | openai:<model> | <model>")
      ->required();
  evaluate->add_option("--embedder", eval_embedder);
  evaluate->add_option("--metadata", eval_metadata, "Harvested metadata per endpoint (default: harvest)");
  evaluate->add_option("--references", eval_refs, "Pre-materialized reference results (JSONL)");
  evaluate->add_option("--write-references", eval_write_refs, "Execute reference queries, write them, and exit");
  evaluate->add_option("--parallelism", eval_parallel);
  evaluate->add_option("-o,--out", eval_out, "Write the JSON report here");
  evaluate->add_option("--price-input", price_in, "Currency per input token");
  evaluate->add_option("--price-output", price_out, "Currency per output token");
  evaluate->add_flag("--strict-projection", eval_strict);
  evaluate->add_flag("--keep-empty", eval_keep_empty, "Keep examples whose reference returns no rows");
  eval_opts.attach(evaluate);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP question-answering service");
  std::string serve_config, serve_provider, serve_embedder = "mock";
  std::vector<std::string> serve_stores;
  std::optional<int> serve_port;
  serve->add_option("--config", serve_config)->required()->check(CLI::ExistingFile);
  serve->add_option("--provider", serve_provider)->required();
  serve->add_option("--embedder", serve_embedder);
  serve->add_option("--store", serve_stores, "Serve an endpoint URL from local Turtle files: URL=a.ttl[,b.ttl]");
  serve->add_option("--port", serve_port, "Overrides the configured port");

  // serve-fixture
  auto* fixture = app.add_subcommand("serve-fixture", "Expose local Turtle files as SPARQL endpoints");
  std::vector<std::string> fixture_stores;
  std::string fixture_host = "127.0.0.1";
  int fixture_port = 8890;
  fixture->add_option("--store", fixture_stores, "URL=a.ttl[,b.ttl]; mounted at /sparql/<n>")->required();
  fixture->add_option("--host", fixture_host);
  fixture->add_option("--port", fixture_port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*parse) {
      if (parse_file.empty() && parse_text.empty()) throw ConfigError("give --file or --query");
      return cmd_parse(parse_file, parse_text, parse_json);
    }
    if (*profile) return cmd_profile(profile_corpus, profile_json, dup_threshold, profile_embedder);

    if (*harvest_cmd) {
      auto client = cli::make_client(harvest_opts.stores, harvest_opts.headers);
      json all = json::array();
      for (const auto& url : harvest_urls) {
        auto m = harvest::harvest_endpoint(*client, harvest::EndpointDescriptor(url), harvest_opts.harvest());
        std::cerr << url << ": " << m.examples.examples.size() << " examples (" << m.examples.quarantined.size()
                  << " quarantined), " << m.void_records.size() << " VoID records"
                  << (m.void_generated ? " (generated)" : "") << "\n";
        if (!harvest_cache.empty()) std::cerr << "  cached at " << harvest::MetadataCache(harvest_cache).store(m) << "\n";
        all.push_back(harvest::to_json(m));
      }
      auto doc = all.size() == 1 ? all[0] : all;
      if (harvest_out.empty()) {
        std::cout << doc.dump(2) << "\n";
      } else {
        cli::write_file(harvest_out, doc.dump(2));
      }
      return 0;
    }

    if (*gen_void) {
      auto client = cli::make_client(void_opts.stores, void_opts.headers);
      auto opts = void_opts.harvest();
      json out = json::array();
      for (const auto& r : harvest::generate_void(*client, harvest::EndpointDescriptor(void_url), opts.void_mode,
                                                  opts.sample_limit, opts)) {
        out.push_back(harvest::to_json(r));
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*shapes) {
      auto m = harvest::metadata_from_json(json::parse(cli::read_file(shapes_metadata)));
      auto matrix = schema::truncate_matrix(schema::build_matrix(m.void_records), shapes_fraction);
      auto rendered = schema::render_shapes(matrix);
      if (shapes_json) {
        for (const auto& s : rendered) std::cout << retrieval::to_json(s, m.endpoint.endpoint_url).dump() << "\n";
      } else {
        std::cout << schema::render_shex_document(rendered);
      }
      return 0;
    }

    if (*build_index) {
      std::vector<harvest::EndpointMetadata> metadata;
      for (const auto& f : index_metadata) metadata.push_back(harvest::metadata_from_json(json::parse(cli::read_file(f))));
      auto embedder = cli::make_embedder(index_embedder);
      qa::KnowledgeOptions ko;
      ko.schema_fraction = index_fraction;
      auto kb = qa::build_knowledge_base(std::move(metadata), *embedder, ko);
      kb.index.save(index_out);
      std::cout << kb.index.size() << " items (" << kb.index.count(retrieval::ItemKind::example) << " examples, "
                << kb.index.count(retrieval::ItemKind::schema_class) << " shapes), checksum " << kb.index.checksum() << "\n";
      return 0;
    }

    if (*ask) {
      auto client = cli::make_client(ask_opts.stores, ask_opts.headers);
      if (ask_metadata.empty() && ask_endpoint.empty()) throw ConfigError("give --endpoint or --metadata");
      auto metadata = cli::load_or_harvest(ask_metadata, {ask_endpoint}, *client, ask_opts.harvest());
      auto embedder = cli::make_embedder(ask_embedder);
      auto kb = qa::build_knowledge_base(metadata, *embedder);
      std::map<std::string, std::string> refs;
      for (const auto& m : metadata) {
        for (const auto& e : m.examples.examples) refs[e.question] = e.sparql;
      }
      auto llm = cli::make_llm(ask_provider, refs);
      qa::PipelineConfig config;
      config.max_revisions = ask_revisions;
      config.execute = !ask_no_exec;
      config.default_endpoint = ask_endpoint.empty() ? metadata.front().endpoint.endpoint_url : ask_endpoint;
      qa::EventSink sink;
      if (ask_events) {
        sink = [](const qa::TurnEvent& e) { std::cout << json{{"event", e.type}, {"data", e.payload}}.dump() << "\n"; };
      }
      auto turn = qa::answer(ask_question, ask_opts.language, config, {*llm, *embedder, kb.index, kb.schemas, *client},
                             sink);
      if (ask_json) {
        std::cout << qa::to_json(turn).dump(2) << "\n";
      } else if (!ask_events) {
        if (turn.final_query) std::cout << *turn.final_query << "\n\n";
        if (turn.interpretation) std::cout << *turn.interpretation << "\n";
        if (turn.error) std::cerr << "error (" << turn.error->stage << "): " << turn.error->message << "\n";
        std::cerr << turn.accounting.llm_calls << " LLM calls, " << turn.accounting.input_tokens << " in / "
                  << turn.accounting.output_tokens << " out tokens\n";
      }
      return turn.error ? 2 : 0;
    }

    if (*evaluate) {
      auto corpus = eval::read_corpus(eval_corpus);
      auto client = cli::make_client(eval_opts.stores, eval_opts.headers);
      eval::EvaluationConfig config;
      config.k = eval_k;
      config.seed = eval_seed;
      config.repeats = eval_repeats;
      config.parallelism = eval_parallel;
      config.scoring.strict_projection = eval_strict;
      config.exclude_empty_references = !eval_keep_empty;
      config.prices = {price_in, price_out};

      if (!eval_write_refs.empty()) {
        std::map<std::string, std::string> errors;
        auto refs = eval::materialize_references(corpus, *client, config.pipeline.limits, &errors);
        eval::write_reference_results(eval_write_refs, refs);
        for (const auto& [id, err] : errors) std::cerr << id << ": " << err << "\n";
        std::cerr << refs.size() << " reference results written\n";
        return 0;
      }

      auto metadata = cli::load_or_harvest(eval_metadata, corpus_endpoints(corpus), *client, eval_opts.harvest());
      auto llm = cli::make_llm(eval_provider, references_by_question(corpus));
      auto embedder = cli::make_embedder(eval_embedder);
      std::optional<eval::ReferenceResults> refs;
      if (!eval_refs.empty()) refs = eval::read_reference_results(eval_refs);
      eval::EvaluationResources res{*llm, *embedder, *client, std::move(metadata), refs ? &*refs : nullptr};
      auto report = eval::run_evaluation(corpus, res, config);
      if (!eval_out.empty()) cli::write_file(eval_out, eval::to_json(report).dump(2));
      std::cout << eval::render_summary_table(report);
      return 0;
    }

    if (*serve) {
      auto config = service::load_service_config(serve_config);
      if (serve_port) config.port = *serve_port;
      service::ServiceDependencies deps;
      deps.llm = cli::make_llm(serve_provider);
      deps.embedder = cli::make_embedder(serve_embedder);
      deps.client = cli::make_client(serve_stores);
      deps.log = [](const json& line) { std::cout << line.dump() << std::endl; };
      service::Service svc(std::move(config), std::move(deps));
      svc.index_all();
      for (const auto& s : svc.status()) {
        std::cerr << s.binding.dataset_id << ": " << (s.indexed ? "indexed" : "not indexed") << ", "
                  << s.example_count << " examples, " << s.item_count << " items"
                  << (s.last_error ? ", error: " + *s.last_error : "") << "\n";
      }
      svc.start();
      std::cerr << "listening on " << svc.url("/") << "\n";
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      svc.stop();
      return 0;
    }

    if (*fixture) {
      auto registry = cli::load_stores(fixture_stores);
      endpoint::SparqlHttpServer server(registry, {fixture_host, fixture_port});
      for (std::size_t i = 0; i < fixture_stores.size(); ++i) {
        auto url = fixture_stores[i].substr(0, fixture_stores[i].find('='));
        server.mount("/sparql/" + std::to_string(i), url);
      }
      server.start();
      for (std::size_t i = 0; i < fixture_stores.size(); ++i) {
        std::cerr << fixture_stores[i].substr(0, fixture_stores[i].find('=')) << " -> "
                  << server.url("/sparql/" + std::to_string(i)) << "\n";
      }
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      server.stop();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
