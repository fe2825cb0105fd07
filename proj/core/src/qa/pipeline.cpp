// SPDX-License-Identifier: Apache-2.0
#include "quarry/qa/pipeline.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "quarry/errors.hpp"
#include "quarry/sparql/analysis.hpp"

namespace quarry::qa {

using nlohmann::json;
using retrieval::ItemKind;

void Accounting::record(std::uint64_t input, std::uint64_t output) {
  input_tokens += input;
  output_tokens += output;
  ++llm_calls;
}

// ---------------------------------------------------------------- decompose

namespace {

const json& decomposition_schema() {
  static const json schema = {
      {"type", "object"},
      {"properties",
       {{"sub_questions", {{"type", "array"}, {"items", {{"type", "string"}}}}},
        {"concepts", {{"type", "array"}, {"items", {{"type", "string"}}}}}}},
      {"required", {"sub_questions", "concepts"}},
      {"additionalProperties", false}};
  return schema;
}

std::optional<Decomposition> read_decomposition(const json& v) {
  if (!v.is_object() || !v.contains("sub_questions") || !v["sub_questions"].is_array()) return std::nullopt;
  Decomposition d;
  for (const auto& s : v["sub_questions"]) {
    if (!s.is_string() || s.get<std::string>().empty()) return std::nullopt;
    d.sub_questions.push_back(s);
  }
  if (d.sub_questions.empty()) return std::nullopt;
  if (v.contains("concepts")) {
    if (!v["concepts"].is_array()) return std::nullopt;
    for (const auto& c : v["concepts"]) {
      if (!c.is_string()) return std::nullopt;
      if (!c.get<std::string>().empty()) d.concepts.push_back(c);
    }
  }
  return d;
}

}  // namespace

Decomposition decompose(const std::string& question, LlmProvider& llm, Accounting& accounting) {
  if (question.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw std::invalid_argument("decompose: empty question");
  }
  const std::string prompt =
      "Split the user question into standalone sub-questions that can each be answered on its own, and list the "
      "high-level concepts it mentions that may correspond to classes in a knowledge graph (for example Protein, "
      "Gene, Disease). A simple question is its own single sub-question. Keep the language of the question.\n\n"
      "Question: " +
      question;
  CompletionOptions opts{Purpose::decompose, 0.0, std::nullopt, question};
  Decomposition fallback{{question}, {}};
  try {
    auto out = llm.structured(prompt, decomposition_schema(), opts);
    accounting.record(out.input_tokens, out.output_tokens);
    if (auto d = read_decomposition(out.value)) return *d;
    accounting.notes.push_back("decompose: malformed structured output, using the question as its only sub-question");
  } catch (const TranscriptExhausted&) {
    throw;
  } catch (const ProviderError& e) {
    // A failed call still counts as a call.
    ++accounting.llm_calls;
    accounting.notes.push_back(std::string("decompose: provider error: ") + e.what());
  }
  return fallback;
}

// ---------------------------------------------------------------- context

namespace {

std::vector<std::pair<const retrieval::IndexedItem*, double>> merged_hits(const std::vector<std::string>& queries,
                                                                         ItemKind kind, std::size_t k,
                                                                         const retrieval::Index& index,
                                                                         retrieval::EmbeddingProvider& provider) {
  std::map<std::string, std::pair<const retrieval::IndexedItem*, double>> best;
  if (k == 0 || index.count(kind) == 0) return {};
  for (const auto& q : queries) {
    for (const auto& hit : index.search(q, kind, k, provider)) {
      auto [it, inserted] = best.emplace(hit.item->item_id, std::make_pair(hit.item, hit.score));
      if (!inserted && hit.score > it->second.second) it->second.second = hit.score;
    }
  }
  std::vector<std::pair<const retrieval::IndexedItem*, double>> out;
  for (auto& [id, v] : best) out.push_back(v);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first->item_id < b.first->item_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace

PromptContext build_context(const std::string& question, const Decomposition& d, const retrieval::Index& index,
                            std::size_t k_examples, std::size_t k_classes, retrieval::EmbeddingProvider& provider,
                            bool include_endpoint_info) {
  PromptContext ctx;
  ctx.question = question;
  const auto& subs = d.sub_questions.empty() ? std::vector<std::string>{question} : d.sub_questions;
  for (const auto& [item, score] : merged_hits(subs, ItemKind::example, k_examples, index, provider)) {
    ctx.examples.push_back({item->item_id, score, harvest::example_from_json(item->source)});
  }
  const auto& concepts = d.concepts.empty() ? subs : d.concepts;
  for (const auto& [item, score] : merged_hits(concepts, ItemKind::schema_class, k_classes, index, provider)) {
    ctx.shapes.push_back({item->item_id, score, item->source.value("endpoint_url", std::string()),
                          item->source.value("class_iri", std::string()),
                          item->source.value("shex", std::string())});
  }
  if (include_endpoint_info && index.count(ItemKind::endpoint_info) > 0) {
    auto hits = index.search(question, ItemKind::endpoint_info, 1, provider);
    if (!hits.empty()) ctx.endpoint_info = hits[0].item->payload_text;
  }
  return ctx;
}

std::string render_generation_prompt(const PromptContext& ctx) {
  std::ostringstream out;
  out << "You translate questions into SPARQL queries for the knowledge graphs described below.\n"
         "Write one SPARQL query that answers the user question and return it in a single ```sparql code block.\n"
         "Use only classes and predicates that appear in the examples or schema shapes, and declare every prefix "
         "you use.\n"
         "When the answer needs data from several endpoints, put the remote parts in SERVICE clauses.\n";
  if (ctx.endpoint_info) out << "\n## Endpoint\n" << *ctx.endpoint_info << "\n";
  if (!ctx.examples.empty()) {
    out << "\n## Example questions and queries\n";
    for (const auto& e : ctx.examples) {
      out << "\nQuestion: " << e.example.question << "\nEndpoint: " << e.example.endpoint_url << "\n```sparql\n"
          << e.example.sparql << "\n```\n";
    }
  }
  if (!ctx.shapes.empty()) {
    out << "\n## Schema shapes\n";
    for (const auto& s : ctx.shapes) {
      out << "\nEndpoint: " << s.endpoint_url << "\n```shex\n" << s.rendered_shex << "\n```\n";
    }
  }
  out << "\n## User question\n" << ctx.question << "\n";
  return out.str();
}

// ---------------------------------------------------------------- generation

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> fenced_blocks(const std::string& text) {
  static const std::regex fence("```[A-Za-z0-9_+-]*[ \\t]*\\r?\\n([\\s\\S]*?)```");
  std::vector<std::string> out;
  for (std::sregex_iterator it(text.begin(), text.end(), fence), end; it != end; ++it) {
    out.push_back(trim((*it)[1].str()));
  }
  return out;
}

bool parses(const std::string& text, const sparql::ParseOptions& options, std::string* error = nullptr) {
  try {
    sparql::parse_query(text, options);
    return true;
  } catch (const SyntaxError& e) {
    if (error) *error = e.what();
    return false;
  }
}

sparql::ParseOptions lenient(const schema::PrefixMap& prefixes) {
  sparql::ParseOptions o;
  o.extra_prefixes = prefixes.entries();
  return o;
}

std::string first_syntax_error(const std::string& text, const sparql::ParseOptions& options) {
  auto blocks = fenced_blocks(text);
  std::string error = "the reply contains no SPARQL query";
  if (!blocks.empty()) {
    parses(blocks.front(), options, &error);
  } else if (text.find("SELECT") != std::string::npos || text.find("ASK") != std::string::npos ||
             text.find("CONSTRUCT") != std::string::npos) {
    parses(trim(text), options, &error);
  }
  return error;
}

std::string syntax_repair_prompt(const std::string& generation_prompt, const std::string& reply,
                                 const std::string& error) {
  return generation_prompt + "\n## Previous attempt\nYour previous reply did not contain a valid SPARQL query (" +
         error + ").\n\nPrevious reply:\n" + reply +
         "\n\nReturn the corrected query in a single ```sparql code block.\n";
}

}  // namespace

std::optional<std::string> extract_sparql_block(const std::string& llm_text, const sparql::ParseOptions& options) {
  auto blocks = fenced_blocks(llm_text);
  for (const auto& b : blocks) {
    if (parses(b, options)) return b;
  }
  if (blocks.empty()) {
    auto whole = trim(llm_text);
    if (!whole.empty() && parses(whole, options)) return whole;
  }
  return std::nullopt;
}

std::string add_missing_prefixes(const std::string& sparql, const schema::PrefixMap& prefixes) {
  if (parses(sparql, {})) return sparql;
  sparql::ParsedQuery q;
  try {
    q = sparql::parse_query(sparql, lenient(prefixes));
  } catch (const SyntaxError&) {
    return sparql;
  }
  std::string header;
  for (const auto& [p, ns] : prefixes.entries()) {
    if (q.prefixes.count(p)) continue;
    const std::regex used("(^|[^A-Za-z0-9_:<#/.-])" + p + ":");
    if (std::regex_search(sparql, used)) header += "PREFIX " + p + ": <" + ns + ">\n";
  }
  std::string out = header + sparql;
  return parses(out, {}) ? out : sparql;
}

GenerationOutcome generate_and_repair(const PromptContext& ctx, LlmProvider& llm, const SchemaCatalog& schemas,
                                      const std::string& home_endpoint, std::size_t max_revisions,
                                      Accounting& accounting, const schema::PrefixMap& prefixes,
                                      const std::function<void(std::size_t, const Attempt&)>& on_attempt) {
  const auto options = lenient(prefixes);
  const std::string generation_prompt = render_generation_prompt(ctx);
  std::string prompt = generation_prompt;
  GenerationOutcome outcome;
  for (std::size_t i = 0; i <= max_revisions; ++i) {
    CompletionOptions opts{i == 0 ? Purpose::generate : Purpose::repair, 0.0, std::nullopt, ctx.question};
    Completion c = llm.complete(prompt, opts);
    accounting.record(c.input_tokens, c.output_tokens);

    Attempt a;
    a.llm_output = c.text;
    if (auto block = extract_sparql_block(c.text, options)) {
      a.sparql = add_missing_prefixes(*block, prefixes);
      a.report = validation::validate(sparql::parse_query(*a.sparql, options), schemas, home_endpoint,
                                      {0.5, 5, prefixes});
    } else {
      a.syntax_error = first_syntax_error(c.text, options);
      a.report.passed = false;
    }
    outcome.attempts.push_back(a);
    if (on_attempt) on_attempt(i, outcome.attempts.back());
    if (a.passed()) {
      outcome.final_query = a.sparql;
      return outcome;
    }
    if (i == max_revisions) break;
    prompt = a.sparql ? generation_prompt + "\n## Previous attempt\n" +
                            validation::render_repair_prompt(a.report, *a.sparql)
                      : syntax_repair_prompt(generation_prompt, c.text, *a.syntax_error);
  }
  for (auto it = outcome.attempts.rbegin(); it != outcome.attempts.rend(); ++it) {
    if (it->sparql) {
      outcome.final_query = it->sparql;
      outcome.fallback = true;
      accounting.notes.push_back("generate: revisions exhausted, executing the last parseable attempt");
      return outcome;
    }
  }
  throw NoQueryProduced("no attempt contained a parseable SPARQL query (" +
                        std::to_string(outcome.attempts.size()) + " attempts)");
}

// ---------------------------------------------------------------- execution

ResultSet execute(const std::string& query, const std::string& home_endpoint, endpoint::SparqlClient& client,
                  const ExecutionLimits& limits) {
  endpoint::RequestOptions opts;
  opts.timeout = limits.timeout;
  ResultSet rs = client.query(home_endpoint, query, opts);
  if (rs.rows.size() > limits.max_rows) {
    rs.rows.resize(limits.max_rows);
    rs.truncated = true;
  }
  rs.origin = {home_endpoint};
  try {
    sparql::ParseOptions po;
    po.extra_prefixes = schema::PrefixMap::well_known().entries();
    for (const auto& g : sparql::extract_pattern_groups(sparql::parse_query(query, po))) {
      if (!g.service_endpoint) continue;
      auto canon = endpoint::canonical_url(*g.service_endpoint);
      bool seen = std::any_of(rs.origin.begin(), rs.origin.end(),
                              [&](const std::string& u) { return endpoint::canonical_url(u) == canon; });
      if (!seen) rs.origin.push_back(*g.service_endpoint);
    }
  } catch (const SyntaxError&) {
    // The endpoint accepted it; origin stays the home endpoint.
  }
  return rs;
}

namespace {

std::string display(const Term& t) {
  if (t.is_blank()) return "_:" + t.value;
  std::string v = t.value;
  std::replace(v.begin(), v.end(), '\t', ' ');
  std::replace(v.begin(), v.end(), '\n', ' ');
  return v;
}

}  // namespace

std::string results_table(const ResultSet& rs, std::size_t max_rows) {
  std::ostringstream out;
  if (rs.is_boolean()) {
    out << "ASK\n" << (*rs.boolean ? "true" : "false") << "\n";
    return out.str();
  }
  for (std::size_t i = 0; i < rs.variables.size(); ++i) out << (i ? "\t?" : "?") << rs.variables[i];
  out << "\n";
  for (std::size_t r = 0; r < rs.rows.size() && r < max_rows; ++r) {
    for (std::size_t i = 0; i < rs.variables.size(); ++i) {
      if (i) out << "\t";
      auto it = rs.rows[r].find(rs.variables[i]);
      if (it != rs.rows[r].end()) out << display(it->second);
    }
    out << "\n";
  }
  return out.str();
}

std::string interpret(const std::string& question, const ResultSet& rs, LlmProvider& llm, Accounting& accounting,
                      std::size_t row_budget, const std::string& query) {
  if (rs.empty()) return std::string(kNoResultsText);
  std::ostringstream prompt;
  prompt << "Answer the user question from the SPARQL query results below. Be concise, cite the key values, and "
            "do not add facts that are not in the results.\n\nQuestion: "
         << question << "\n";
  if (!query.empty()) prompt << "\nQuery:\n```sparql\n" << query << "\n```\n";
  if (rs.is_boolean()) {
    prompt << "\nResult of the ASK query: " << (*rs.boolean ? "true" : "false") << "\n";
  } else {
    std::size_t shown = std::min(row_budget, rs.rows.size());
    prompt << "\nResults: " << rs.rows.size() << (rs.truncated ? "+" : "") << " rows";
    if (shown < rs.rows.size()) prompt << ", first " << shown << " shown";
    prompt << "\n```tsv\n" << results_table(rs, row_budget) << "```\n";
  }
  try {
    Completion c = llm.complete(prompt.str(), {Purpose::interpret, 0.0, std::nullopt, question});
    accounting.record(c.input_tokens, c.output_tokens);
    if (!trim(c.text).empty()) return c.text;
    accounting.notes.push_back("interpret: empty reply, using a tabular summary");
  } catch (const TranscriptExhausted&) {
    throw;
  } catch (const ProviderError& e) {
    ++accounting.llm_calls;
    accounting.notes.push_back(std::string("interpret: provider error: ") + e.what());
  }
  if (rs.is_boolean()) return std::string("The answer is ") + (*rs.boolean ? "yes." : "no.");
  return "The query returned " + std::to_string(rs.rows.size()) + (rs.rows.size() == 1 ? " row" : " rows") +
         ":\n" + results_table(rs, 10);
}

// ---------------------------------------------------------------- events

namespace {

json attempt_payload(std::size_t n, const Attempt& a) {
  return {{"n", n}, {"sparql", a.sparql ? json(*a.sparql) : json(nullptr)}, {"llm_output", a.llm_output}};
}

json report_payload(std::size_t n, const Attempt& a) {
  json j = validation::to_json(a.report);
  j["n"] = n;
  j["passed"] = a.passed();
  if (a.syntax_error) j["syntax_error"] = *a.syntax_error;
  return j;
}

json context_payload(const PromptContext& ctx) {
  json examples = json::array(), shapes = json::array();
  for (const auto& e : ctx.examples) {
    examples.push_back({{"id", e.item_id}, {"score", e.score}, {"question", e.example.question},
                        {"endpoint_url", e.example.endpoint_url}});
  }
  for (const auto& s : ctx.shapes) {
    shapes.push_back({{"id", s.item_id}, {"score", s.score}, {"class_iri", s.class_iri},
                      {"endpoint_url", s.endpoint_url}});
  }
  return {{"examples", examples},
          {"shapes", shapes},
          {"endpoint_info", ctx.endpoint_info ? json(*ctx.endpoint_info) : json(nullptr)}};
}

json final_payload(const ConversationTurn& t) {
  return {{"sparql", *t.final_query}, {"endpoint_url", t.endpoint_url}, {"fallback", t.fallback}};
}

json error_payload(const TurnError& e) { return {{"stage", e.stage}, {"kind", e.kind}, {"message", e.message}}; }

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const TranscriptExhausted*>(&e)) return "transcript_exhausted";
  if (dynamic_cast<const ProviderError*>(&e)) return "provider_error";
  if (dynamic_cast<const NoQueryProduced*>(&e)) return "no_query_produced";
  if (dynamic_cast<const QueryTimeout*>(&e)) return "timeout";
  if (dynamic_cast<const EndpointUnreachable*>(&e)) return "endpoint_unreachable";
  if (dynamic_cast<const ExecutionError*>(&e)) return "execution_error";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_request";
  return "error";
}

class Emitter {
 public:
  explicit Emitter(const EventSink& sink) : sink_(sink) {}
  void operator()(std::string type, json payload) const {
    if (sink_) sink_({std::move(type), std::move(payload)});
  }

 private:
  const EventSink& sink_;
};

std::string choose_endpoint(const PipelineConfig& config, const PromptContext& ctx, const SchemaCatalog& schemas) {
  if (config.endpoint_override) return *config.endpoint_override;
  if (!ctx.examples.empty() && !ctx.examples.front().example.endpoint_url.empty()) {
    return ctx.examples.front().example.endpoint_url;
  }
  if (!ctx.shapes.empty() && !ctx.shapes.front().endpoint_url.empty()) return ctx.shapes.front().endpoint_url;
  if (!config.default_endpoint.empty()) return config.default_endpoint;
  if (schemas.size() == 1) return schemas.begin()->first;
  return {};
}

}  // namespace

ConversationTurn answer(const std::string& question, const std::string& language_tag, const PipelineConfig& config,
                        Resources res, const EventSink& sink) {
  const auto started = std::chrono::steady_clock::now();
  ConversationTurn turn;
  turn.question = question;
  turn.language_tag = language_tag.empty() ? "und" : language_tag;
  Emitter emit(sink);
  std::string stage = "decompose";

  auto finish = [&] {
    turn.accounting.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    if (turn.error) {
      emit("error", error_payload(*turn.error));
    } else {
      emit("accounting", to_json(turn.accounting));
    }
    emit("done", {{"ok", !turn.error.has_value()}});
    return turn;
  };

  try {
    turn.decomposition = decompose(question, res.llm, turn.accounting);
    emit("decomposition", to_json(turn.decomposition));

    stage = "retrieve";
    turn.context = build_context(question, turn.decomposition, res.index, config.k_examples, config.k_classes,
                                 res.embedder, config.include_endpoint_info);
    emit("context", context_payload(turn.context));

    stage = "generate";
    turn.endpoint_url = choose_endpoint(config, turn.context, res.schemas);
    auto outcome = generate_and_repair(turn.context, res.llm, res.schemas, turn.endpoint_url, config.max_revisions,
                                       turn.accounting, config.prefixes, [&](std::size_t n, const Attempt& a) {
                                         turn.attempts.push_back(a);
                                         emit("attempt", attempt_payload(n, a));
                                         emit("validation_report", report_payload(n, a));
                                       });
    turn.final_query = outcome.final_query;
    turn.fallback = outcome.fallback;
    emit("final_query", final_payload(turn));

    if (config.execute) {
      stage = "execute";
      if (turn.endpoint_url.empty()) throw ExecutionError("", 0, "no endpoint could be selected for execution");
      turn.results = execute(*turn.final_query, turn.endpoint_url, res.client, config.limits);
      emit("results", to_json(*turn.results));

      if (config.interpret) {
        stage = "interpret";
        turn.interpretation = interpret(question, *turn.results, res.llm, turn.accounting, config.interpret_rows,
                                        *turn.final_query);
        emit("interpretation", {{"text", *turn.interpretation}});
      }
    }
  } catch (const std::exception& e) {
    turn.error = TurnError{stage, error_kind(e), e.what()};
  }
  return finish();
}

std::vector<TurnEvent> events_from_turn(const ConversationTurn& turn) {
  std::vector<TurnEvent> out;
  auto push = [&](std::string type, json payload) { out.push_back({std::move(type), std::move(payload)}); };
  const std::string failed = turn.error ? turn.error->stage : "";
  // Stages run in order; an error in stage s means later artifacts are absent.
  if (failed != "decompose") {
    push("decomposition", to_json(turn.decomposition));
    if (failed != "retrieve") {
      push("context", context_payload(turn.context));
      for (std::size_t n = 0; n < turn.attempts.size(); ++n) {
        push("attempt", attempt_payload(n, turn.attempts[n]));
        push("validation_report", report_payload(n, turn.attempts[n]));
      }
      if (turn.final_query) push("final_query", final_payload(turn));
      if (turn.results) push("results", to_json(*turn.results));
      if (turn.interpretation) push("interpretation", {{"text", *turn.interpretation}});
    }
  }
  if (turn.error) {
    push("error", error_payload(*turn.error));
  } else {
    push("accounting", to_json(turn.accounting));
  }
  push("done", {{"ok", !turn.error.has_value()}});
  return out;
}

// ---------------------------------------------------------------- json

json to_json(const Decomposition& d) { return {{"sub_questions", d.sub_questions}, {"concepts", d.concepts}}; }

json to_json(const PromptContext& ctx) {
  json examples = json::array(), shapes = json::array();
  for (const auto& e : ctx.examples) {
    examples.push_back({{"id", e.item_id}, {"score", e.score}, {"example", harvest::to_json(e.example)}});
  }
  for (const auto& s : ctx.shapes) {
    shapes.push_back({{"id", s.item_id},
                      {"score", s.score},
                      {"endpoint_url", s.endpoint_url},
                      {"class_iri", s.class_iri},
                      {"shex", s.rendered_shex}});
  }
  return {{"question", ctx.question},
          {"examples", examples},
          {"shapes", shapes},
          {"endpoint_info", ctx.endpoint_info ? json(*ctx.endpoint_info) : json(nullptr)}};
}

json to_json(const Attempt& a) {
  return {{"llm_output", a.llm_output},
          {"sparql", a.sparql ? json(*a.sparql) : json(nullptr)},
          {"syntax_error", a.syntax_error ? json(*a.syntax_error) : json(nullptr)},
          {"report", validation::to_json(a.report)}};
}

json to_json(const Accounting& a) {
  return {{"wall_ms", a.wall_ms},
          {"input_tokens", a.input_tokens},
          {"output_tokens", a.output_tokens},
          {"llm_calls", a.llm_calls},
          {"notes", a.notes}};
}

json to_json(const ConversationTurn& t) {
  json attempts = json::array();
  for (const auto& a : t.attempts) attempts.push_back(to_json(a));
  return {{"question", t.question},
          {"language_tag", t.language_tag},
          {"decomposition", to_json(t.decomposition)},
          {"context", to_json(t.context)},
          {"attempts", attempts},
          {"final_query", t.final_query ? json(*t.final_query) : json(nullptr)},
          {"fallback", t.fallback},
          {"endpoint_url", t.endpoint_url},
          {"results", t.results ? to_json(*t.results) : json(nullptr)},
          {"interpretation", t.interpretation ? json(*t.interpretation) : json(nullptr)},
          {"accounting", to_json(t.accounting)},
          {"error", t.error ? error_payload(*t.error) : json(nullptr)}};
}

namespace {

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

}  // namespace

ConversationTurn turn_from_json(const json& doc) {
  ConversationTurn t;
  t.question = doc.at("question");
  t.language_tag = doc.at("language_tag");
  t.decomposition.sub_questions = doc.at("decomposition").at("sub_questions").get<std::vector<std::string>>();
  t.decomposition.concepts = doc.at("decomposition").at("concepts").get<std::vector<std::string>>();
  const auto& ctx = doc.at("context");
  t.context.question = ctx.at("question");
  for (const auto& e : ctx.at("examples")) {
    t.context.examples.push_back({e.at("id"), e.at("score"), harvest::example_from_json(e.at("example"))});
  }
  for (const auto& s : ctx.at("shapes")) {
    t.context.shapes.push_back({s.at("id"), s.at("score"), s.at("endpoint_url"), s.at("class_iri"), s.at("shex")});
  }
  t.context.endpoint_info = opt_string(ctx, "endpoint_info");
  for (const auto& a : doc.at("attempts")) {
    t.attempts.push_back({a.at("llm_output"), opt_string(a, "sparql"), opt_string(a, "syntax_error"),
                          validation::report_from_json(a.at("report"))});
  }
  t.final_query = opt_string(doc, "final_query");
  t.fallback = doc.value("fallback", false);
  t.endpoint_url = doc.value("endpoint_url", std::string());
  if (!doc.at("results").is_null()) t.results = result_set_from_json(doc["results"]);
  t.interpretation = opt_string(doc, "interpretation");
  const auto& acc = doc.at("accounting");
  t.accounting.wall_ms = acc.at("wall_ms");
  t.accounting.input_tokens = acc.at("input_tokens");
  t.accounting.output_tokens = acc.at("output_tokens");
  t.accounting.llm_calls = acc.at("llm_calls");
  t.accounting.notes = acc.at("notes").get<std::vector<std::string>>();
  if (!doc.at("error").is_null()) {
    const auto& e = doc["error"];
    t.error = TurnError{e.at("stage"), e.at("kind"), e.at("message")};
  }
  return t;
}

}  // namespace quarry::qa
