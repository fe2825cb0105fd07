// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/endpoint/client.hpp"
#include "quarry/harvest/harvest.hpp"
#include "quarry/qa/llm.hpp"
#include "quarry/results.hpp"
#include "quarry/retrieval/index.hpp"
#include "quarry/schema/schema.hpp"
#include "quarry/sparql/parser.hpp"
#include "quarry/validation/validator.hpp"

namespace quarry::qa {

using SchemaCatalog = std::map<std::string, schema::ClassPropertyMatrix>;

struct Decomposition {
  std::vector<std::string> sub_questions;
  std::vector<std::string> concepts;
  friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

struct ContextExample {
  std::string item_id;
  double score = 0.0;
  harvest::QueryExample example;
};

struct ContextShape {
  std::string item_id;
  double score = 0.0;
  std::string endpoint_url;
  std::string class_iri;
  std::string rendered_shex;
};

struct PromptContext {
  std::string question;
  std::vector<ContextExample> examples;  // descending score
  std::vector<ContextShape> shapes;      // descending score
  std::optional<std::string> endpoint_info;
};

struct Attempt {
  std::string llm_output;
  /// Extracted query, absent when the reply held no parseable SPARQL.
  std::optional<std::string> sparql;
  std::optional<std::string> syntax_error;
  validation::ValidationReport report;

  bool passed() const { return sparql.has_value() && report.passed; }
};

struct Accounting {
  double wall_ms = 0.0;
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::size_t llm_calls = 0;
  /// Recovered failures (fallbacks taken, provider errors absorbed).
  std::vector<std::string> notes;

  void record(std::uint64_t input, std::uint64_t output);
};

struct ExecutionLimits {
  std::chrono::milliseconds timeout{60'000};
  std::size_t max_rows = 1000;
};

struct PipelineConfig {
  std::size_t k_examples = 10;
  std::size_t k_classes = 10;
  std::size_t max_revisions = 3;
  ExecutionLimits limits;
  /// Rows serialized into the interpretation prompt.
  std::size_t interpret_rows = 50;
  bool include_endpoint_info = true;
  bool execute = true;
  bool interpret = true;
  /// Execution endpoint; defaults to the endpoint of the top-ranked example.
  std::optional<std::string> endpoint_override;
  /// Used when nothing was retrieved and no override is set.
  std::string default_endpoint;
  /// Prefixes that generated queries may use without declaring them.
  schema::PrefixMap prefixes = schema::PrefixMap::well_known();
};

struct Resources {
  LlmProvider& llm;
  retrieval::EmbeddingProvider& embedder;
  const retrieval::Index& index;
  const SchemaCatalog& schemas;
  endpoint::SparqlClient& client;
};

struct TurnError {
  std::string stage;  // decompose, retrieve, generate, execute, interpret
  std::string kind;
  std::string message;
};

struct ConversationTurn {
  std::string question;
  std::string language_tag;
  Decomposition decomposition;
  PromptContext context;
  std::vector<Attempt> attempts;
  std::optional<std::string> final_query;
  /// Set when final_query is the last parseable attempt after exhausted revisions.
  bool fallback = false;
  std::string endpoint_url;
  std::optional<ResultSet> results;
  std::optional<std::string> interpretation;
  Accounting accounting;
  std::optional<TurnError> error;
};

struct TurnEvent {
  std::string type;
  nlohmann::json payload;
  friend bool operator==(const TurnEvent&, const TurnEvent&) = default;
};

using EventSink = std::function<void(const TurnEvent&)>;

/// Throws std::invalid_argument for an empty question. Structured-output and
/// provider failures fall back to {[question], []} with a note.
Decomposition decompose(const std::string& question, LlmProvider& llm, Accounting& accounting);

/// Example hits per sub-question and class hits per concept (sub-questions
/// when there are no concepts), merged by max score and cut to k.
PromptContext build_context(const std::string& question, const Decomposition& d, const retrieval::Index& index,
                            std::size_t k_examples, std::size_t k_classes,
                            retrieval::EmbeddingProvider& provider, bool include_endpoint_info = true);

std::string render_generation_prompt(const PromptContext& ctx);

/// First fenced block that parses, else the whole text if it parses.
std::optional<std::string> extract_sparql_block(const std::string& llm_text,
                                                const sparql::ParseOptions& options = {});

/// Prepends PREFIX declarations for known prefixes the query uses but does
/// not declare. Returns the input unchanged if it already parses.
std::string add_missing_prefixes(const std::string& sparql, const schema::PrefixMap& prefixes);

struct GenerationOutcome {
  std::vector<Attempt> attempts;
  std::optional<std::string> final_query;
  bool fallback = false;
};

/// At most 1 + max_revisions LLM calls. Throws NoQueryProduced when no attempt
/// contained a SPARQL query; `on_attempt` still sees every attempt.
GenerationOutcome generate_and_repair(const PromptContext& ctx, LlmProvider& llm, const SchemaCatalog& schemas,
                                      const std::string& home_endpoint, std::size_t max_revisions,
                                      Accounting& accounting,
                                      const schema::PrefixMap& prefixes = schema::PrefixMap::well_known(),
                                      const std::function<void(std::size_t, const Attempt&)>& on_attempt = {});

/// Runs on the home endpoint; SERVICE clauses are left to its engine.
/// `origin` lists the home endpoint then each SERVICE endpoint.
ResultSet execute(const std::string& query, const std::string& home_endpoint, endpoint::SparqlClient& client,
                  const ExecutionLimits& limits);

inline constexpr std::string_view kNoResultsText = "No results were found for this question.";

/// Empty results return kNoResultsText without an LLM call. Provider errors
/// fall back to a plain tabular summary.
std::string interpret(const std::string& question, const ResultSet& rs, LlmProvider& llm, Accounting& accounting,
                      std::size_t row_budget = 50, const std::string& query = {});

/// Rows as tab-separated lines (header first), at most `max_rows` rows.
std::string results_table(const ResultSet& rs, std::size_t max_rows);

/// Never throws: failures are recorded on the returned turn.
ConversationTurn answer(const std::string& question, const std::string& language_tag, const PipelineConfig& config,
                        Resources resources, const EventSink& sink = {});

/// Events a live answer() emits for this turn, in order.
std::vector<TurnEvent> events_from_turn(const ConversationTurn& turn);

nlohmann::json to_json(const Decomposition& d);
nlohmann::json to_json(const PromptContext& ctx);
nlohmann::json to_json(const Attempt& a);
nlohmann::json to_json(const Accounting& a);
nlohmann::json to_json(const ConversationTurn& turn);
ConversationTurn turn_from_json(const nlohmann::json& doc);

}  // namespace quarry::qa
