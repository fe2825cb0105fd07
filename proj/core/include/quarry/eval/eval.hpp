// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/endpoint/client.hpp"
#include "quarry/harvest/harvest.hpp"
#include "quarry/qa/knowledge.hpp"
#include "quarry/qa/llm.hpp"
#include "quarry/qa/pipeline.hpp"
#include "quarry/results.hpp"
#include "quarry/retrieval/embedding.hpp"

namespace quarry::eval {

// ---------------------------------------------------------------- scoring

struct ScoreOptions {
  /// Strict: rows only match when both sides project the same variables.
  /// Lenient: generated rows are projected onto the reference variables
  /// when all of them are present.
  bool strict_projection = false;
  /// Deduplicate rows before comparing.
  bool set_semantics = false;
};

struct Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Row-level precision, recall and F1 of `generated` against `reference`.
Score score_f1(const ResultSet& reference, const ResultSet& generated, const ScoreOptions& options = {});

/// Canonical row keys used by score_f1, sorted. Exposed for diagnostics.
std::vector<std::string> canonical_rows(const ResultSet& rs, const std::vector<std::string>& projection,
                                        bool positional);

// ---------------------------------------------------------------- folds

struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct FoldPlan {
  std::size_t k = 0;
  std::vector<Fold> folds;
};

/// Seeded shuffle, then round-robin assignment. Throws InvalidK.
FoldPlan make_folds(const std::vector<harvest::QueryExample>& corpus, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------- corpus io

std::vector<harvest::QueryExample> read_corpus(const std::string& path);
std::vector<harvest::QueryExample> parse_corpus(const std::string& jsonl);

/// Reference results keyed by example id, as written by materialize_references.
using ReferenceResults = std::map<std::string, ResultSet>;
ReferenceResults read_reference_results(const std::string& path);
void write_reference_results(const std::string& path, const ReferenceResults& results);

// ---------------------------------------------------------------- evaluation

struct Prices {
  double input_per_token = 0.0;
  double output_per_token = 0.0;
};

struct EvaluationRecord {
  std::string example_id;
  std::size_t fold = 0;
  std::size_t repeat = 0;
  std::string question;
  std::string reference_sparql;
  std::optional<std::string> generated_sparql;
  std::optional<ResultSet> reference_results;
  std::optional<std::string> reference_error;
  std::optional<ResultSet> generated_results;
  std::optional<std::string> generated_error;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  qa::Accounting accounting;
};

struct AccountingReport {
  std::size_t questions = 0;
  double median_wall_ms = 0, mean_wall_ms = 0;
  double median_input_tokens = 0, mean_input_tokens = 0;
  double median_output_tokens = 0, mean_output_tokens = 0;
  double median_cost = 0, mean_cost = 0, total_cost = 0;
};

AccountingReport accounting_report(const std::vector<EvaluationRecord>& records, const Prices& prices = {});

struct EvaluationSummary {
  std::size_t records = 0;
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::vector<std::size_t> fold_sizes;
  /// Mean F1 of each repeat.
  std::vector<double> repeat_f1;
  double mean_f1 = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  /// Half-width of the 95% confidence interval of the mean over repeats.
  double ci95 = 0.0;
  /// Test examples found in their own fold's index; always 0 unless broken.
  std::size_t leakage = 0;
  std::vector<std::string> excluded_empty;
  std::vector<std::string> reference_errors;
  AccountingReport accounting;
};

struct EvaluationReport {
  FoldPlan plan;
  std::vector<EvaluationRecord> records;
  EvaluationSummary summary;
};

struct EvaluationConfig {
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::size_t repeats = 3;
  /// Records evaluated concurrently within a fold.
  std::size_t parallelism = 1;
  /// Drop examples whose reference query returns no rows before folding.
  bool exclude_empty_references = true;
  ScoreOptions scoring;
  Prices prices;
  qa::PipelineConfig pipeline = default_pipeline();
  qa::KnowledgeOptions knowledge;

  static qa::PipelineConfig default_pipeline() {
    qa::PipelineConfig c;
    c.interpret = false;
    return c;
  }
};

struct EvaluationResources {
  qa::LlmProvider& llm;
  retrieval::EmbeddingProvider& embedder;
  endpoint::SparqlClient& client;
  /// Harvested metadata per endpoint; its examples are replaced by each
  /// fold's training examples.
  std::vector<harvest::EndpointMetadata> metadata;
  /// Pre-materialized reference results; missing ids are executed live.
  const ReferenceResults* references = nullptr;
};

EvaluationReport run_evaluation(const std::vector<harvest::QueryExample>& corpus, EvaluationResources& resources,
                                const EvaluationConfig& config);

/// Executes every reference query once under the given limits.
ReferenceResults materialize_references(const std::vector<harvest::QueryExample>& corpus,
                                        endpoint::SparqlClient& client, const qa::ExecutionLimits& limits,
                                        std::map<std::string, std::string>* errors = nullptr);

/// Two-sided 95% Student t critical value.
double t_critical_95(std::size_t degrees_of_freedom);

// ---------------------------------------------------------------- profiling

struct CorpusProfile {
  std::map<std::size_t, std::size_t> histogram;
  std::vector<std::pair<std::string, std::size_t>> counts;
  std::vector<std::pair<std::string, std::string>> unparseable;
  std::size_t min = 0, max = 0;
  double mean = 0.0, median = 0.0;
  /// Most frequent count; smallest on ties.
  std::size_t mode = 0;
};

CorpusProfile profile_corpus(const std::vector<harvest::QueryExample>& corpus);

struct NearDuplicate {
  std::string a;
  std::string b;
  double score;
};

/// Question pairs whose embeddings have cosine >= threshold, highest first.
std::vector<NearDuplicate> near_duplicates(const std::vector<harvest::QueryExample>& corpus,
                                           retrieval::EmbeddingProvider& embedder, double threshold);

nlohmann::json to_json(const Score& s);
nlohmann::json to_json(const FoldPlan& plan);
nlohmann::json to_json(const EvaluationRecord& r);
nlohmann::json to_json(const AccountingReport& r);
nlohmann::json to_json(const EvaluationSummary& s);
nlohmann::json to_json(const EvaluationReport& r);
nlohmann::json to_json(const CorpusProfile& p);

/// Fixed-width table for terminals.
std::string render_summary_table(const EvaluationReport& report);

}  // namespace quarry::eval
