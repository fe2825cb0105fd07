// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/endpoint/client.hpp"
#include "quarry/eval/eval.hpp"
#include "quarry/harvest/harvest.hpp"
#include "quarry/qa/knowledge.hpp"
#include "quarry/qa/llm.hpp"
#include "quarry/qa/pipeline.hpp"
#include "quarry/retrieval/embedding.hpp"

namespace quarry::service {

struct DatasetBinding {
  std::string dataset_id;
  std::string endpoint_url;
  std::string label;
  std::optional<std::size_t> k_examples;
  std::optional<std::size_t> k_classes;
  std::optional<double> schema_fraction;
  std::optional<std::size_t> max_revisions;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 0;
  std::vector<DatasetBinding> datasets;
  qa::PipelineConfig pipeline;
  qa::KnowledgeOptions knowledge;
  harvest::HarvestOptions harvest;
  /// Bearer token for /v1/admin routes; admin routes answer 401 when unset.
  std::optional<std::string> admin_token;
  /// Turns running at once across /ask and /chat.
  std::size_t max_concurrent_turns = 8;
  /// How long a request waits for a turn slot before 429.
  std::chrono::milliseconds queue_timeout{30'000};
  std::size_t http_threads = 32;
  eval::Prices prices;
};

/// Reads a JSON config. `*_env` keys name environment variables.
ServiceConfig service_config_from_json(const nlohmann::json& doc);
ServiceConfig load_service_config(const std::string& path);

struct ServiceDependencies {
  std::shared_ptr<qa::LlmProvider> llm;
  std::shared_ptr<retrieval::EmbeddingProvider> embedder;
  std::shared_ptr<endpoint::SparqlClient> client;
  /// One JSON object per turn or admin action.
  std::function<void(const nlohmann::json&)> log;
};

struct DatasetStatus {
  DatasetBinding binding;
  bool indexed = false;
  bool reindex_in_flight = false;
  harvest::MetadataStatus metadata_status;
  std::size_t example_count = 0;
  std::size_t class_count = 0;
  std::size_t item_count = 0;
  std::string index_checksum;
  std::string harvested_at;
  std::uint64_t generation = 0;
  std::optional<std::string> last_error;
};

enum class ReindexResult { accepted, in_flight, unknown_dataset };

/// Question answering over HTTP. Each dataset has an immutable knowledge
/// snapshot that requests share and reindexing replaces whole.
class Service {
 public:
  Service(ServiceConfig config, ServiceDependencies deps);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Harvests and indexes every dataset on the calling thread.
  void index_all();
  /// Indexes a dataset from metadata harvested earlier.
  void install(const std::string& dataset_id, harvest::EndpointMetadata metadata);
  /// Starts a background re-harvest and swap.
  ReindexResult reindex(const std::string& dataset_id);
  /// Blocks until no reindex is running.
  void wait_for_reindex();

  std::vector<DatasetStatus> status() const;
  std::optional<DatasetStatus> status(const std::string& dataset_id) const;

  /// Binds and serves on background threads. Returns the port.
  int start();
  /// Blocks serving on the calling thread.
  void run();
  void stop();
  int port() const;
  std::string url(const std::string& path) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "event: <type>\ndata: <json>\n\n"
std::string format_sse(const qa::TurnEvent& event, std::size_t id);

/// Splits an event stream back into events.
std::vector<qa::TurnEvent> parse_sse(const std::string& stream);

nlohmann::json to_json(const DatasetStatus& s);

}  // namespace quarry::service
