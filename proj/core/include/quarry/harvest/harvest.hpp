// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quarry/endpoint/client.hpp"
#include "quarry/sparql/ast.hpp"

namespace quarry::harvest {

namespace ns {
inline constexpr std::string_view sh = "http://www.w3.org/ns/shacl#";
inline constexpr std::string_view schema = "https://schema.org/";
inline constexpr std::string_view schema_http = "http://schema.org/";
inline constexpr std::string_view void_ = "http://rdfs.org/ns/void#";
inline constexpr std::string_view void_ext = "http://ldf.fi/void-ext#";
inline constexpr std::string_view sd = "http://www.w3.org/ns/sparql-service-description#";
inline constexpr std::string_view dcterms = "http://purl.org/dc/terms/";
}  // namespace ns

struct MetadataStatus {
  bool has_examples = false;
  bool has_void = false;
  bool has_description = false;
  friend bool operator==(const MetadataStatus&, const MetadataStatus&) = default;
};

struct EndpointDescriptor {
  std::string endpoint_url;
  std::string label;
  std::string description;
  MetadataStatus metadata_status;

  /// Throws ConfigError unless `url` is an absolute http(s) IRI.
  explicit EndpointDescriptor(std::string url = "http://localhost/sparql", std::string label = {});
  friend bool operator==(const EndpointDescriptor&, const EndpointDescriptor&) = default;
};

struct QueryExample {
  std::string id;
  std::string question;
  std::string language_tag = "und";
  std::string sparql;
  std::string endpoint_url;
  bool is_federated = false;
  /// Endpoints named in SERVICE clauses, in source order, without duplicates.
  std::vector<std::string> service_endpoints;
  std::optional<sparql::ParsedQuery> parsed;
  /// Prefixes declared next to the example rather than in its text.
  std::map<std::string, std::string> declared_prefixes;
};

/// An example whose SPARQL could not be parsed, kept with its error.
struct QuarantinedExample {
  QueryExample example;
  std::string error;
  std::size_t line = 0;
  std::size_t column = 0;
};

struct ExampleHarvest {
  std::vector<QueryExample> examples;
  std::vector<QuarantinedExample> quarantined;
};

/// One (subject class, predicate, object type) partition. Both object fields
/// empty means untyped IRI or blank node objects.
struct RawVoidRecord {
  std::string subject_class;
  std::string predicate;
  std::optional<std::string> object_class;
  std::optional<std::string> object_datatype;
  std::uint64_t triple_count = 0;
  std::uint64_t subject_instance_count = 0;

  friend bool operator==(const RawVoidRecord&, const RawVoidRecord&) = default;
  friend auto operator<=>(const RawVoidRecord&, const RawVoidRecord&) = default;
};

enum class VoidMode { complete, sampled };

struct HarvestOptions {
  endpoint::RequestOptions request;
  std::string preferred_language = "en";
  std::size_t sample_limit = 100;
  VoidMode void_mode = VoidMode::sampled;
  /// Generate VoID statistics when the endpoint publishes none.
  bool generate_missing_void = true;
  /// Throw MetadataMissing instead of returning empty metadata.
  bool strict = false;
};

/// Reads SHACL-described example queries (sh:select, sh:ask, sh:construct,
/// sh:describe with rdfs:comment questions). Sets has_examples.
ExampleHarvest fetch_examples(endpoint::SparqlClient& client, EndpointDescriptor& endpoint,
                              const HarvestOptions& options = {});

/// Reads class/property partitions from the endpoint's VoID description.
/// Sets has_void.
std::vector<RawVoidRecord> fetch_void(endpoint::SparqlClient& client, EndpointDescriptor& endpoint,
                                      const HarvestOptions& options = {});

/// Computes VoID statistics by querying the data. rdf:type triples define
/// class membership and are not reported as partitions.
std::vector<RawVoidRecord> generate_void(endpoint::SparqlClient& client,
                                         const EndpointDescriptor& endpoint, VoidMode mode,
                                         std::size_t sample_limit,
                                         const HarvestOptions& options = {});

/// Fills label and description from schema.org / Dublin Core metadata on the
/// service or dataset resource. Preferred language first, then the smallest
/// language tag (untagged sorts first).
EndpointDescriptor fetch_endpoint_description(endpoint::SparqlClient& client,
                                              EndpointDescriptor endpoint,
                                              const HarvestOptions& options = {});

struct EndpointMetadata {
  EndpointDescriptor endpoint;
  ExampleHarvest examples;
  std::vector<RawVoidRecord> void_records;
  bool void_generated = false;
  std::string harvested_at;  // ISO 8601 UTC
};

/// Runs all fetches for one endpoint, sequentially.
EndpointMetadata harvest_endpoint(endpoint::SparqlClient& client, EndpointDescriptor endpoint,
                                  const HarvestOptions& options = {});

/// Harvests several endpoints concurrently, one thread per endpoint.
std::vector<EndpointMetadata> harvest_all(endpoint::SparqlClient& client,
                                          const std::vector<EndpointDescriptor>& endpoints,
                                          const std::vector<HarvestOptions>& options);

/// Fills parsed, is_federated and service_endpoints. Throws SyntaxError.
void analyse_example(QueryExample& example);

nlohmann::json to_json(const QueryExample& example);
QueryExample example_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RawVoidRecord& record);
RawVoidRecord void_record_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EndpointMetadata& metadata);
EndpointMetadata metadata_from_json(const nlohmann::json& doc);

/// On-disk cache: <dir>/<endpoint key>/<harvested_at>.json
class MetadataCache {
 public:
  explicit MetadataCache(std::filesystem::path dir);
  std::filesystem::path store(const EndpointMetadata& metadata) const;
  std::optional<EndpointMetadata> latest(const std::string& endpoint_url) const;

 private:
  std::filesystem::path dir_;
};

std::string utc_timestamp();

}  // namespace quarry::harvest
