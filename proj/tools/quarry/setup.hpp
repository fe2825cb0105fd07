// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "quarry/endpoint/client.hpp"
#include "quarry/harvest/harvest.hpp"
#include "quarry/qa/llm.hpp"
#include "quarry/retrieval/embedding.hpp"

namespace quarry::cli {

/// `URL=file.ttl[,more.ttl]` pairs loaded into in-process stores.
std::shared_ptr<endpoint::StoreRegistry> load_stores(const std::vector<std::string>& specs);

/// Local stores when any are given, plain HTTP otherwise.
std::shared_ptr<endpoint::SparqlClient> make_client(const std::vector<std::string>& store_specs,
                                                    const std::vector<std::string>& headers = {});

/// Provider ids:
///   echo                 reference query for each corpus question
///   mock:<transcript>    scripted replay of a JSON/JSONL transcript
///   openai:<model>       OpenAI-compatible chat API (QUARRY_LLM_BASE_URL, QUARRY_LLM_API_KEY)
///   <model>              same as openai:<model>
std::shared_ptr<qa::LlmProvider> make_llm(const std::string& id,
                                          const std::map<std::string, std::string>& references = {});

/// mock[:dim[:seed]] or http:<model>:<dim> (QUARRY_EMBED_BASE_URL, QUARRY_EMBED_API_KEY).
std::shared_ptr<retrieval::EmbeddingProvider> make_embedder(const std::string& id);

/// Loads metadata JSON files, or harvests each endpoint when none are given.
std::vector<harvest::EndpointMetadata> load_or_harvest(const std::vector<std::string>& metadata_files,
                                                       const std::vector<std::string>& endpoint_urls,
                                                       endpoint::SparqlClient& client,
                                                       const harvest::HarvestOptions& options);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::string env_or(const char* name, const std::string& fallback);

}  // namespace quarry::cli
