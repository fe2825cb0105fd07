// SPDX-License-Identifier: Apache-2.0
#include "setup.hpp"

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "quarry/errors.hpp"
#include "quarry/store/local_store.hpp"

namespace quarry::cli {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::shared_ptr<endpoint::StoreRegistry> load_stores(const std::vector<std::string>& specs) {
  auto registry = std::make_shared<endpoint::StoreRegistry>();
  for (const auto& spec : specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("store spec must be URL=file.ttl: " + spec);
    auto store = std::make_shared<store::LocalStore>();
    std::stringstream files(spec.substr(eq + 1));
    for (std::string file; std::getline(files, file, ',');) store->load_turtle(read_file(file));
    registry->add(spec.substr(0, eq), store);
  }
  return registry;
}

std::shared_ptr<endpoint::SparqlClient> make_client(const std::vector<std::string>& store_specs,
                                                    const std::vector<std::string>& headers) {
  if (!store_specs.empty()) return std::make_shared<endpoint::LocalSparqlClient>(load_stores(store_specs));
  auto client = std::make_shared<endpoint::HttpSparqlClient>();
  for (const auto& h : headers) {
    auto colon = h.find(':');
    if (colon == std::string::npos) throw ConfigError("header must be Name: value: " + h);
    auto value = h.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    client->set_header(h.substr(0, colon), value);
  }
  return client;
}

std::shared_ptr<qa::LlmProvider> make_llm(const std::string& id, const std::map<std::string, std::string>& references) {
  if (id == "echo") return std::make_shared<qa::EchoReferenceLlm>(references);
  if (id.rfind("mock:", 0) == 0) {
    // Each turn opens with a decompose call; replay the transcript from the top for every turn.
    auto entries = qa::ScriptedLlm::parse_transcript(read_file(id.substr(5)));
    auto replays = std::make_shared<std::map<std::thread::id, std::shared_ptr<qa::ScriptedLlm>>>();
    auto mu = std::make_shared<std::mutex>();
    return std::make_shared<qa::FunctionLlm>(id, [=](const std::string& prompt, const qa::CompletionOptions& o) {
      std::shared_ptr<qa::ScriptedLlm> llm;
      {
        std::lock_guard lock(*mu);
        auto& slot = (*replays)[std::this_thread::get_id()];
        if (!slot || o.purpose == qa::Purpose::decompose) slot = std::make_shared<qa::ScriptedLlm>(entries, id);
        llm = slot;
      }
      return llm->complete(prompt, o);
    });
  }
  std::string model = id.rfind("openai:", 0) == 0 ? id.substr(7) : id;
  if (model.empty()) throw ConfigError("empty model id");
  qa::OpenAiChatLlm::Options o;
  o.base_url = env_or("QUARRY_LLM_BASE_URL", o.base_url);
  o.api_key = env_or("QUARRY_LLM_API_KEY", env_or("OPENAI_API_KEY", ""));
  o.model = model;
  return std::make_shared<qa::OpenAiChatLlm>(o);
}

std::shared_ptr<retrieval::EmbeddingProvider> make_embedder(const std::string& id) {
  std::vector<std::string> parts;
  std::stringstream ss(id);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.empty()) throw ConfigError("empty embedder id");
  if (parts[0] == "mock") {
    std::size_t dim = parts.size() > 1 ? std::stoul(parts[1]) : 256;
    std::uint64_t seed = parts.size() > 2 ? std::stoull(parts[2]) : 1;
    return std::make_shared<retrieval::MockEmbeddingProvider>(dim, seed);
  }
  if (parts[0] == "http" && parts.size() == 3) {
    retrieval::HttpEmbeddingProvider::Options o;
    o.base_url = env_or("QUARRY_EMBED_BASE_URL", env_or("QUARRY_LLM_BASE_URL", "https://api.openai.com/v1"));
    o.api_key = env_or("QUARRY_EMBED_API_KEY", env_or("QUARRY_LLM_API_KEY", env_or("OPENAI_API_KEY", "")));
    o.model = parts[1];
    o.dimension = std::stoul(parts[2]);
    return std::make_shared<retrieval::HttpEmbeddingProvider>(o);
  }
  throw ConfigError("unknown embedder: " + id);
}

std::vector<harvest::EndpointMetadata> load_or_harvest(const std::vector<std::string>& metadata_files,
                                                       const std::vector<std::string>& endpoint_urls,
                                                       endpoint::SparqlClient& client,
                                                       const harvest::HarvestOptions& options) {
  std::vector<harvest::EndpointMetadata> out;
  for (const auto& f : metadata_files) out.push_back(harvest::metadata_from_json(nlohmann::json::parse(read_file(f))));
  if (!out.empty()) return out;
  for (const auto& url : endpoint_urls) out.push_back(harvest::harvest_endpoint(client, harvest::EndpointDescriptor(url), options));
  return out;
}

}  // namespace quarry::cli
