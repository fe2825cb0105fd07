// SPDX-License-Identifier: Apache-2.0
#include "quarry/service/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <set>
#include <sstream>
#include <thread>

#include "quarry/errors.hpp"

namespace quarry::service {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", kind}, {"message", message}}.dump(), "application/json");
}

std::optional<std::string> env(const json& doc, const std::string& key) {
  if (!doc.contains(key)) return std::nullopt;
  const char* v = std::getenv(doc.at(key).get<std::string>().c_str());
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

}  // namespace

// ---------------------------------------------------------------- config

ServiceConfig service_config_from_json(const json& doc) {
  ServiceConfig c;
  try {
    c.host = doc.value("host", c.host);
    c.port = doc.value("port", c.port);
    c.max_concurrent_turns = doc.value("max_concurrent_turns", c.max_concurrent_turns);
    c.http_threads = doc.value("http_threads", c.http_threads);
    c.queue_timeout = std::chrono::milliseconds(doc.value("queue_timeout_ms", c.queue_timeout.count()));
    if (doc.contains("admin_token")) c.admin_token = doc.at("admin_token").get<std::string>();
    if (auto t = env(doc, "admin_token_env")) c.admin_token = t;

    if (doc.contains("pipeline")) {
      const auto& p = doc.at("pipeline");
      c.pipeline.k_examples = p.value("k_examples", c.pipeline.k_examples);
      c.pipeline.k_classes = p.value("k_classes", c.pipeline.k_classes);
      c.pipeline.max_revisions = p.value("max_revisions", c.pipeline.max_revisions);
      c.pipeline.interpret_rows = p.value("interpret_rows", c.pipeline.interpret_rows);
      c.pipeline.limits.max_rows = p.value("max_rows", c.pipeline.limits.max_rows);
      c.pipeline.limits.timeout = std::chrono::milliseconds(p.value("timeout_ms", c.pipeline.limits.timeout.count()));
    }
    c.knowledge.schema_fraction = doc.value("schema_fraction", c.knowledge.schema_fraction);
    if (doc.contains("harvest")) {
      const auto& h = doc.at("harvest");
      c.harvest.preferred_language = h.value("preferred_language", c.harvest.preferred_language);
      c.harvest.sample_limit = h.value("sample_limit", c.harvest.sample_limit);
      if (h.value("void_mode", std::string("sampled")) == "complete") c.harvest.void_mode = harvest::VoidMode::complete;
    }
    if (doc.contains("prices")) {
      c.prices.input_per_token = doc.at("prices").value("input_per_token", 0.0);
      c.prices.output_per_token = doc.at("prices").value("output_per_token", 0.0);
    }
    std::set<std::string> ids;
    for (const auto& d : doc.value("datasets", json::array())) {
      DatasetBinding b;
      b.dataset_id = d.at("id").get<std::string>();
      b.endpoint_url = d.at("endpoint_url").get<std::string>();
      b.label = d.value("label", b.dataset_id);
      if (d.contains("k_examples")) b.k_examples = d.at("k_examples").get<std::size_t>();
      if (d.contains("k_classes")) b.k_classes = d.at("k_classes").get<std::size_t>();
      if (d.contains("schema_fraction")) b.schema_fraction = d.at("schema_fraction").get<double>();
      if (d.contains("max_revisions")) b.max_revisions = d.at("max_revisions").get<std::size_t>();
      if (!ids.insert(b.dataset_id).second) throw ConfigError("duplicate dataset id " + b.dataset_id);
      c.datasets.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid service config: ") + e.what());
  }
  return c;
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  try {
    return service_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- sse

std::string format_sse(const qa::TurnEvent& event, std::size_t id) {
  return "id: " + std::to_string(id) + "\nevent: " + event.type + "\ndata: " + event.payload.dump() + "\n\n";
}

std::vector<qa::TurnEvent> parse_sse(const std::string& stream) {
  std::vector<qa::TurnEvent> out;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    auto end = stream.find("\n\n", pos);
    if (end == std::string::npos) end = stream.size();
    std::istringstream block(stream.substr(pos, end - pos));
    pos = end + 2;
    qa::TurnEvent ev;
    std::string data;
    std::string line;
    while (std::getline(block, line)) {
      if (line.rfind("event: ", 0) == 0) ev.type = line.substr(7);
      if (line.rfind("data: ", 0) == 0) data += line.substr(6);
    }
    if (ev.type.empty()) continue;
    ev.payload = data.empty() ? json(nullptr) : json::parse(data);
    out.push_back(std::move(ev));
  }
  return out;
}

json to_json(const DatasetStatus& s) {
  json j = {{"dataset", s.binding.dataset_id},
            {"endpoint_url", s.binding.endpoint_url},
            {"label", s.binding.label},
            {"indexed", s.indexed},
            {"reindex_in_flight", s.reindex_in_flight},
            {"metadata_status",
             {{"has_examples", s.metadata_status.has_examples},
              {"has_void", s.metadata_status.has_void},
              {"has_description", s.metadata_status.has_description}}},
            {"example_count", s.example_count},
            {"class_count", s.class_count},
            {"item_count", s.item_count},
            {"index_checksum", s.index_checksum},
            {"harvested_at", s.harvested_at},
            {"generation", s.generation}};
  if (s.last_error) j["last_error"] = *s.last_error;
  return j;
}

// ---------------------------------------------------------------- service

struct Snapshot {
  qa::KnowledgeBase kb;
  std::string checksum;
  std::string harvested_at;
  harvest::MetadataStatus metadata_status;
  std::size_t example_count = 0;
  std::uint64_t generation = 0;
};

struct Slot {
  DatasetBinding binding;
  std::shared_ptr<const Snapshot> snapshot;
  bool in_flight = false;
  std::optional<std::string> last_error;
};

struct Service::Impl {
  ServiceConfig config;
  ServiceDependencies deps;
  mutable std::mutex mu;
  std::map<std::string, Slot> slots;
  std::vector<std::thread> workers;
  std::counting_semaphore<> turns;
  httplib::Server server;
  std::thread server_thread;
  int port = -1;

  Impl(ServiceConfig c, ServiceDependencies d)
      : config(std::move(c)), deps(std::move(d)), turns(static_cast<std::ptrdiff_t>(config.max_concurrent_turns)) {}

  void log(json line) {
    if (!deps.log) return;
    line["ts"] = harvest::utc_timestamp();
    deps.log(line);
  }

  std::shared_ptr<const Snapshot> build(const DatasetBinding& b, harvest::EndpointMetadata metadata,
                                        std::uint64_t generation) {
    auto opts = config.knowledge;
    if (b.schema_fraction) opts.schema_fraction = *b.schema_fraction;
    auto snap = std::make_shared<Snapshot>();
    snap->harvested_at = metadata.harvested_at;
    snap->metadata_status = metadata.endpoint.metadata_status;
    snap->example_count = metadata.examples.examples.size();
    snap->kb = qa::build_knowledge_base({std::move(metadata)}, *deps.embedder, opts);
    snap->checksum = snap->kb.index.checksum();
    snap->generation = generation;
    return snap;
  }

  harvest::EndpointMetadata harvest_binding(const DatasetBinding& b) {
    return harvest::harvest_endpoint(*deps.client, harvest::EndpointDescriptor(b.endpoint_url, b.label),
                                     config.harvest);
  }

  void swap_in(const std::string& id, harvest::EndpointMetadata metadata) {
    DatasetBinding binding;
    std::uint64_t generation;
    {
      std::lock_guard lock(mu);
      auto& slot = slots.at(id);
      binding = slot.binding;
      generation = slot.snapshot ? slot.snapshot->generation + 1 : 1;
    }
    auto snap = build(binding, std::move(metadata), generation);
    std::lock_guard lock(mu);
    auto& slot = slots.at(id);
    slot.snapshot = std::move(snap);
    slot.last_error.reset();
  }

  DatasetStatus status_of(const Slot& slot) const {
    DatasetStatus s;
    s.binding = slot.binding;
    s.reindex_in_flight = slot.in_flight;
    s.last_error = slot.last_error;
    if (const auto& snap = slot.snapshot) {
      s.indexed = true;
      s.metadata_status = snap->metadata_status;
      s.example_count = snap->example_count;
      s.class_count = snap->kb.index.count(retrieval::ItemKind::schema_class);
      s.item_count = snap->kb.index.size();
      s.index_checksum = snap->checksum;
      s.harvested_at = snap->harvested_at;
      s.generation = snap->generation;
    }
    return s;
  }

  struct TurnRequest {
    DatasetBinding binding;
    std::shared_ptr<const Snapshot> snapshot;
  };

  /// Shared precondition checks for /ask and /chat. Fills `res` on failure.
  std::optional<TurnRequest> admit(const std::string& dataset, const std::string& question,
                                   httplib::Response& res) {
    if (dataset.empty()) {
      send_error(res, 400, "missing_parameter", "the dataset parameter is required");
      return std::nullopt;
    }
    TurnRequest tr;
    {
      std::lock_guard lock(mu);
      auto it = slots.find(dataset);
      if (it == slots.end()) {
        send_error(res, 404, "unknown_dataset", "no dataset registered as '" + dataset + "'");
        return std::nullopt;
      }
      tr.binding = it->second.binding;
      tr.snapshot = it->second.snapshot;
    }
    if (trim(question).empty()) {
      send_error(res, 400, "empty_question", "the question parameter must not be empty");
      return std::nullopt;
    }
    if (!tr.snapshot) {
      send_error(res, 503, "not_indexed", "dataset '" + dataset + "' is not indexed yet");
      res.set_header("Retry-After", "5");
      return std::nullopt;
    }
    return tr;
  }

  bool acquire_turn(httplib::Response& res) {
    if (turns.try_acquire_for(config.queue_timeout)) return true;
    send_error(res, 429, "busy", "too many concurrent questions");
    res.set_header("Retry-After", "1");
    return false;
  }

  qa::PipelineConfig pipeline_for(const DatasetBinding& b) const {
    auto p = config.pipeline;
    if (b.k_examples) p.k_examples = *b.k_examples;
    if (b.k_classes) p.k_classes = *b.k_classes;
    if (b.max_revisions) p.max_revisions = *b.max_revisions;
    p.endpoint_override = b.endpoint_url;
    return p;
  }

  void log_turn(const std::string& route, const TurnRequest& tr, const qa::ConversationTurn& turn) {
    double cost = static_cast<double>(turn.accounting.input_tokens) * config.prices.input_per_token +
                  static_cast<double>(turn.accounting.output_tokens) * config.prices.output_per_token;
    json line = {{"route", route},
                 {"dataset", tr.binding.dataset_id},
                 {"question", turn.question},
                 {"ok", !turn.error},
                 {"attempts", turn.attempts.size()},
                 {"fallback", turn.fallback},
                 {"llm_calls", turn.accounting.llm_calls},
                 {"input_tokens", turn.accounting.input_tokens},
                 {"output_tokens", turn.accounting.output_tokens},
                 {"wall_ms", turn.accounting.wall_ms},
                 {"cost", cost},
                 {"index_checksum", tr.snapshot->checksum}};
    if (turn.error) line["error"] = turn.error->kind;
    log(std::move(line));
  }

  void handle_ask(const httplib::Request& req, httplib::Response& res) {
    auto dataset = req.get_param_value("dataset");
    auto question = req.get_param_value("question");
    auto tr = admit(dataset, question, res);
    if (!tr || !acquire_turn(res)) return;
    auto p = pipeline_for(tr->binding);
    p.execute = false;
    p.interpret = false;
    qa::Resources r{*deps.llm, *deps.embedder, tr->snapshot->kb.index, tr->snapshot->kb.schemas, *deps.client};
    auto lang = req.has_param("lang") ? req.get_param_value("lang") : std::string("und");
    std::shared_ptr<void> release(nullptr, [this](void*) { turns.release(); });
    auto turn = qa::answer(question, lang, p, r);
    log_turn("/v1/ask", *tr, turn);
    res.set_header("X-Index-Checksum", tr->snapshot->checksum);
    res.set_content(json{{"dataset", dataset}, {"question", question}, {"query", turn.final_query.value_or("")}}.dump(),
                    "application/json");
  }

  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send_error(res, 400, "invalid_body", e.what());
      return;
    }
    if (!body.is_object()) {
      send_error(res, 400, "invalid_body", "expected a JSON object");
      return;
    }
    auto dataset = body.value("dataset", std::string());
    auto question = body.value("question", std::string());
    auto lang = body.value("language", std::string("und"));
    auto tr = admit(dataset, question, res);
    if (!tr || !acquire_turn(res)) return;

    auto release = std::shared_ptr<void>(nullptr, [this](void*) { turns.release(); });
    auto pipeline = pipeline_for(tr->binding);
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Index-Checksum", tr->snapshot->checksum);
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, tr = *tr, pipeline, question, lang, release](std::size_t, httplib::DataSink& sink) {
          std::size_t id = 0;
          bool open = true;
          qa::Resources r{*deps.llm, *deps.embedder, tr.snapshot->kb.index, tr.snapshot->kb.schemas, *deps.client};
          auto turn = qa::answer(question, lang, pipeline, r, [&](const qa::TurnEvent& ev) {
            if (!open) return;
            auto frame = format_sse(ev, id++);
            open = sink.write(frame.data(), frame.size());
          });
          log_turn("/v1/chat", tr, turn);
          sink.done();
          return true;
        });
  }

  void handle_status(const httplib::Request&, httplib::Response& res) {
    json datasets = json::array();
    bool all = true;
    {
      std::lock_guard lock(mu);
      for (const auto& b : config.datasets) {
        auto s = status_of(slots.at(b.dataset_id));
        all = all && s.indexed;
        datasets.push_back(to_json(s));
      }
    }
    res.status = all ? 200 : 503;
    res.set_content(json{{"indexed", all}, {"datasets", datasets}}.dump(), "application/json");
  }

  void handle_reindex(const httplib::Request& req, httplib::Response& res, Service& owner) {
    auto auth = req.get_header_value("Authorization");
    if (!config.admin_token || config.admin_token->empty() || auth != "Bearer " + *config.admin_token) {
      res.set_header("WWW-Authenticate", "Bearer");
      send_error(res, 401, "unauthorized", "a valid admin bearer token is required");
      return;
    }
    std::string dataset;
    try {
      dataset = json::parse(req.body).value("dataset", std::string());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid_body", e.what());
      return;
    }
    switch (owner.reindex(dataset)) {
      case ReindexResult::unknown_dataset:
        send_error(res, 404, "unknown_dataset", "no dataset registered as '" + dataset + "'");
        return;
      case ReindexResult::in_flight:
        send_error(res, 409, "reindex_in_flight", "a reindex of '" + dataset + "' is already running");
        return;
      case ReindexResult::accepted:
        res.status = 202;
        res.set_content(json{{"dataset", dataset}, {"status", "accepted"}}.dump(), "application/json");
    }
  }
};

Service::Service(ServiceConfig config, ServiceDependencies deps)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(deps))) {
  if (!impl_->deps.llm || !impl_->deps.embedder || !impl_->deps.client) {
    throw ConfigError("service needs an LLM provider, an embedding provider and a SPARQL client");
  }
  for (const auto& b : impl_->config.datasets) {
    if (impl_->slots.count(b.dataset_id)) throw ConfigError("duplicate dataset id " + b.dataset_id);
    impl_->slots[b.dataset_id].binding = b;
  }

  auto& s = impl_->server;
  auto threads = impl_->config.http_threads;
  s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  s.Get("/v1/ask", [this](const httplib::Request& req, httplib::Response& res) { impl_->handle_ask(req, res); });
  s.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) { impl_->handle_chat(req, res); });
  s.Get("/v1/status", [this](const httplib::Request& req, httplib::Response& res) { impl_->handle_status(req, res); });
  s.Post("/v1/admin/reindex", [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle_reindex(req, res, *this);
  });
  s.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"ok":true})", "application/json");
  });
}

Service::~Service() {
  stop();
  wait_for_reindex();
}

void Service::index_all() {
  for (const auto& b : impl_->config.datasets) {
    try {
      impl_->swap_in(b.dataset_id, impl_->harvest_binding(b));
    } catch (const std::exception& e) {
      std::lock_guard lock(impl_->mu);
      impl_->slots.at(b.dataset_id).last_error = e.what();
    }
  }
}

void Service::install(const std::string& dataset_id, harvest::EndpointMetadata metadata) {
  {
    std::lock_guard lock(impl_->mu);
    if (!impl_->slots.count(dataset_id)) throw ConfigError("unknown dataset " + dataset_id);
  }
  impl_->swap_in(dataset_id, std::move(metadata));
}

ReindexResult Service::reindex(const std::string& dataset_id) {
  DatasetBinding binding;
  {
    std::lock_guard lock(impl_->mu);
    auto it = impl_->slots.find(dataset_id);
    if (it == impl_->slots.end()) return ReindexResult::unknown_dataset;
    if (it->second.in_flight) return ReindexResult::in_flight;
    it->second.in_flight = true;
    binding = it->second.binding;
    impl_->workers.emplace_back([this, binding] {
      json line = {{"route", "/v1/admin/reindex"}, {"dataset", binding.dataset_id}};
      try {
        impl_->swap_in(binding.dataset_id, impl_->harvest_binding(binding));
        line["ok"] = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(impl_->mu);
        impl_->slots.at(binding.dataset_id).last_error = e.what();
        line["ok"] = false;
        line["error"] = e.what();
      }
      {
        std::lock_guard lock(impl_->mu);
        impl_->slots.at(binding.dataset_id).in_flight = false;
      }
      impl_->log(std::move(line));
    });
  }
  return ReindexResult::accepted;
}

void Service::wait_for_reindex() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(impl_->mu);
    workers.swap(impl_->workers);
  }
  for (auto& t : workers) t.join();
}

std::vector<DatasetStatus> Service::status() const {
  std::lock_guard lock(impl_->mu);
  std::vector<DatasetStatus> out;
  for (const auto& b : impl_->config.datasets) out.push_back(impl_->status_of(impl_->slots.at(b.dataset_id)));
  return out;
}

std::optional<DatasetStatus> Service::status(const std::string& dataset_id) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->slots.find(dataset_id);
  if (it == impl_->slots.end()) return std::nullopt;
  return impl_->status_of(it->second);
}

int Service::start() {
  auto& i = *impl_;
  i.port = i.config.port == 0 ? i.server.bind_to_any_port(i.config.host)
                              : (i.server.bind_to_port(i.config.host, i.config.port) ? i.config.port : -1);
  if (i.port < 0) throw ConfigError("cannot bind " + i.config.host + ":" + std::to_string(i.config.port));
  i.server_thread = std::thread([&i] { i.server.listen_after_bind(); });
  i.server.wait_until_ready();
  return i.port;
}

void Service::run() {
  auto& i = *impl_;
  if (i.port < 0) {
    i.port = i.config.port == 0 ? i.server.bind_to_any_port(i.config.host)
                                : (i.server.bind_to_port(i.config.host, i.config.port) ? i.config.port : -1);
    if (i.port < 0) throw ConfigError("cannot bind " + i.config.host + ":" + std::to_string(i.config.port));
  }
  i.server.listen_after_bind();
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

int Service::port() const { return impl_->port; }

std::string Service::url(const std::string& path) const {
  return "http://" + impl_->config.host + ":" + std::to_string(impl_->port) + path;
}

}  // namespace quarry::service
