// SPDX-License-Identifier: Apache-2.0
#include "quarry/endpoint/server.hpp"

#include <httplib.h>

#include <atomic>
#include <map>
#include <thread>

#include "quarry/errors.hpp"
#include "quarry/sparql/parser.hpp"

namespace quarry::endpoint {

struct SparqlHttpServer::Impl {
  std::shared_ptr<const StoreRegistry> registry;
  Options options;
  httplib::Server server;
  std::map<std::string, std::string> mounts;
  std::thread thread;
  int port = -1;
  std::atomic<int> failures_left{0};
  std::atomic<std::size_t> served{0};

  void handle(const std::string& endpoint_url, const httplib::Request& req, httplib::Response& res) {
    ++served;
    if (options.delay.count() > 0) std::this_thread::sleep_for(options.delay);
    if (failures_left.fetch_sub(1) > 0) {
      res.status = 503;
      res.set_content("temporarily unavailable", "text/plain");
      return;
    }
    std::string text;
    if (req.has_param("query")) {
      text = req.get_param_value("query");
    } else if (req.get_header_value("Content-Type").rfind("application/sparql-query", 0) == 0) {
      text = req.body;
    } else {
      res.status = 400;
      res.set_content("missing 'query' parameter", "text/plain");
      return;
    }
    auto store = registry->find(endpoint_url);
    if (!store) {
      res.status = 404;
      return;
    }
    try {
      auto parsed = sparql::parse_query(text);
      ResultSet rs = store->query(parsed);
      if (parsed.query_type == sparql::QueryType::construct) {
        std::string body;
        for (const auto& row : rs.rows) {
          body += row.at("subject").to_string() + " " + row.at("predicate").to_string() + " " +
                  row.at("object").to_string() + " .\n";
        }
        res.set_content(body, "application/n-triples");
        return;
      }
      res.set_content(to_sparql_json(rs).dump(), "application/sparql-results+json");
    } catch (const SyntaxError& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    } catch (const ExecutionError& e) {
      res.status = e.http_status() > 0 ? e.http_status() : 502;
      res.set_content(e.what(), "text/plain");
    }
  }
};

SparqlHttpServer::SparqlHttpServer(std::shared_ptr<const StoreRegistry> registry, Options options)
    : impl_(std::make_unique<Impl>()) {
  impl_->registry = std::move(registry);
  impl_->options = std::move(options);
  impl_->failures_left = impl_->options.fail_first;
}

SparqlHttpServer::SparqlHttpServer(std::shared_ptr<const StoreRegistry> registry)
    : SparqlHttpServer(std::move(registry), Options{}) {}

SparqlHttpServer::~SparqlHttpServer() { stop(); }

void SparqlHttpServer::mount(const std::string& path, const std::string& endpoint_url) {
  impl_->mounts[path] = endpoint_url;
  auto handler = [impl = impl_.get(), endpoint_url](const httplib::Request& req,
                                                     httplib::Response& res) {
    impl->handle(endpoint_url, req, res);
  };
  impl_->server.Get(path, handler);
  impl_->server.Post(path, handler);
}

int SparqlHttpServer::start() {
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else {
    impl_->port = impl_->server.bind_to_port(impl_->options.host, impl_->options.port)
                      ? impl_->options.port
                      : -1;
  }
  if (impl_->port < 0) {
    throw ConfigError("cannot bind " + impl_->options.host + ":" +
                      std::to_string(impl_->options.port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void SparqlHttpServer::run() {
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
    impl_->port = impl_->options.port;
  }
  if (impl_->port < 0) throw ConfigError("cannot bind " + impl_->options.host);
  impl_->server.listen_after_bind();
}

void SparqlHttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int SparqlHttpServer::port() const { return impl_->port; }

std::string SparqlHttpServer::url(const std::string& path) const {
  return "http://" + impl_->options.host + ":" + std::to_string(impl_->port) + path;
}

std::size_t SparqlHttpServer::requests_served() const { return impl_->served.load(); }

}  // namespace quarry::endpoint
