// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "quarry/endpoint/client.hpp"

namespace quarry::endpoint {

/// Serves registered local stores over the SPARQL 1.1 Protocol on localhost.
/// Used as an offline stand-in for public endpoints.
class SparqlHttpServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::chrono::milliseconds delay{0};
    /// The first N requests fail with HTTP 503.
    int fail_first = 0;
  };

  SparqlHttpServer(std::shared_ptr<const StoreRegistry> registry, Options options);
  SparqlHttpServer(std::shared_ptr<const StoreRegistry> registry);
  ~SparqlHttpServer();
  SparqlHttpServer(const SparqlHttpServer&) = delete;
  SparqlHttpServer& operator=(const SparqlHttpServer&) = delete;

  /// Exposes the store registered under `endpoint_url` at `path`.
  void mount(const std::string& path, const std::string& endpoint_url);

  /// Binds and serves on a background thread. Returns the bound port.
  int start();
  /// Blocks serving on the calling thread.
  void run();
  void stop();

  int port() const;
  /// http://host:port + path
  std::string url(const std::string& path) const;
  std::size_t requests_served() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace quarry::endpoint
