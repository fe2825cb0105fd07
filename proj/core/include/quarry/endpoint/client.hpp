// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>

#include "quarry/results.hpp"
#include "quarry/store/local_store.hpp"

namespace quarry::endpoint {

struct RequestOptions {
  std::chrono::milliseconds timeout{60'000};
  int retries = 3;
  std::chrono::milliseconds backoff{250};
};

/// Executes SPARQL queries against endpoints identified by URL.
///
/// SELECT and ASK return the decoded result set. CONSTRUCT returns rows
/// with the variables subject, predicate and object.
class SparqlClient {
 public:
  virtual ~SparqlClient() = default;

  ResultSet query(const std::string& endpoint_url, const std::string& sparql) {
    return query(endpoint_url, sparql, defaults_);
  }
  ResultSet query(const std::string& endpoint_url, const std::string& sparql,
                  const RequestOptions& options) {
    ++issued_;
    return execute(endpoint_url, sparql, options);
  }

  void set_defaults(const RequestOptions& options) { defaults_ = options; }
  const RequestOptions& defaults() const { return defaults_; }

  /// Number of queries issued since construction, retries not included.
  std::size_t queries_issued() const { return issued_.load(); }

 protected:
  virtual ResultSet execute(const std::string& endpoint_url, const std::string& sparql,
                            const RequestOptions& options) = 0;

 private:
  RequestOptions defaults_;
  std::atomic<std::size_t> issued_{0};
};

/// In-process endpoints keyed by URL. SERVICE clauses inside one store
/// resolve to the other registered stores.
class StoreRegistry {
 public:
  StoreRegistry() = default;
  StoreRegistry(const StoreRegistry&) = delete;
  StoreRegistry& operator=(const StoreRegistry&) = delete;

  void add(const std::string& endpoint_url, std::shared_ptr<store::LocalStore> store);
  std::shared_ptr<const store::LocalStore> find(const std::string& endpoint_url) const;
  std::vector<std::string> urls() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<store::LocalStore>> stores_;
};

/// Normalizes an endpoint URL for lookups: trailing slashes are ignored.
std::string canonical_url(std::string_view url);

class LocalSparqlClient : public SparqlClient {
 public:
  explicit LocalSparqlClient(std::shared_ptr<const StoreRegistry> registry);

 protected:
  ResultSet execute(const std::string& endpoint_url, const std::string& sparql,
                    const RequestOptions& options) override;

 private:
  std::shared_ptr<const StoreRegistry> registry_;
};

/// SPARQL 1.1 Protocol client. Requests SPARQL JSON results, retries
/// transport errors, 429 and 5xx responses with exponential backoff.
class HttpSparqlClient : public SparqlClient {
 public:
  HttpSparqlClient();
  /// Extra headers sent with every request (for example Authorization).
  void set_header(const std::string& name, const std::string& value);

 protected:
  ResultSet execute(const std::string& endpoint_url, const std::string& sparql,
                    const RequestOptions& options) override;

 private:
  std::map<std::string, std::string> headers_;
};

}  // namespace quarry::endpoint
