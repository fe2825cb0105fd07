// SPDX-License-Identifier: Apache-2.0
#include "quarry/endpoint/client.hpp"

#include <httplib.h>

#include <thread>

#include "quarry/errors.hpp"
#include "quarry/sparql/parser.hpp"

namespace quarry::endpoint {

std::string canonical_url(std::string_view url) {
  while (url.size() > 1 && url.back() == '/') url.remove_suffix(1);
  return std::string(url);
}

void StoreRegistry::add(const std::string& endpoint_url, std::shared_ptr<store::LocalStore> store) {
  store->set_service_resolver([this](const std::string& url) -> const store::LocalStore* {
    return find(url).get();
  });
  std::unique_lock lock(mu_);
  stores_[canonical_url(endpoint_url)] = std::move(store);
}

std::shared_ptr<const store::LocalStore> StoreRegistry::find(const std::string& endpoint_url) const {
  std::shared_lock lock(mu_);
  auto it = stores_.find(canonical_url(endpoint_url));
  return it == stores_.end() ? nullptr : it->second;
}

std::vector<std::string> StoreRegistry::urls() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [url, store] : stores_) out.push_back(url);
  return out;
}

LocalSparqlClient::LocalSparqlClient(std::shared_ptr<const StoreRegistry> registry)
    : registry_(std::move(registry)) {}

ResultSet LocalSparqlClient::execute(const std::string& endpoint_url, const std::string& sparql,
                                     const RequestOptions&) {
  auto store = registry_->find(endpoint_url);
  if (!store) throw EndpointUnreachable(endpoint_url, "no endpoint registered at " + endpoint_url);
  try {
    return store->query(sparql);
  } catch (const SyntaxError& e) {
    throw ExecutionError(endpoint_url, 400, e.what());
  }
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw EndpointUnreachable(url, "not an absolute URL: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

ResultSet rows_from_ntriples(const std::string& body) {
  ResultSet rs;
  rs.variables = {"subject", "predicate", "object"};
  for (const auto& q : sparql::parse_turtle(body)) {
    rs.rows.push_back({{"subject", q.subject}, {"predicate", q.predicate}, {"object", q.object}});
  }
  return rs;
}

}  // namespace

HttpSparqlClient::HttpSparqlClient() = default;

void HttpSparqlClient::set_header(const std::string& name, const std::string& value) {
  headers_[name] = value;
}

ResultSet HttpSparqlClient::execute(const std::string& endpoint_url, const std::string& sparql,
                                    const RequestOptions& options) {
  const SplitUrl target = split_url(endpoint_url);
  httplib::Headers headers = {
      {"Accept", "application/sparql-results+json, application/n-triples;q=0.9"}};
  for (const auto& [k, v] : headers_) headers.emplace(k, v);

  auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - timeout_s);

  std::string last_error;
  int last_status = 0;
  auto backoff = options.backoff;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(target.origin);
    cli.set_connection_timeout(timeout_s.count(), timeout_us.count());
    cli.set_read_timeout(timeout_s.count(), timeout_us.count());
    cli.set_write_timeout(timeout_s.count(), timeout_us.count());
    cli.set_follow_location(true);

    const auto started = std::chrono::steady_clock::now();
    httplib::Result res = cli.Post(target.path, headers, httplib::Params{{"query", sparql}});
    if (!res) {
      auto elapsed = std::chrono::steady_clock::now() - started;
      if (res.error() == httplib::Error::Read && elapsed >= options.timeout) {
        throw QueryTimeout(endpoint_url, "query timed out after " +
                                             std::to_string(options.timeout.count()) + " ms");
      }
      last_status = 0;
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (retryable(res->status)) {
      last_status = res->status;
      last_error = res->body;
      continue;
    }
    if (res->status != 200) {
      throw ExecutionError(endpoint_url, res->status,
                           "endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    const std::string type = res->get_header_value("Content-Type");
    try {
      if (type.find("json") != std::string::npos) {
        return from_sparql_json(nlohmann::json::parse(res->body));
      }
      if (type.find("n-triples") != std::string::npos || type.find("turtle") != std::string::npos) {
        return rows_from_ntriples(res->body);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ExecutionError(endpoint_url, res->status, std::string("invalid JSON results: ") + e.what());
    } catch (const SyntaxError& e) {
      throw ExecutionError(endpoint_url, res->status, std::string("invalid RDF response: ") + e.what());
    }
    throw ExecutionError(endpoint_url, res->status, "unsupported response type '" + type + "'");
  }
  if (last_status == 0) {
    throw EndpointUnreachable(endpoint_url, "cannot reach " + endpoint_url + ": " + last_error);
  }
  throw ExecutionError(endpoint_url, last_status,
                       "endpoint returned HTTP " + std::to_string(last_status) + " after " +
                           std::to_string(options.retries + 1) + " attempts: " + last_error);
}

}  // namespace quarry::endpoint
