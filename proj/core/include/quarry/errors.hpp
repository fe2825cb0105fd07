// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace quarry {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed SPARQL (or Turtle) text. The message is written so that it can
/// be pasted verbatim into an LLM repair prompt.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::size_t line, std::size_t column,
              std::string message);

  std::size_t offset() const noexcept { return offset_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t offset_;
  std::size_t line_;
  std::size_t column_;
  std::string detail_;
};

/// A query could not be executed against an endpoint.
/// `http_status` is the HTTP status code, 0 for transport failures and -1 for
/// timeouts.
class ExecutionError : public Error {
 public:
  ExecutionError(std::string endpoint, int http_status, std::string message);

  const std::string& endpoint() const noexcept { return endpoint_; }
  int http_status() const noexcept { return http_status_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string endpoint_;
  int http_status_;
  std::string detail_;
};

class EndpointUnreachable : public ExecutionError {
 public:
  EndpointUnreachable(std::string endpoint, std::string message)
      : ExecutionError(std::move(endpoint), 0, std::move(message)) {}
};

class QueryTimeout : public ExecutionError {
 public:
  QueryTimeout(std::string endpoint, std::string message)
      : ExecutionError(std::move(endpoint), -1, std::move(message)) {}
};

/// The endpoint answers but does not publish the requested metadata.
class MetadataMissing : public Error {
 public:
  enum class Kind { examples, void_description, description };
  MetadataMissing(std::string endpoint, Kind kind);
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class InvalidFraction : public Error {
 public:
  explicit InvalidFraction(double fraction);
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

/// The scripted LLM ran out of transcript entries.
class TranscriptExhausted : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ProviderMismatch : public Error {
 public:
  using Error::Error;
};

class IndexFormatError : public Error {
 public:
  using Error::Error;
};

class NoQueryProduced : public Error {
 public:
  using Error::Error;
};

class InvalidK : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace quarry
