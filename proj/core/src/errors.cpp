// SPDX-License-Identifier: Apache-2.0
#include "quarry/errors.hpp"

#include <sstream>

namespace quarry {

namespace {

std::string syntax_what(std::size_t line, std::size_t column,
                        const std::string& message) {
  std::ostringstream out;
  out << "SPARQL syntax error at line " << line << ", column " << column
      << ": " << message;
  return out.str();
}

const char* metadata_label(MetadataMissing::Kind kind) {
  switch (kind) {
    case MetadataMissing::Kind::examples:
      return "example queries";
    case MetadataMissing::Kind::void_description:
      return "a VoID description";
    case MetadataMissing::Kind::description:
      return "a self-description";
  }
  return "metadata";
}

}  // namespace

SyntaxError::SyntaxError(std::size_t offset, std::size_t line,
                         std::size_t column, std::string message)
    : Error(syntax_what(line, column, message)),
      offset_(offset),
      line_(line),
      column_(column),
      detail_(std::move(message)) {}

ExecutionError::ExecutionError(std::string endpoint, int http_status,
                               std::string message)
    : Error("query execution failed at " + endpoint + ": " + message),
      endpoint_(std::move(endpoint)),
      http_status_(http_status),
      detail_(std::move(message)) {}

MetadataMissing::MetadataMissing(std::string endpoint, Kind kind)
    : Error("endpoint " + endpoint + " does not publish " +
            metadata_label(kind)),
      kind_(kind) {}

InvalidFraction::InvalidFraction(double fraction)
    : Error("schema fraction must lie in (0, 1], got " +
            std::to_string(fraction)) {}

}  // namespace quarry
