// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace quarry {

/// Bidirectional prefix ↔ namespace table used to render IRIs compactly.
class PrefixMap {
 public:
  PrefixMap() = default;

  /// rdf, rdfs, xsd, owl plus namespaces common in the life-science and
  /// encyclopedic knowledge graphs this engine targets.
  static const PrefixMap& well_known();

  void add(std::string prefix, std::string ns);
  void merge(const PrefixMap& other);

  /// `p:local` for the longest matching namespace whose remainder is a valid
  /// local name, otherwise nullopt.
  std::optional<std::string> compact(std::string_view iri) const;

  /// Compact form, or `<iri>` when no namespace applies.
  std::string render(std::string_view iri) const;

  std::optional<std::string> expand(std::string_view prefixed) const;

  const std::map<std::string, std::string>& entries() const { return by_prefix_; }

 private:
  std::map<std::string, std::string> by_prefix_;
  std::map<std::string, std::string> by_namespace_;
};

bool is_simple_local_name(std::string_view local);

}  // namespace quarry
