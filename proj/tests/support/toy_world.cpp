// SPDX-License-Identifier: Apache-2.0
#include "toy_world.hpp"

#include "fixtures.hpp"

namespace quarry::testing {

std::shared_ptr<endpoint::StoreRegistry> toy_registry() {
  auto reg = std::make_shared<endpoint::StoreRegistry>();
  auto store = std::make_shared<store::LocalStore>();
  store->load_turtle(read_fixture("data/toy.ttl"));
  store->load_turtle(read_fixture("endpoints/toy_metadata.ttl"));
  reg->add(kToyEndpoint, store);
  return reg;
}

std::shared_ptr<store::LocalStore> example_catalog_store(const std::string& endpoint_url, std::size_t n) {
  static const char* topics[] = {"proteins", "genes", "taxa", "reactions", "diseases", "enzymes"};
  static const char* classes[] = {"Protein", "Gene", "Taxon", "Reaction", "Disease_Annotation", "Enzyme"};
  std::string ttl =
      "@prefix sh: <http://www.w3.org/ns/shacl#> .\n"
      "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
      "@prefix schema: <https://schema.org/> .\n";
  for (std::size_t i = 1; i <= n; ++i) {
    auto t = (i - 1) % 6;
    ttl += "<" + endpoint_url + "/examples/" + std::to_string(i) + "> a sh:SPARQLExecutable ;\n"
           "  rdfs:comment \"List " + topics[t] + " number " + std::to_string(i) + "\"@en ;\n"
           "  sh:select \"SELECT ?x WHERE { ?x a <http://purl.uniprot.org/core/" + classes[t] + "> } LIMIT " +
           std::to_string(i) + "\" ;\n"
           "  schema:target <" + endpoint_url + "> .\n";
  }
  auto store = std::make_shared<store::LocalStore>();
  store->load_turtle(read_fixture("data/toy.ttl"));
  store->load_turtle(ttl);
  return store;
}

ToyWorld::ToyWorld() : registry(toy_registry()), client(registry) {
  harvest::HarvestOptions opts;
  opts.void_mode = harvest::VoidMode::complete;
  auto metadata = harvest::harvest_endpoint(client, harvest::EndpointDescriptor(kToyEndpoint, "Toy"), opts);
  kb = qa::build_knowledge_base({metadata}, embedder);
}

}  // namespace quarry::testing
