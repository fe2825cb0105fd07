// SPDX-License-Identifier: Apache-2.0
#include "quarry/harvest/harvest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <future>
#include <map>
#include <set>

#include "quarry/errors.hpp"
#include "quarry/sparql/parser.hpp"

namespace quarry::harvest {

using endpoint::SparqlClient;

namespace {

const std::string kPrologue =
    "PREFIX sh: <http://www.w3.org/ns/shacl#>\n"
    "PREFIX void: <http://rdfs.org/ns/void#>\n"
    "PREFIX void-ext: <http://ldf.fi/void-ext#>\n"
    "PREFIX sd: <http://www.w3.org/ns/sparql-service-description#>\n"
    "PREFIX schema: <https://schema.org/>\n"
    "PREFIX schemah: <http://schema.org/>\n"
    "PREFIX dct: <http://purl.org/dc/terms/>\n";

std::string iri(std::string_view value) { return "<" + std::string(value) + ">"; }

const Term* get(const Binding& row, const std::string& var) {
  auto it = row.find(var);
  return it == row.end() ? nullptr : &it->second;
}

std::uint64_t count_of(const Binding& row, const std::string& var) {
  const Term* t = get(row, var);
  if (!t) return 0;
  try {
    return std::stoull(t->value);
  } catch (const std::exception&) {
    return 0;
  }
}

/// Runs `body` in the default graph, then inside GRAPH ?g when that is empty.
ResultSet query_metadata(SparqlClient& client, const std::string& url, const std::string& select,
                         const std::string& body, const std::string& tail,
                         const HarvestOptions& options) {
  auto rs = client.query(url, kPrologue + select + " WHERE { " + body + " } " + tail,
                         options.request);
  if (!rs.rows.empty()) return rs;
  return client.query(url, kPrologue + select + " WHERE { GRAPH ?graph { " + body + " } } " + tail,
                      options.request);
}

/// Preferred language, then smallest tag, then smallest text.
struct LanguageRank {
  const std::string& preferred;
  bool operator()(const Term& a, const Term& b) const {
    bool pa = a.language == preferred;
    bool pb = b.language == preferred;
    if (pa != pb) return pa;
    if (a.language != b.language) return a.language < b.language;
    return a.value < b.value;
  }
};

}  // namespace

EndpointDescriptor::EndpointDescriptor(std::string url, std::string label_)
    : endpoint_url(std::move(url)), label(std::move(label_)) {
  auto scheme = endpoint_url.find("://");
  bool ok = scheme != std::string::npos && scheme > 0 && endpoint_url.size() > scheme + 3;
  if (ok) {
    std::string s = endpoint_url.substr(0, scheme);
    ok = s == "http" || s == "https";
  }
  if (!ok) throw ConfigError("endpoint URL must be an absolute http(s) IRI: '" + endpoint_url + "'");
}

void analyse_example(QueryExample& example) {
  sparql::ParseOptions opts;
  opts.extra_prefixes = example.declared_prefixes;
  example.parsed = sparql::parse_query(example.sparql, opts);
  example.service_endpoints.clear();
  for (const auto& g : example.parsed->pattern_groups) {
    if (!g.service_endpoint) continue;
    const auto& url = *g.service_endpoint;
    if (std::find(example.service_endpoints.begin(), example.service_endpoints.end(), url) ==
        example.service_endpoints.end()) {
      example.service_endpoints.push_back(url);
    }
  }
  example.is_federated = example.parsed->pattern_groups.size() > 1;
}

ExampleHarvest fetch_examples(SparqlClient& client, EndpointDescriptor& endpoint,
                              const HarvestOptions& options) {
  const std::string& url = endpoint.endpoint_url;
  auto rows = query_metadata(
      client, url, "SELECT ?ex ?query ?question",
      "?ex sh:select|sh:ask|sh:construct|sh:describe ?query . ?ex rdfs:comment ?question .", "",
      options);
  auto prefix_rows = query_metadata(
      client, url, "SELECT ?ex ?prefix ?namespace",
      "?ex sh:prefixes ?set . ?set sh:declare ?decl . ?decl sh:prefix ?prefix ; sh:namespace ?namespace .",
      "", options);

  struct Candidate {
    std::string query;
    std::vector<Term> questions;
  };
  std::map<std::string, Candidate> by_id;
  for (const auto& row : rows.rows) {
    const Term* ex = get(row, "ex");
    const Term* query = get(row, "query");
    const Term* question = get(row, "question");
    if (!ex || !query || !question) continue;
    auto& c = by_id[ex->value];
    if (c.query.empty() || query->value < c.query) c.query = query->value;
    if (std::find(c.questions.begin(), c.questions.end(), *question) == c.questions.end()) {
      c.questions.push_back(*question);
    }
  }
  std::map<std::string, std::map<std::string, std::string>> prefixes;
  for (const auto& row : prefix_rows.rows) {
    const Term* ex = get(row, "ex");
    const Term* prefix = get(row, "prefix");
    const Term* ns_ = get(row, "namespace");
    if (ex && prefix && ns_) prefixes[ex->value].emplace(prefix->value, ns_->value);
  }

  ExampleHarvest out;
  for (auto& [id, c] : by_id) {
    QueryExample ex;
    ex.id = id;
    ex.endpoint_url = url;
    ex.sparql = c.query;
    std::sort(c.questions.begin(), c.questions.end(), LanguageRank{options.preferred_language});
    ex.question = c.questions.front().value;
    ex.language_tag = c.questions.front().language.empty() ? "und" : c.questions.front().language;
    if (auto it = prefixes.find(id); it != prefixes.end()) ex.declared_prefixes = it->second;

    if (ex.question.empty() || ex.sparql.empty()) {
      out.quarantined.push_back({ex, ex.sparql.empty() ? "empty SPARQL text" : "empty question", 0, 0});
      continue;
    }
    try {
      analyse_example(ex);
      out.examples.push_back(std::move(ex));
    } catch (const SyntaxError& e) {
      QuarantinedExample q{ex, e.what(), e.line(), e.column()};
      q.example.parsed.reset();
      out.quarantined.push_back(std::move(q));
    }
  }
  endpoint.metadata_status.has_examples = !out.examples.empty() || !out.quarantined.empty();
  if (options.strict && !endpoint.metadata_status.has_examples) {
    throw MetadataMissing(url, MetadataMissing::Kind::examples);
  }
  return out;
}

std::vector<RawVoidRecord> fetch_void(SparqlClient& client, EndpointDescriptor& endpoint,
                                      const HarvestOptions& options) {
  const std::string body =
      "?cp void:class ?cls ; void:propertyPartition ?pp . "
      "OPTIONAL { ?cp void:entities ?entities } "
      "?pp void:property ?prop . "
      "OPTIONAL { ?pp void:triples ?ptriples } "
      "OPTIONAL { "
      "  { ?pp void:classPartition ?ocp . ?ocp void:class ?ocls . "
      "    OPTIONAL { ?ocp void:triples ?otriples } } "
      "  UNION "
      "  { ?pp void-ext:datatypePartition ?dtp . ?dtp void-ext:datatype ?dt . "
      "    OPTIONAL { ?dtp void:triples ?dtriples } } "
      "}";
  auto rs = query_metadata(client, endpoint.endpoint_url,
                           "SELECT ?cls ?entities ?pp ?prop ?ptriples ?ocls ?otriples ?dt ?dtriples",
                           body, "", options);

  // Property partitions with typed object partitions do not also get an untyped record.
  std::map<std::string, std::size_t> typed_per_partition;
  for (const auto& row : rs.rows) {
    if (get(row, "ocls") || get(row, "dt")) ++typed_per_partition[get(row, "pp")->to_string()];
  }

  std::map<std::tuple<std::string, std::string, std::optional<std::string>, std::optional<std::string>>,
           RawVoidRecord>
      records;
  for (const auto& row : rs.rows) {
    RawVoidRecord r;
    r.subject_class = get(row, "cls")->value;
    r.predicate = get(row, "prop")->value;
    r.subject_instance_count = count_of(row, "entities");
    const std::size_t typed = typed_per_partition[get(row, "pp")->to_string()];
    if (const Term* o = get(row, "ocls")) {
      r.object_class = o->value;
      r.triple_count = get(row, "otriples") ? count_of(row, "otriples")
                       : typed == 1         ? count_of(row, "ptriples")
                                            : 0;
    } else if (const Term* d = get(row, "dt")) {
      r.object_datatype = d->value;
      r.triple_count = get(row, "dtriples") ? count_of(row, "dtriples")
                       : typed == 1         ? count_of(row, "ptriples")
                                            : 0;
    } else {
      if (typed > 0) continue;
      r.triple_count = count_of(row, "ptriples");
    }
    auto key = std::make_tuple(r.subject_class, r.predicate, r.object_class, r.object_datatype);
    auto [it, inserted] = records.emplace(key, r);
    if (!inserted) {
      it->second.triple_count = std::max(it->second.triple_count, r.triple_count);
      it->second.subject_instance_count =
          std::max(it->second.subject_instance_count, r.subject_instance_count);
    }
  }
  std::vector<RawVoidRecord> out;
  for (auto& [k, r] : records) out.push_back(std::move(r));
  endpoint.metadata_status.has_void = !out.empty();
  if (options.strict && out.empty()) {
    throw MetadataMissing(endpoint.endpoint_url, MetadataMissing::Kind::void_description);
  }
  return out;
}

namespace {

using RecordKey = std::tuple<std::string, std::string, std::optional<std::string>, std::optional<std::string>>;

void accumulate(std::map<RecordKey, RawVoidRecord>& records, const std::string& cls,
                const std::string& predicate, const Binding& row,
                const std::map<std::string, std::uint64_t>& instances) {
  RawVoidRecord r;
  r.subject_class = cls;
  r.predicate = predicate;
  if (const Term* oc = get(row, "oc")) {
    r.object_class = oc->value;
  } else if (const Term* dt = get(row, "dt")) {
    r.object_datatype = dt->value;
  }
  r.triple_count = count_of(row, "n");
  auto inst = instances.find(cls);
  r.subject_instance_count = inst == instances.end() ? 0 : inst->second;
  auto key = std::make_tuple(r.subject_class, r.predicate, r.object_class, r.object_datatype);
  auto [it, inserted] = records.emplace(key, r);
  if (!inserted) it->second.triple_count += r.triple_count;
}

}  // namespace

std::vector<RawVoidRecord> generate_void(SparqlClient& client, const EndpointDescriptor& endpoint,
                                         VoidMode mode, std::size_t sample_limit,
                                         const HarvestOptions& options) {
  if (sample_limit == 0) throw ConfigError("sample_limit must be positive");
  const std::string& url = endpoint.endpoint_url;
  auto run = [&](const std::string& q) { return client.query(url, q, options.request); };

  std::vector<std::pair<std::string, std::uint64_t>> classes;
  std::map<std::string, std::uint64_t> instances;
  for (const auto& row :
       run("SELECT ?c (COUNT(DISTINCT ?s) AS ?n) WHERE { ?s a ?c } GROUP BY ?c").rows) {
    const Term* c = get(row, "c");
    if (!c || !c->is_iri()) continue;
    classes.emplace_back(c->value, count_of(row, "n"));
    instances[c->value] = count_of(row, "n");
  }
  std::sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  std::map<RecordKey, RawVoidRecord> records;
  if (mode == VoidMode::complete) {
    const std::string group = " GROUP BY ?c ?p ?oc ?dt";
    const std::string typed_subject = "?s a ?c . FILTER(isIRI(?c)) ?s ?p ?o . FILTER(?p != rdf:type) ";
    const std::vector<std::string> queries = {
        "SELECT ?c ?p ?oc ?dt (COUNT(*) AS ?n) WHERE { " + typed_subject +
            "?o a ?oc . FILTER(isIRI(?oc)) }" + group,
        "SELECT ?c ?p ?oc ?dt (COUNT(*) AS ?n) WHERE { " + typed_subject +
            "FILTER(isLiteral(?o)) BIND(DATATYPE(?o) AS ?dt) }" + group,
        "SELECT ?c ?p ?oc ?dt (COUNT(*) AS ?n) WHERE { " + typed_subject +
            "FILTER(!isLiteral(?o)) FILTER NOT EXISTS { ?o a ?any FILTER(isIRI(?any)) } }" + group,
    };
    for (const auto& q : queries) {
      for (const auto& row : run(q).rows) {
        accumulate(records, get(row, "c")->value, get(row, "p")->value, row, instances);
      }
    }
  } else {
    const std::string limit = " LIMIT " + std::to_string(sample_limit);
    for (const auto& [cls, n] : classes) {
      auto preds = run("SELECT DISTINCT ?p WHERE { ?s a " + iri(cls) +
                       " ; ?p ?o . FILTER(?p != rdf:type) }" + limit);
      for (const auto& prow : preds.rows) {
        const Term* p = get(prow, "p");
        if (!p) continue;
        auto objects = run("SELECT ?oc ?dt (COUNT(*) AS ?n) WHERE { { SELECT ?o WHERE { ?s a " +
                           iri(cls) + " ; " + iri(p->value) + " ?o }" + limit +
                           " } OPTIONAL { ?o a ?oc FILTER(isIRI(?oc)) } BIND(DATATYPE(?o) AS ?dt) }"
                           " GROUP BY ?oc ?dt");
        for (const auto& row : objects.rows) accumulate(records, cls, p->value, row, instances);
      }
    }
  }
  std::vector<RawVoidRecord> out;
  for (auto& [k, r] : records) out.push_back(std::move(r));
  return out;
}

EndpointDescriptor fetch_endpoint_description(SparqlClient& client, EndpointDescriptor endpoint,
                                              const HarvestOptions& options) {
  const std::string body =
      "?s ?prop ?value . "
      "VALUES ?prop { schema:name schemah:name dct:title schema:description schemah:description "
      "dct:description } "
      "OPTIONAL { ?s sd:endpoint ?ep } "
      "{ ?s a sd:Service } UNION { ?s a schema:Dataset } UNION { ?s a schemah:Dataset } "
      "UNION { ?s a schema:DataCatalog } UNION { ?s a schemah:DataCatalog }";
  auto rs = query_metadata(client, endpoint.endpoint_url, "SELECT DISTINCT ?s ?ep ?prop ?value", body,
                           "", options);
  const std::string target = endpoint::canonical_url(endpoint.endpoint_url);
  // Resources naming this endpoint via sd:endpoint win over the rest.
  bool any_match = false;
  for (const auto& row : rs.rows) {
    const Term* ep = get(row, "ep");
    if (ep && endpoint::canonical_url(ep->value) == target) any_match = true;
  }
  std::vector<Term> names;
  std::vector<Term> descriptions;
  for (const auto& row : rs.rows) {
    const Term* ep = get(row, "ep");
    if (any_match && !(ep && endpoint::canonical_url(ep->value) == target)) continue;
    const Term* value = get(row, "value");
    if (!value || !value->is_literal() || value->value.empty()) continue;
    const std::string prop(get(row, "prop")->value);
    bool is_name = prop.size() >= 5 && (prop.ends_with("/name") || prop.ends_with("/title"));
    (is_name ? names : descriptions).push_back(*value);
  }
  LanguageRank rank{options.preferred_language};
  if (!names.empty()) endpoint.label = std::min_element(names.begin(), names.end(), rank)->value;
  if (!descriptions.empty()) {
    endpoint.description = std::min_element(descriptions.begin(), descriptions.end(), rank)->value;
  }
  endpoint.metadata_status.has_description = !descriptions.empty();
  if (options.strict && descriptions.empty()) {
    throw MetadataMissing(endpoint.endpoint_url, MetadataMissing::Kind::description);
  }
  return endpoint;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

EndpointMetadata harvest_endpoint(SparqlClient& client, EndpointDescriptor endpoint,
                                  const HarvestOptions& options) {
  EndpointMetadata m{std::move(endpoint), {}, {}, false, utc_timestamp()};
  m.endpoint = fetch_endpoint_description(client, m.endpoint, options);
  m.examples = fetch_examples(client, m.endpoint, options);
  m.void_records = fetch_void(client, m.endpoint, options);
  if (m.void_records.empty() && options.generate_missing_void) {
    m.void_records = generate_void(client, m.endpoint, options.void_mode, options.sample_limit, options);
    m.void_generated = true;
  }
  return m;
}

std::vector<EndpointMetadata> harvest_all(SparqlClient& client,
                                          const std::vector<EndpointDescriptor>& endpoints,
                                          const std::vector<HarvestOptions>& options) {
  if (options.size() != endpoints.size()) {
    throw ConfigError("harvest_all needs one HarvestOptions per endpoint");
  }
  std::vector<std::future<EndpointMetadata>> jobs;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&, i] {
      return harvest_endpoint(client, endpoints[i], options[i]);
    }));
  }
  std::vector<EndpointMetadata> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

// ---------------------------------------------------------------- JSON

using nlohmann::json;

json to_json(const QueryExample& e) {
  json j = {{"id", e.id},
            {"question", e.question},
            {"language_tag", e.language_tag},
            {"sparql", e.sparql},
            {"endpoint_url", e.endpoint_url},
            {"is_federated", e.is_federated},
            {"service_endpoints", e.service_endpoints}};
  if (!e.declared_prefixes.empty()) j["declared_prefixes"] = e.declared_prefixes;
  return j;
}

QueryExample example_from_json(const json& j) {
  QueryExample e;
  e.id = j.at("id").get<std::string>();
  e.question = j.at("question").get<std::string>();
  e.language_tag = j.value("language_tag", std::string("und"));
  e.sparql = j.at("sparql").get<std::string>();
  e.endpoint_url = j.at("endpoint_url").get<std::string>();
  e.declared_prefixes = j.value("declared_prefixes", std::map<std::string, std::string>{});
  analyse_example(e);
  return e;
}

json to_json(const RawVoidRecord& r) {
  json j = {{"subject_class", r.subject_class},
            {"predicate", r.predicate},
            {"triple_count", r.triple_count},
            {"subject_instance_count", r.subject_instance_count}};
  if (r.object_class) j["object_class"] = *r.object_class;
  if (r.object_datatype) j["object_datatype"] = *r.object_datatype;
  return j;
}

RawVoidRecord void_record_from_json(const json& j) {
  RawVoidRecord r;
  r.subject_class = j.at("subject_class").get<std::string>();
  r.predicate = j.at("predicate").get<std::string>();
  if (j.contains("object_class")) r.object_class = j.at("object_class").get<std::string>();
  if (j.contains("object_datatype")) r.object_datatype = j.at("object_datatype").get<std::string>();
  r.triple_count = j.value("triple_count", std::uint64_t{0});
  r.subject_instance_count = j.value("subject_instance_count", std::uint64_t{0});
  return r;
}

json to_json(const EndpointMetadata& m) {
  json examples = json::array();
  for (const auto& e : m.examples.examples) examples.push_back(to_json(e));
  json quarantined = json::array();
  for (const auto& q : m.examples.quarantined) {
    quarantined.push_back(
        {{"example", to_json(q.example)}, {"error", q.error}, {"line", q.line}, {"column", q.column}});
  }
  json records = json::array();
  for (const auto& r : m.void_records) records.push_back(to_json(r));
  const auto& s = m.endpoint.metadata_status;
  return {{"endpoint",
           {{"endpoint_url", m.endpoint.endpoint_url},
            {"label", m.endpoint.label},
            {"description", m.endpoint.description},
            {"metadata_status",
             {{"has_examples", s.has_examples},
              {"has_void", s.has_void},
              {"has_description", s.has_description}}}}},
          {"examples", examples},
          {"quarantined", quarantined},
          {"void", records},
          {"void_generated", m.void_generated},
          {"harvested_at", m.harvested_at}};
}

EndpointMetadata metadata_from_json(const json& j) {
  const auto& ej = j.at("endpoint");
  EndpointMetadata m{EndpointDescriptor(ej.at("endpoint_url").get<std::string>(),
                                        ej.value("label", std::string())),
                     {}, {}, j.value("void_generated", false), j.value("harvested_at", std::string())};
  m.endpoint.description = ej.value("description", std::string());
  const auto& s = ej.at("metadata_status");
  m.endpoint.metadata_status = {s.value("has_examples", false), s.value("has_void", false),
                                s.value("has_description", false)};
  for (const auto& e : j.at("examples")) m.examples.examples.push_back(example_from_json(e));
  for (const auto& q : j.at("quarantined")) {
    QuarantinedExample qe;
    const auto& e = q.at("example");
    qe.example.id = e.at("id").get<std::string>();
    qe.example.question = e.at("question").get<std::string>();
    qe.example.language_tag = e.value("language_tag", std::string("und"));
    qe.example.sparql = e.at("sparql").get<std::string>();
    qe.example.endpoint_url = e.at("endpoint_url").get<std::string>();
    qe.example.declared_prefixes = e.value("declared_prefixes", std::map<std::string, std::string>{});
    qe.error = q.at("error").get<std::string>();
    qe.line = q.value("line", std::size_t{0});
    qe.column = q.value("column", std::size_t{0});
    m.examples.quarantined.push_back(std::move(qe));
  }
  for (const auto& r : j.at("void")) m.void_records.push_back(void_record_from_json(r));
  return m;
}

// ---------------------------------------------------------------- cache

namespace {

std::string endpoint_key(const std::string& url) {
  std::string key;
  for (char c : endpoint::canonical_url(url)) {
    key += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  }
  return key;
}

std::string file_stamp(const std::string& iso) {
  std::string out;
  for (char c : iso) {
    if (c != ':' && c != '-') out += c;
  }
  return out;
}

}  // namespace

MetadataCache::MetadataCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path MetadataCache::store(const EndpointMetadata& m) const {
  auto dir = dir_ / endpoint_key(m.endpoint.endpoint_url);
  std::filesystem::create_directories(dir);
  auto path = dir / (file_stamp(m.harvested_at) + ".json");
  std::ofstream out(path);
  out << to_json(m).dump(2) << '\n';
  if (!out) throw Error("cannot write metadata cache file " + path.string());
  return path;
}

std::optional<EndpointMetadata> MetadataCache::latest(const std::string& endpoint_url) const {
  auto dir = dir_ / endpoint_key(endpoint_url);
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  if (files.empty()) return std::nullopt;
  std::sort(files.begin(), files.end());
  std::ifstream in(files.back());
  return metadata_from_json(json::parse(in));
}

}  // namespace quarry::harvest
