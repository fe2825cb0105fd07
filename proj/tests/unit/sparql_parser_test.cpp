// SPDX-License-Identifier: Apache-2.0
#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <map>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "quarry/sparql/analysis.hpp"
#include "quarry/sparql/parser.hpp"

using namespace quarry;
using namespace quarry::sparql;
using ::testing::ElementsAre;
using ::testing::HasSubstr;

namespace {

const std::string kDbo = "http://dbpedia.org/ontology/";
const std::string kDbr = "http://dbpedia.org/resource/";
const std::string kUp = "http://purl.uniprot.org/core/";

std::vector<std::size_t> group_sizes(const ParsedQuery& q) {
  std::vector<std::size_t> sizes;
  for (const auto& g : q.pattern_groups) sizes.push_back(g.triples.size());
  return sizes;
}

std::vector<nlohmann::json> all_corpus_rows() {
  auto rows = quarry::testing::read_jsonl("corpora/kgqa.jsonl");
  auto bio = quarry::testing::read_jsonl("corpora/bio.jsonl");
  rows.insert(rows.end(), bio.begin(), bio.end());
  return rows;
}

}  // namespace

TEST(ParseQuery, PopulationReferenceQuery) {
  auto q = parse_query(
      "PREFIX dbo: <http://dbpedia.org/ontology/>\n"
      "SELECT DISTINCT ?country WHERE { ?country dbo:populationTotal ?population . } "
      "ORDER BY DESC(?population) LIMIT 1");
  EXPECT_EQ(q.query_type, QueryType::select);
  ASSERT_EQ(q.pattern_groups.size(), 1u);
  EXPECT_FALSE(q.pattern_groups[0].service_endpoint);
  ASSERT_EQ(q.pattern_groups[0].triples.size(), 1u);
  const auto& t = q.pattern_groups[0].triples[0];
  EXPECT_EQ(t.subject, Term::variable("country"));
  EXPECT_EQ(t.predicate, Term::iri(kDbo + "populationTotal"));
  EXPECT_EQ(t.object, Term::variable("population"));
  EXPECT_THAT(q.projected_variables, ElementsAre("country"));
  EXPECT_TRUE(q.has_order());
  EXPECT_EQ(q.limit(), 1u);
  EXPECT_TRUE(q.body.distinct);
}

TEST(ParseQuery, EmptyAsk) {
  auto q = parse_query("ASK { }");
  EXPECT_EQ(q.query_type, QueryType::ask);
  EXPECT_EQ(count_triple_patterns(q), 0u);
  EXPECT_TRUE(q.projected_variables.empty());
  ASSERT_EQ(q.pattern_groups.size(), 1u);
}

TEST(ParseQuery, LandingDateQuery) {
  auto q = parse_query(
      "PREFIX dbo: <http://dbpedia.org/ontology/>\n"
      "PREFIX dbr: <http://dbpedia.org/resource/>\n"
      "SELECT ?date WHERE { dbr:Apollo_11 dbo:landingDate ?date . }");
  ASSERT_EQ(count_triple_patterns(q), 1u);
  const auto& t = q.pattern_groups[0].triples[0];
  EXPECT_EQ(t.subject, Term::iri(kDbr + "Apollo_11"));
  EXPECT_EQ(t.predicate, Term::iri(kDbo + "landingDate"));
}

TEST(ParseQuery, CountryTypeAndPopulationCountsTwo) {
  ParseOptions opts;
  opts.extra_prefixes = {{"dbo", kDbo}, {"dbr", kDbr}};
  // No PREFIX lines; dbo/dbr come from extra_prefixes.
  auto q = parse_query(
      "SELECT DISTINCT ?country  WHERE {\n"
      "    ?country rdf:type dbo:Country ;\n"
      "    dbo:populationTotal ?population\n"
      "} ORDER BY DESC(?population) LIMIT 1",
      opts);
  EXPECT_EQ(count_triple_patterns(q), 2u);
  EXPECT_EQ(q.pattern_groups[0].triples[0].predicate,
            Term::iri(std::string(vocab::rdf_type)));
  EXPECT_EQ(q.pattern_groups[0].triples[0].object, Term::iri(kDbo + "Country"));
  EXPECT_TRUE(q.prefixes.empty());
}

TEST(ParseQuery, UndeclaredPrefixIsSyntaxError) {
  try {
    parse_query("SELECT ?d WHERE { dbr:Apollo_11 dbo:launchDate ?d }");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_THAT(e.detail(), HasSubstr("dbr"));
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.column(), 19u);
    EXPECT_EQ(e.offset(), 18u);
  }
}

TEST(ParseQuery, DefaultPrefixesNeedNoDeclaration) {
  auto q = parse_query(
      "SELECT ?x WHERE { ?x rdf:type owl:Class ; rdfs:label ?l . "
      "FILTER(datatype(?l) = xsd:string) }");
  EXPECT_EQ(count_triple_patterns(q), 2u);
  EXPECT_EQ(q.pattern_groups[0].triples[1].predicate,
            Term::iri(std::string(vocab::rdfs) + "label"));
}

TEST(ParseQuery, SyntaxErrorsCarryPositionAndReadableMessage) {
  struct Case {
    const char* text;
    std::size_t line;
    std::size_t column;
    const char* fragment;
  };
  const Case cases[] = {
      {"SELECT ?x WHERE { ?x ?p }", 1, 25, "expected"},
      {"SELECT ?x WHERE {\n  ?x <http://a> ?y", 2, 19, "end of the query"},
      {"SELECT WHERE { ?x ?p ?o }", 1, 8, "at least one variable"},
      {"SELECT ?x { ?x ?p \"unterminated }", 1, 19, "unterminated"},
      {"SELECT ?x WHERE { ?x ?p ?o } LIMIT", 1, 35, "integer"},
      {"PREFIX ex <http://e/> SELECT * {}", 1, 8, "prefix"},
  };
  for (const auto& c : cases) {
    try {
      parse_query(c.text);
      ADD_FAILURE() << "accepted: " << c.text;
    } catch (const SyntaxError& e) {
      EXPECT_EQ(e.line(), c.line) << c.text << " -> " << e.what();
      EXPECT_EQ(e.column(), c.column) << c.text << " -> " << e.what();
      EXPECT_THAT(std::string(e.what()), HasSubstr(c.fragment)) << c.text;
      EXPECT_THAT(std::string(e.what()), HasSubstr("line"));
    }
  }
}

TEST(ParseQuery, EmptyTextRejected) {
  EXPECT_THROW(parse_query(""), SyntaxError);
  EXPECT_THROW(parse_query("  \n "), SyntaxError);
}

TEST(ParseQuery, UpdateRequestsRejected) {
  for (const char* text : {"INSERT DATA { <http://a> <http://b> <http://c> }",
                           "PREFIX ex: <http://e/> DELETE WHERE { ?s ex:p ?o }",
                           "CLEAR GRAPH <http://g>", "DROP ALL",
                           "LOAD <http://example.org/data.ttl>"}) {
    try {
      parse_query(text);
      ADD_FAILURE() << "accepted update: " << text;
    } catch (const SyntaxError& e) {
      EXPECT_THAT(std::string(e.what()), HasSubstr("Update")) << text;
    }
  }
}

TEST(ParseQuery, QueryTypesAndProjection) {
  auto select = parse_query("SELECT ?a (STR(?b) AS ?c) WHERE { ?a ?p ?b }");
  EXPECT_THAT(select.projected_variables, ElementsAre("a", "c"));

  auto star = parse_query(
      "SELECT * WHERE { ?s ?p ?o . OPTIONAL { ?o <http://x/q> ?z } BIND(1 AS ?one) }");
  EXPECT_THAT(star.projected_variables, ElementsAre("s", "p", "o", "z", "one"));

  auto construct = parse_query("CONSTRUCT { ?s <http://x/p> ?o } WHERE { ?s <http://x/q> ?o }");
  EXPECT_EQ(construct.query_type, QueryType::construct);
  EXPECT_TRUE(construct.projected_variables.empty());
  EXPECT_EQ(construct.construct_template.size(), 1u);
  EXPECT_EQ(count_triple_patterns(construct), 1u);

  auto short_construct = parse_query("CONSTRUCT WHERE { ?s <http://x/q> ?o }");
  EXPECT_EQ(count_triple_patterns(short_construct), 1u);

  auto describe = parse_query("DESCRIBE <http://x/a> ?b WHERE { ?b <http://x/p> <http://x/a> }");
  EXPECT_EQ(describe.query_type, QueryType::describe);
  EXPECT_EQ(describe.describe_terms.size(), 2u);
  EXPECT_TRUE(describe.projected_variables.empty());

  auto bare_describe = parse_query("DESCRIBE <http://x/a>");
  EXPECT_EQ(count_triple_patterns(bare_describe), 0u);
}

TEST(ParseQuery, LengthOnePathsArePlainPredicates) {
  auto q = parse_query("SELECT * { ?s (<http://x/p>) ?o . ?a ^<http://x/q> ?b }");
  const auto& triples = q.pattern_groups[0].triples;
  ASSERT_EQ(triples.size(), 2u);
  EXPECT_EQ(triples[0].predicate, Term::iri("http://x/p"));
  EXPECT_EQ(triples[0].path, nullptr);
  // Inverse of a single IRI swaps subject and object.
  EXPECT_EQ(triples[1].subject, Term::variable("b"));
  EXPECT_EQ(triples[1].predicate, Term::iri("http://x/q"));
  EXPECT_EQ(triples[1].object, Term::variable("a"));
}

TEST(ParseQuery, LongerPathsAreOpaquePathTerms) {
  auto q = parse_query(
      "PREFIX ex: <http://x/>\n"
      "SELECT * { ?s ex:a/ex:b ?o . ?s ex:c* ?o . ?s ex:d|^ex:e ?o . ?s !(ex:f|^ex:g) ?o . "
      "?s (ex:a/ex:b)+ ?o . ?s ^(ex:a/ex:b) ?o . ?s ex:a? ?o }");
  const auto& triples = q.pattern_groups[0].triples;
  ASSERT_EQ(triples.size(), 7u);
  const std::vector<std::string> texts = {
      "<http://x/a>/<http://x/b>",
      "<http://x/c>*",
      "<http://x/d>|^<http://x/e>",
      "!(<http://x/f>|^<http://x/g>)",
      "(<http://x/a>/<http://x/b>)+",
      "^(<http://x/a>/<http://x/b>)",
      "<http://x/a>?",
  };
  for (std::size_t i = 0; i < texts.size(); ++i) {
    EXPECT_TRUE(triples[i].predicate.is_path()) << i;
    EXPECT_EQ(triples[i].predicate.value, texts[i]);
    ASSERT_NE(triples[i].path, nullptr);
    EXPECT_EQ(path_to_string(*triples[i].path), texts[i]);
  }
}

TEST(ParseQuery, AKeywordIsRdfType) {
  auto q = parse_query("SELECT * { ?s a <http://x/C> }");
  EXPECT_EQ(q.pattern_groups[0].triples[0].predicate, Term::iri(std::string(vocab::rdf_type)));
}

TEST(ParseQuery, LiteralsKeepDatatypesAndLanguages) {
  auto q = parse_query(
      "PREFIX ex: <http://x/>\n"
      "SELECT * { ?s ex:a 42 ; ex:b 1.5 ; ex:c 1e3 ; ex:d \"hi\"@en-GB ; ex:e \"v\"^^ex:T ;"
      " ex:f true ; ex:g 'plain' ; ex:h -7 ; ex:i \"\"\"multi\nline\"\"\" }");
  const auto& t = q.pattern_groups[0].triples;
  ASSERT_EQ(t.size(), 9u);
  EXPECT_EQ(t[0].object, Term::literal("42", std::string(vocab::xsd_integer)));
  EXPECT_EQ(t[1].object, Term::literal("1.5", std::string(vocab::xsd_decimal)));
  EXPECT_EQ(t[2].object, Term::literal("1e3", std::string(vocab::xsd_double)));
  EXPECT_EQ(t[3].object, Term::lang_literal("hi", "en-GB"));
  EXPECT_EQ(t[4].object, Term::literal("v", "http://x/T"));
  EXPECT_EQ(t[5].object, Term::literal("true", std::string(vocab::xsd_boolean)));
  EXPECT_EQ(t[6].object, Term::literal("plain"));
  EXPECT_EQ(t[7].object, Term::literal("-7", std::string(vocab::xsd_integer)));
  EXPECT_EQ(t[8].object, Term::literal("multi\nline"));
}

TEST(ParseQuery, BlankNodesAndCollections) {
  auto q = parse_query(
      "PREFIX ex: <http://x/>\n"
      "SELECT * { ?s ex:p [ ex:q ?o ] . _:b ex:r ( 1 ?v ) . [] ex:t ?w }");
  const auto& t = q.pattern_groups[0].triples;
  // [ ex:q ?o ] -> 1, ?s ex:p -> 1, list of two -> 4, _:b ex:r -> 1, [] ex:t -> 1
  ASSERT_EQ(t.size(), 8u);
  EXPECT_TRUE(t[0].subject.is_blank());
  EXPECT_EQ(t[0].predicate, Term::iri("http://x/q"));
  EXPECT_EQ(t[1].object, t[0].subject);
  EXPECT_EQ(t[2].predicate, Term::iri(std::string(vocab::rdf_first)));
  EXPECT_EQ(t[5].object, Term::iri(std::string(vocab::rdf_nil)));
  EXPECT_EQ(t[6].subject, Term::blank("b"));
  EXPECT_TRUE(t[7].subject.is_blank());
}

TEST(PatternGroups, NoServiceGivesSingleHomeGroup) {
  auto q = parse_query("SELECT * { ?s ?p ?o OPTIONAL { ?o ?q ?r } }");
  ASSERT_EQ(q.pattern_groups.size(), 1u);
  EXPECT_FALSE(q.pattern_groups[0].service_endpoint);
  EXPECT_EQ(q.pattern_groups[0].triples.size(), 2u);
}

TEST(PatternGroups, ServiceBlockSplitsIntoSecondGroup) {
  auto q = parse_query(
      "PREFIX up: <http://purl.uniprot.org/core/>\n"
      "SELECT * {\n"
      "  ?p a up:Protein ; up:encodedBy ?g .\n"
      "  SERVICE <https://sparql.uniprot.org/sparql> { ?x up:a ?y . ?y up:b ?z }\n"
      "  ?g up:name ?n .\n"
      "}");
  ASSERT_EQ(q.pattern_groups.size(), 2u);
  EXPECT_FALSE(q.pattern_groups[0].service_endpoint);
  EXPECT_EQ(q.pattern_groups[0].triples.size(), 3u);
  EXPECT_EQ(q.pattern_groups[1].service_endpoint, "https://sparql.uniprot.org/sparql");
  EXPECT_EQ(q.pattern_groups[1].triples.size(), 2u);
  // Source order within the home group.
  EXPECT_EQ(q.pattern_groups[0].triples[2].predicate, Term::iri(kUp + "name"));
}

TEST(PatternGroups, SameEndpointServicesStaySeparate) {
  auto q = parse_query(
      "SELECT * { SERVICE <http://e/sparql> { ?a ?b ?c } SERVICE <http://e/sparql> { ?d ?e ?f } }");
  ASSERT_EQ(q.pattern_groups.size(), 3u);
  EXPECT_TRUE(q.pattern_groups[0].triples.empty());
  EXPECT_EQ(q.pattern_groups[1].service_endpoint, "http://e/sparql");
  EXPECT_EQ(q.pattern_groups[2].service_endpoint, "http://e/sparql");
}

TEST(PatternGroups, NestedServiceTakesInnermostEndpoint) {
  auto q = parse_query(
      "SELECT * { SERVICE SILENT <http://outer/> { ?a ?b ?c SERVICE <http://inner/> { ?d ?e ?f } } }");
  ASSERT_EQ(q.pattern_groups.size(), 3u);
  EXPECT_EQ(q.pattern_groups[1].service_endpoint, "http://outer/");
  EXPECT_TRUE(q.pattern_groups[1].silent);
  EXPECT_EQ(q.pattern_groups[1].triples.size(), 1u);
  EXPECT_EQ(q.pattern_groups[2].service_endpoint, "http://inner/");
  EXPECT_EQ(q.pattern_groups[2].triples[0].subject, Term::variable("d"));
}

TEST(PatternGroups, NotExistsTriplesAreFlaggedNegated) {
  auto q = parse_query(
      "SELECT * { ?s ?p ?o FILTER NOT EXISTS { ?s <http://x/q> ?z } "
      "FILTER EXISTS { ?s <http://x/r> ?w } }");
  const auto& t = q.pattern_groups[0].triples;
  ASSERT_EQ(t.size(), 3u);
  EXPECT_FALSE(t[0].negated);
  EXPECT_TRUE(t[1].negated);
  EXPECT_FALSE(t[2].negated);
}

TEST(PatternGroups, SubselectUnionMinusGraphAreIncluded) {
  auto q = parse_query(
      "SELECT * { { SELECT ?s WHERE { ?s ?p ?o } } { ?a ?b ?c } UNION { ?d ?e ?f } "
      "MINUS { ?g ?h ?i } GRAPH ?gr { ?j ?k ?l } VALUES ?x { 1 2 UNDEF } }");
  EXPECT_EQ(count_triple_patterns(q), 5u);
}

TEST(Corpus, EveryQueryParsesWithHandCountedTriplePatterns) {
  const auto rows = all_corpus_rows();
  ASSERT_EQ(rows.size(), quarry::testing::expected_triple_counts().size());
  for (const auto& row : rows) {
    const std::string id = row.at("id");
    SCOPED_TRACE(id);
    auto it = quarry::testing::expected_triple_counts().find(id);
    ASSERT_NE(it, quarry::testing::expected_triple_counts().end());
    ParsedQuery q;
    ASSERT_NO_THROW(q = parse_query(row.at("sparql").get<std::string>()));
    EXPECT_EQ(count_triple_patterns(q), it->second.total);
    EXPECT_EQ(group_sizes(q), it->second.groups);
  }
}

TEST(Corpus, RoundTripReproducesPatternGroups) {
  for (const auto& row : all_corpus_rows()) {
    SCOPED_TRACE(row.at("id").get<std::string>());
    auto q = parse_query(row.at("sparql").get<std::string>());
    const std::string text = to_sparql(q);
    ParsedQuery again;
    ASSERT_NO_THROW(again = parse_query(text)) << text;
    EXPECT_EQ(again.pattern_groups, q.pattern_groups) << text;
    EXPECT_EQ(again.query_type, q.query_type);
    EXPECT_EQ(again.projected_variables, q.projected_variables);
    EXPECT_EQ(to_sparql(again), text);
  }
}

TEST(Corpus, ParsingIsDeterministic) {
  for (const auto& row : all_corpus_rows()) {
    const std::string text = row.at("sparql");
    auto a = parse_query(text);
    auto b = parse_query(text);
    EXPECT_EQ(a.pattern_groups, b.pattern_groups);
    EXPECT_EQ(a.prefixes, b.prefixes);
    EXPECT_EQ(to_sparql(a), to_sparql(b));
  }
}

TEST(Corpus, StoredIrisAreFullyExpanded) {
  for (const auto& row : all_corpus_rows()) {
    auto q = parse_query(row.at("sparql").get<std::string>());
    for (const auto& g : q.pattern_groups) {
      for (const auto& t : g.triples) {
        EXPECT_FALSE(t.predicate.is_literal());
        for (const Term* term : {&t.subject, &t.predicate, &t.object}) {
          if (term->is_iri()) {
            EXPECT_THAT(term->value, ::testing::StartsWith("http")) << term->value;
          }
        }
      }
    }
  }
}

namespace {

// Random query generator over a small vocabulary: nested groups, OPTIONAL,
// UNION, SERVICE, FILTER NOT EXISTS and paths.
class RandomQuery {
 public:
  explicit RandomQuery(std::uint64_t seed) : rng_(seed) {}

  std::string build() {
    std::string body = group(0);
    return "PREFIX ex: <http://example.org/>\nSELECT * WHERE " + body;
  }

 private:
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

  std::string node() {
    switch (pick(4)) {
      case 0: return "?v" + std::to_string(pick(5));
      case 1: return "ex:n" + std::to_string(pick(5));
      case 2: return "\"lit" + std::to_string(pick(3)) + "\"";
      default: return "?w" + std::to_string(pick(3));
    }
  }

  std::string subject() {
    return pick(3) == 0 ? "ex:s" + std::to_string(pick(4)) : "?v" + std::to_string(pick(5));
  }

  std::string predicate() {
    switch (pick(6)) {
      case 0: return "ex:p" + std::to_string(pick(4)) + "/ex:q" + std::to_string(pick(4));
      case 1: return "ex:p" + std::to_string(pick(4)) + "*";
      case 2: return "^ex:p" + std::to_string(pick(4));
      case 3: return "a";
      default: return "ex:p" + std::to_string(pick(8));
    }
  }

  std::string triples() {
    std::string s = subject() + " " + predicate() + " " + node();
    int extra = pick(3);
    for (int i = 0; i < extra; ++i) s += " ; " + predicate() + " " + node();
    return s + " .\n";
  }

  std::string group(int depth) {
    std::string out = "{\n";
    int n = 1 + pick(4);
    for (int i = 0; i < n; ++i) {
      int choice = depth >= 3 ? 0 : pick(7);
      switch (choice) {
        case 1: out += "OPTIONAL " + group(depth + 1) + "\n"; break;
        case 2: out += group(depth + 1) + " UNION " + group(depth + 1) + "\n"; break;
        case 3:
          out += "SERVICE <http://endpoint" + std::to_string(pick(3)) + ".org/sparql> " +
                 group(depth + 1) + "\n";
          break;
        case 4: out += "FILTER NOT EXISTS " + group(depth + 1) + "\n"; break;
        default: out += triples(); break;
      }
    }
    return out + "}";
  }

  std::mt19937_64 rng_;
};

}  // namespace

TEST(RoundTripProperty, RandomQueriesRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    const std::string text = RandomQuery(seed).build();
    ParsedQuery q;
    ASSERT_NO_THROW(q = parse_query(text)) << text;
    std::size_t total = 0;
    for (const auto& g : q.pattern_groups) total += g.triples.size();
    EXPECT_EQ(count_triple_patterns(q), total);
    auto again = parse_query(to_sparql(q));
    ASSERT_EQ(again.pattern_groups, q.pattern_groups) << text << "\n---\n" << to_sparql(q);
  }
}

TEST(ParseTurtle, PrefixesGraphsAndAbbreviations) {
  auto quads = parse_turtle(
      "@prefix ex: <http://x/> .\n"
      "PREFIX up: <http://purl.uniprot.org/core/>\n"
      "ex:a a up:Protein ; ex:name \"A\"@en , \"B\" .\n"
      "GRAPH <http://g/1> { ex:b ex:p ex:a . ex:c ex:p [ ex:q 3 ] }\n"
      "<http://g/2> { ex:d ex:p ex:e }\n");
  ASSERT_EQ(quads.size(), 7u);
  EXPECT_EQ(quads[0].predicate, Term::iri(std::string(vocab::rdf_type)));
  EXPECT_EQ(quads[0].graph, "");
  EXPECT_EQ(quads[2].object, Term::literal("B"));
  EXPECT_EQ(quads[3].graph, "http://g/1");
  EXPECT_EQ(quads[6].graph, "http://g/2");
}

TEST(ParseTurtle, RejectsVariables) {
  EXPECT_THROW(parse_turtle("<http://a> <http://b> ?c ."), SyntaxError);
}
