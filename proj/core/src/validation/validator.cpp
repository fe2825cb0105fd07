// SPDX-License-Identifier: Apache-2.0
#include "quarry/validation/validator.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "quarry/endpoint/client.hpp"
#include "quarry/sparql/analysis.hpp"

namespace quarry::validation {

using schema::ClassPropertyMatrix;
using schema::RankedIri;
using sparql::TriplePattern;

std::string_view to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

std::string_view to_string(IssueKind k) {
  switch (k) {
    case IssueKind::unknown_class: return "unknown_class";
    case IssueKind::unknown_predicate: return "unknown_predicate";
    case IssueKind::predicate_not_on_class: return "predicate_not_on_class";
    case IssueKind::object_type_mismatch: return "object_type_mismatch";
    case IssueKind::unknown_endpoint: return "unknown_endpoint";
  }
  return "unknown";
}

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const auto& i) {
    return i.severity == Severity::error;
  }));
}

std::size_t ValidationReport::warning_count() const { return issues.size() - error_count(); }

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double normalized_distance(std::string_view a, std::string_view b) {
  std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::vector<std::string> suggest_alternatives(std::string_view bad_iri, const std::vector<RankedIri>& candidates,
                                              std::size_t limit, double max_distance) {
  if (limit == 0) throw std::invalid_argument("suggest_alternatives: limit must be positive");
  struct Scored {
    double distance;
    const RankedIri* iri;
  };
  std::vector<Scored> scored;
  auto bad_local = local_name(bad_iri);
  for (const auto& c : candidates) {
    double d = normalized_distance(bad_local, local_name(c.iri));
    if (d <= max_distance + 1e-12) scored.push_back({d, &c});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.iri->count != b.iri->count) return a.iri->count > b.iri->count;
    return a.iri->iri < b.iri->iri;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && out.size() < limit; ++i) {
    if (std::find(out.begin(), out.end(), scored[i].iri->iri) == out.end()) out.push_back(scored[i].iri->iri);
  }
  return out;
}

namespace {

bool in_family(const std::string& dt, std::initializer_list<std::string_view> locals) {
  if (dt.rfind(vocab::xsd, 0) != 0 && dt != vocab::rdf_lang_string) return false;
  auto local = local_name(dt);
  return std::find(locals.begin(), locals.end(), local) != locals.end();
}

bool is_stringy(const std::string& dt) {
  return dt == vocab::xsd_string || dt == vocab::rdf_lang_string;
}

bool is_numeric(const std::string& dt) {
  return dt.rfind(vocab::xsd, 0) == 0 &&
         in_family(dt, {"integer", "int", "long", "short", "byte", "decimal", "double", "float",
                        "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger",
                        "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte"});
}

bool datatype_compatible(const std::string& literal_dt, const std::set<std::string>& declared) {
  if (declared.count(literal_dt)) return true;
  for (const auto& d : declared) {
    if (is_stringy(literal_dt) && is_stringy(d)) return true;
    if (is_numeric(literal_dt) && is_numeric(d)) return true;
  }
  return false;
}

std::string literal_datatype(const Term& t) {
  if (!t.language.empty()) return std::string(vocab::rdf_lang_string);
  return t.datatype.empty() ? std::string(vocab::xsd_string) : t.datatype;
}

std::string term_key(const Term& t) {
  if (t.is_variable()) return "?" + t.value;
  if (t.is_blank()) return "_:" + t.value;
  return {};
}

class GroupChecker {
 public:
  GroupChecker(const ClassPropertyMatrix& m, std::string endpoint, const ValidationOptions& o,
               std::vector<ValidationIssue>& out)
      : m_(m), endpoint_(std::move(endpoint)), o_(o), out_(out) {
    for (std::size_t i = 0; i < m.classes.size(); ++i) class_idx_[m.classes[i].iri] = i;
    for (std::size_t i = 0; i < m.predicates.size(); ++i) pred_idx_[m.predicates[i].iri] = i;
  }

  void check(const std::vector<TriplePattern>& triples) {
    std::map<std::string, std::vector<std::size_t>> var_classes;
    const std::string rdf_type(vocab::rdf_type);
    auto checkable = [&](const TriplePattern& t) { return !t.negated && !t.path && t.predicate.is_iri(); };

    for (const auto& t : triples) {
      if (!checkable(t) || t.predicate.value != rdf_type || !t.object.is_iri()) continue;
      auto it = class_idx_.find(t.object.value);
      if (it == class_idx_.end()) {
        emit(Severity::error, IssueKind::unknown_class, t,
             "Class " + show(t.object.value) + " is not defined in the schema of " + endpoint_ + ".",
             suggest_alternatives(t.object.value, m_.classes, o_.max_alternatives, o_.max_distance));
        continue;
      }
      auto key = term_key(t.subject);
      if (!key.empty()) var_classes[key].push_back(it->second);
    }

    for (const auto& t : triples) {
      if (!checkable(t) || t.predicate.value == rdf_type) continue;
      auto pit = pred_idx_.find(t.predicate.value);
      if (pit == pred_idx_.end()) {
        emit(Severity::error, IssueKind::unknown_predicate, t,
             "Predicate " + show(t.predicate.value) + " is not defined in the schema of " + endpoint_ + ".",
             suggest_alternatives(t.predicate.value, m_.predicates, o_.max_alternatives, o_.max_distance));
        continue;
      }
      auto vc = var_classes.find(term_key(t.subject));
      if (vc == var_classes.end()) continue;

      std::vector<const schema::CellConstraint*> cells;
      for (auto c : vc->second) {
        auto cell = m_.cells.find({c, pit->second});
        if (cell != m_.cells.end()) cells.push_back(&cell->second);
      }
      if (cells.empty()) {
        std::vector<RankedIri> on_class;
        std::set<std::size_t> seen;
        for (const auto& [key, cell] : m_.cells) {
          if (std::find(vc->second.begin(), vc->second.end(), key.first) != vc->second.end() &&
              seen.insert(key.second).second) {
            on_class.push_back(m_.predicates[key.second]);
          }
        }
        emit(Severity::error, IssueKind::predicate_not_on_class, t,
             "Predicate " + show(t.predicate.value) + " is not used on instances of " +
                 class_list(vc->second) + " (" + term_key(t.subject) + ") in " + endpoint_ + ".",
             suggest_alternatives(t.predicate.value, on_class, o_.max_alternatives, o_.max_distance));
        continue;
      }
      if (!t.object.is_literal()) continue;
      std::set<std::string> declared;
      for (const auto* cell : cells) declared.insert(cell->object_datatypes.begin(), cell->object_datatypes.end());
      auto dt = literal_datatype(t.object);
      if (declared.empty() || datatype_compatible(dt, declared)) continue;
      std::string expected;
      for (const auto& d : declared) expected += (expected.empty() ? "" : ", ") + show(d);
      emit(Severity::warning, IssueKind::object_type_mismatch, t,
           "Predicate " + show(t.predicate.value) + " on " + class_list(vc->second) + " expects " + expected +
               " values, but the query uses a literal of type " + show(dt) + ".",
           {});
    }
  }

 private:
  std::string show(const std::string& iri) const { return o_.prefixes.display(iri); }

  std::string class_list(const std::vector<std::size_t>& classes) const {
    std::string out = classes.size() == 1 ? "class " : "classes ";
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (i) out += ", ";
      out += show(m_.classes[classes[i]].iri);
    }
    return out;
  }

  void emit(Severity s, IssueKind k, const TriplePattern& t, std::string message, std::vector<std::string> alts) {
    out_.push_back({s, k, t, endpoint_, std::move(message), std::move(alts)});
  }

  const ClassPropertyMatrix& m_;
  std::string endpoint_;
  const ValidationOptions& o_;
  std::vector<ValidationIssue>& out_;
  std::map<std::string, std::size_t> class_idx_;
  std::map<std::string, std::size_t> pred_idx_;
};

}  // namespace

ValidationReport validate(const sparql::ParsedQuery& query, const std::map<std::string, ClassPropertyMatrix>& schemas,
                          const std::string& home_endpoint, const ValidationOptions& options) {
  std::map<std::string, const ClassPropertyMatrix*> by_url;
  for (const auto& [url, m] : schemas) by_url[endpoint::canonical_url(url)] = &m;

  ValidationReport report;
  for (const auto& group : sparql::extract_pattern_groups(query)) {
    if (group.triples.empty()) continue;
    std::string url = group.service_endpoint.value_or(home_endpoint);
    auto it = by_url.find(endpoint::canonical_url(url));
    if (it == by_url.end()) {
      report.issues.push_back({Severity::warning, IssueKind::unknown_endpoint, group.triples.front(), url,
                               "No schema is available for endpoint " + url + "; its triple patterns were not checked.",
                               {}});
      continue;
    }
    GroupChecker(*it->second, url, options, report.issues).check(group.triples);
  }
  report.passed = report.error_count() == 0;
  return report;
}

namespace {

std::string compose_prompt(const ValidationReport& report, std::string_view query, bool warnings,
                           std::size_t alt_cap) {
  std::ostringstream out;
  out << "The SPARQL query below does not conform to the schema of its target endpoint.\n\n```sparql\n"
      << query << "\n```\n\nErrors:\n";
  for (const auto& issue : report.issues) {
    if (issue.severity != Severity::error) continue;
    out << "- " << issue.message;
    std::size_t n = std::min(alt_cap, issue.alternatives.size());
    if (n > 0) {
      out << " Possible alternatives:";
      for (std::size_t i = 0; i < n; ++i) out << (i ? ", <" : " <") << issue.alternatives[i] << ">";
      out << ".";
    }
    out << "\n";
  }
  if (warnings && report.warning_count() > 0) {
    out << "\nWarnings:\n";
    for (const auto& issue : report.issues) {
      if (issue.severity == Severity::warning) out << "- " << issue.message << "\n";
    }
  }
  out << "\nFix the query and return it in a single ```sparql code block.\n";
  return out.str();
}

}  // namespace

std::string render_repair_prompt(const ValidationReport& report, const std::string& original_query,
                                 std::size_t budget) {
  if (report.passed) throw std::invalid_argument("render_repair_prompt: report has no errors");
  std::size_t max_alts = 0;
  for (const auto& i : report.issues) max_alts = std::max(max_alts, i.alternatives.size());

  std::string text = compose_prompt(report, original_query, true, max_alts);
  if (text.size() <= budget) return text;
  for (std::size_t cap = max_alts + 1; cap-- > 0;) {
    text = compose_prompt(report, original_query, false, cap);
    if (text.size() <= budget) return text;
  }
  static constexpr std::string_view kCut = "\n# [query truncated]";
  std::size_t overflow = text.size() - budget;
  if (overflow + kCut.size() < original_query.size()) {
    std::string shortened = original_query.substr(0, original_query.size() - overflow - kCut.size());
    shortened += kCut;
    return compose_prompt(report, shortened, false, 0);
  }
  return text.substr(0, budget);
}

nlohmann::json to_json(const ValidationIssue& issue) {
  return {{"severity", to_string(issue.severity)},
          {"kind", to_string(issue.kind)},
          {"message", issue.message},
          {"alternatives", issue.alternatives},
          {"endpoint", issue.endpoint},
          {"location",
           {{"subject", issue.location.subject.to_string()},
            {"predicate", issue.location.predicate.to_string()},
            {"object", issue.location.object.to_string()}}}};
}

nlohmann::json to_json(const ValidationReport& report) {
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& i : report.issues) issues.push_back(to_json(i));
  return {{"passed", report.passed}, {"issues", issues}};
}

ValidationReport report_from_json(const nlohmann::json& doc) {
  ValidationReport r;
  for (const auto& j : doc.at("issues")) {
    ValidationIssue i;
    i.severity = j.at("severity") == "error" ? Severity::error : Severity::warning;
    const auto kind = j.at("kind").get<std::string>();
    for (auto k : {IssueKind::unknown_class, IssueKind::unknown_predicate, IssueKind::predicate_not_on_class,
                   IssueKind::object_type_mismatch, IssueKind::unknown_endpoint}) {
      if (to_string(k) == kind) i.kind = k;
    }
    i.message = j.at("message");
    i.alternatives = j.at("alternatives").get<std::vector<std::string>>();
    i.endpoint = j.value("endpoint", std::string());
    const auto& loc = j.at("location");
    i.location.subject = Term::from_string(loc.at("subject").get<std::string>());
    i.location.predicate = Term::from_string(loc.at("predicate").get<std::string>());
    i.location.object = Term::from_string(loc.at("object").get<std::string>());
    r.issues.push_back(std::move(i));
  }
  r.passed = doc.at("passed");
  return r;
}

}  // namespace quarry::validation
