// SPDX-License-Identifier: Apache-2.0
#include "quarry/eval/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "quarry/errors.hpp"
#include "quarry/sparql/analysis.hpp"
#include "quarry/sparql/parser.hpp"

namespace quarry::eval {

using nlohmann::json;

namespace {

bool is_integer_type(std::string_view dt) {
  static const std::set<std::string_view> types = {
      "integer", "int", "long", "short", "byte", "nonNegativeInteger", "positiveInteger",
      "nonPositiveInteger", "negativeInteger", "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte"};
  return dt.substr(0, vocab::xsd.size()) == vocab::xsd && types.count(dt.substr(vocab::xsd.size()));
}

bool is_float_type(std::string_view dt) {
  return dt == vocab::xsd_decimal || dt == vocab::xsd_double || dt == std::string(vocab::xsd) + "float";
}

std::string canonical_term(const Term& t) {
  if (t.is_blank()) return "_:";
  if (!t.is_literal()) return t.to_string();
  if (is_integer_type(t.datatype)) {
    std::string_view lex = t.value;
    if (!lex.empty() && lex.front() == '+') lex.remove_prefix(1);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(lex.data(), lex.data() + lex.size(), v);
    if (ec == std::errc() && ptr == lex.data() + lex.size()) {
      return Term::literal(std::to_string(v), std::string(vocab::xsd_integer)).to_string();
    }
  } else if (is_float_type(t.datatype)) {
    char* end = nullptr;
    double v = std::strtod(t.value.c_str(), &end);
    if (end && *end == '\0' && !t.value.empty()) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return Term::literal(os.str(), t.datatype).to_string();
    }
  }
  return t.to_string();
}

std::string row_key(const Binding& row, const std::vector<std::string>& projection, bool positional) {
  std::vector<std::string> values;
  if (positional) {
    for (const auto& [_, term] : row) values.push_back(canonical_term(term));
    std::sort(values.begin(), values.end());
  } else {
    for (const auto& v : projection) {
      auto it = row.find(v);
      values.push_back(it == row.end() ? "UNDEF" : canonical_term(it->second));
    }
  }
  std::string key;
  for (const auto& v : values) {
    key += v;
    key += '\x1f';
  }
  return key;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string example_item_id(const harvest::QueryExample& e) { return "example:" + e.endpoint_url + "#" + e.id; }

}  // namespace

// ---------------------------------------------------------------- scoring

std::vector<std::string> canonical_rows(const ResultSet& rs, const std::vector<std::string>& projection,
                                        bool positional) {
  std::vector<std::string> keys;
  if (rs.is_boolean()) {
    keys.push_back(*rs.boolean ? "ASK:true" : "ASK:false");
    return keys;
  }
  keys.reserve(rs.rows.size());
  for (const auto& row : rs.rows) keys.push_back(row_key(row, projection, positional));
  std::sort(keys.begin(), keys.end());
  return keys;
}

Score score_f1(const ResultSet& reference, const ResultSet& generated, const ScoreOptions& options) {
  const auto& ref_vars = reference.variables;
  std::set<std::string> ref_set(ref_vars.begin(), ref_vars.end());
  std::set<std::string> gen_set(generated.variables.begin(), generated.variables.end());
  bool positional;
  if (options.strict_projection) {
    positional = ref_set != gen_set;
  } else {
    positional = !std::includes(gen_set.begin(), gen_set.end(), ref_set.begin(), ref_set.end());
  }
  auto ref = canonical_rows(reference, ref_vars, positional);
  auto gen = canonical_rows(generated, ref_vars, positional);
  if (options.set_semantics) {
    ref.erase(std::unique(ref.begin(), ref.end()), ref.end());
    gen.erase(std::unique(gen.begin(), gen.end()), gen.end());
  }
  if (ref.empty() && gen.empty()) return {1.0, 1.0, 1.0};

  std::vector<std::string> overlap;
  std::set_intersection(ref.begin(), ref.end(), gen.begin(), gen.end(), std::back_inserter(overlap));
  Score s;
  if (!gen.empty()) s.precision = static_cast<double>(overlap.size()) / static_cast<double>(gen.size());
  if (!ref.empty()) s.recall = static_cast<double>(overlap.size()) / static_cast<double>(ref.size());
  if (s.precision + s.recall > 0) s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// ---------------------------------------------------------------- folds

FoldPlan make_folds(const std::vector<harvest::QueryExample>& corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidK("k must be at least 2, got " + std::to_string(k));
  if (corpus.size() < k) {
    throw InvalidK("k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(corpus.size()));
  }
  std::set<std::string> seen;
  for (const auto& e : corpus) {
    if (!seen.insert(e.id).second) throw ConfigError("duplicate example id in corpus: " + e.id);
  }

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> fold_of(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = i % k;

  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < order.size(); ++i) plan.folds[i % k].test.push_back(corpus[order[i]].id);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (fold_of[i] != f) plan.folds[f].train.push_back(corpus[i].id);
    }
  }
  return plan;
}

// ---------------------------------------------------------------- corpus io

std::vector<harvest::QueryExample> parse_corpus(const std::string& jsonl) {
  std::vector<harvest::QueryExample> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    harvest::QueryExample ex;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.question = j.at("question").get<std::string>();
      ex.language_tag = j.value("language_tag", std::string("und"));
      ex.sparql = j.at("sparql").get<std::string>();
      ex.endpoint_url = j.at("endpoint_url").get<std::string>();
      ex.declared_prefixes = j.value("declared_prefixes", std::map<std::string, std::string>{});
    } catch (const json::exception& e) {
      throw ConfigError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      harvest::analyse_example(ex);
    } catch (const SyntaxError&) {
      ex.parsed.reset();
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<harvest::QueryExample> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read corpus " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

ReferenceResults read_reference_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read reference results " + path);
  ReferenceResults out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = json::parse(line);
    out[j.at("id").get<std::string>()] = result_set_from_json(j.at("results"));
  }
  return out;
}

void write_reference_results(const std::string& path, const ReferenceResults& results) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& [id, rs] : results) out << json{{"id", id}, {"results", to_json(rs)}}.dump() << '\n';
}

ReferenceResults materialize_references(const std::vector<harvest::QueryExample>& corpus,
                                        endpoint::SparqlClient& client, const qa::ExecutionLimits& limits,
                                        std::map<std::string, std::string>* errors) {
  ReferenceResults out;
  for (const auto& e : corpus) {
    try {
      out[e.id] = qa::execute(e.sparql, e.endpoint_url, client, limits);
    } catch (const Error& err) {
      if (errors) (*errors)[e.id] = err.what();
    }
  }
  return out;
}

// ---------------------------------------------------------------- evaluation

double t_critical_95(std::size_t df) {
  static const double table[] = {0,      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                 2.201,  2.179,  2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                 2.080,  2.074,  2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df == 0) return 0.0;
  if (df <= 30) return table[df];
  if (df <= 60) return 2.000;
  if (df <= 120) return 1.980;
  return 1.960;
}

AccountingReport accounting_report(const std::vector<EvaluationRecord>& records, const Prices& prices) {
  AccountingReport r;
  r.questions = records.size();
  std::vector<double> wall, in, out, cost;
  for (const auto& rec : records) {
    const auto& a = rec.accounting;
    wall.push_back(a.wall_ms);
    in.push_back(static_cast<double>(a.input_tokens));
    out.push_back(static_cast<double>(a.output_tokens));
    cost.push_back(static_cast<double>(a.input_tokens) * prices.input_per_token +
                   static_cast<double>(a.output_tokens) * prices.output_per_token);
  }
  r.median_wall_ms = median(wall);
  r.mean_wall_ms = mean(wall);
  r.median_input_tokens = median(in);
  r.mean_input_tokens = mean(in);
  r.median_output_tokens = median(out);
  r.mean_output_tokens = mean(out);
  r.median_cost = median(cost);
  r.mean_cost = mean(cost);
  r.total_cost = std::accumulate(cost.begin(), cost.end(), 0.0);
  return r;
}

namespace {

EvaluationRecord evaluate_one(const harvest::QueryExample& test, const ResultSet* reference,
                              const std::string* reference_error, const qa::KnowledgeBase& kb,
                              EvaluationResources& res, const EvaluationConfig& config) {
  EvaluationRecord rec;
  rec.example_id = test.id;
  rec.question = test.question;
  rec.reference_sparql = test.sparql;
  if (reference) rec.reference_results = *reference;
  if (reference_error) rec.reference_error = *reference_error;

  auto pipeline = config.pipeline;
  pipeline.endpoint_override = test.endpoint_url;
  qa::Resources r{res.llm, res.embedder, kb.index, kb.schemas, res.client};
  auto turn = qa::answer(test.question, test.language_tag, pipeline, r);
  rec.accounting = turn.accounting;
  rec.generated_sparql = turn.final_query;
  if (turn.results) {
    rec.generated_results = turn.results;
  } else if (turn.error) {
    rec.generated_error = turn.error->kind + ": " + turn.error->message;
  } else if (!turn.final_query) {
    rec.generated_error = "no query produced";
  }

  if (rec.reference_results && rec.generated_results) {
    auto s = score_f1(*rec.reference_results, *rec.generated_results, config.scoring);
    rec.precision = s.precision;
    rec.recall = s.recall;
    rec.f1 = s.f1;
  }
  return rec;
}

}  // namespace

EvaluationReport run_evaluation(const std::vector<harvest::QueryExample>& corpus, EvaluationResources& resources,
                                const EvaluationConfig& config) {
  EvaluationReport report;
  auto& summary = report.summary;

  ReferenceResults references;
  std::map<std::string, std::string> reference_errors;
  for (const auto& e : corpus) {
    if (resources.references) {
      auto it = resources.references->find(e.id);
      if (it != resources.references->end()) {
        references[e.id] = it->second;
        continue;
      }
    }
    try {
      references[e.id] = qa::execute(e.sparql, e.endpoint_url, resources.client, config.pipeline.limits);
    } catch (const Error& err) {
      reference_errors[e.id] = err.what();
    }
  }

  std::vector<harvest::QueryExample> usable;
  for (const auto& e : corpus) {
    auto it = references.find(e.id);
    if (config.exclude_empty_references && it != references.end() && it->second.empty()) {
      summary.excluded_empty.push_back(e.id);
      continue;
    }
    usable.push_back(e);
  }
  for (const auto& [id, _] : reference_errors) summary.reference_errors.push_back(id);

  report.plan = make_folds(usable, config.k, config.seed);
  std::map<std::string, const harvest::QueryExample*> by_id;
  for (const auto& e : usable) by_id[e.id] = &e;

  std::vector<qa::KnowledgeBase> kbs;
  for (const auto& fold : report.plan.folds) {
    auto metadata = resources.metadata;
    std::set<std::string> known;
    for (auto& m : metadata) {
      m.examples.examples.clear();
      m.examples.quarantined.clear();
      known.insert(m.endpoint.endpoint_url);
    }
    for (const auto& id : fold.train) {
      const auto& e = *by_id.at(id);
      if (!known.count(e.endpoint_url)) {
        harvest::EndpointMetadata m;
        m.endpoint = harvest::EndpointDescriptor(e.endpoint_url, e.endpoint_url);
        metadata.push_back(std::move(m));
        known.insert(e.endpoint_url);
      }
      auto m = std::find_if(metadata.begin(), metadata.end(),
                            [&](const auto& md) { return md.endpoint.endpoint_url == e.endpoint_url; });
      m->examples.examples.push_back(e);
    }
    auto kb = qa::build_knowledge_base(std::move(metadata), resources.embedder, config.knowledge);
    for (const auto& id : fold.test) {
      if (kb.index.find(example_item_id(*by_id.at(id)))) ++summary.leakage;
    }
    kbs.push_back(std::move(kb));
    summary.fold_sizes.push_back(fold.test.size());
  }

  const std::size_t repeats = std::max<std::size_t>(1, config.repeats);
  const std::size_t parallelism = std::max<std::size_t>(1, config.parallelism);
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    std::vector<double> f1s;
    for (std::size_t f = 0; f < report.plan.folds.size(); ++f) {
      const auto& tests = report.plan.folds[f].test;
      for (std::size_t start = 0; start < tests.size(); start += parallelism) {
        std::vector<std::future<EvaluationRecord>> batch;
        for (std::size_t i = start; i < std::min(tests.size(), start + parallelism); ++i) {
          const auto& e = *by_id.at(tests[i]);
          auto ref = references.find(e.id);
          auto err = reference_errors.find(e.id);
          const ResultSet* ref_ptr = ref == references.end() ? nullptr : &ref->second;
          const std::string* err_ptr = err == reference_errors.end() ? nullptr : &err->second;
          auto launch = parallelism == 1 ? std::launch::deferred : std::launch::async;
          batch.push_back(std::async(launch, [&, ref_ptr, err_ptr, f] {
            return evaluate_one(e, ref_ptr, err_ptr, kbs[f], resources, config);
          }));
        }
        for (auto& fut : batch) {
          auto rec = fut.get();
          rec.fold = f;
          rec.repeat = rep;
          f1s.push_back(rec.f1);
          report.records.push_back(std::move(rec));
        }
      }
    }
    summary.repeat_f1.push_back(mean(f1s));
  }

  summary.records = report.records.size();
  summary.k = config.k;
  summary.repeats = repeats;
  summary.mean_f1 = mean(summary.repeat_f1);
  std::vector<double> p, r;
  for (const auto& rec : report.records) {
    p.push_back(rec.precision);
    r.push_back(rec.recall);
  }
  summary.mean_precision = mean(p);
  summary.mean_recall = mean(r);
  if (repeats > 1) {
    double ss = 0;
    for (double v : summary.repeat_f1) ss += (v - summary.mean_f1) * (v - summary.mean_f1);
    double sd = std::sqrt(ss / static_cast<double>(repeats - 1));
    summary.ci95 = t_critical_95(repeats - 1) * sd / std::sqrt(static_cast<double>(repeats));
  }
  summary.accounting = accounting_report(report.records, config.prices);
  return report;
}

// ---------------------------------------------------------------- profiling

CorpusProfile profile_corpus(const std::vector<harvest::QueryExample>& corpus) {
  CorpusProfile p;
  std::vector<double> values;
  for (const auto& e : corpus) {
    std::optional<sparql::ParsedQuery> parsed = e.parsed;
    if (!parsed) {
      try {
        sparql::ParseOptions opts;
        opts.extra_prefixes = e.declared_prefixes;
        parsed = sparql::parse_query(e.sparql, opts);
      } catch (const SyntaxError& err) {
        p.unparseable.emplace_back(e.id, err.what());
        continue;
      }
    }
    auto n = sparql::count_triple_patterns(*parsed);
    p.counts.emplace_back(e.id, n);
    ++p.histogram[n];
    values.push_back(static_cast<double>(n));
  }
  if (!p.histogram.empty()) {
    p.min = p.histogram.begin()->first;
    p.max = p.histogram.rbegin()->first;
    p.mean = mean(values);
    p.median = median(values);
    std::size_t best = 0;
    for (const auto& [count, freq] : p.histogram) {
      if (freq > best) {
        best = freq;
        p.mode = count;
      }
    }
  }
  return p;
}

std::vector<NearDuplicate> near_duplicates(const std::vector<harvest::QueryExample>& corpus,
                                           retrieval::EmbeddingProvider& embedder, double threshold) {
  std::vector<std::string> texts;
  for (const auto& e : corpus) texts.push_back(e.question);
  auto vectors = embedder.embed_batch(texts);
  std::vector<NearDuplicate> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      double s = retrieval::cosine(vectors[i], vectors[j]);
      if (s >= threshold) out.push_back({corpus[i].id, corpus[j].id, s});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

// ---------------------------------------------------------------- json

json to_json(const Score& s) { return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}; }

json to_json(const FoldPlan& plan) {
  json folds = json::array();
  for (const auto& f : plan.folds) folds.push_back({{"train", f.train}, {"test", f.test}});
  return {{"k", plan.k}, {"folds", folds}};
}

json to_json(const EvaluationRecord& r) {
  json j = {{"example_id", r.example_id},
            {"fold", r.fold},
            {"repeat", r.repeat},
            {"question", r.question},
            {"reference_sparql", r.reference_sparql},
            {"generated_sparql", r.generated_sparql ? json(*r.generated_sparql) : json(nullptr)},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"accounting", qa::to_json(r.accounting)}};
  if (r.reference_results) j["reference_rows"] = r.reference_results->rows.size();
  if (r.reference_error) j["reference_error"] = *r.reference_error;
  if (r.generated_results) j["generated_rows"] = r.generated_results->rows.size();
  if (r.generated_error) j["generated_error"] = *r.generated_error;
  return j;
}

json to_json(const AccountingReport& r) {
  return {{"questions", r.questions},
          {"median_wall_ms", r.median_wall_ms},
          {"mean_wall_ms", r.mean_wall_ms},
          {"median_input_tokens", r.median_input_tokens},
          {"mean_input_tokens", r.mean_input_tokens},
          {"median_output_tokens", r.median_output_tokens},
          {"mean_output_tokens", r.mean_output_tokens},
          {"median_cost", r.median_cost},
          {"mean_cost", r.mean_cost},
          {"total_cost", r.total_cost}};
}

json to_json(const EvaluationSummary& s) {
  return {{"records", s.records},
          {"k", s.k},
          {"repeats", s.repeats},
          {"fold_sizes", s.fold_sizes},
          {"repeat_f1", s.repeat_f1},
          {"mean_f1", s.mean_f1},
          {"mean_precision", s.mean_precision},
          {"mean_recall", s.mean_recall},
          {"ci95", s.ci95},
          {"leakage", s.leakage},
          {"excluded_empty", s.excluded_empty},
          {"reference_errors", s.reference_errors},
          {"accounting", to_json(s.accounting)}};
}

json to_json(const EvaluationReport& r) {
  json records = json::array();
  for (const auto& rec : r.records) records.push_back(to_json(rec));
  return {{"plan", to_json(r.plan)}, {"summary", to_json(r.summary)}, {"records", records}};
}

json to_json(const CorpusProfile& p) {
  json hist = json::object();
  for (const auto& [count, freq] : p.histogram) hist[std::to_string(count)] = freq;
  json counts = json::object();
  for (const auto& [id, n] : p.counts) counts[id] = n;
  json bad = json::object();
  for (const auto& [id, err] : p.unparseable) bad[id] = err;
  return {{"histogram", hist}, {"counts", counts}, {"unparseable", bad}, {"min", p.min},
          {"max", p.max},      {"mean", p.mean},   {"median", p.median}, {"mode", p.mode}};
}

std::string render_summary_table(const EvaluationReport& report) {
  const auto& s = report.summary;
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "fold  questions  mean_f1\n";
  for (std::size_t f = 0; f < report.plan.folds.size(); ++f) {
    std::vector<double> f1s;
    for (const auto& r : report.records) {
      if (r.fold == f) f1s.push_back(r.f1);
    }
    os << std::left << std::setw(6) << f << std::setw(11) << report.plan.folds[f].test.size() << mean(f1s) << '\n';
  }
  os << "\nF1 " << s.mean_f1 << " +/- " << s.ci95 << " (95% CI, " << s.repeats << " repeats)\n";
  os << "precision " << s.mean_precision << ", recall " << s.mean_recall << '\n';
  os << std::setprecision(1) << "median wall " << s.accounting.median_wall_ms << " ms, median tokens "
     << s.accounting.median_input_tokens << " in / " << s.accounting.median_output_tokens << " out\n";
  os << std::setprecision(6) << "cost total " << s.accounting.total_cost << ", per question "
     << s.accounting.mean_cost << '\n';
  if (!s.excluded_empty.empty()) os << "excluded (empty reference): " << s.excluded_empty.size() << '\n';
  if (!s.reference_errors.empty()) os << "reference errors: " << s.reference_errors.size() << '\n';
  return os.str();
}

}  // namespace quarry::eval
