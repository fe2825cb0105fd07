// SPDX-License-Identifier: Apache-2.0
#include "quarry/qa/llm.hpp"

#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "quarry/errors.hpp"

namespace quarry::qa {

using nlohmann::json;

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::decompose: return "decompose";
    case Purpose::generate: return "generate";
    case Purpose::repair: return "repair";
    case Purpose::interpret: return "interpret";
  }
  return "generate";
}

Purpose purpose_from_string(std::string_view text) {
  for (auto p : {Purpose::decompose, Purpose::generate, Purpose::repair, Purpose::interpret}) {
    if (to_string(p) == text) return p;
  }
  throw ConfigError("unknown LLM call purpose: " + std::string(text));
}

std::uint64_t count_words(std::string_view text) {
  std::uint64_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::optional<json> find_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

StructuredCompletion LlmProvider::structured(const std::string& prompt, const json& schema,
                                             const CompletionOptions& options) {
  std::string full = prompt + "\n\nRespond with a single JSON object matching this JSON schema:\n" + schema.dump();
  Completion c = complete(full, options);
  auto value = find_json_object(c.text);
  if (!value) throw ProviderError("structured output: reply contains no JSON object");
  return {std::move(*value), c.input_tokens, c.output_tokens};
}

// ---------------------------------------------------------------- scripted

ScriptedLlm::ScriptedLlm(std::vector<Entry> entries, std::string model_id)
    : model_id_(std::move(model_id)), entries_(std::move(entries)) {}

std::vector<ScriptedLlm::Entry> ScriptedLlm::parse_transcript(const std::string& text) {
  std::vector<json> docs;
  auto whole = json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_array()) {
    docs.assign(whole.begin(), whole.end());
  } else if (!whole.is_discarded() && whole.is_object() && whole.contains("calls")) {
    docs.assign(whole["calls"].begin(), whole["calls"].end());
  } else {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto doc = json::parse(line, nullptr, false);
      if (doc.is_discarded()) throw ConfigError("transcript line " + std::to_string(n) + " is not JSON");
      docs.push_back(std::move(doc));
    }
  }
  std::vector<Entry> out;
  for (const auto& d : docs) {
    if (!d.is_object()) throw ConfigError("transcript entries must be JSON objects");
    Entry e;
    e.response = d.value("response", std::string());
    if (d.contains("input_tokens")) e.input_tokens = d["input_tokens"].get<std::uint64_t>();
    if (d.contains("output_tokens")) e.output_tokens = d["output_tokens"].get<std::uint64_t>();
    if (d.contains("purpose")) e.purpose = purpose_from_string(d["purpose"].get<std::string>());
    if (d.contains("error")) e.error = d["error"].get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

ScriptedLlm ScriptedLlm::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read transcript " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ScriptedLlm(parse_transcript(ss.str()), "scripted:" + path.filename().string());
}

Completion ScriptedLlm::complete(const std::string& prompt, const CompletionOptions& options) {
  std::lock_guard lock(mu_);
  calls_.push_back({options.purpose, prompt});
  if (next_ >= entries_.size()) {
    throw TranscriptExhausted("transcript exhausted after " + std::to_string(entries_.size()) + " calls (" +
                              std::string(to_string(options.purpose)) + " call)");
  }
  const Entry& e = entries_[next_++];
  if (e.purpose && *e.purpose != options.purpose) {
    throw TranscriptExhausted("transcript entry " + std::to_string(next_ - 1) + " expects a " +
                              std::string(to_string(*e.purpose)) + " call, got " +
                              std::string(to_string(options.purpose)));
  }
  if (e.error) throw ProviderError(*e.error);
  return {e.response, e.input_tokens.value_or(count_words(prompt)), e.output_tokens.value_or(count_words(e.response))};
}

std::vector<ScriptedLlm::Call> ScriptedLlm::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedLlm::remaining() const {
  std::lock_guard lock(mu_);
  return entries_.size() - next_;
}

// ---------------------------------------------------------------- echo

EchoReferenceLlm::EchoReferenceLlm(std::map<std::string, std::string> reference_by_question)
    : reference_(std::move(reference_by_question)) {}

void EchoReferenceLlm::add(const std::string& question, const std::string& sparql) {
  std::lock_guard lock(mu_);
  reference_[question] = sparql;
}

Completion EchoReferenceLlm::complete(const std::string& prompt, const CompletionOptions& options) {
  std::string text;
  switch (options.purpose) {
    case Purpose::decompose:
      text = json{{"sub_questions", {options.question}}, {"concepts", json::array()}}.dump();
      break;
    case Purpose::generate:
    case Purpose::repair: {
      std::lock_guard lock(mu_);
      auto it = reference_.find(options.question);
      text = it == reference_.end() ? "No reference query is registered for this question."
                                    : "```sparql\n" + it->second + "\n```";
      break;
    }
    case Purpose::interpret:
      text = "These results answer: " + options.question;
      break;
  }
  return {text, count_words(prompt), count_words(text)};
}

// ---------------------------------------------------------------- openai

OpenAiChatLlm::OpenAiChatLlm(Options options) : options_(std::move(options)) {
  if (options_.model.empty()) throw ConfigError("chat provider needs a model name");
}

Completion OpenAiChatLlm::post(const json& body) {
  const auto scheme = options_.base_url.find("://");
  if (scheme == std::string::npos) throw ConfigError("invalid provider base URL: " + options_.base_url);
  const auto slash = options_.base_url.find('/', scheme + 3);
  const std::string origin = options_.base_url.substr(0, slash);
  const std::string path =
      (slash == std::string::npos ? std::string() : options_.base_url.substr(slash)) + "/chat/completions";
  httplib::Client cli(origin);
  cli.set_read_timeout(options_.timeout_seconds, 0);
  cli.set_connection_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 << (attempt - 1)));
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status != 200) throw ProviderError("chat endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      auto doc = json::parse(res->body);
      Completion c;
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      c.text = content.is_string() ? content.get<std::string>() : std::string();
      if (doc.contains("usage")) {
        c.input_tokens = doc["usage"].value("prompt_tokens", std::uint64_t{0});
        c.output_tokens = doc["usage"].value("completion_tokens", std::uint64_t{0});
      }
      return c;
    } catch (const json::exception& e) {
      throw ProviderError(std::string("malformed chat response: ") + e.what());
    }
  }
  throw ProviderError("chat endpoint failed after retries: " + last_error);
}

Completion OpenAiChatLlm::complete(const std::string& prompt, const CompletionOptions& options) {
  json body = {{"model", options_.model},
               {"messages", {{{"role", "user"}, {"content", prompt}}}},
               {"temperature", options.temperature}};
  if (options.max_output_tokens) body["max_tokens"] = *options.max_output_tokens;
  return post(body);
}

StructuredCompletion OpenAiChatLlm::structured(const std::string& prompt, const json& schema,
                                               const CompletionOptions& options) {
  if (!options_.structured_output) return LlmProvider::structured(prompt, schema, options);
  json body = {{"model", options_.model},
               {"messages", {{{"role", "user"}, {"content", prompt}}}},
               {"temperature", options.temperature},
               {"response_format",
                {{"type", "json_schema"}, {"json_schema", {{"name", "response"}, {"schema", schema}, {"strict", true}}}}}};
  Completion c = post(body);
  auto value = json::parse(c.text, nullptr, false);
  if (value.is_discarded()) throw ProviderError("structured output is not valid JSON");
  return {std::move(value), c.input_tokens, c.output_tokens};
}

}  // namespace quarry::qa
