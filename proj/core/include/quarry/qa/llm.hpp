// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace quarry::qa {

/// Pipeline stage issuing an LLM call.
enum class Purpose { decompose, generate, repair, interpret };

std::string_view to_string(Purpose p);
Purpose purpose_from_string(std::string_view text);

struct CompletionOptions {
  Purpose purpose = Purpose::generate;
  double temperature = 0.0;
  std::optional<std::uint32_t> max_output_tokens;
  /// The user question of the current turn. Adapters for hosted models ignore it.
  std::string question;
};

struct Completion {
  std::string text;
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
};

struct StructuredCompletion {
  nlohmann::json value;
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
};

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual std::string model_id() const = 0;
  virtual bool supports_structured_output() const { return false; }

  /// Throws ProviderError on failure.
  virtual Completion complete(const std::string& prompt, const CompletionOptions& options) = 0;

  /// Default: complete() and parse the first JSON object in the reply.
  /// Throws ProviderError when no JSON object can be read.
  virtual StructuredCompletion structured(const std::string& prompt, const nlohmann::json& schema,
                                          const CompletionOptions& options);
};

/// Whitespace-separated word count, used as the token measure of offline providers.
std::uint64_t count_words(std::string_view text);

/// First balanced {...} in `text` that parses as JSON.
std::optional<nlohmann::json> find_json_object(std::string_view text);

/// Replays an ordered transcript. Entry fields: response (string), optional
/// input_tokens / output_tokens (default: word counts), optional purpose
/// (checked against the call), optional error (raises ProviderError).
/// Throws TranscriptExhausted when called past the end.
class ScriptedLlm : public LlmProvider {
 public:
  struct Entry {
    std::string response;
    std::optional<std::uint64_t> input_tokens;
    std::optional<std::uint64_t> output_tokens;
    std::optional<Purpose> purpose;
    std::optional<std::string> error;
  };
  struct Call {
    Purpose purpose;
    std::string prompt;
  };

  explicit ScriptedLlm(std::vector<Entry> entries, std::string model_id = "scripted");
  /// JSON array or JSON lines.
  static ScriptedLlm from_file(const std::filesystem::path& path);
  static std::vector<Entry> parse_transcript(const std::string& text);

  std::string model_id() const override { return model_id_; }
  Completion complete(const std::string& prompt, const CompletionOptions& options) override;

  std::vector<Call> calls() const;
  std::size_t remaining() const;

 private:
  std::string model_id_;
  std::vector<Entry> entries_;
  std::size_t next_ = 0;
  std::vector<Call> calls_;
  mutable std::mutex mu_;
};

/// Offline oracle: decomposes to the question itself, generates the
/// reference query registered for the question and summarizes results by
/// row count. Token counts are word counts.
class EchoReferenceLlm : public LlmProvider {
 public:
  explicit EchoReferenceLlm(std::map<std::string, std::string> reference_by_question);
  std::string model_id() const override { return "echo-reference"; }
  Completion complete(const std::string& prompt, const CompletionOptions& options) override;
  void add(const std::string& question, const std::string& sparql);

 private:
  std::map<std::string, std::string> reference_;
  std::mutex mu_;
};

/// Wraps a callable; convenient for tests and custom adapters.
class FunctionLlm : public LlmProvider {
 public:
  using Fn = std::function<Completion(const std::string&, const CompletionOptions&)>;
  FunctionLlm(std::string model_id, Fn fn) : model_id_(std::move(model_id)), fn_(std::move(fn)) {}
  std::string model_id() const override { return model_id_; }
  Completion complete(const std::string& prompt, const CompletionOptions& options) override {
    return fn_(prompt, options);
  }

 private:
  std::string model_id_;
  Fn fn_;
};

/// OpenAI-compatible chat completions adapter (POST {base_url}/chat/completions).
class OpenAiChatLlm : public LlmProvider {
 public:
  struct Options {
    std::string base_url = "https://api.openai.com/v1";
    std::string model;
    std::string api_key;
    int timeout_seconds = 120;
    int retries = 2;
    bool structured_output = true;
  };
  explicit OpenAiChatLlm(Options options);
  std::string model_id() const override { return options_.model; }
  bool supports_structured_output() const override { return options_.structured_output; }
  Completion complete(const std::string& prompt, const CompletionOptions& options) override;
  StructuredCompletion structured(const std::string& prompt, const nlohmann::json& schema,
                                  const CompletionOptions& options) override;

 private:
  Completion post(const nlohmann::json& body);
  Options options_;
};

}  // namespace quarry::qa
