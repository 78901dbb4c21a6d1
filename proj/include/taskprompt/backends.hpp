#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "taskprompt/llm.hpp"

namespace taskprompt {

struct ScriptToken {
  std::string text;
  double logprob = 0.0;
  std::vector<TokenAlternative> alternatives;  // empty: the token alone
};

/// One scripted continuation family. A request matches when its prompt
/// contains `contains` and, after some occurrence of `after`, the rest of
/// the prompt is a prefix of a sample's text. Generation resumes from that
/// point, so forced words and accepted steps walk the same transcript.
struct Script {
  std::string contains;
  std::string after;
  std::vector<std::vector<ScriptToken>> samples;
};

/// Deterministic stand-in for a completion service, driven by transcripts.
/// The longest prompt/transcript overlap wins; ties go to the earlier
/// script. For n > 1 choices cycle through the matching samples.
class ScriptedBackend : public CompletionBackend {
 public:
  explicit ScriptedBackend(std::vector<Script> scripts, std::chrono::microseconds latency = {});
  ScriptedBackend(ScriptedBackend&& other) noexcept
      : scripts_(std::move(other.scripts_)), latency_(other.latency_), calls_(other.calls_.load()) {}

  /// {"scripts":[{"contains":..,"after":..,"samples":[..]}]}; each sample is
  /// either {"tokens":[[text, logprob, {alt: logprob}]]} or
  /// {"text":..,"logprob":..,"step_alternatives":[[[word, p], ..], ..]}.
  static ScriptedBackend from_json(const nlohmann::json& j);
  static ScriptedBackend from_file(const std::filesystem::path& path);

  std::string send(const nlohmann::ordered_json& request) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<Script> scripts_;
  std::chrono::microseconds latency_;
  std::atomic<std::size_t> calls_{0};
};

/// Splits a transcript into tokens: step boundaries ("\n2. ") and closing
/// delimiters (" (END TASK)") are single tokens; other tokens carry their
/// leading whitespace.
std::vector<std::string> tokenize_transcript(std::string_view text);

struct HttpBackendConfig {
  std::string endpoint;  // full completions URL
  std::string api_key;
  std::string model;
  std::chrono::seconds timeout{60};

  /// TASKPROMPT_ENDPOINT, TASKPROMPT_API_KEY, TASKPROMPT_MODEL.
  static HttpBackendConfig from_env();
  /// Overrides fields present in a JSON config file.
  void apply_file(const std::filesystem::path& path);
};

/// Completion-API client over HTTP(S).
class HttpBackend : public CompletionBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  std::string send(const nlohmann::ordered_json& request) override;

 private:
  HttpBackendConfig config_;
  std::string origin_;
  std::string path_;
};

}  // namespace taskprompt
