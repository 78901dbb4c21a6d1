#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace taskprompt {

struct GenerationParams {
  double temperature = 0.0;
  int n_responses = 1;
  int max_tokens = 128;
  std::vector<std::string> stop_sequences;
  int top_logprobs = 0;

  /// Throws InvalidParams unless temperature in [0,1], n >= 1,
  /// max_tokens >= 1 and top_logprobs in [0,5].
  void validate() const;

  bool operator==(const GenerationParams&) const = default;
};

enum class FinishReason { Stop, Length };

struct TokenAlternative {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenAlternative&) const = default;
};

struct Choice {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;
  /// Per generated token, alternatives sorted by descending logprob.
  std::vector<std::vector<TokenAlternative>> top_alternatives;
  FinishReason finish_reason = FinishReason::Stop;

  double mean_logprob() const;
  bool operator==(const Choice&) const = default;
};

struct Completion {
  std::vector<Choice> choices;

  bool operator==(const Completion&) const = default;
};

/// Top alternatives at one position as probabilities, descending.
struct TokenDistribution {
  std::vector<std::pair<std::string, double>> entries;

  static TokenDistribution from_alternatives(const std::vector<TokenAlternative>& alts);
};

/// Request body in the completion-API shape.
nlohmann::ordered_json make_request(std::string_view prompt, const GenerationParams& params,
                                    std::string_view model);

/// Decodes a verbatim backend reply. Applies the requested stop sequences
/// client-side, drops whitespace left in front of a fired stop sequence,
/// truncates alternatives to `top_logprobs` and orders choices by
/// descending mean token logprob. Throws MalformedBackendReply.
Completion parse_completion_reply(std::string_view body, const GenerationParams& params);

/// Content address of a request: SHA-256 over the prompt bytes and every
/// parameter field, hex encoded.
std::string cache_key(std::string_view prompt, const GenerationParams& params,
                      std::string_view model = {});

/// Transport to a completion service. `send` returns the raw reply body
/// and throws taskprompt::Error (BackendUnavailable / RateLimited are
/// marked retryable).
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string send(const nlohmann::ordered_json& request) = 0;
};

struct GatewayOptions {
  std::filesystem::path cache_dir;  // empty disables the cache
  bool cache_only = false;          // never call the backend
  std::string model;
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{250};
  std::chrono::milliseconds max_retry_after{30000};
  std::size_t max_parallel = 4;
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

struct GatewayStats {
  std::size_t live_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
};

/// Record/replay front end over a backend. Safe for concurrent use.
class Gateway {
 public:
  Gateway(std::shared_ptr<CompletionBackend> backend, GatewayOptions options);

  Completion complete(std::string_view prompt, const GenerationParams& params);

  /// One-token request at temperature 0 with `top_logprobs` alternatives.
  TokenDistribution first_token_distribution(std::string_view prompt,
                                             const std::vector<std::string>& stop_sequences = {},
                                             int top_logprobs = 5);

  std::string key_for(std::string_view prompt, const GenerationParams& params) const;
  bool cached(std::string_view prompt, const GenerationParams& params) const;

  GatewayStats stats() const;
  const GatewayOptions& options() const { return options_; }

 private:
  std::string fetch(const nlohmann::ordered_json& request);
  void store(const std::string& key, const std::string& body);

  std::shared_ptr<CompletionBackend> backend_;
  GatewayOptions options_;

  std::mutex write_mutex_;
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;

  std::atomic<std::size_t> live_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> retries_{0};
};

}  // namespace taskprompt
