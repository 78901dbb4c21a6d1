#include "taskprompt/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

using nlohmann::ordered_json;

namespace {

Error malformed(const std::string& what) {
  return Error(ErrorCode::MalformedBackendReply, "malformed backend reply: " + what);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

void append_field(std::string& buf, std::string_view name, std::string_view value) {
  buf += name;
  buf += ':';
  buf += std::to_string(value.size());
  buf += ':';
  buf += value;
  buf += ';';
}

std::string exact_double(double v) {
  char tmp[64];
  std::snprintf(tmp, sizeof tmp, "%a", v);
  return tmp;
}

// Earliest occurrence of any stop sequence, or npos.
std::size_t find_stop(std::string_view s, const std::vector<std::string>& stops) {
  std::size_t best = std::string_view::npos;
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    auto pos = s.find(stop);
    if (pos < best) best = pos;
  }
  return best;
}

Choice parse_choice(const ordered_json& j, const GenerationParams& params) {
  Choice c;
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) throw malformed("choice without text");
  c.text = j["text"].get<std::string>();
  auto fr = j.value("finish_reason", std::string("stop"));
  if (fr == "stop") {
    c.finish_reason = FinishReason::Stop;
  } else if (fr == "length") {
    c.finish_reason = FinishReason::Length;
  } else {
    throw malformed("unknown finish_reason '" + fr + "'");
  }

  if (j.contains("logprobs") && j["logprobs"].is_object()) {
    const auto& lp = j["logprobs"];
    if (lp.contains("tokens") && lp["tokens"].is_array())
      for (const auto& t : lp["tokens"]) c.tokens.push_back(t.get<std::string>());
    if (lp.contains("token_logprobs") && lp["token_logprobs"].is_array())
      for (const auto& v : lp["token_logprobs"]) c.token_logprobs.push_back(v.is_number() ? v.get<double>() : 0.0);
    if (c.tokens.size() != c.token_logprobs.size()) throw malformed("tokens and token_logprobs differ in length");
    for (double v : c.token_logprobs)
      if (v > 1e-9 || std::isnan(v)) throw malformed("positive logprob");
    if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array()) {
      for (const auto& m : lp["top_logprobs"]) {
        std::vector<TokenAlternative> alts;
        if (m.is_object()) {
          for (auto it = m.begin(); it != m.end(); ++it) {
            double v = it.value().get<double>();
            if (v > 1e-9 || std::isnan(v)) throw malformed("positive logprob in alternatives");
            alts.push_back({it.key(), std::min(v, 0.0)});
          }
        }
        std::stable_sort(alts.begin(), alts.end(),
                         [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
        if (alts.size() > static_cast<std::size_t>(params.top_logprobs)) alts.resize(params.top_logprobs);
        c.top_alternatives.push_back(std::move(alts));
      }
    }
  }

  // Enforce stop sequences even when the backend did not.
  auto cut = find_stop(c.text, params.stop_sequences);
  if (cut != std::string::npos) {
    c.text.resize(cut);
    c.finish_reason = FinishReason::Stop;
    std::size_t offset = 0;
    std::size_t keep = 0;
    while (keep < c.tokens.size() && offset < cut) offset += c.tokens[keep++].size();
    c.tokens.resize(keep);
    c.token_logprobs.resize(keep);
    if (c.top_alternatives.size() > keep) c.top_alternatives.resize(keep);
  }
  if (c.finish_reason == FinishReason::Stop && !params.stop_sequences.empty())
    c.text = std::string(text::rtrim(c.text));
  return c;
}

}  // namespace

void GenerationParams::validate() const {
  auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidParams, m); };
  if (!(temperature >= 0.0 && temperature <= 1.0)) throw bad("temperature must be in [0,1]");
  if (n_responses < 1) throw bad("n_responses must be >= 1");
  if (max_tokens < 1) throw bad("max_tokens must be >= 1");
  if (top_logprobs < 0 || top_logprobs > 5) throw bad("top_logprobs must be in [0,5]");
}

double Choice::mean_logprob() const {
  if (token_logprobs.empty()) return 0.0;
  return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0) /
         static_cast<double>(token_logprobs.size());
}

TokenDistribution TokenDistribution::from_alternatives(const std::vector<TokenAlternative>& alts) {
  TokenDistribution d;
  for (const auto& a : alts) d.entries.emplace_back(a.token, std::exp(a.logprob));
  std::stable_sort(d.entries.begin(), d.entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return d;
}

ordered_json make_request(std::string_view prompt, const GenerationParams& params,
                          std::string_view model) {
  ordered_json req;
  if (!model.empty()) req["model"] = model;
  req["prompt"] = prompt;
  req["temperature"] = params.temperature;
  req["n"] = params.n_responses;
  req["max_tokens"] = params.max_tokens;
  if (!params.stop_sequences.empty()) req["stop"] = params.stop_sequences;
  req["logprobs"] = params.top_logprobs;
  return req;
}

Completion parse_completion_reply(std::string_view body, const GenerationParams& params) {
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw malformed(e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array())
    throw malformed("missing choices array");
  Completion out;
  try {
    for (const auto& c : j["choices"]) out.choices.push_back(parse_choice(c, params));
  } catch (const nlohmann::json::exception& e) {
    throw malformed(e.what());
  }
  if (out.choices.empty()) throw malformed("empty choices array");
  std::stable_sort(out.choices.begin(), out.choices.end(),
                   [](const Choice& a, const Choice& b) { return a.mean_logprob() > b.mean_logprob(); });
  return out;
}

std::string cache_key(std::string_view prompt, const GenerationParams& params, std::string_view model) {
  std::string buf;
  append_field(buf, "model", model);
  append_field(buf, "prompt", prompt);
  append_field(buf, "temperature", exact_double(params.temperature));
  append_field(buf, "n", std::to_string(params.n_responses));
  append_field(buf, "max_tokens", std::to_string(params.max_tokens));
  append_field(buf, "stops", std::to_string(params.stop_sequences.size()));
  for (const auto& s : params.stop_sequences) append_field(buf, "stop", s);
  append_field(buf, "top_logprobs", std::to_string(params.top_logprobs));
  return sha256_hex(buf);
}

Gateway::Gateway(std::shared_ptr<CompletionBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.max_parallel == 0) options_.max_parallel = 1;
  if (options_.max_attempts < 1) options_.max_attempts = 1;
  if (!options_.cache_dir.empty()) std::filesystem::create_directories(options_.cache_dir);
}

std::string Gateway::key_for(std::string_view prompt, const GenerationParams& params) const {
  return cache_key(prompt, params, options_.model);
}

bool Gateway::cached(std::string_view prompt, const GenerationParams& params) const {
  return !options_.cache_dir.empty() &&
         std::filesystem::exists(options_.cache_dir / (key_for(prompt, params) + ".json"));
}

Completion Gateway::complete(std::string_view prompt, const GenerationParams& params) {
  params.validate();
  const auto key = key_for(prompt, params);
  if (!options_.cache_dir.empty()) {
    auto path = options_.cache_dir / (key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      ++cache_hits_;
      return parse_completion_reply(ss.str(), params);
    }
  }
  if (options_.cache_only) throw Error(ErrorCode::CacheMiss, "no cached reply for key " + key);
  if (!backend_) throw Error(ErrorCode::BackendUnavailable, "no completion backend configured");

  auto body = fetch(make_request(prompt, params, options_.model));
  auto completion = parse_completion_reply(body, params);
  if (!options_.cache_dir.empty()) store(key, body);
  return completion;
}

TokenDistribution Gateway::first_token_distribution(std::string_view prompt,
                                                    const std::vector<std::string>& stop_sequences,
                                                    int top_logprobs) {
  if (top_logprobs < 1) throw Error(ErrorCode::InvalidParams, "top_logprobs must be >= 1");
  GenerationParams p;
  p.temperature = 0.0;
  p.n_responses = 1;
  p.max_tokens = 1;
  p.top_logprobs = top_logprobs;
  p.stop_sequences = stop_sequences;
  auto completion = complete(prompt, p);
  const auto& choice = completion.choices.front();
  if (!choice.top_alternatives.empty() && !choice.top_alternatives.front().empty())
    return TokenDistribution::from_alternatives(choice.top_alternatives.front());
  if (!choice.tokens.empty())
    return TokenDistribution::from_alternatives({{choice.tokens.front(), choice.token_logprobs.front()}});
  return {};
}

std::string Gateway::fetch(const ordered_json& request) {
  {
    std::unique_lock lock(slot_mutex_);
    slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_parallel; });
    ++in_flight_;
  }
  struct Release {
    Gateway* g;
    ~Release() {
      {
        std::lock_guard lock(g->slot_mutex_);
        --g->in_flight_;
      }
      g->slot_cv_.notify_one();
    }
  } release{this};

  for (int attempt = 1;; ++attempt) {
    try {
      ++live_calls_;
      return backend_->send(request);
    } catch (const Error& e) {
      if (!e.retryable || attempt >= options_.max_attempts) throw;
      ++retries_;
      auto delay = options_.base_backoff * (1 << (attempt - 1));
      if (e.code() == ErrorCode::RateLimited && e.retry_after)
        delay = std::min(*e.retry_after, options_.max_retry_after);
      options_.sleep(delay);
    }
  }
}

void Gateway::store(const std::string& key, const std::string& body) {
  std::lock_guard lock(write_mutex_);
  auto final_path = options_.cache_dir / (key + ".json");
  auto tmp_path = options_.cache_dir / (key + ".json.tmp");
  text::write_file(tmp_path, body);
  std::filesystem::rename(tmp_path, final_path);
}

GatewayStats Gateway::stats() const {
  return {live_calls_.load(), cache_hits_.load(), retries_.load()};
}

}  // namespace taskprompt
