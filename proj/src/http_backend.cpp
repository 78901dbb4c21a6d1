#include <cstdlib>

#include <httplib.h>

#include "taskprompt/backends.hpp"
#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

Error retryable(ErrorCode code, const std::string& message) {
  Error e(code, message);
  e.retryable = true;
  return e;
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig c;
  c.endpoint = env_or("TASKPROMPT_ENDPOINT", "https://api.openai.com/v1/completions");
  c.api_key = env_or("TASKPROMPT_API_KEY");
  c.model = env_or("TASKPROMPT_MODEL", "text-davinci-001");
  return c;
}

void HttpBackendConfig::apply_file(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "bad config file '" + path.string() + "': " + e.what());
  }
  if (j.contains("endpoint")) endpoint = j["endpoint"].get<std::string>();
  if (j.contains("api_key")) api_key = j["api_key"].get<std::string>();
  if (j.contains("model")) model = j["model"].get<std::string>();
  if (j.contains("timeout_seconds")) timeout = std::chrono::seconds(j["timeout_seconds"].get<int>());
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "endpoint must be an absolute URL: " + config_.endpoint);
  auto path_start = config_.endpoint.find('/', scheme_end + 3);
  origin_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string HttpBackend::send(const nlohmann::ordered_json& request) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto body = request;
  if (!body.contains("model") && !config_.model.empty()) body["model"] = config_.model;
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res)
    throw retryable(ErrorCode::BackendUnavailable, "request failed: " + httplib::to_string(res.error()));

  switch (res->status) {
    case 200:
      return res->body;
    case 401:
    case 403:
      throw Error(ErrorCode::AuthFailure, "backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
    case 429: {
      auto e = retryable(ErrorCode::RateLimited, "rate limited by backend");
      if (res->has_header("Retry-After")) {
        try {
          e.retry_after = std::chrono::milliseconds(
              static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000));
        } catch (const std::exception&) {
        }
      }
      throw e;
    }
    default:
      if (res->status >= 500)
        throw retryable(ErrorCode::BackendUnavailable, "backend error HTTP " + std::to_string(res->status));
      throw Error(ErrorCode::MalformedBackendReply,
                  "unexpected HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
}

}  // namespace taskprompt
