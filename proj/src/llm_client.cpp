#include "soulstyle/llm_client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "soulstyle/errors.hpp"

namespace soulstyle::llm {

namespace {

const char* kSystemMessage =
    "You split image stylization instructions into their style and target-object parts "
    "and reply with JSON only.";

std::string extract_assistant_text(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded())
    throw BackendError("llm endpoint returned non-JSON body: " + body.substr(0, 200));
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("llm endpoint response missing choices[0].message.content");
  }
}

}  // namespace

std::string query_llm(const EndpointConfig& endpoint, const std::string& prompt) {
  if (endpoint.base_url.empty()) throw BackendError("llm endpoint has no base URL");

  httplib::Client client(endpoint.base_url);
  client.set_connection_timeout(endpoint.timeout_sec, 0);
  client.set_read_timeout(endpoint.timeout_sec, 0);

  httplib::Headers headers;
  if (!endpoint.auth_token.empty())
    headers.emplace("Authorization", "Bearer " + endpoint.auth_token);

  const nlohmann::json request = {
      {"model", endpoint.model},
      {"temperature", endpoint.temperature},
      {"max_tokens", endpoint.max_tokens},
      {"messages",
       {{{"role", "system"}, {"content", kSystemMessage}},
        {{"role", "user"}, {"content", prompt}}}},
  };
  const std::string body = request.dump();

  int backoff_ms = endpoint.initial_backoff_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport failure, retry
    }
    if (res->status < 200 || res->status >= 300)
      throw BackendError("llm endpoint returned status " + std::to_string(res->status) +
                         ": " + res->body.substr(0, 200));
    return extract_assistant_text(res->body);
  }
  throw BackendError("llm endpoint unreachable after " +
                     std::to_string(endpoint.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace soulstyle::llm
