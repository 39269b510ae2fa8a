#pragma once

#include <string>

namespace soulstyle::llm {

struct EndpointConfig {
  std::string base_url;             // e.g. http://localhost:8080
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string auth_token;           // optional; sent as a Bearer header
  double temperature = 0.0;
  int max_tokens = 256;
  int max_retries = 3;
  int initial_backoff_ms = 250;     // doubled after each transport failure
  int timeout_sec = 30;
};

// Sends one chat-completion request (system + user message) and returns the
// assistant text verbatim. Transport failures are retried with exponential
// backoff; a non-success HTTP status fails immediately with the status and
// a body excerpt. Throws BackendError.
std::string query_llm(const EndpointConfig& endpoint, const std::string& prompt);

}  // namespace soulstyle::llm
