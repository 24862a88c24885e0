#pragma once

#include <string>
#include <string_view>

namespace biasgrid::detail {

struct HttpResult {
  // 0 when the transport failed before a status line arrived.
  int status = 0;
  std::string body;
  std::string transport_error;
};

HttpResult http_post_json(std::string_view url, std::string_view path, const std::string& body);
HttpResult http_get(std::string_view url, std::string_view path);

// Runs `attempt` up to max_attempts times, sleeping backoff_ms * 2^i between
// tries, while it reports a retryable outcome (transport failure or 5xx).
// Returns the final result.
template <typename Fn>
HttpResult with_retries(int max_attempts, int backoff_ms, Fn&& attempt);

}  // namespace biasgrid::detail

#include <chrono>
#include <thread>

namespace biasgrid::detail {

inline bool retryable(const HttpResult& r) { return r.status == 0 || r.status >= 500; }

template <typename Fn>
HttpResult with_retries(int max_attempts, int backoff_ms, Fn&& attempt) {
  HttpResult result;
  for (int i = 0; i < max_attempts; ++i) {
    if (i > 0) std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms << (i - 1)));
    result = attempt();
    if (!retryable(result)) break;
  }
  return result;
}

}  // namespace biasgrid::detail
