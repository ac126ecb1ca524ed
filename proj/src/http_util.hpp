#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <httplib.h>

namespace adprof::detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path plus query, at least "/"
};

inline bool parse_endpoint(std::string_view url, Endpoint& out) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) return false;
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return false;
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
    out.path = "/";
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.path = std::string(url.substr(path_start));
  }
  return out.origin.size() > scheme_end + 3;
}

inline std::unique_ptr<httplib::Client> make_client(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(endpoint.origin);
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client->set_connection_timeout(sec, usec);
  client->set_read_timeout(sec, usec);
  client->set_write_timeout(sec, usec);
  return client;
}

/// Reads the credential from the named environment variable; empty name means no auth.
inline std::optional<std::string> read_credential(const std::string& env_var) {
  if (env_var.empty()) return std::string{};
  const char* value = std::getenv(env_var.c_str());
  if (value == nullptr || *value == '\0') return std::nullopt;
  return std::string(value);
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace adprof::detail
