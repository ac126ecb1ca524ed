#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "adprof/attribute_catalog.hpp"

namespace adprof {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// The fixed second-turn message of the profiling protocol.
inline constexpr std::string_view kFollowUpPrompt = "Please answer the sheet";
/// Bumped whenever the two-turn exchange changes shape; part of every cache key.
inline constexpr std::string_view kProtocolVersion = "two-turn-v1";

enum class AuthScheme { Bearer, ApiKeyHeader };

struct LlmConfig {
  std::string endpoint_url;
  std::string model_name = "gpt-35-turbo";
  double temperature = 0.0;
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};
  /// Name of the environment variable holding the API key; empty disables auth.
  std::string credential_env_var = "OPENAI_API_KEY";
  AuthScheme auth_scheme = AuthScheme::Bearer;
  std::size_t max_in_flight = 4;

  void validate() const;
};

class LlmError : public std::runtime_error {
 public:
  enum class Kind { Transport, Auth, Empty, CacheIo, Config };

  LlmError(Kind kind, const std::string& message, std::string context = {}, bool retryable = false)
      : std::runtime_error(message), kind_(kind), context_(std::move(context)), retryable_(retryable) {}

  Kind kind() const noexcept { return kind_; }
  /// Raw request/response text or file path relevant to the failure.
  const std::string& context() const noexcept { return context_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  Kind kind_;
  std::string context_;
  bool retryable_;
};

/// Request/response pair as sent over the wire (messages-array schema).
struct ChatExchange {
  nlohmann::json request;
  nlohmann::json response;
};

struct ChatCompletion {
  std::string content;
  ChatExchange exchange;
};

nlohmann::json chat_request_body(std::span<const ChatMessage> messages, const LlmConfig& config);

/// One completion round-trip. Implementations throw LlmError.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatCompletion complete(std::span<const ChatMessage> messages, const LlmConfig& config) = 0;
};

/// Chat-completion service over HTTP(S).
class HttpChatBackend final : public ChatBackend {
 public:
  ChatCompletion complete(std::span<const ChatMessage> messages, const LlmConfig& config) override;
};

/// In-process backend answering from a script keyed by request ordinal.
/// Every request is captured. Safe to share between threads.
class ScriptedChatBackend final : public ChatBackend {
 public:
  struct Reply {
    std::string content;
    std::optional<LlmError::Kind> failure;  // throw instead of answering
    bool retryable = true;
  };

  explicit ScriptedChatBackend(std::vector<Reply> script = {});

  ChatCompletion complete(std::span<const ChatMessage> messages, const LlmConfig& config) override;

  std::size_t request_count() const;
  std::vector<std::vector<ChatMessage>> requests() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Reply> script_;
  std::vector<std::vector<ChatMessage>> requests_;
};

struct ProfileQueryResult {
  std::string turn1_response;
  std::string turn2_response;  // the answered sheet
  std::string model_name;
  bool cached = false;
  std::vector<ChatExchange> exchanges;
};

/// Runs the two-turn profiling exchange: the prompt, then kFollowUpPrompt
/// with the first answer in context. Each turn retries independently, so a
/// completed first turn is never re-issued.
class LlmClient {
 public:
  LlmClient(LlmConfig config, std::shared_ptr<ChatBackend> backend);

  const LlmConfig& config() const { return config_; }
  ProfileQueryResult query_profile(const PromptText& prompt) const;

 private:
  ChatCompletion complete_with_retry(std::span<const ChatMessage> messages, std::string_view turn) const;

  LlmConfig config_;
  std::shared_ptr<ChatBackend> backend_;
};

/// On-disk store of profile query results, one JSON file per key.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(std::string_view model_name, std::string_view prompt_text);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_for(std::string_view key) const;

  /// nullopt on miss. A corrupt entry is deleted and reported as CacheIo.
  std::optional<ProfileQueryResult> load(const std::string& key) const;
  void store(const std::string& key, const ProfileQueryResult& result) const;

 private:
  std::mutex& key_mutex(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::mutex table_mutex_;
  mutable std::unordered_map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
};

ProfileQueryResult cached_query(const ResponseCache& cache, const LlmClient& client, const PromptText& prompt);

/// Queries many prompts with at most config().max_in_flight concurrent
/// exchanges. Results are in input order. When a query fails, the first failure
/// in input order is rethrown as LlmError naming labels[i].
std::vector<ProfileQueryResult> query_profiles(const ResponseCache* cache, const LlmClient& client,
                                               std::span<const PromptText> prompts,
                                               std::span<const std::string> labels = {});

}  // namespace adprof
