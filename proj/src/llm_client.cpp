#include "adprof/llm_client.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "adprof/hashing.hpp"
#include "http_util.hpp"

namespace adprof {

namespace {

using K = LlmError::Kind;

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

nlohmann::json result_to_json(const ProfileQueryResult& r) {
  nlohmann::json exchanges = nlohmann::json::array();
  for (const auto& e : r.exchanges) exchanges.push_back({{"request", e.request}, {"response", e.response}});
  return {{"protocol_version", kProtocolVersion},
          {"model_name", r.model_name},
          {"turn1_response", r.turn1_response},
          {"turn2_response", r.turn2_response},
          {"exchanges", std::move(exchanges)}};
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void LlmConfig::validate() const {
  if (timeout.count() <= 0) throw LlmError(K::Config, "LLM timeout must be positive");
  if (max_retries < 0) throw LlmError(K::Config, "max_retries must be >= 0");
  if (temperature < 0.0) throw LlmError(K::Config, "temperature must be >= 0");
  if (max_in_flight == 0) throw LlmError(K::Config, "max_in_flight must be >= 1");
  if (model_name.empty()) throw LlmError(K::Config, "model_name is empty");
}

nlohmann::json chat_request_body(std::span<const ChatMessage> messages, const LlmConfig& config) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", config.model_name}, {"messages", std::move(msgs)}, {"temperature", config.temperature}};
}

// ---------------------------------------------------------------------------

ChatCompletion HttpChatBackend::complete(std::span<const ChatMessage> messages, const LlmConfig& config) {
  detail::Endpoint endpoint;
  if (!detail::parse_endpoint(config.endpoint_url, endpoint)) {
    throw LlmError(K::Config, "invalid chat endpoint URL '" + config.endpoint_url + "'");
  }
  const auto credential = detail::read_credential(config.credential_env_var);
  if (!credential) {
    throw LlmError(K::Auth, "environment variable " + config.credential_env_var + " is not set");
  }

  ChatCompletion completion;
  completion.exchange.request = chat_request_body(messages, config);
  const auto body = completion.exchange.request.dump();

  httplib::Headers headers;
  if (!credential->empty()) {
    if (config.auth_scheme == AuthScheme::Bearer) {
      headers.emplace("Authorization", "Bearer " + *credential);
    } else {
      headers.emplace("api-key", *credential);
    }
  }

  auto client = detail::make_client(endpoint, config.timeout);
  const auto res = client->Post(endpoint.path, headers, body, "application/json");
  if (!res) {
    throw LlmError(K::Transport, "chat request failed: " + httplib::to_string(res.error()), body, true);
  }
  if (res->status == 401 || res->status == 403) {
    throw LlmError(K::Auth, "credential rejected (HTTP " + std::to_string(res->status) + ")", res->body);
  }
  if (res->status != 200) {
    throw LlmError(K::Transport, "chat endpoint returned HTTP " + std::to_string(res->status), res->body,
                   detail::retryable_status(res->status));
  }

  try {
    completion.exchange.response = nlohmann::json::parse(res->body);
    const auto& content = completion.exchange.response.at("choices").at(0).at("message").at("content");
    completion.content = content.is_string() ? content.get<std::string>() : std::string{};
  } catch (const nlohmann::json::exception& e) {
    throw LlmError(K::Transport, std::string("malformed chat response: ") + e.what(), res->body);
  }
  return completion;
}

// ---------------------------------------------------------------------------

ScriptedChatBackend::ScriptedChatBackend(std::vector<Reply> script) : script_(std::move(script)) {}

ChatCompletion ScriptedChatBackend::complete(std::span<const ChatMessage> messages, const LlmConfig& config) {
  Reply reply;
  {
    std::lock_guard lock(mutex_);
    const auto ordinal = requests_.size();
    requests_.emplace_back(messages.begin(), messages.end());
    if (ordinal >= script_.size()) {
      throw LlmError(K::Transport, "script exhausted at request " + std::to_string(ordinal));
    }
    reply = script_[ordinal];
  }
  if (reply.failure) throw LlmError(*reply.failure, "scripted failure", {}, reply.retryable);

  ChatCompletion completion;
  completion.content = reply.content;
  completion.exchange.request = chat_request_body(messages, config);
  completion.exchange.response = {
      {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.content}}}}}}};
  return completion;
}

std::size_t ScriptedChatBackend::request_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::vector<std::vector<ChatMessage>> ScriptedChatBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(LlmConfig config, std::shared_ptr<ChatBackend> backend)
    : config_(std::move(config)), backend_(std::move(backend)) {
  config_.validate();
  if (!backend_) throw LlmError(K::Config, "LlmClient needs a backend");
}

ChatCompletion LlmClient::complete_with_retry(std::span<const ChatMessage> messages, std::string_view turn) const {
  for (int attempt = 0;; ++attempt) {
    try {
      return backend_->complete(messages, config_);
    } catch (const LlmError& e) {
      if (!e.retryable() || attempt >= config_.max_retries) {
        throw LlmError(e.kind(), std::string(turn) + ": " + e.what(), e.context(), false);
      }
    }
    if (config_.retry_backoff.count() > 0) std::this_thread::sleep_for(config_.retry_backoff * (1 << std::min(attempt, 6)));
  }
}

ProfileQueryResult LlmClient::query_profile(const PromptText& prompt) const {
  ProfileQueryResult result;
  result.model_name = config_.model_name;

  std::vector<ChatMessage> messages{{Role::User, prompt.text}};
  auto first = complete_with_retry(messages, "turn 1");
  if (blank(first.content)) {
    throw LlmError(K::Empty, "turn 1 returned an empty completion", first.exchange.response.dump());
  }
  result.turn1_response = first.content;
  result.exchanges.push_back(std::move(first.exchange));

  messages.push_back({Role::Assistant, result.turn1_response});
  messages.push_back({Role::User, std::string(kFollowUpPrompt)});
  auto second = complete_with_retry(messages, "turn 2");
  if (blank(second.content)) {
    throw LlmError(K::Empty, "turn 2 returned an empty completion", second.exchange.response.dump());
  }
  result.turn2_response = second.content;
  result.exchanges.push_back(std::move(second.exchange));
  return result;
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw LlmError(K::CacheIo, "cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::string ResponseCache::key(std::string_view model_name, std::string_view prompt_text) {
  return sha256_fields({model_name, prompt_text, kProtocolVersion});
}

std::filesystem::path ResponseCache::path_for(std::string_view key) const {
  return dir_ / (std::string(key) + ".json");
}

std::mutex& ResponseCache::key_mutex(const std::string& key) const {
  std::lock_guard lock(table_mutex_);
  auto& slot = key_mutexes_[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::optional<ProfileQueryResult> ResponseCache::load(const std::string& key) const {
  std::lock_guard lock(key_mutex(key));
  const auto path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buffer;
  buffer << in.rdbuf();
  in.close();

  try {
    const auto doc = nlohmann::json::parse(buffer.str());
    if (doc.at("protocol_version").get<std::string>() != kProtocolVersion) {
      throw std::runtime_error("protocol version mismatch");
    }
    ProfileQueryResult r;
    r.model_name = doc.at("model_name").get<std::string>();
    r.turn1_response = doc.at("turn1_response").get<std::string>();
    r.turn2_response = doc.at("turn2_response").get<std::string>();
    for (const auto& e : doc.at("exchanges")) r.exchanges.push_back({e.at("request"), e.at("response")});
    if (blank(r.turn2_response)) throw std::runtime_error("empty turn 2 response");
    r.cached = true;
    return r;
  } catch (const std::exception& e) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw LlmError(K::CacheIo, "corrupt cache entry evicted: " + std::string(e.what()), path.string());
  }
}

void ResponseCache::store(const std::string& key, const ProfileQueryResult& result) const {
  std::lock_guard lock(key_mutex(key));
  const auto path = path_for(key);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << result_to_json(result).dump(2) << '\n';
    if (!out) throw LlmError(K::CacheIo, "cannot write cache entry", tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw LlmError(K::CacheIo, "cannot commit cache entry: " + ec.message(), path.string());
}

ProfileQueryResult cached_query(const ResponseCache& cache, const LlmClient& client, const PromptText& prompt) {
  const auto key = ResponseCache::key(client.config().model_name, prompt.text);
  if (auto hit = cache.load(key)) return *hit;
  auto result = client.query_profile(prompt);
  cache.store(key, result);
  return result;
}

std::vector<ProfileQueryResult> query_profiles(const ResponseCache* cache, const LlmClient& client,
                                               std::span<const PromptText> prompts,
                                               std::span<const std::string> labels) {
  std::vector<ProfileQueryResult> results(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (auto i = next.fetch_add(1); i < prompts.size(); i = next.fetch_add(1)) {
      try {
        results[i] = cache ? cached_query(*cache, client, prompts[i]) : client.query_profile(prompts[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const auto n_workers = std::min(client.config().max_in_flight, prompts.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    const auto label = i < labels.size() ? labels[i] : "prompt #" + std::to_string(i);
    try {
      std::rethrow_exception(errors[i]);
    } catch (const LlmError& e) {
      throw LlmError(e.kind(), label + ": " + e.what(), e.context(), e.retryable());
    } catch (const std::exception& e) {
      throw LlmError(K::Transport, label + ": " + e.what());
    }
  }
  return results;
}

}  // namespace adprof
