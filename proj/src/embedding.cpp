#include "adprof/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adprof/hashing.hpp"
#include "http_util.hpp"

namespace adprof {

namespace {

using K = EmbeddingError::Kind;

std::uint64_t text_seed(std::uint64_t seed, std::string_view text) {
  const auto digest = sha256(std::to_string(seed) + '\x1f' + std::string(text));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | digest[static_cast<std::size_t>(i)];
  return out;
}

void require_texts(std::span<const std::string> texts) {
  for (const auto& t : texts) {
    if (t.empty()) throw EmbeddingError(K::EmptyInput, "cannot embed an empty text");
  }
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::vector<std::string> tokenize_upper(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const unsigned char c : text) {
    if (std::isalnum(c) || c == '\'') {
      current.push_back(static_cast<char>(std::toupper(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw EmbeddingError(K::EmptyInput, "embedding vector has dimension 0");
  for (const double v : values_) {
    if (!std::isfinite(v)) throw EmbeddingError(K::NonFinite, "embedding vector has a non-finite entry");
  }
}

EmbeddingVector max_pool(std::span<const EmbeddingVector> vectors) {
  if (vectors.empty()) throw EmbeddingError(K::EmptyInput, "max_pool over an empty list");
  const auto dim = vectors.front().dim();
  std::vector<double> out(vectors.front().values().begin(), vectors.front().values().end());
  for (const auto& v : vectors.subspan(1)) {
    if (v.dim() != dim) {
      throw EmbeddingError(K::DimMismatch, "max_pool dimension mismatch: " + std::to_string(v.dim()) +
                                               " vs " + std::to_string(dim));
    }
    const auto values = v.values();
    for (std::size_t k = 0; k < dim; ++k) out[k] = std::max(out[k], values[k]);
  }
  return EmbeddingVector(std::move(out));
}

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::Remote: return "remote";
    case ProviderKind::MockHash: return "mock_hash";
    case ProviderKind::MockInformative: return "mock_informative";
  }
  return "mock_hash";
}

std::optional<ProviderKind> parse_provider_kind(std::string_view text) {
  if (text == "remote") return ProviderKind::Remote;
  if (text == "mock_hash") return ProviderKind::MockHash;
  if (text == "mock_informative") return ProviderKind::MockInformative;
  return std::nullopt;
}

void EmbeddingProviderConfig::validate() const {
  if (dim == 0) throw EmbeddingError(K::Config, "embedding dim must be positive");
  if (kind == ProviderKind::Remote && endpoint_url.empty()) {
    throw EmbeddingError(K::Config, "remote embedding provider requires endpoint_url");
  }
  if (batch_size == 0) throw EmbeddingError(K::Config, "batch_size must be positive");
  if (max_retries < 0) throw EmbeddingError(K::Config, "max_retries must be >= 0");
  if (noise < 0.0) throw EmbeddingError(K::Config, "noise must be >= 0");
  if (kind == ProviderKind::MockInformative && dim <= informative_marker_table().size()) {
    throw EmbeddingError(K::Config, "mock_informative needs dim > " + std::to_string(informative_marker_table().size()));
  }
}

EmbeddingVector EmbeddingProvider::embed(std::string_view text) {
  const std::string owned(text);
  auto out = embed_batch(std::span<const std::string>(&owned, 1));
  return std::move(out.front());
}

// ---------------------------------------------------------------------------

MockHashProvider::MockHashProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw EmbeddingError(K::Config, "embedding dim must be positive");
}

std::vector<EmbeddingVector> MockHashProvider::embed_batch(std::span<const std::string> texts) {
  require_texts(texts);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::mt19937_64 rng(text_seed(seed_, text));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim_);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& x : v) {
        x = normal(rng);
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    out.emplace_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<MarkerRule>& informative_marker_table() {
  static const std::vector<MarkerRule> table = {
      {0, "hesitation_pauses", {"UH", "UM", "ER", "HMM", "UHM"}, {"hesitation"}},
      {1, "word_phrase_repetition", {}, {"repetition"}, true},
      {2, "limited_recall_of_details", {}, {"i don't know", "don't remember", "recall"}},
      {3, "empty_speech", {"THING", "THINGS", "STUFF", "SOMETHING"}, {"empty speech"}},
      {4, "trailing_off_speech", {}, {"...", "trailing off"}},
      {5, "word_phrase_revision", {}, {"i mean", "revision"}},
      {6, "lack_of_narrative_coherence", {"ANYWAY"}, {"coherence"}},
      {7, "circumlocution", {}, {"circumlocution"}},
      {8, "telegraphic_speech", {}, {"telegraphic"}},
      {9, "misuse_of_pronouns", {}, {"pronoun"}},
      {10, "poor_grammar", {}, {"grammar"}},
      {11, "anomia", {}, {"anomia"}},
      {12, "dysfluency", {}, {"dysfluency"}},
      {13, "agrammatism", {}, {"agrammatism"}},
  };
  return table;
}

std::vector<std::size_t> informative_coordinates(std::string_view text) {
  const auto tokens = tokenize_upper(text);
  const auto haystack = upper(text);
  std::vector<std::size_t> fired;
  for (const auto& rule : informative_marker_table()) {
    bool hit = false;
    for (const auto t : rule.tokens) {
      hit = hit || std::find(tokens.begin(), tokens.end(), t) != tokens.end();
    }
    for (const auto p : rule.phrases) {
      hit = hit || haystack.find(upper(p)) != std::string::npos;
    }
    if (rule.adjacent_repeat) {
      for (std::size_t i = 1; i < tokens.size() && !hit; ++i) hit = tokens[i] == tokens[i - 1];
    }
    if (hit) fired.push_back(rule.coordinate);
  }
  return fired;
}

MockInformativeProvider::MockInformativeProvider(std::size_t dim, double noise, std::uint64_t seed)
    : dim_(dim), noise_(noise), seed_(seed) {
  EmbeddingProviderConfig check;
  check.kind = ProviderKind::MockInformative;
  check.dim = dim;
  check.noise = noise;
  check.validate();
}

std::vector<EmbeddingVector> MockInformativeProvider::embed_batch(std::span<const std::string> texts) {
  require_texts(texts);
  const auto reserved = informative_marker_table().size();
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    for (const auto k : informative_coordinates(text)) v[k] = 1.0;
    if (noise_ > 0.0) {
      std::mt19937_64 rng(text_seed(seed_, text));
      std::normal_distribution<double> normal(0.0, noise_);
      for (std::size_t k = reserved; k < dim_; ++k) v[k] = normal(rng);
    }
    out.emplace_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

RemoteEmbeddingProvider::RemoteEmbeddingProvider(EmbeddingProviderConfig config) : config_(std::move(config)) {
  config_.kind = ProviderKind::Remote;
  config_.validate();
  if (config_.cache_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*config_.cache_dir, ec);
    if (ec) throw EmbeddingError(K::CacheIo, "cannot create " + config_.cache_dir->string() + ": " + ec.message());
  }
}

std::optional<EmbeddingVector> RemoteEmbeddingProvider::cache_load(const std::string& text) const {
  if (!config_.cache_dir) return std::nullopt;
  const auto path = *config_.cache_dir / (sha256_fields({config_.model_name, text}) + ".json");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const auto doc = nlohmann::json::parse(in);
    EmbeddingVector v(doc.at("embedding").get<std::vector<double>>());
    if (v.dim() != config_.dim) throw std::runtime_error("dimension mismatch");
    return v;
  } catch (const std::exception&) {
    // Unreadable entries are dropped and re-fetched.
    in.close();
    std::error_code ec;
    std::filesystem::remove(path, ec);
    return std::nullopt;
  }
}

void RemoteEmbeddingProvider::cache_store(const std::string& text, const EmbeddingVector& v) const {
  if (!config_.cache_dir) return;
  const auto path = *config_.cache_dir / (sha256_fields({config_.model_name, text}) + ".json");
  auto tmp = path;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const nlohmann::json doc = {{"model", config_.model_name},
                                {"embedding", std::vector<double>(v.values().begin(), v.values().end())}};
    out << doc.dump();
    if (!out) throw EmbeddingError(K::CacheIo, "cannot write embedding cache entry", tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw EmbeddingError(K::CacheIo, "cannot commit embedding cache entry: " + ec.message(), path.string());
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::request_batch(std::span<const std::string> texts) {
  detail::Endpoint endpoint;
  if (!detail::parse_endpoint(config_.endpoint_url, endpoint)) {
    throw EmbeddingError(K::Config, "invalid embedding endpoint URL '" + config_.endpoint_url + "'");
  }
  const auto credential = detail::read_credential(config_.credential_env_var);
  if (!credential) throw EmbeddingError(K::Auth, "environment variable " + config_.credential_env_var + " is not set");

  const nlohmann::json request = {{"model", config_.model_name},
                                  {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto body = request.dump();
  httplib::Headers headers;
  if (!credential->empty()) headers.emplace("Authorization", "Bearer " + *credential);

  for (int attempt = 0;; ++attempt) {
    try {
      ++requests_;
      auto client = detail::make_client(endpoint, config_.timeout);
      const auto res = client->Post(endpoint.path, headers, body, "application/json");
      if (!res) {
        throw EmbeddingError(K::Transport, "embedding request failed: " + httplib::to_string(res.error()), body, true);
      }
      if (res->status == 401 || res->status == 403) {
        throw EmbeddingError(K::Auth, "credential rejected (HTTP " + std::to_string(res->status) + ")", res->body);
      }
      if (res->status != 200) {
        throw EmbeddingError(K::Transport, "embedding endpoint returned HTTP " + std::to_string(res->status),
                             res->body, detail::retryable_status(res->status));
      }

      std::vector<EmbeddingVector> out(texts.size());
      try {
        const auto doc = nlohmann::json::parse(res->body);
        const auto& data = doc.at("data");
        if (data.size() != texts.size()) throw std::runtime_error("expected " + std::to_string(texts.size()) + " embeddings");
        for (std::size_t i = 0; i < data.size(); ++i) {
          const auto index = data[i].value("index", i);
          if (index >= texts.size() || !out[index].empty()) throw std::runtime_error("bad embedding index");
          out[index] = EmbeddingVector(data[i].at("embedding").get<std::vector<double>>());
        }
      } catch (const EmbeddingError&) {
        throw;
      } catch (const std::exception& e) {
        throw EmbeddingError(K::Transport, std::string("malformed embedding response: ") + e.what(), res->body);
      }
      for (const auto& v : out) {
        if (v.dim() != config_.dim) {
          throw EmbeddingError(K::DimMismatch, "service returned dim " + std::to_string(v.dim()) + ", expected " +
                                                   std::to_string(config_.dim));
        }
      }
      return out;
    } catch (const EmbeddingError& e) {
      if (!e.retryable() || attempt >= config_.max_retries) throw;
    }
    if (config_.retry_backoff.count() > 0) std::this_thread::sleep_for(config_.retry_backoff * (1 << std::min(attempt, 6)));
  }
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  require_texts(texts);
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_load(texts[i])) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(i);
    }
  }
  for (std::size_t start = 0; start < missing.size(); start += config_.batch_size) {
    const auto stop = std::min(missing.size(), start + config_.batch_size);
    std::vector<std::string> chunk;
    for (std::size_t j = start; j < stop; ++j) chunk.push_back(texts[missing[j]]);
    auto vectors = request_batch(chunk);
    for (std::size_t j = start; j < stop; ++j) {
      cache_store(texts[missing[j]], vectors[j - start]);
      out[missing[j]] = std::move(vectors[j - start]);
    }
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& config) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::Remote: return std::make_unique<RemoteEmbeddingProvider>(config);
    case ProviderKind::MockHash: return std::make_unique<MockHashProvider>(config.dim, config.seed);
    case ProviderKind::MockInformative:
      return std::make_unique<MockInformativeProvider>(config.dim, config.noise, config.seed);
  }
  throw EmbeddingError(K::Config, "unknown provider kind");
}

}  // namespace adprof
