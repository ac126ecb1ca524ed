#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adprof {

class EmbeddingError : public std::runtime_error {
 public:
  enum class Kind { EmptyInput, DimMismatch, NonFinite, Transport, Auth, Config, CacheIo };

  EmbeddingError(Kind kind, const std::string& message, std::string context = {}, bool retryable = false)
      : std::runtime_error(message), kind_(kind), context_(std::move(context)), retryable_(retryable) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& context() const noexcept { return context_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  Kind kind_;
  std::string context_;
  bool retryable_;
};

/// A finite, non-empty real vector.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool empty() const { return values_.empty(); }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

/// Element-wise maximum over a non-empty list of equal-dimension vectors.
EmbeddingVector max_pool(std::span<const EmbeddingVector> vectors);

enum class ProviderKind { Remote, MockHash, MockInformative };

std::string_view to_string(ProviderKind kind);
std::optional<ProviderKind> parse_provider_kind(std::string_view text);

struct EmbeddingProviderConfig {
  ProviderKind kind = ProviderKind::MockHash;
  std::string endpoint_url;  // Remote only
  std::string model_name = "text-embedding-ada-002";
  std::size_t dim = 1536;
  std::string credential_env_var = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};
  std::size_t batch_size = 16;
  std::optional<std::filesystem::path> cache_dir;  // Remote only
  std::uint64_t seed = 0;                          // mocks
  double noise = 0.1;                              // MockInformative noise std-dev

  void validate() const;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string_view model_name() const = 0;
  /// Embeds every text; throws EmbeddingError. Texts must be non-empty.
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;

  EmbeddingVector embed(std::string_view text);
};

/// Pseudo-random unit vector seeded by a hash of (seed, text).
class MockHashProvider final : public EmbeddingProvider {
 public:
  MockHashProvider(std::size_t dim, std::uint64_t seed = 0);

  std::size_t dim() const override { return dim_; }
  std::string_view model_name() const override { return "mock_hash"; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// One row of the mock_informative keyword table: the coordinate set to 1.0
/// when the text shows the marker.
struct MarkerRule {
  std::size_t coordinate;
  std::string_view attribute_id;
  std::vector<std::string_view> tokens;   // whole-token match, case-insensitive
  std::vector<std::string_view> phrases;  // substring match, case-insensitive
  bool adjacent_repeat = false;           // fires on an immediately repeated token
};

/// The published keyword-to-coordinate table of MockInformativeProvider.
const std::vector<MarkerRule>& informative_marker_table();
/// Coordinates that fire for `text`, ascending.
std::vector<std::size_t> informative_coordinates(std::string_view text);

/// Indicator coordinates (exactly 0 or 1) for deficit markers, followed by
/// hash-seeded Gaussian noise in the remaining coordinates.
class MockInformativeProvider final : public EmbeddingProvider {
 public:
  MockInformativeProvider(std::size_t dim, double noise, std::uint64_t seed = 0);

  std::size_t dim() const override { return dim_; }
  std::string_view model_name() const override { return "mock_informative"; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
  double noise_;
  std::uint64_t seed_;
};

/// Embedding service over HTTP using the input-array request schema, with
/// requests batched by config.batch_size and an optional on-disk cache keyed by
/// (model_name, text).
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(EmbeddingProviderConfig config);

  std::size_t dim() const override { return config_.dim; }
  std::string_view model_name() const override { return config_.model_name; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  /// HTTP requests issued so far (cache hits issue none).
  std::size_t request_count() const { return requests_; }

 private:
  std::vector<EmbeddingVector> request_batch(std::span<const std::string> texts);
  std::optional<EmbeddingVector> cache_load(const std::string& text) const;
  void cache_store(const std::string& text, const EmbeddingVector& v) const;

  EmbeddingProviderConfig config_;
  std::atomic<std::size_t> requests_{0};
};

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& config);

}  // namespace adprof
