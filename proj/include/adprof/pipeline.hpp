#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adprof/embedding.hpp"
#include "adprof/fusion_model.hpp"
#include "adprof/llm_client.hpp"
#include "adprof/synth.hpp"

namespace adprof {

class PipelineError : public std::runtime_error {
 public:
  enum class Kind { MissingArtifact, ConfigError, StageFailure };

  PipelineError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

enum class Stage { Ingest, Profile, Embed, Train, Eval, Analyze, Report, All };

std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view text);

enum class CorpusFormat { Records, Chat };
enum class LlmKind { Mock, Http };

/// Everything a pipeline run needs. Relative paths resolve against base_dir
/// (the directory holding the config file).
struct PipelineConfig {
  std::filesystem::path base_dir = ".";

  std::filesystem::path train_corpus;
  std::filesystem::path test_corpus;
  CorpusFormat corpus_format = CorpusFormat::Records;
  std::optional<std::filesystem::path> annotations;  // required by the mock LLM

  std::filesystem::path work_dir = "run";
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> profiles_dir;
  std::optional<std::filesystem::path> checkpoints_dir;
  std::optional<std::filesystem::path> reports_dir;

  std::string catalog = "RA13";

  LlmKind llm_kind = LlmKind::Mock;
  LlmConfig llm;
  MockProfilerConfig mock_llm;

  EmbeddingProviderConfig attribute_embedding;
  EmbeddingProviderConfig sentence_embedding;

  std::size_t profile_dim = 512;
  std::size_t hidden_dim = 640;
  TrainConfig train;
  std::vector<FusionMode> modes{FusionMode::Augmented, FusionMode::Baseline};

  std::optional<std::string> case_participant;

  static PipelineConfig defaults();
  static PipelineConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path work() const { return resolve(work_dir); }
  std::filesystem::path sessions_path() const { return work() / "sessions"; }
  std::filesystem::path cache_path() const { return cache_dir ? resolve(*cache_dir) : work() / "cache"; }
  std::filesystem::path profiles_path() const { return profiles_dir ? resolve(*profiles_dir) : work() / "profiles"; }
  std::filesystem::path embeddings_path() const { return work() / "embeddings"; }
  std::filesystem::path checkpoints_path() const {
    return checkpoints_dir ? resolve(*checkpoints_dir) : work() / "checkpoints";
  }
  std::filesystem::path predictions_path() const { return work() / "predictions"; }
  std::filesystem::path analysis_path() const { return work() / "analysis"; }
  std::filesystem::path reports_path() const { return reports_dir ? resolve(*reports_dir) : work() / "reports"; }

  FusionDims fusion_dims() const;
  void validate() const;
};

/// Runs the staged workflow. Stages exchange data only through files under
/// the configured directories, so any stage can be rerun on its own.
class Pipeline {
 public:
  /// `chat_backend` replaces the backend chosen by the config (used by tests).
  explicit Pipeline(PipelineConfig config, std::shared_ptr<ChatBackend> chat_backend = nullptr,
                    std::ostream* log = nullptr);

  const PipelineConfig& config() const { return config_; }
  /// The backend used by the profile stage (created on first use).
  std::shared_ptr<ChatBackend> chat_backend();

  void run(Stage stage);

  void ingest();
  void profile();
  void embed();
  void train();
  void eval();
  void analyze();
  void report();

 private:
  void note(const std::string& message);

  PipelineConfig config_;
  std::shared_ptr<ChatBackend> chat_backend_;
  std::ostream* log_;
};

/// Writes train.jsonl, test.jsonl, annotations.jsonl and pipeline.json into `dir`.
/// The config points at the generated files and uses the mock providers.
std::filesystem::path write_synthetic_workspace(const std::filesystem::path& dir, const SynthConfig& train,
                                                const SynthConfig& test);

}  // namespace adprof
