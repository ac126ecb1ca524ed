#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adprof {

class FusionError : public std::runtime_error {
 public:
  enum class Kind {
    DimMismatch,
    ModeMismatch,
    ShapeMismatch,
    SingleClassDataset,
    InvalidConfig,
    VersionMismatch,
    CorruptFile,
    Io
  };

  FusionError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::size_t kNumClasses = 2;
using Logits = std::array<double, kNumClasses>;

enum class Activation { Relu, Identity };

/// Fully connected layer, weights stored row-major as out_dim x in_dim.
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::Identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act);

  double& weight(std::size_t row, std::size_t col) { return weights[row * in_dim + col]; }
  double weight(std::size_t row, std::size_t col) const { return weights[row * in_dim + col]; }

  /// pre = W x + b; out = activation(pre).
  void forward(std::span<const double> x, std::span<double> pre, std::span<double> out) const;

  bool operator==(const DenseLayer&) const = default;
};

enum class FusionMode { Augmented, Baseline };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

/// Layer sizes. The defaults are the full-scale model: 768-d sentence
/// embeddings, 1536-d pooled attribute embeddings projected to 512, and a
/// 640-unit hidden layer.
struct FusionDims {
  std::size_t sentence = 768;
  std::size_t profile_in = 1536;
  std::size_t profile_out = 512;
  std::size_t hidden = 640;

  bool operator==(const FusionDims&) const = default;
};

/// Profile projection plus the two-layer sentence classification head.
///
/// Augmented: h_s = relu(P p + b_p), logits = H2 relu(H1 [s ; h_s] + b1) + b2.
/// Baseline: logits = H2 relu(H1 s + b1) + b2 (no projection).
class FusionNet {
 public:
  FusionNet(FusionMode mode, FusionDims dims = {});

  /// Glorot-uniform weights and zero biases from a seeded generator.
  static FusionNet xavier(FusionMode mode, FusionDims dims, std::uint64_t seed);

  FusionMode mode() const { return mode_; }
  const FusionDims& dims() const { return dims_; }
  std::size_t head_input_dim() const { return head1_.in_dim; }

  DenseLayer& profile_proj() { return profile_proj_; }
  const DenseLayer& profile_proj() const { return profile_proj_; }
  DenseLayer& head1() { return head1_; }
  const DenseLayer& head1() const { return head1_; }
  DenseLayer& head2() { return head2_; }
  const DenseLayer& head2() const { return head2_; }

  /// `pooled_profile` must be empty in baseline mode and profile_in-long in augmented mode.
  Logits forward(std::span<const double> sentence, std::span<const double> pooled_profile = {}) const;

  /// h_s for a pooled profile (augmented mode only).
  std::vector<double> profile_embedding(std::span<const double> pooled_profile) const;

  /// Parameter blocks in a fixed order: [proj W, proj b,] head1 W, head1 b, head2 W, head2 b.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
  std::size_t parameter_count() const;

  bool operator==(const FusionNet&) const = default;

 private:
  void check_inputs(std::span<const double> sentence, std::span<const double> pooled_profile) const;

  FusionMode mode_;
  FusionDims dims_;
  DenseLayer profile_proj_;
  DenseLayer head1_;
  DenseLayer head2_;
};

Logits softmax(const Logits& logits);
/// -log softmax(logits)[label], stabilized with log-sum-exp.
double cross_entropy(const Logits& logits, int label);

/// One training example; spans reference caller-owned storage.
struct Sample {
  std::span<const double> sentence;
  std::span<const double> profile;  // empty in baseline mode
  int label = 0;                    // HC=0, AD=1
};

/// Gradients aligned with FusionNet::parameter_blocks().
using GradientBlocks = std::vector<std::vector<double>>;

struct BackwardResult {
  GradientBlocks grads;
  double mean_loss = 0.0;
};

/// Gradients of the mean cross-entropy over `batch` with respect to every parameter.
BackwardResult backward(const FusionNet& net, std::span<const Sample> batch);

/// Mean cross-entropy without gradients.
double mean_loss(const FusionNet& net, std::span<const Sample> batch);

struct AdamWConfig {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  bool operator==(const AdamWConfig&) const = default;
};

struct AdamWState {
  AdamWConfig config;
  GradientBlocks first_moment;
  GradientBlocks second_moment;
  std::uint64_t step_count = 0;

  /// Zero moments shaped like `params`.
  static AdamWState for_parameters(std::span<const std::span<const double>> params, AdamWConfig config = {});

  bool operator==(const AdamWState&) const = default;
};

/// One AdamW update: decoupled decay p -= lr*wd*p, then the bias-corrected
/// Adam step p -= lr * m_hat / (sqrt(v_hat) + eps).
void adamw_step(AdamWState& state, std::span<const std::span<double>> params, const GradientBlocks& grads);

struct TrainConfig {
  int epochs = 4;
  std::size_t batch_size = 16;
  std::uint64_t seed = 42;
  AdamWConfig optimizer;

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_history;  // mean training loss per epoch
  AdamWState optimizer;
};

/// Shuffled mini-batch AdamW training. Deterministic for a given seed.
TrainResult train(FusionNet& net, std::span<const Sample> dataset, const TrainConfig& config);

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  FusionNet net;
  AdamWState optimizer;
};

/// CBOR document: format version, mode, dims, flat float64 parameter arrays
/// and the optimizer state.
void save_checkpoint(const std::filesystem::path& path, const FusionNet& net, const AdamWState& optimizer);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adprof
