#include "adprof/fusion_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include <json.hpp>

namespace adprof {

namespace {

using K = FusionError::Kind;

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

void check_dim(std::span<const double> v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw FusionError(K::DimMismatch, std::string(what) + " has dimension " + std::to_string(v.size()) +
                                          ", expected " + std::to_string(expected));
  }
}

// acc += alpha * x, for the row-major outer-product updates below.
inline void axpy(double alpha, std::span<const double> x, double* acc) {
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += alpha * x[i];
}

GradientBlocks zeros_like(std::span<const std::span<const double>> blocks) {
  GradientBlocks out;
  out.reserve(blocks.size());
  for (const auto b : blocks) out.emplace_back(b.size(), 0.0);
  return out;
}

nlohmann::json::binary_t pack(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(double));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return nlohmann::json::binary_t(std::move(bytes));
}

std::vector<double> unpack(const nlohmann::json& node, std::size_t expected, const char* what) {
  if (!node.is_binary()) throw FusionError(K::CorruptFile, std::string(what) + " is not a binary array");
  const auto& bytes = node.get_binary();
  if (bytes.size() != expected * sizeof(double)) {
    throw FusionError(K::CorruptFile, std::string(what) + " has the wrong length");
  }
  std::vector<double> values(expected);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act)
    : in_dim(in), out_dim(out), weights(in * out, 0.0), bias(out, 0.0), activation(act) {}

void DenseLayer::forward(std::span<const double> x, std::span<double> pre, std::span<double> out) const {
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* row = weights.data() + o * in_dim;
    double acc = bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * x[i];
    pre[o] = acc;
    out[o] = activation == Activation::Relu ? std::max(acc, 0.0) : acc;
  }
}

std::string_view to_string(FusionMode mode) { return mode == FusionMode::Augmented ? "augmented" : "baseline"; }

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "augmented") return FusionMode::Augmented;
  if (text == "baseline") return FusionMode::Baseline;
  throw FusionError(K::InvalidConfig, "unknown mode '" + std::string(text) + "' (expected augmented|baseline)");
}

FusionNet::FusionNet(FusionMode mode, FusionDims dims) : mode_(mode), dims_(dims) {
  if (dims.sentence == 0 || dims.hidden == 0 ||
      (mode == FusionMode::Augmented && (dims.profile_in == 0 || dims.profile_out == 0))) {
    throw FusionError(K::InvalidConfig, "layer dimensions must be positive");
  }
  if (mode == FusionMode::Augmented) {
    profile_proj_ = DenseLayer(dims.profile_in, dims.profile_out, Activation::Relu);
    head1_ = DenseLayer(dims.sentence + dims.profile_out, dims.hidden, Activation::Relu);
  } else {
    head1_ = DenseLayer(dims.sentence, dims.hidden, Activation::Relu);
  }
  head2_ = DenseLayer(dims.hidden, kNumClasses, Activation::Identity);
}

FusionNet FusionNet::xavier(FusionMode mode, FusionDims dims, std::uint64_t seed) {
  FusionNet net(mode, dims);
  std::mt19937_64 rng(seed);
  const auto init = [&rng](DenseLayer& layer) {
    if (layer.weights.empty()) return;
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : layer.weights) w = dist(rng);
  };
  init(net.profile_proj_);
  init(net.head1_);
  init(net.head2_);
  return net;
}

void FusionNet::check_inputs(std::span<const double> sentence, std::span<const double> pooled_profile) const {
  check_dim(sentence, dims_.sentence, "sentence embedding");
  if (mode_ == FusionMode::Augmented) {
    if (pooled_profile.empty()) throw FusionError(K::ModeMismatch, "augmented mode requires a pooled profile");
    check_dim(pooled_profile, dims_.profile_in, "pooled profile");
  } else if (!pooled_profile.empty()) {
    throw FusionError(K::ModeMismatch, "baseline mode takes no profile input");
  }
}

std::vector<double> FusionNet::profile_embedding(std::span<const double> pooled_profile) const {
  if (mode_ != FusionMode::Augmented) throw FusionError(K::ModeMismatch, "baseline net has no profile projection");
  check_dim(pooled_profile, dims_.profile_in, "pooled profile");
  std::vector<double> pre(dims_.profile_out), hs(dims_.profile_out);
  profile_proj_.forward(pooled_profile, pre, hs);
  return hs;
}

Logits FusionNet::forward(std::span<const double> sentence, std::span<const double> pooled_profile) const {
  check_inputs(sentence, pooled_profile);
  std::vector<double> x(sentence.begin(), sentence.end());
  if (mode_ == FusionMode::Augmented) {
    const auto hs = profile_embedding(pooled_profile);
    x.insert(x.end(), hs.begin(), hs.end());
  }
  std::vector<double> pre(dims_.hidden), h1(dims_.hidden);
  head1_.forward(x, pre, h1);
  Logits logits{};
  Logits pre2{};
  head2_.forward(h1, pre2, logits);
  return logits;
}

std::vector<std::span<double>> FusionNet::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  if (mode_ == FusionMode::Augmented) {
    blocks.emplace_back(profile_proj_.weights);
    blocks.emplace_back(profile_proj_.bias);
  }
  for (auto* layer : {&head1_, &head2_}) {
    blocks.emplace_back(layer->weights);
    blocks.emplace_back(layer->bias);
  }
  return blocks;
}

std::vector<std::span<const double>> FusionNet::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  if (mode_ == FusionMode::Augmented) {
    blocks.emplace_back(profile_proj_.weights);
    blocks.emplace_back(profile_proj_.bias);
  }
  for (const auto* layer : {&head1_, &head2_}) {
    blocks.emplace_back(layer->weights);
    blocks.emplace_back(layer->bias);
  }
  return blocks;
}

std::size_t FusionNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto b : parameter_blocks()) n += b.size();
  return n;
}

Logits softmax(const Logits& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double sum = e0 + e1;
  return {e0 / sum, e1 / sum};
}

double cross_entropy(const Logits& logits, int label) {
  const double m = std::max(logits[0], logits[1]);
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  return lse - logits[static_cast<std::size_t>(label)];
}

BackwardResult backward(const FusionNet& net, std::span<const Sample> batch) {
  if (batch.empty()) throw FusionError(K::InvalidConfig, "backward on an empty batch");
  const auto& dims = net.dims();
  const bool augmented = net.mode() == FusionMode::Augmented;
  const auto& head1 = net.head1();
  const auto& head2 = net.head2();
  const std::size_t head_in = head1.in_dim;

  BackwardResult result;
  result.grads = zeros_like(net.parameter_blocks());
  const std::size_t off = augmented ? 2 : 0;
  auto& g_w1 = result.grads[off];
  auto& g_b1 = result.grads[off + 1];
  auto& g_w2 = result.grads[off + 2];
  auto& g_b2 = result.grads[off + 3];

  // Samples of one participant share a pooled profile; its projection is run
  // once per batch and its gradient accumulated before backpropagating.
  struct ProfileGroup {
    std::span<const double> input;
    std::vector<double> pre, hs, d_hs;
  };
  std::vector<ProfileGroup> groups;
  const auto group_for = [&](std::span<const double> p) -> ProfileGroup& {
    for (auto& g : groups) {
      if (g.input.data() == p.data()) return g;
    }
    ProfileGroup g{p, std::vector<double>(dims.profile_out), std::vector<double>(dims.profile_out),
                   std::vector<double>(dims.profile_out, 0.0)};
    net.profile_proj().forward(p, g.pre, g.hs);
    groups.push_back(std::move(g));
    return groups.back();
  };

  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> x(head_in), pre1(dims.hidden), h1(dims.hidden), d_a1(dims.hidden);
  double total_loss = 0.0;

  for (const auto& sample : batch) {
    check_dim(sample.sentence, dims.sentence, "sentence embedding");
    if (sample.label != 0 && sample.label != 1) throw FusionError(K::InvalidConfig, "label must be 0 or 1");
    std::size_t group_index = 0;
    std::copy(sample.sentence.begin(), sample.sentence.end(), x.begin());
    if (augmented) {
      if (sample.profile.empty()) throw FusionError(K::ModeMismatch, "augmented mode requires a pooled profile");
      check_dim(sample.profile, dims.profile_in, "pooled profile");
      auto& g = group_for(sample.profile);
      group_index = static_cast<std::size_t>(&g - groups.data());
      std::copy(g.hs.begin(), g.hs.end(), x.begin() + static_cast<std::ptrdiff_t>(dims.sentence));
    } else if (!sample.profile.empty()) {
      throw FusionError(K::ModeMismatch, "baseline mode takes no profile input");
    }

    head1.forward(x, pre1, h1);
    Logits z{}, pre2{};
    head2.forward(h1, pre2, z);
    total_loss += cross_entropy(z, sample.label);

    auto dz = softmax(z);
    dz[static_cast<std::size_t>(sample.label)] -= 1.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) dz[c] *= scale;

    std::fill(d_a1.begin(), d_a1.end(), 0.0);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      g_b2[c] += dz[c];
      axpy(dz[c], h1, g_w2.data() + c * dims.hidden);
      const double* row = head2.weights.data() + c * dims.hidden;
      for (std::size_t o = 0; o < dims.hidden; ++o) d_a1[o] += row[o] * dz[c];
    }
    for (std::size_t o = 0; o < dims.hidden; ++o) {
      if (pre1[o] <= 0.0) continue;
      const double d = d_a1[o];
      g_b1[o] += d;
      axpy(d, x, g_w1.data() + o * head_in);
      if (augmented) {
        const double* row = head1.weights.data() + o * head_in + dims.sentence;
        auto& d_hs = groups[group_index].d_hs;
        for (std::size_t k = 0; k < dims.profile_out; ++k) d_hs[k] += row[k] * d;
      }
    }
  }

  if (augmented) {
    auto& g_wp = result.grads[0];
    auto& g_bp = result.grads[1];
    for (const auto& g : groups) {
      for (std::size_t k = 0; k < dims.profile_out; ++k) {
        if (g.pre[k] <= 0.0) continue;
        g_bp[k] += g.d_hs[k];
        axpy(g.d_hs[k], g.input, g_wp.data() + k * dims.profile_in);
      }
    }
  }

  result.mean_loss = total_loss * scale;
  return result;
}

double mean_loss(const FusionNet& net, std::span<const Sample> batch) {
  if (batch.empty()) throw FusionError(K::InvalidConfig, "loss over an empty batch");
  double total = 0.0;
  for (const auto& s : batch) total += cross_entropy(net.forward(s.sentence, s.profile), s.label);
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------

AdamWState AdamWState::for_parameters(std::span<const std::span<const double>> params, AdamWConfig config) {
  AdamWState state;
  state.config = config;
  state.first_moment = zeros_like(params);
  state.second_moment = zeros_like(params);
  return state;
}

void adamw_step(AdamWState& state, std::span<const std::span<double>> params, const GradientBlocks& grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw FusionError(K::ShapeMismatch, "parameter, gradient and moment block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size() ||
        params[b].size() != state.second_moment[b].size()) {
      throw FusionError(K::ShapeMismatch, "block " + std::to_string(b) + " shape mismatch");
    }
  }

  const auto& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  const double decay = c.learning_rate * c.weight_decay;

  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    const auto& g = grads[b];
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= decay * p[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw FusionError(K::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw FusionError(K::InvalidConfig, "batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw FusionError(K::InvalidConfig, "learning rate must be positive");
  if (optimizer.weight_decay < 0.0) throw FusionError(K::InvalidConfig, "weight decay must be >= 0");
}

TrainResult train(FusionNet& net, std::span<const Sample> dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw FusionError(K::InvalidConfig, "empty training set");
  const bool has_hc = std::any_of(dataset.begin(), dataset.end(), [](const Sample& s) { return s.label == 0; });
  const bool has_ad = std::any_of(dataset.begin(), dataset.end(), [](const Sample& s) { return s.label == 1; });
  if (!has_hc || !has_ad) throw FusionError(K::SingleClassDataset, "training set needs both HC and AD samples");

  TrainResult result;
  result.optimizer = AdamWState::for_parameters(std::as_const(net).parameter_blocks(), config.optimizer);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  batch.reserve(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
      const auto step = backward(net, batch);
      total += step.mean_loss * static_cast<double>(batch.size());
      adamw_step(result.optimizer, net.parameter_blocks(), step.grads);
    }
    result.loss_history.push_back(total / static_cast<double>(dataset.size()));
  }
  return result;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const FusionNet& net, const AdamWState& optimizer) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto b : net.parameter_blocks()) params.push_back(nlohmann::json::binary(pack(b)));
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  for (const auto& b : optimizer.first_moment) m.push_back(nlohmann::json::binary(pack(b)));
  for (const auto& b : optimizer.second_moment) v.push_back(nlohmann::json::binary(pack(b)));

  const auto& d = net.dims();
  const auto& c = optimizer.config;
  const nlohmann::json doc = {
      {"format", "adprof-fusion-checkpoint"},
      {"format_version", kCheckpointFormatVersion},
      {"mode", to_string(net.mode())},
      {"dims",
       {{"sentence", d.sentence}, {"profile_in", d.profile_in}, {"profile_out", d.profile_out}, {"hidden", d.hidden},
        {"classes", kNumClasses}}},
      {"encoding", "float64-le"},
      {"parameters", std::move(params)},
      {"optimizer",
       {{"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"eps", c.eps},
        {"weight_decay", c.weight_decay},
        {"step_count", optimizer.step_count},
        {"first_moment", std::move(m)},
        {"second_moment", std::move(v)}}}};

  const auto bytes = nlohmann::json::to_cbor(doc);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FusionError(K::Io, "cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FusionError(K::Io, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  nlohmann::json doc;
  try {
    doc = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FusionError(K::CorruptFile, path.string() + ": " + e.what());
  }

  try {
    if (doc.at("format").get<std::string>() != "adprof-fusion-checkpoint") {
      throw FusionError(K::CorruptFile, path.string() + " is not a fusion checkpoint");
    }
    const auto version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw FusionError(K::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                " is not supported (expected " +
                                                std::to_string(kCheckpointFormatVersion) + ")");
    }
    const auto& jd = doc.at("dims");
    FusionDims dims{jd.at("sentence").get<std::size_t>(), jd.at("profile_in").get<std::size_t>(),
                    jd.at("profile_out").get<std::size_t>(), jd.at("hidden").get<std::size_t>()};
    if (jd.at("classes").get<std::size_t>() != kNumClasses) throw FusionError(K::CorruptFile, "unsupported class count");

    Checkpoint ck{FusionNet(parse_fusion_mode(doc.at("mode").get<std::string>()), dims), {}};
    auto blocks = ck.net.parameter_blocks();
    const auto& params = doc.at("parameters");
    if (params.size() != blocks.size()) throw FusionError(K::CorruptFile, "parameter block count mismatch");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto values = unpack(params[b], blocks[b].size(), "parameter block");
      std::copy(values.begin(), values.end(), blocks[b].begin());
    }

    const auto& jo = doc.at("optimizer");
    auto& opt = ck.optimizer;
    opt.config = {jo.at("learning_rate").get<double>(), jo.at("beta1").get<double>(), jo.at("beta2").get<double>(),
                  jo.at("eps").get<double>(), jo.at("weight_decay").get<double>()};
    opt.step_count = jo.at("step_count").get<std::uint64_t>();
    const auto& m = jo.at("first_moment");
    const auto& v = jo.at("second_moment");
    if (m.size() != blocks.size() || v.size() != blocks.size()) {
      throw FusionError(K::CorruptFile, "optimizer moment block count mismatch");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      opt.first_moment.push_back(unpack(m[b], blocks[b].size(), "first moment"));
      opt.second_moment.push_back(unpack(v[b], blocks[b].size(), "second moment"));
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FusionError(K::CorruptFile, path.string() + ": " + e.what());
  }
}

}  // namespace adprof
