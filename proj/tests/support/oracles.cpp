#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace adprof::testing {

SampleSet random_samples(Gen& gen, const FusionNet& net, std::size_t n) {
  SampleSet set;
  const bool augmented = net.mode() == FusionMode::Augmented;
  const std::size_t n_profiles = augmented ? std::max<std::size_t>(1, n / 3) : 0;
  for (std::size_t i = 0; i < n_profiles; ++i) set.profiles.push_back(gen.vector(net.dims().profile_in));
  for (std::size_t i = 0; i < n; ++i) set.sentences.push_back(gen.vector(net.dims().sentence));
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.sentence = set.sentences[i];
    if (augmented) s.profile = set.profiles[gen.index(n_profiles)];
    s.label = gen.coin() ? 1 : 0;
    set.samples.push_back(s);
  }
  return set;
}

double max_gradient_error(const FusionNet& net, std::span<const Sample> batch, double step, double floor) {
  const auto analytic = backward(net, batch).grads;
  FusionNet probe = net;
  auto blocks = probe.parameter_blocks();
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double saved = blocks[b][i];
      blocks[b][i] = saved + step;
      const double up = mean_loss(probe, batch);
      blocks[b][i] = saved - step;
      const double down = mean_loss(probe, batch);
      blocks[b][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[b][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

BruteMetrics brute_force_metrics(const std::vector<std::pair<Label, Label>>& finals, bool macro) {
  BruteMetrics out;
  std::size_t correct = 0;
  for (const auto& [pred, truth] : finals) correct += pred == truth ? 1 : 0;
  out.accuracy = finals.empty() ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(finals.size());

  struct PerClass {
    std::optional<double> p, r, f;
  };
  const auto per_class = [&](Label positive) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& [pred, truth] : finals) {
      if (pred == positive && truth == positive) ++tp;
      if (pred == positive && truth != positive) ++fp;
      if (pred != positive && truth == positive) ++fn;
    }
    PerClass c;
    if (tp + fp > 0) c.p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) c.r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (c.p && c.r) c.f = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
    return c;
  };

  if (!macro) {
    const auto ad = per_class(Label::AD);
    if (ad.p) out.precision = 100.0 * *ad.p;
    if (ad.r) out.recall = 100.0 * *ad.r;
    if (ad.f) out.f1 = 100.0 * *ad.f;
    return out;
  }
  const auto hc = per_class(Label::HC);
  const auto ad = per_class(Label::AD);
  if (hc.p && ad.p) out.precision = 100.0 * (*hc.p + *ad.p) / 2.0;
  if (hc.r && ad.r) out.recall = 100.0 * (*hc.r + *ad.r) / 2.0;
  if (hc.f && ad.f) out.f1 = 100.0 * (*hc.f + *ad.f) / 2.0;
  return out;
}

std::pair<double, Label> brute_vote(const std::vector<Label>& sentence_labels) {
  std::size_t ad = 0, hc = 0;
  for (const auto l : sentence_labels) (l == Label::AD ? ad : hc) += 1;
  const double pct = 100.0 * static_cast<double>(ad) / static_cast<double>(ad + hc);
  return {pct, ad >= hc ? Label::AD : Label::HC};
}

std::pair<double, double> hand_adamw(double p0, double g1, double g2, const AdamWConfig& c) {
  // Step 1
  double p = p0 - c.learning_rate * c.weight_decay * p0;
  double m = (1 - c.beta1) * g1;
  double v = (1 - c.beta2) * g1 * g1;
  p -= c.learning_rate * (m / (1 - c.beta1)) / (std::sqrt(v / (1 - c.beta2)) + c.eps);
  const double p1 = p;
  // Step 2
  p = p1 - c.learning_rate * c.weight_decay * p1;
  m = c.beta1 * m + (1 - c.beta1) * g2;
  v = c.beta2 * v + (1 - c.beta2) * g2 * g2;
  p -= c.learning_rate * (m / (1 - c.beta1 * c.beta1)) / (std::sqrt(v / (1 - c.beta2 * c.beta2)) + c.eps);
  return {p1, p};
}

}  // namespace adprof::testing
