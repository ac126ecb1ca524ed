#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adprof/attribute_catalog.hpp"
#include "adprof/fusion_model.hpp"
#include "adprof/profile.hpp"
#include "adprof/transcript.hpp"

namespace adprof {

class EvaluationError : public std::runtime_error {
 public:
  enum class Kind { EmptyInput, MixedParticipants, NonContiguous, UndefinedMetric, ParticipantMismatch, KeyMismatch, Io };

  EvaluationError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct SentencePrediction {
  std::string participant_id;
  std::size_t sentence_index = 0;
  Label predicted = Label::HC;
  Logits logits{};

  bool operator==(const SentencePrediction&) const = default;
};

/// argmax over logits with ties resolved to AD.
Label predicted_label(const Logits& logits);
SentencePrediction make_sentence_prediction(std::string participant_id, std::size_t index, const Logits& logits);

struct ParticipantPrediction {
  std::string participant_id;
  double ad_sentence_pct = 0.0;  // P: share of sentences predicted AD, in percent
  Label final = Label::HC;
  std::size_t sentence_count = 0;

  bool operator==(const ParticipantPrediction&) const = default;
};

/// Majority vote over one participant's sentences; P >= 50 votes AD.
ParticipantPrediction majority_vote(std::span<const SentencePrediction> predictions);
/// Groups by participant (first-appearance order) and votes each group.
std::vector<ParticipantPrediction> majority_vote_all(std::span<const SentencePrediction> predictions);

enum class Averaging { Macro, Binary };

struct ClassCounts {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
};

/// Percentages in [0, 100]. Precision/recall/F1 are nullopt when undefined
/// (a class with no predicted or no actual members).
struct MetricsReport {
  Averaging averaging = Averaging::Macro;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  bool defined() const { return precision && recall && f1; }
  /// Throws EvaluationError(UndefinedMetric) when any metric is undefined.
  void require_defined() const;
};

/// `finals` holds (predicted, truth) pairs.
MetricsReport compute_metrics(std::span<const std::pair<Label, Label>> finals, Averaging averaging = Averaging::Macro);

using DeltaMap = std::map<std::string, double>;

/// delta = P_proposed - P_baseline per participant, in percentage points.
DeltaMap risk_ascend(std::span<const ParticipantPrediction> proposed, std::span<const ParticipantPrediction> baseline);

struct RiskGroupRow {
  std::size_t n_attr = 0;
  std::size_t n_hc = 0;
  std::size_t correct_hc = 0;
  std::optional<double> mean_delta_hc;  // rounded to one decimal
  std::size_t n_ad = 0;
  std::size_t correct_ad = 0;
  std::optional<double> mean_delta_ad;
};

inline constexpr std::array<std::string_view, 7> kRiskReportColumns = {
    "N_attr", "N_hc", "y_hat_hc", "delta_hc", "N_ad", "y_hat_ad", "delta_ad"};

struct RiskAscendReport {
  DeltaMap deltas;
  std::vector<RiskGroupRow> rows;  // ascending n_attr, only n_attr >= 1
};

/// Groups participants with at least one detected attribute by N_attr and
/// splits each group by ground truth. All maps must share the same keys.
RiskAscendReport group_risk_report(const DeltaMap& deltas, const std::map<std::string, PatientProfile>& profiles,
                                   const std::map<std::string, Label>& truths,
                                   const std::map<std::string, Label>& finals);

/// Detected attributes with their examples and description, then the summary.
std::string case_report(const PatientProfile& profile, const AttributeCatalog& catalog);

std::string render_metrics_table(std::span<const std::pair<std::string, MetricsReport>> rows);
std::string render_risk_report(const RiskAscendReport& report);

nlohmann::json to_json(const SentencePrediction& p);
SentencePrediction sentence_prediction_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ParticipantPrediction& p);
nlohmann::json to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RiskAscendReport& r);
RiskAscendReport risk_report_from_json(const nlohmann::json& doc);

void write_predictions(std::ostream& out, std::span<const SentencePrediction> predictions);
std::vector<SentencePrediction> read_predictions(std::istream& in);

}  // namespace adprof
