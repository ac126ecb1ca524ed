#include "adprof/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace adprof {

namespace {

using K = EvaluationError::Kind;

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

std::string fixed_or_dash(const std::optional<double>& value, int decimals) {
  return value ? fixed(*value, decimals) : std::string("-");
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  if (out.size() < width) out.append(width - out.size(), ' ');
  return out;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> optional_from(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

Label label_from_json(const nlohmann::json& v) {
  const auto label = parse_label(v.get<std::string>());
  if (!label) throw EvaluationError(K::Io, "invalid label " + v.dump());
  return *label;
}

struct ClassScores {
  std::optional<double> precision, recall, f1;
};

ClassScores class_scores(const ClassCounts& c) {
  ClassScores s;
  if (c.true_positive + c.false_positive > 0) {
    s.precision = static_cast<double>(c.true_positive) / static_cast<double>(c.true_positive + c.false_positive);
  }
  if (c.true_positive + c.false_negative > 0) {
    s.recall = static_cast<double>(c.true_positive) / static_cast<double>(c.true_positive + c.false_negative);
  }
  if (s.precision && s.recall) {
    const double denom = *s.precision + *s.recall;
    s.f1 = denom > 0.0 ? 2.0 * *s.precision * *s.recall / denom : 0.0;
  }
  return s;
}

std::optional<double> mean_pct(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return 100.0 * (*a + *b) / 2.0;
}

std::optional<double> pct(const std::optional<double>& a) {
  if (!a) return std::nullopt;
  return 100.0 * *a;
}

}  // namespace

Label predicted_label(const Logits& logits) { return logits[1] >= logits[0] ? Label::AD : Label::HC; }

SentencePrediction make_sentence_prediction(std::string participant_id, std::size_t index, const Logits& logits) {
  return {std::move(participant_id), index, predicted_label(logits), logits};
}

ParticipantPrediction majority_vote(std::span<const SentencePrediction> predictions) {
  if (predictions.empty()) throw EvaluationError(K::EmptyInput, "majority vote over no sentences");
  const auto& id = predictions.front().participant_id;
  std::vector<std::size_t> indices;
  std::size_t ad = 0;
  for (const auto& p : predictions) {
    if (p.participant_id != id) {
      throw EvaluationError(K::MixedParticipants, "majority vote mixes " + id + " and " + p.participant_id);
    }
    indices.push_back(p.sentence_index);
    if (p.predicted == Label::AD) ++ad;
  }
  std::sort(indices.begin(), indices.end());
  for (std::size_t i = 1; i < indices.size(); ++i) {
    if (indices[i] != indices[i - 1] + 1) {
      throw EvaluationError(K::NonContiguous, "sentence indices of " + id + " are not contiguous");
    }
  }

  ParticipantPrediction out;
  out.participant_id = id;
  out.sentence_count = predictions.size();
  out.ad_sentence_pct = 100.0 * static_cast<double>(ad) / static_cast<double>(predictions.size());
  out.final = 2 * ad >= predictions.size() ? Label::AD : Label::HC;
  return out;
}

std::vector<ParticipantPrediction> majority_vote_all(std::span<const SentencePrediction> predictions) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SentencePrediction>> groups;
  for (const auto& p : predictions) {
    auto [it, inserted] = groups.try_emplace(p.participant_id);
    if (inserted) order.push_back(p.participant_id);
    it->second.push_back(p);
  }
  std::vector<ParticipantPrediction> out;
  out.reserve(order.size());
  for (const auto& id : order) out.push_back(majority_vote(groups.at(id)));
  return out;
}

void MetricsReport::require_defined() const {
  if (!defined()) {
    throw EvaluationError(K::UndefinedMetric,
                          "precision/recall/F1 undefined: a class has no predicted or no actual members");
  }
}

MetricsReport compute_metrics(std::span<const std::pair<Label, Label>> finals, Averaging averaging) {
  if (finals.empty()) throw EvaluationError(K::EmptyInput, "no predictions to score");

  ClassCounts ad, hc;
  MetricsReport report;
  report.averaging = averaging;
  report.total = finals.size();
  for (const auto& [predicted, truth] : finals) {
    if (predicted == truth) ++report.correct;
    if (predicted == Label::AD && truth == Label::AD) ++ad.true_positive;
    if (predicted == Label::AD && truth == Label::HC) ++ad.false_positive, ++hc.false_negative;
    if (predicted == Label::HC && truth == Label::AD) ++ad.false_negative, ++hc.false_positive;
    if (predicted == Label::HC && truth == Label::HC) ++hc.true_positive;
  }
  report.accuracy = 100.0 * static_cast<double>(report.correct) / static_cast<double>(report.total);

  const auto s_ad = class_scores(ad);
  if (averaging == Averaging::Binary) {
    report.precision = pct(s_ad.precision);
    report.recall = pct(s_ad.recall);
    report.f1 = pct(s_ad.f1);
  } else {
    const auto s_hc = class_scores(hc);
    report.precision = mean_pct(s_ad.precision, s_hc.precision);
    report.recall = mean_pct(s_ad.recall, s_hc.recall);
    report.f1 = mean_pct(s_ad.f1, s_hc.f1);
  }
  return report;
}

DeltaMap risk_ascend(std::span<const ParticipantPrediction> proposed, std::span<const ParticipantPrediction> baseline) {
  std::map<std::string, double> base;
  for (const auto& b : baseline) base[b.participant_id] = b.ad_sentence_pct;
  if (base.size() != baseline.size()) throw EvaluationError(K::ParticipantMismatch, "duplicate baseline participant");

  DeltaMap deltas;
  for (const auto& p : proposed) {
    const auto it = base.find(p.participant_id);
    if (it == base.end()) {
      throw EvaluationError(K::ParticipantMismatch, "participant " + p.participant_id + " missing from baseline");
    }
    if (!deltas.emplace(p.participant_id, p.ad_sentence_pct - it->second).second) {
      throw EvaluationError(K::ParticipantMismatch, "duplicate participant " + p.participant_id);
    }
  }
  if (deltas.size() != base.size()) {
    throw EvaluationError(K::ParticipantMismatch, "baseline has participants missing from the proposed model");
  }
  return deltas;
}

RiskAscendReport group_risk_report(const DeltaMap& deltas, const std::map<std::string, PatientProfile>& profiles,
                                   const std::map<std::string, Label>& truths,
                                   const std::map<std::string, Label>& finals) {
  const auto same_keys = [&deltas](const auto& m) {
    return m.size() == deltas.size() &&
           std::equal(m.begin(), m.end(), deltas.begin(), [](const auto& a, const auto& b) { return a.first == b.first; });
  };
  if (!same_keys(profiles) || !same_keys(truths) || !same_keys(finals)) {
    throw EvaluationError(K::KeyMismatch, "risk report inputs do not cover the same participants");
  }

  struct Acc {
    RiskGroupRow row;
    double sum_hc = 0.0, sum_ad = 0.0;
  };
  std::map<std::size_t, Acc> groups;
  for (const auto& [id, delta] : deltas) {
    const auto n_attr = profiles.at(id).attribute_count();
    if (n_attr == 0) continue;
    auto& acc = groups[n_attr];
    acc.row.n_attr = n_attr;
    const bool correct = finals.at(id) == truths.at(id);
    if (truths.at(id) == Label::HC) {
      ++acc.row.n_hc;
      acc.row.correct_hc += correct ? 1 : 0;
      acc.sum_hc += delta;
    } else {
      ++acc.row.n_ad;
      acc.row.correct_ad += correct ? 1 : 0;
      acc.sum_ad += delta;
    }
  }

  RiskAscendReport report;
  report.deltas = deltas;
  for (auto& [n_attr, acc] : groups) {
    if (acc.row.n_hc > 0) acc.row.mean_delta_hc = round1(acc.sum_hc / static_cast<double>(acc.row.n_hc));
    if (acc.row.n_ad > 0) acc.row.mean_delta_ad = round1(acc.sum_ad / static_cast<double>(acc.row.n_ad));
    report.rows.push_back(acc.row);
  }
  return report;
}

std::string case_report(const PatientProfile& profile, const AttributeCatalog& catalog) {
  std::ostringstream out;
  const std::string title = "Detected attributes for participant " + profile.participant_id;
  out << title << '\n' << std::string(title.size(), '=') << "\n\n";
  if (profile.entries.empty()) {
    out << "No deficit attributes detected.\n\n";
  }
  for (const auto& entry : profile.entries) {
    const auto* attr = catalog.find(entry.attribute_id);
    out << (attr ? attr->name : entry.attribute_id) << '\n';
    if (!entry.evidence_examples.empty()) {
      out << "  Examples:\n";
      for (const auto& e : entry.evidence_examples) out << "    \"" << e << "\"\n";
    }
    if (!entry.description.empty()) {
      out << "  Description:\n    " << entry.description << '\n';
    }
    out << '\n';
  }
  out << "Summary:\n  " << profile.summary << '\n';
  return out.str();
}

std::string render_metrics_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
  std::size_t width = 5;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::ostringstream out;
  out << pad("Model", width) << " | Precision | Recall | Accuracy | F1\n";
  out << std::string(width, '-') << "-+-----------+--------+----------+-------\n";
  for (const auto& [name, m] : rows) {
    out << pad(name, width) << " | " << pad(fixed_or_dash(m.precision, 2), 9) << " | "
        << pad(fixed_or_dash(m.recall, 2), 6) << " | " << pad(fixed(m.accuracy, 2), 8) << " | "
        << fixed_or_dash(m.f1, 2) << '\n';
  }
  return out.str();
}

std::string render_risk_report(const RiskAscendReport& report) {
  std::ostringstream out;
  const auto last = kRiskReportColumns.size() - 1;
  for (std::size_t i = 0; i < last; ++i) out << pad(kRiskReportColumns[i], 8) << " | ";
  out << kRiskReportColumns[last] << '\n';
  for (std::size_t i = 0; i < last; ++i) out << std::string(8, '-') << "-+-";
  out << std::string(8, '-') << '\n';
  for (const auto& r : report.rows) {
    out << pad(std::to_string(r.n_attr), 8) << " | " << pad(std::to_string(r.n_hc), 8) << " | "
        << pad(std::to_string(r.correct_hc), 8) << " | " << pad(fixed_or_dash(r.mean_delta_hc, 1), 8) << " | "
        << pad(std::to_string(r.n_ad), 8) << " | " << pad(std::to_string(r.correct_ad), 8) << " | "
        << fixed_or_dash(r.mean_delta_ad, 1) << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const SentencePrediction& p) {
  return {{"participant_id", p.participant_id},
          {"sentence_index", p.sentence_index},
          {"predicted", to_string(p.predicted)},
          {"logits", p.logits}};
}

SentencePrediction sentence_prediction_from_json(const nlohmann::json& doc) {
  SentencePrediction p;
  p.participant_id = doc.at("participant_id").get<std::string>();
  p.sentence_index = doc.at("sentence_index").get<std::size_t>();
  p.predicted = label_from_json(doc.at("predicted"));
  p.logits = doc.at("logits").get<Logits>();
  return p;
}

nlohmann::json to_json(const ParticipantPrediction& p) {
  return {{"participant_id", p.participant_id},
          {"ad_sentence_pct", p.ad_sentence_pct},
          {"final", to_string(p.final)},
          {"sentence_count", p.sentence_count}};
}

nlohmann::json to_json(const MetricsReport& m) {
  return {{"averaging", m.averaging == Averaging::Macro ? "macro" : "binary"},
          {"total", m.total},
          {"correct", m.correct},
          {"precision", optional_json(m.precision)},
          {"recall", optional_json(m.recall)},
          {"accuracy", m.accuracy},
          {"f1", optional_json(m.f1)}};
}

MetricsReport metrics_from_json(const nlohmann::json& doc) {
  MetricsReport m;
  m.averaging = doc.at("averaging").get<std::string>() == "binary" ? Averaging::Binary : Averaging::Macro;
  m.total = doc.at("total").get<std::size_t>();
  m.correct = doc.at("correct").get<std::size_t>();
  m.precision = optional_from(doc.at("precision"));
  m.recall = optional_from(doc.at("recall"));
  m.accuracy = doc.at("accuracy").get<double>();
  m.f1 = optional_from(doc.at("f1"));
  return m;
}

nlohmann::json to_json(const RiskAscendReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"N_attr", row.n_attr},
                    {"N_hc", row.n_hc},
                    {"y_hat_hc", row.correct_hc},
                    {"delta_hc", optional_json(row.mean_delta_hc)},
                    {"N_ad", row.n_ad},
                    {"y_hat_ad", row.correct_ad},
                    {"delta_ad", optional_json(row.mean_delta_ad)}});
  }
  return {{"deltas", r.deltas}, {"rows", std::move(rows)}};
}

RiskAscendReport risk_report_from_json(const nlohmann::json& doc) {
  RiskAscendReport r;
  r.deltas = doc.at("deltas").get<DeltaMap>();
  for (const auto& row : doc.at("rows")) {
    r.rows.push_back({row.at("N_attr").get<std::size_t>(), row.at("N_hc").get<std::size_t>(),
                      row.at("y_hat_hc").get<std::size_t>(), optional_from(row.at("delta_hc")),
                      row.at("N_ad").get<std::size_t>(), row.at("y_hat_ad").get<std::size_t>(),
                      optional_from(row.at("delta_ad"))});
  }
  return r;
}

void write_predictions(std::ostream& out, std::span<const SentencePrediction> predictions) {
  for (const auto& p : predictions) out << to_json(p).dump() << '\n';
}

std::vector<SentencePrediction> read_predictions(std::istream& in) {
  std::vector<SentencePrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sentence_prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw EvaluationError(K::Io, "prediction line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace adprof
