#include <doctest.h>

#include <sstream>

#include "adprof/evaluation.hpp"
#include "support/oracles.hpp"

using namespace adprof;

namespace {

std::vector<SentencePrediction> sentences(const std::string& id, const std::vector<Label>& labels) {
  std::vector<SentencePrediction> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Logits logits = labels[i] == Label::AD ? Logits{0.0, 1.0} : Logits{1.0, 0.0};
    out.push_back(make_sentence_prediction(id, i, logits));
  }
  return out;
}

std::vector<Label> repeat(std::size_t ad, std::size_t hc) {
  std::vector<Label> out(ad, Label::AD);
  out.insert(out.end(), hc, Label::HC);
  return out;
}

ParticipantPrediction participant(const std::string& id, double pct) {
  return {id, pct, pct >= 50.0 ? Label::AD : Label::HC, 10};
}

PatientProfile profile_with(const std::string& id, std::size_t n_attr) {
  static const char* kIds[] = {"anomia", "dysfluency", "agrammatism"};
  PatientProfile p{id, {}, "summary"};
  for (std::size_t i = 0; i < n_attr; ++i) p.entries.push_back({kIds[i], {"quote"}, ""});
  return p;
}

}  // namespace

TEST_CASE("sentence labels: argmax with ties to AD") {
  CHECK(predicted_label({0.2, 0.1}) == Label::HC);
  CHECK(predicted_label({0.1, 0.2}) == Label::AD);
  CHECK(predicted_label({0.5, 0.5}) == Label::AD);
}

TEST_CASE("majority vote examples") {
  const auto five = majority_vote(sentences("a", {Label::AD, Label::HC, Label::AD, Label::HC, Label::AD}));
  CHECK(five.final == Label::AD);
  CHECK(five.ad_sentence_pct == 60.0);
  CHECK(five.sentence_count == 5);

  CHECK(majority_vote(sentences("b", repeat(2, 2))).final == Label::AD);

  const auto one = majority_vote(sentences("c", {Label::HC}));
  CHECK(one.final == Label::HC);
  CHECK(one.ad_sentence_pct == 0.0);
}

TEST_CASE("majority vote input errors") {
  CHECK_THROWS_AS(majority_vote(std::vector<SentencePrediction>{}), EvaluationError);
  auto mixed = sentences("a", repeat(1, 1));
  mixed[1].participant_id = "b";
  try {
    majority_vote(mixed);
    FAIL("expected MixedParticipants");
  } catch (const EvaluationError& e) {
    CHECK(e.kind() == EvaluationError::Kind::MixedParticipants);
  }
  auto gap = sentences("a", repeat(1, 2));
  gap[2].sentence_index = 7;
  try {
    majority_vote(gap);
    FAIL("expected NonContiguous");
  } catch (const EvaluationError& e) {
    CHECK(e.kind() == EvaluationError::Kind::NonContiguous);
  }
}

TEST_CASE("property: majority vote agrees with brute-force counting") {
  testing::Gen gen(4);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Label> labels(gen.range(1, 30));
    for (auto& l : labels) l = gen.label();
    const auto vote = majority_vote(sentences("p", labels));
    const auto [pct, final] = testing::brute_vote(labels);
    CHECK(vote.final == final);
    CHECK(vote.ad_sentence_pct == doctest::Approx(pct).epsilon(1e-12));
  }
}

TEST_CASE("majority_vote_all groups by participant in first-seen order") {
  auto all = sentences("z", repeat(1, 0));
  const auto a = sentences("a", repeat(0, 3));
  all.insert(all.end(), a.begin(), a.end());
  const auto votes = majority_vote_all(all);
  REQUIRE(votes.size() == 2);
  CHECK(votes[0].participant_id == "z");
  CHECK(votes[1].final == Label::HC);
}

TEST_CASE("metrics: perfect classifier") {
  const std::vector<std::pair<Label, Label>> finals{{Label::AD, Label::AD}, {Label::HC, Label::HC}};
  for (const auto avg : {Averaging::Macro, Averaging::Binary}) {
    const auto m = compute_metrics(finals, avg);
    CHECK(m.accuracy == 100.0);
    CHECK(*m.precision == 100.0);
    CHECK(*m.recall == 100.0);
    CHECK(*m.f1 == 100.0);
  }
}

TEST_CASE("metrics: hand-derived 50% example") {
  const std::vector<std::pair<Label, Label>> finals{
      {Label::AD, Label::AD}, {Label::AD, Label::HC}, {Label::HC, Label::HC}, {Label::HC, Label::AD}};
  const auto m = compute_metrics(finals);
  CHECK(m.accuracy == 50.0);
  CHECK(*m.precision == 50.0);
  CHECK(*m.recall == 50.0);
  CHECK(*m.f1 == 50.0);
  CHECK(m.correct == 2);
  CHECK(m.total == 4);
}

TEST_CASE("metrics: undefined values are reported, not invented") {
  const std::vector<std::pair<Label, Label>> all_hc{{Label::HC, Label::HC}, {Label::HC, Label::AD}};
  const auto m = compute_metrics(all_hc);
  CHECK_FALSE(m.precision.has_value());
  CHECK(m.accuracy == 50.0);
  CHECK_THROWS_AS(m.require_defined(), EvaluationError);
  CHECK_THROWS_AS(compute_metrics(std::vector<std::pair<Label, Label>>{}), EvaluationError);
}

TEST_CASE("metrics: 24+24 test split totals") {
  std::vector<std::pair<Label, Label>> finals;
  for (int i = 0; i < 24; ++i) finals.emplace_back(Label::HC, Label::HC);
  for (int i = 0; i < 24; ++i) finals.emplace_back(i < 18 ? Label::AD : Label::HC, Label::AD);
  const auto m = compute_metrics(finals);
  CHECK(m.total == 48);
  CHECK(m.correct == 42);
}

TEST_CASE("property: metrics agree with a brute-force confusion matrix") {
  testing::Gen gen(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<Label, Label>> finals(gen.range(1, 60));
    for (auto& f : finals) f = {gen.label(), gen.label()};
    for (const bool macro : {true, false}) {
      const auto got = compute_metrics(finals, macro ? Averaging::Macro : Averaging::Binary);
      const auto want = testing::brute_force_metrics(finals, macro);
      CHECK(std::abs(got.accuracy - want.accuracy) <= 1e-12);
      REQUIRE(got.precision.has_value() == want.precision.has_value());
      REQUIRE(got.recall.has_value() == want.recall.has_value());
      REQUIRE(got.f1.has_value() == want.f1.has_value());
      if (want.precision) CHECK(std::abs(*got.precision - *want.precision) <= 1e-12);
      if (want.recall) CHECK(std::abs(*got.recall - *want.recall) <= 1e-12);
      if (want.f1) CHECK(std::abs(*got.f1 - *want.f1) <= 1e-12);
    }
  }
}

TEST_CASE("risk-ascend index") {
  const std::vector<ParticipantPrediction> prop{participant("a", 70.0)};
  const std::vector<ParticipantPrediction> base{participant("a", 50.0)};
  CHECK(risk_ascend(prop, base).at("a") == 20.0);
  CHECK(risk_ascend(base, base).at("a") == 0.0);

  // 10 sentences; the proposed model flips two HC sentences to AD.
  auto before = sentences("p", repeat(3, 7));
  auto after = before;
  after[5] = make_sentence_prediction("p", 5, {0.0, 1.0});
  after[9] = make_sentence_prediction("p", 9, {0.0, 1.0});
  const auto d = risk_ascend(majority_vote_all(after), majority_vote_all(before));
  CHECK(d.at("p") == 20.0);

  const std::vector<ParticipantPrediction> other{participant("b", 10.0)};
  CHECK_THROWS_AS(risk_ascend(prop, other), EvaluationError);
}

TEST_CASE("property: risk-ascend antisymmetry") {
  testing::Gen gen(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ParticipantPrediction> a, b;
    for (int i = 0; i < 5; ++i) {
      const auto id = "p" + std::to_string(i);
      a.push_back(participant(id, 100.0 * static_cast<double>(gen.range(0, 20)) / 20.0));
      b.push_back(participant(id, 100.0 * static_cast<double>(gen.range(0, 17)) / 17.0));
    }
    const auto ab = risk_ascend(a, b);
    const auto ba = risk_ascend(b, a);
    for (const auto& [id, d] : ab) CHECK(d == -ba.at(id));
  }
}

TEST_CASE("group report: hand-computed mean and column set") {
  const DeltaMap deltas{{"h1", 10.0}, {"h2", 20.0}, {"h3", 21.3}, {"z", 50.0}};
  std::map<std::string, PatientProfile> profiles{
      {"h1", profile_with("h1", 1)}, {"h2", profile_with("h2", 1)}, {"h3", profile_with("h3", 1)}, {"z", profile_with("z", 0)}};
  std::map<std::string, Label> truths{{"h1", Label::HC}, {"h2", Label::HC}, {"h3", Label::HC}, {"z", Label::AD}};
  std::map<std::string, Label> finals{{"h1", Label::HC}, {"h2", Label::AD}, {"h3", Label::HC}, {"z", Label::AD}};
  const auto report = group_risk_report(deltas, profiles, truths, finals);
  REQUIRE(report.rows.size() == 1);
  const auto& row = report.rows[0];
  CHECK(row.n_attr == 1);
  CHECK(row.n_hc == 3);
  CHECK(row.correct_hc == 2);
  CHECK(*row.mean_delta_hc == 17.1);
  CHECK(row.n_ad == 0);
  CHECK_FALSE(row.mean_delta_ad.has_value());

  CHECK(kRiskReportColumns ==
        std::array<std::string_view, 7>{"N_attr", "N_hc", "y_hat_hc", "delta_hc", "N_ad", "y_hat_ad", "delta_ad"});
  const auto json = to_json(report);
  for (const auto column : kRiskReportColumns) CHECK(json.at("rows")[0].contains(std::string(column)));
  CHECK(json.at("rows")[0].size() == kRiskReportColumns.size());
  CHECK(risk_report_from_json(json).rows.size() == 1);

  const auto text = render_risk_report(report);
  for (const auto column : kRiskReportColumns) CHECK(text.find(column) != std::string::npos);
  CHECK(text.find("17.1") != std::string::npos);
}

TEST_CASE("group report: empty input and key mismatches") {
  CHECK(group_risk_report({}, {}, {}, {}).rows.empty());
  const DeltaMap deltas{{"a", 1.0}};
  std::map<std::string, PatientProfile> profiles{{"b", profile_with("b", 1)}};
  std::map<std::string, Label> labels{{"a", Label::HC}};
  try {
    group_risk_report(deltas, profiles, labels, labels);
    FAIL("expected KeyMismatch");
  } catch (const EvaluationError& e) {
    CHECK(e.kind() == EvaluationError::Kind::KeyMismatch);
  }
}

TEST_CASE("case report") {
  const auto catalog = builtin_catalog("RA13");
  PatientProfile p{"S7",
                   {{"limited_recall_of_details", {"I DON'T SEE IT SNOWING"}, "Cannot recall the scene."}},
                   "Some recall problems."};
  const auto text = case_report(p, catalog);
  const auto heading = text.find("Limited recall of details");
  const auto quote = text.find("I DON'T SEE IT SNOWING");
  REQUIRE(heading != std::string::npos);
  REQUIRE(quote != std::string::npos);
  CHECK(heading < quote);
  CHECK(text.find("Some recall problems.") != std::string::npos);
  CHECK(case_report(p, catalog) == text);

  const auto empty = case_report(PatientProfile{"S8", {}, "Fluent."}, catalog);
  CHECK(empty.find("No deficit attributes detected.") != std::string::npos);
  CHECK(empty.find("Fluent.") != std::string::npos);
}

TEST_CASE("metric table names the four metrics") {
  const std::vector<std::pair<Label, Label>> finals{{Label::AD, Label::AD}, {Label::HC, Label::AD}};
  const std::vector<std::pair<std::string, MetricsReport>> rows{{"baseline", compute_metrics(finals)}};
  const auto text = render_metrics_table(rows);
  for (const auto* name : {"Precision", "Recall", "Accuracy", "F1"}) CHECK(text.find(name) != std::string::npos);
  CHECK(text.find("50.00") != std::string::npos);
}

TEST_CASE("prediction files round-trip") {
  const auto preds = sentences("a", repeat(2, 3));
  std::stringstream buffer;
  write_predictions(buffer, preds);
  CHECK(read_predictions(buffer) == preds);
  const auto m = compute_metrics(std::vector<std::pair<Label, Label>>{{Label::AD, Label::HC}, {Label::HC, Label::HC}});
  const auto back = metrics_from_json(to_json(m));
  CHECK(back.accuracy == m.accuracy);
  CHECK(back.precision == m.precision);
  CHECK(back.f1 == m.f1);
}
