// Acceptance suite: one PASS/FAIL line per criterion; non-zero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "adprof/evaluation.hpp"
#include "adprof/fusion_model.hpp"
#include "adprof/pipeline.hpp"
#include "adprof/profile.hpp"
#include "support/mock_servers.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace adprof;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  testing::Gen gen(1);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto mode = i % 2 == 0 ? FusionMode::Augmented : FusionMode::Baseline;
    const FusionDims dims{gen.range(4, 24), gen.range(4, 24), gen.range(2, 16), gen.range(2, 24)};
    const auto net = FusionNet::xavier(mode, dims, 1000 + i);
    const auto batch = testing::random_samples(gen, net, gen.range(2, 8));
    worst = std::max(worst, testing::max_gradient_error(net, batch.samples));
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-4 && elapsed < 30.0,
          fmt("20 nets (10 augmented, 10 baseline), max relative error %.2e, %.2f s", worst, elapsed)};
}

// --- 2 ---------------------------------------------------------------------

Outcome adamw_oracle() {
  AdamWConfig c;
  c.weight_decay = 0.0;
  std::vector<double> p{1.0};
  std::vector<std::span<double>> params{p};
  std::vector<std::span<const double>> cparams{p};
  auto state = AdamWState::for_parameters(cparams, c);

  const double step1 = 1.0 - 2e-5 * 1.0 / (1.0 + 1e-8);  // m_hat = v_hat = 1
  adamw_step(state, params, {{1.0}});
  const double e1 = std::abs(p[0] - step1);

  const double m_hat = 0.04 / 0.19;            // (0.9*0.1 + 0.1*(-0.5)) / (1 - 0.9^2)
  const double v_hat = 0.001249 / 0.001999;    // (0.999*0.001 + 0.001*0.25) / (1 - 0.999^2)
  const double step2 = step1 - 2e-5 * m_hat / (std::sqrt(v_hat) + 1e-8);
  adamw_step(state, params, {{-0.5}});
  const double e2 = std::abs(p[0] - step2);
  return {e1 <= 1e-12 && e2 <= 1e-12, fmt("step 1 error %.1e, step 2 error %.1e", e1, e2)};
}

// --- 3 ---------------------------------------------------------------------

Outcome metric_oracle() {
  testing::Gen gen(3);
  double worst = 0.0;
  int definedness_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<Label, Label>> finals(gen.range(1, 80));
    for (auto& f : finals) f = {gen.label(), gen.label()};
    for (const bool macro : {true, false}) {
      const auto got = compute_metrics(finals, macro ? Averaging::Macro : Averaging::Binary);
      const auto want = testing::brute_force_metrics(finals, macro);
      worst = std::max(worst, std::abs(got.accuracy - want.accuracy));
      const std::pair<const std::optional<double>*, const std::optional<double>*> pairs[] = {
          {&got.precision, &want.precision}, {&got.recall, &want.recall}, {&got.f1, &want.f1}};
      for (const auto& [g, w] : pairs) {
        if (g->has_value() != w->has_value()) {
          ++definedness_mismatch;
        } else if (g->has_value()) {
          worst = std::max(worst, std::abs(**g - **w));
        }
      }
    }
  }
  const std::vector<std::pair<Label, Label>> hand{
      {Label::AD, Label::AD}, {Label::AD, Label::HC}, {Label::HC, Label::HC}, {Label::HC, Label::AD}};
  const auto m = compute_metrics(hand);
  const bool hand_ok = m.accuracy == 50.0 && m.precision == 50.0 && m.recall == 50.0 && m.f1 == 50.0;
  return {worst <= 1e-12 && definedness_mismatch == 0 && hand_ok,
          fmt("100 random vectors, max deviation %.1e; hand example accuracy %.1f, F1 %.1f", worst, m.accuracy,
              m.f1.value_or(-1))};
}

// --- 4 ---------------------------------------------------------------------

Outcome majority_vote_oracle() {
  testing::Gen gen(4);
  int disagreements = 0, ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Label> labels(gen.range(1, 24));
    for (auto& l : labels) l = gen.label();
    std::vector<SentencePrediction> preds;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      preds.push_back(make_sentence_prediction("p", i, labels[i] == Label::AD ? Logits{0, 1} : Logits{1, 0}));
    }
    const auto vote = majority_vote(preds);
    const auto [pct, final] = testing::brute_vote(labels);
    ties += pct == 50.0 ? 1 : 0;
    if (vote.final != final || std::abs(vote.ad_sentence_pct - pct) > 1e-12) ++disagreements;
  }
  return {disagreements == 0 && ties > 0,
          fmt("1000 cases, %.0f disagreements, %.0f ties (P=50) resolved to AD", disagreements, ties)};
}

// --- 5 ---------------------------------------------------------------------

Outcome risk_ascend_correctness() {
  std::vector<SentencePrediction> base, prop;
  for (std::size_t i = 0; i < 10; ++i) {
    const bool ad = i < 3;
    base.push_back(make_sentence_prediction("p", i, ad ? Logits{0, 1} : Logits{1, 0}));
    const bool flipped = i == 4 || i == 8;
    prop.push_back(make_sentence_prediction("p", i, ad || flipped ? Logits{0, 1} : Logits{1, 0}));
  }
  const double delta = risk_ascend(majority_vote_all(prop), majority_vote_all(base)).at("p");

  testing::Gen gen(5);
  bool antisymmetric = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ParticipantPrediction> a, b;
    for (int k = 0; k < 6; ++k) {
      const auto id = "q" + std::to_string(k);
      a.push_back({id, 100.0 * static_cast<double>(gen.range(0, 13)) / 13.0, Label::HC, 13});
      b.push_back({id, 100.0 * static_cast<double>(gen.range(0, 17)) / 17.0, Label::HC, 17});
    }
    const auto ab = risk_ascend(a, b);
    const auto ba = risk_ascend(b, a);
    for (const auto& [id, d] : ab) antisymmetric = antisymmetric && d == -ba.at(id);
  }

  const DeltaMap deltas{{"h1", 10.0}, {"h2", 20.0}, {"h3", 21.3}};
  std::map<std::string, PatientProfile> profiles;
  std::map<std::string, Label> truths, finals;
  for (const auto& [id, _] : deltas) {
    profiles[id] = PatientProfile{id, {{"hesitation_pauses", {"UH"}, ""}}, "s"};
    truths[id] = Label::HC;
    finals[id] = Label::HC;
  }
  const auto report = group_risk_report(deltas, profiles, truths, finals);
  const bool mean_ok = report.rows.size() == 1 && report.rows[0].n_attr == 1 && report.rows[0].n_hc == 3 &&
                       report.rows[0].mean_delta_hc == 17.1;
  const auto row_json = to_json(report).at("rows").at(0);
  bool columns_ok = row_json.size() == kRiskReportColumns.size();
  for (const auto c : kRiskReportColumns) columns_ok = columns_ok && row_json.contains(std::string(c));
  const std::array<std::string_view, 7> expected{"N_attr", "N_hc", "y_hat_hc", "delta_hc", "N_ad", "y_hat_ad", "delta_ad"};
  columns_ok = columns_ok && kRiskReportColumns == expected;

  return {delta == 20.0 && antisymmetric && mean_ok && columns_ok,
          fmt("fixture delta %.1f; group mean %.1f; antisymmetry and 7-column set ", delta,
              report.rows.empty() ? -1.0 : report.rows[0].mean_delta_hc.value_or(-1)) +
              (antisymmetric && columns_ok ? "hold" : "FAIL")};
}

// --- 6 and 10 --------------------------------------------------------------

struct FullRun {
  fs::path work;
  double seconds = 0.0;
  double augmented = 0.0;
  double baseline = 0.0;
};

FullRun full_synthetic_run(const fs::path& dir) {
  auto train = SynthConfig::defaults();  // 54 HC + 54 AD
  auto test = SynthConfig::defaults();
  test.n_hc = 24;
  test.n_ad = 24;
  test.seed = train.seed + 1;
  test.first_id = train.n_hc + train.n_ad + 1;
  const auto start = Clock::now();
  auto config = PipelineConfig::load(write_synthetic_workspace(dir, train, test));
  config.mock_llm.noise = 0.1;
  Pipeline pipeline(config);
  pipeline.run(Stage::All);

  FullRun run;
  run.seconds = seconds_since(start);
  run.work = pipeline.config().work();
  const auto read_accuracy = [&](const char* mode) {
    const auto doc = nlohmann::json::parse(slurp(pipeline.config().predictions_path() / (std::string(mode) + ".metrics.json")));
    return doc.at("macro").at("accuracy").get<double>();
  };
  run.augmented = read_accuracy("augmented");
  run.baseline = read_accuracy("baseline");
  return run;
}

// --- 7 ---------------------------------------------------------------------

Outcome protocol_conformance() {
  testing::TempDir dir("adprof-accept7");
  testing::SheetChatServer server;
  auto train = SynthConfig::defaults();
  train.n_hc = train.n_ad = 4;
  auto test = train;
  test.n_hc = test.n_ad = 2;
  test.seed = 99;
  test.first_id = 9;
  auto config = PipelineConfig::load(write_synthetic_workspace(dir.path(), train, test));
  config.llm_kind = LlmKind::Http;
  config.llm.endpoint_url = server.url("/v1/chat/completions");
  config.llm.credential_env_var = "";

  Pipeline pipeline(config);
  pipeline.run(Stage::Ingest);
  pipeline.run(Stage::Profile);
  const std::size_t participants = 12;
  const auto requests = server.requests();

  std::map<std::string, std::vector<nlohmann::json>> by_prompt;
  for (const auto& r : requests) by_prompt[r.body["messages"][0]["content"].get<std::string>()].push_back(r.body["messages"]);
  bool shape_ok = by_prompt.size() == participants;
  for (const auto& [prompt, msgs] : by_prompt) {
    if (msgs.size() != 2) {
      shape_ok = false;
      continue;
    }
    const auto& second = msgs[0].size() == 3 ? msgs[0] : msgs[1];
    const auto& first = msgs[0].size() == 3 ? msgs[1] : msgs[0];
    shape_ok = shape_ok && first.size() == 1 && second.size() == 3 && second[0]["content"] == prompt &&
               second[1]["role"] == "assistant" &&
               second[1]["content"] == testing::SheetChatServer::draft_for(prompt) &&
               second[2]["role"] == "user" && second[2]["content"] == "Please answer the sheet";
  }
  const auto cold = server.request_count();
  Pipeline rerun(config);
  rerun.run(Stage::Profile);
  const auto warm = server.request_count() - cold;
  return {shape_ok && cold == 2 * participants && warm == 0,
          fmt("%.0f participants -> %.0f requests; warm-cache rerun issued %.0f", participants,
              static_cast<double>(cold), static_cast<double>(warm)) +
              (shape_ok ? "; turn-2 payloads verified" : "; turn-2 payload mismatch")};
}

// --- 8 ---------------------------------------------------------------------

Outcome sheet_round_trip() {
  const auto catalog = builtin_catalog("RA13");
  testing::Gen gen(8);
  int mismatches = 0, count_errors = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto sheet = testing::random_sheet(gen, catalog);
    const auto parsed = parse_sheet(sheet.text, catalog);
    std::map<std::string, std::vector<std::string>> got;
    for (const auto& e : parsed.profile.entries) got[e.attribute_id] = e.evidence_examples;
    if (got != sheet.evidence) ++mismatches;
    if (profile_texts(parsed.profile, catalog).size() != parsed.profile.attribute_count() + 1) ++count_errors;
  }
  return {mismatches == 0 && count_errors == 0,
          fmt("200 sheets: %.0f id/evidence mismatches, %.0f text-count violations", mismatches, count_errors)};
}

// --- 9 ---------------------------------------------------------------------

Outcome dimensional_conformance() {
  const FusionNet net(FusionMode::Augmented);
  const std::vector<double> sentence(768, 0.5), pooled(1536, 0.25);
  const bool ok = net.profile_proj().in_dim == 1536 && net.profile_embedding(pooled).size() == 512 &&
                  net.head_input_dim() == 1280 && net.head1().out_dim == 640 && net.head2().in_dim == 640 &&
                  net.forward(sentence, pooled).size() == 2 && FusionNet(FusionMode::Baseline).head_input_dim() == 768;
  return {ok, "pooled 1536 -> h_s 512; head 1280 = 768 + 512 -> 640 -> 2"};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "AdamW oracle", adamw_oracle);
  report(3, "metric oracle", metric_oracle);
  report(4, "majority-vote oracle", majority_vote_oracle);
  report(5, "risk-ascend correctness", risk_ascend_correctness);

  testing::TempDir run_a("adprof-accept-a");
  testing::TempDir run_b("adprof-accept-b");
  std::optional<FullRun> a, b;
  std::string run_error;
  try {
    a = full_synthetic_run(run_a.path());
    b = full_synthetic_run(run_b.path());
  } catch (const std::exception& e) {
    run_error = e.what();
  }

  report(6, "synthetic discriminability", [&]() -> Outcome {
    if (!a || !b) return {false, "pipeline run failed: " + run_error};
    const bool ok = a->augmented >= a->baseline + 5.0 && a->augmented > 50.0 && a->baseline > 50.0 &&
                    a->augmented == b->augmented && a->baseline == b->baseline && a->seconds < 120.0;
    return {ok, fmt("augmented %.2f%% vs baseline %.2f%% accuracy (48 test participants), run %.1f s", a->augmented,
                    a->baseline, a->seconds)};
  });
  report(7, "protocol conformance", protocol_conformance);
  report(8, "profile parsing round-trip", sheet_round_trip);
  report(9, "dimensional conformance", dimensional_conformance);
  report(10, "end-to-end determinism", [&]() -> Outcome {
    if (!a || !b) return {false, "pipeline run failed: " + run_error};
    const auto reports_a = snapshot(a->work / "reports"), reports_b = snapshot(b->work / "reports");
    const auto ckpt_a = snapshot(a->work / "checkpoints"), ckpt_b = snapshot(b->work / "checkpoints");
    const bool ok = !reports_a.empty() && !ckpt_a.empty() && reports_a == reports_b && ckpt_a == ckpt_b;
    return {ok, fmt("%.0f report files and %.0f checkpoint files compared byte-for-byte", reports_a.size(),
                    ckpt_a.size()) +
                    (ok ? ", identical" : ", DIFFERENT")};
  });

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
