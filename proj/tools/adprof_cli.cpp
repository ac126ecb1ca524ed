#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adprof/pipeline.hpp"

namespace fs = std::filesystem;
using adprof::PipelineError;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitStageFailure = 2;

void apply_stage_seed(adprof::PipelineConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw CLI::ValidationError("--stage-seed", "expected key=value, got '" + assignment + "'");
  const auto key = assignment.substr(0, eq);
  std::uint64_t value = 0;
  try {
    std::size_t used = 0;
    value = std::stoull(assignment.substr(eq + 1), &used);
    if (used != assignment.size() - eq - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw CLI::ValidationError("--stage-seed", "seed must be a non-negative integer in '" + assignment + "'");
  }
  if (key == "train") {
    config.train.seed = value;
  } else if (key == "mock_llm") {
    config.mock_llm.seed = value;
  } else if (key == "attribute_embedding") {
    config.attribute_embedding.seed = value;
  } else if (key == "sentence_embedding") {
    config.sentence_embedding.seed = value;
  } else if (key == "embedding") {
    config.attribute_embedding.seed = value;
    config.sentence_embedding.seed = value + 1;
  } else {
    throw CLI::ValidationError("--stage-seed",
                               "unknown stage '" + key +
                                   "' (train, mock_llm, embedding, attribute_embedding, sentence_embedding)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reasoning-augmented dementia detection pipeline"};
  app.require_subcommand(1);

  std::string config_path = "pipeline.json";
  std::string mode;
  std::string catalog;
  std::vector<std::string> stage_seeds;
  bool quiet = false;

  std::map<std::string, CLI::App*> stage_commands;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"ingest", "Parse the corpora into session records"},
      {"profile", "Query the LLM for a patient profile per participant"},
      {"embed", "Embed profiles and participant sentences"},
      {"train", "Train the fusion classifier for each configured mode"},
      {"eval", "Predict the test split and compute metrics"},
      {"analyze", "Compute risk-ascend indices (needs augmented and baseline predictions)"},
      {"report", "Render metric tables, the risk-ascend table and a case study"},
      {"all", "Run every stage in order"}};
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", config_path, "Pipeline config file")->capture_default_str();
    sub->add_option("--mode", mode, "Restrict to one model mode")->check(CLI::IsMember({"augmented", "baseline"}));
    sub->add_option("--catalog", catalog, "Attribute catalog: RA3, RA13 or a catalog JSON file");
    sub->add_option("--stage-seed", stage_seeds, "Override a named seed, e.g. train=7 (repeatable)");
    sub->add_flag("--quiet,-q", quiet, "Suppress progress output");
    stage_commands[name] = sub;
  }

  std::string synth_dir;
  adprof::SynthConfig train_synth = adprof::SynthConfig::defaults();
  adprof::SynthConfig test_synth = adprof::SynthConfig::defaults();
  test_synth.n_hc = 24;
  test_synth.n_ad = 24;
  std::uint64_t synth_seed = train_synth.seed;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus and a matching pipeline config");
  synth->add_option("dir", synth_dir, "Output directory")->required();
  synth->add_option("--train-hc", train_synth.n_hc, "HC participants in the training split")->capture_default_str();
  synth->add_option("--train-ad", train_synth.n_ad, "AD participants in the training split")->capture_default_str();
  synth->add_option("--test-hc", test_synth.n_hc, "HC participants in the test split")->capture_default_str();
  synth->add_option("--test-ad", test_synth.n_ad, "AD participants in the test split")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      train_synth.seed = synth_seed;
      train_synth.first_id = 1;
      test_synth.seed = synth_seed + 1;
      test_synth.first_id = train_synth.n_hc + train_synth.n_ad + 1;
      const auto path = adprof::write_synthetic_workspace(synth_dir, train_synth, test_synth);
      std::cout << "wrote " << path.string() << '\n';
      return EXIT_SUCCESS;
    }

    adprof::Stage stage = adprof::Stage::All;
    for (const auto& [name, sub] : stage_commands) {
      if (sub->parsed()) stage = *adprof::parse_stage(name);
    }

    auto config = adprof::PipelineConfig::load(config_path);
    if (!mode.empty()) config.modes = {adprof::parse_fusion_mode(mode)};
    if (!catalog.empty()) {
      config.catalog = fs::is_regular_file(catalog) ? fs::absolute(catalog).string() : catalog;
    }
    for (const auto& s : stage_seeds) apply_stage_seed(config, s);

    adprof::Pipeline pipeline(std::move(config), nullptr, quiet ? nullptr : &std::cerr);
    pipeline.run(stage);
    return EXIT_SUCCESS;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "adprof: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PipelineError& e) {
    std::cerr << "adprof: " << e.what() << '\n';
    return e.kind() == PipelineError::Kind::ConfigError ? kExitUsage : kExitStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "adprof: " << e.what() << '\n';
    return kExitStageFailure;
  }
}
