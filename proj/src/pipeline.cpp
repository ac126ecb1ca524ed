#include "adprof/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "adprof/attribute_catalog.hpp"
#include "adprof/evaluation.hpp"
#include "adprof/profile.hpp"
#include "adprof/transcript.hpp"

namespace adprof {

namespace {

using K = PipelineError::Kind;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError(K::MissingArtifact, "missing artifact " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw PipelineError(K::StageFailure, "cannot write " + path.string());
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PipelineError(K::StageFailure, "cannot write " + path.string());
}

void require(const fs::path& path, std::string_view produced_by) {
  if (!fs::exists(path)) {
    throw PipelineError(K::MissingArtifact,
                        "missing artifact " + path.string() + " (run the '" + std::string(produced_by) + "' stage first)");
  }
}

std::vector<TranscriptSession> read_sessions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError(K::MissingArtifact, "missing artifact " + path.string());
  try {
    return parse_records(in);
  } catch (const TranscriptError& e) {
    throw PipelineError(K::StageFailure, path.string() + ": " + e.what());
  }
}

std::vector<TranscriptSession> load_corpus(const fs::path& path, CorpusFormat format) {
  if (!fs::exists(path)) throw PipelineError(K::MissingArtifact, "corpus not found: " + path.string());
  if (format == CorpusFormat::Records) return read_sessions(path);

  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".cha") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<TranscriptSession> sessions;
  for (const auto& f : files) {
    try {
      sessions.push_back(parse_chat(read_text(f), f.stem().string()));
    } catch (const TranscriptError& e) {
      throw PipelineError(K::StageFailure, f.string() + ": " + e.what());
    }
  }
  return sessions;
}

// --- embedding store -------------------------------------------------------

struct ParticipantEmbeddings {
  std::string participant_id;
  Label label = Label::HC;
  std::size_t n_attr = 0;
  std::vector<double> pooled;
  std::vector<std::vector<double>> sentences;
};

nlohmann::json::binary_t pack(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(double));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return nlohmann::json::binary_t(std::move(bytes));
}

std::vector<double> unpack(const nlohmann::json& node) {
  const auto& bytes = node.get_binary();
  std::vector<double> values(bytes.size() / sizeof(double));
  std::memcpy(values.data(), bytes.data(), values.size() * sizeof(double));
  return values;
}

void save_embeddings(const fs::path& path, const std::vector<ParticipantEmbeddings>& items,
                     const PipelineConfig& config) {
  nlohmann::json participants = nlohmann::json::array();
  for (const auto& p : items) {
    nlohmann::json sentences = nlohmann::json::array();
    for (const auto& s : p.sentences) sentences.push_back(nlohmann::json::binary(pack(s)));
    participants.push_back({{"participant_id", p.participant_id},
                            {"label", to_string(p.label)},
                            {"n_attr", p.n_attr},
                            {"pooled", nlohmann::json::binary(pack(p.pooled))},
                            {"sentences", std::move(sentences)}});
  }
  const nlohmann::json doc = {{"attribute_model", config.attribute_embedding.model_name},
                              {"attribute_dim", config.attribute_embedding.dim},
                              {"sentence_model", config.sentence_embedding.model_name},
                              {"sentence_dim", config.sentence_embedding.dim},
                              {"participants", std::move(participants)}};
  write_bytes(path, nlohmann::json::to_cbor(doc));
}

std::vector<ParticipantEmbeddings> load_embeddings(const fs::path& path, const PipelineConfig& config) {
  require(path, "embed");
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    const auto doc = nlohmann::json::from_cbor(bytes);
    if (doc.at("attribute_dim").get<std::size_t>() != config.attribute_embedding.dim ||
        doc.at("sentence_dim").get<std::size_t>() != config.sentence_embedding.dim) {
      throw PipelineError(K::StageFailure, path.string() + " was built with different embedding dimensions; rerun 'embed'");
    }
    std::vector<ParticipantEmbeddings> out;
    for (const auto& p : doc.at("participants")) {
      ParticipantEmbeddings item;
      item.participant_id = p.at("participant_id").get<std::string>();
      item.label = *parse_label(p.at("label").get<std::string>());
      item.n_attr = p.at("n_attr").get<std::size_t>();
      item.pooled = unpack(p.at("pooled"));
      for (const auto& s : p.at("sentences")) item.sentences.push_back(unpack(s));
      out.push_back(std::move(item));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(K::StageFailure, path.string() + ": " + e.what());
  }
}

// --- config helpers --------------------------------------------------------

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& into) {
  if (const auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    try {
      into = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw PipelineError(K::ConfigError, std::string("config field '") + key + "': " + e.what());
    }
  }
}

void read_path(const nlohmann::json& obj, const char* key, fs::path& into) {
  std::string s;
  read_opt(obj, key, s);
  if (!s.empty()) into = s;
}

void read_opt_path(const nlohmann::json& obj, const char* key, std::optional<fs::path>& into) {
  std::string s;
  read_opt(obj, key, s);
  if (!s.empty()) into = fs::path(s);
}

EmbeddingProviderConfig embedding_from_json(const nlohmann::json& obj, EmbeddingProviderConfig c) {
  if (!obj.is_object()) return c;
  std::string kind(to_string(c.kind));
  read_opt(obj, "kind", kind);
  const auto parsed = parse_provider_kind(kind);
  if (!parsed) throw PipelineError(K::ConfigError, "unknown embedding provider kind '" + kind + "'");
  c.kind = *parsed;
  read_opt(obj, "endpoint_url", c.endpoint_url);
  read_opt(obj, "model_name", c.model_name);
  read_opt(obj, "dim", c.dim);
  read_opt(obj, "credential_env_var", c.credential_env_var);
  std::int64_t timeout_ms = c.timeout.count();
  read_opt(obj, "timeout_ms", timeout_ms);
  c.timeout = std::chrono::milliseconds(timeout_ms);
  read_opt(obj, "max_retries", c.max_retries);
  std::int64_t backoff_ms = c.retry_backoff.count();
  read_opt(obj, "retry_backoff_ms", backoff_ms);
  c.retry_backoff = std::chrono::milliseconds(backoff_ms);
  read_opt(obj, "batch_size", c.batch_size);
  read_opt(obj, "seed", c.seed);
  read_opt(obj, "noise", c.noise);
  return c;
}

nlohmann::json embedding_to_json(const EmbeddingProviderConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"endpoint_url", c.endpoint_url},
          {"model_name", c.model_name},
          {"dim", c.dim},
          {"credential_env_var", c.credential_env_var},
          {"timeout_ms", c.timeout.count()},
          {"max_retries", c.max_retries},
          {"retry_backoff_ms", c.retry_backoff.count()},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"noise", c.noise}};
}

std::string mode_file(FusionMode mode, std::string_view suffix) { return std::string(to_string(mode)) + std::string(suffix); }

std::map<std::string, Label> truths_of(const std::vector<TranscriptSession>& sessions) {
  std::map<std::string, Label> out;
  for (const auto& s : sessions) out[s.participant_id] = *s.label;
  return out;
}

std::vector<SentencePrediction> read_prediction_file(const fs::path& path) {
  require(path, "eval");
  std::ifstream in(path);
  try {
    return read_predictions(in);
  } catch (const EvaluationError& e) {
    throw PipelineError(K::StageFailure, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return "ingest";
    case Stage::Profile: return "profile";
    case Stage::Embed: return "embed";
    case Stage::Train: return "train";
    case Stage::Eval: return "eval";
    case Stage::Analyze: return "analyze";
    case Stage::Report: return "report";
    case Stage::All: return "all";
  }
  return "all";
}

std::optional<Stage> parse_stage(std::string_view text) {
  for (const auto s : {Stage::Ingest, Stage::Profile, Stage::Embed, Stage::Train, Stage::Eval, Stage::Analyze,
                       Stage::Report, Stage::All}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.attribute_embedding.kind = ProviderKind::MockInformative;
  c.attribute_embedding.dim = 1536;
  c.attribute_embedding.model_name = "text-embedding-ada-002";
  c.attribute_embedding.seed = 1;
  c.sentence_embedding.kind = ProviderKind::MockInformative;
  c.sentence_embedding.dim = 768;
  c.sentence_embedding.model_name = "albert-base-v2";
  c.sentence_embedding.seed = 2;
  return c;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw PipelineError(K::ConfigError, "config document must be an object");
  auto c = defaults();
  c.base_dir = base_dir;

  if (const auto paths = doc.find("paths"); paths != doc.end()) {
    read_path(*paths, "train_corpus", c.train_corpus);
    read_path(*paths, "test_corpus", c.test_corpus);
    read_opt_path(*paths, "annotations", c.annotations);
    read_path(*paths, "work_dir", c.work_dir);
    read_opt_path(*paths, "cache_dir", c.cache_dir);
    read_opt_path(*paths, "profiles_dir", c.profiles_dir);
    read_opt_path(*paths, "checkpoints_dir", c.checkpoints_dir);
    read_opt_path(*paths, "reports_dir", c.reports_dir);
  }
  std::string format = c.corpus_format == CorpusFormat::Chat ? "chat" : "records";
  read_opt(doc, "corpus_format", format);
  if (format != "records" && format != "chat") throw PipelineError(K::ConfigError, "corpus_format must be records|chat");
  c.corpus_format = format == "chat" ? CorpusFormat::Chat : CorpusFormat::Records;
  read_opt(doc, "catalog", c.catalog);

  if (const auto llm = doc.find("llm"); llm != doc.end() && llm->is_object()) {
    std::string kind = c.llm_kind == LlmKind::Mock ? "mock" : "http";
    read_opt(*llm, "kind", kind);
    if (kind != "mock" && kind != "http") throw PipelineError(K::ConfigError, "llm.kind must be mock|http");
    c.llm_kind = kind == "mock" ? LlmKind::Mock : LlmKind::Http;
    read_opt(*llm, "endpoint_url", c.llm.endpoint_url);
    read_opt(*llm, "model_name", c.llm.model_name);
    read_opt(*llm, "temperature", c.llm.temperature);
    std::int64_t timeout_ms = c.llm.timeout.count();
    read_opt(*llm, "timeout_ms", timeout_ms);
    c.llm.timeout = std::chrono::milliseconds(timeout_ms);
    read_opt(*llm, "max_retries", c.llm.max_retries);
    std::int64_t backoff_ms = c.llm.retry_backoff.count();
    read_opt(*llm, "retry_backoff_ms", backoff_ms);
    c.llm.retry_backoff = std::chrono::milliseconds(backoff_ms);
    read_opt(*llm, "credential_env_var", c.llm.credential_env_var);
    std::string scheme = c.llm.auth_scheme == AuthScheme::Bearer ? "bearer" : "api-key";
    read_opt(*llm, "auth_scheme", scheme);
    if (scheme != "bearer" && scheme != "api-key") throw PipelineError(K::ConfigError, "llm.auth_scheme must be bearer|api-key");
    c.llm.auth_scheme = scheme == "bearer" ? AuthScheme::Bearer : AuthScheme::ApiKeyHeader;
    read_opt(*llm, "max_in_flight", c.llm.max_in_flight);
    if (const auto mock = llm->find("mock"); mock != llm->end() && mock->is_object()) {
      read_opt(*mock, "noise", c.mock_llm.noise);
      read_opt(*mock, "seed", c.mock_llm.seed);
      read_opt(*mock, "max_examples", c.mock_llm.max_examples);
    }
  }

  if (const auto e = doc.find("attribute_embedding"); e != doc.end()) {
    c.attribute_embedding = embedding_from_json(*e, c.attribute_embedding);
  }
  if (const auto e = doc.find("sentence_embedding"); e != doc.end()) {
    c.sentence_embedding = embedding_from_json(*e, c.sentence_embedding);
  }
  if (const auto m = doc.find("model"); m != doc.end() && m->is_object()) {
    read_opt(*m, "profile_dim", c.profile_dim);
    read_opt(*m, "hidden_dim", c.hidden_dim);
  }
  if (const auto t = doc.find("train"); t != doc.end() && t->is_object()) {
    read_opt(*t, "epochs", c.train.epochs);
    read_opt(*t, "batch_size", c.train.batch_size);
    read_opt(*t, "seed", c.train.seed);
    read_opt(*t, "learning_rate", c.train.optimizer.learning_rate);
    read_opt(*t, "weight_decay", c.train.optimizer.weight_decay);
    read_opt(*t, "beta1", c.train.optimizer.beta1);
    read_opt(*t, "beta2", c.train.optimizer.beta2);
    read_opt(*t, "eps", c.train.optimizer.eps);
  }
  if (const auto modes = doc.find("modes"); modes != doc.end()) {
    c.modes.clear();
    try {
      for (const auto& m : *modes) c.modes.push_back(parse_fusion_mode(m.get<std::string>()));
    } catch (const std::exception& e) {
      throw PipelineError(K::ConfigError, std::string("modes: ") + e.what());
    }
  }
  if (const auto r = doc.find("report"); r != doc.end() && r->is_object()) {
    if (const auto p = r->find("case_participant"); p != r->end() && p->is_string()) c.case_participant = p->get<std::string>();
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError(K::ConfigError, "cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw PipelineError(K::ConfigError, path.string() + ": " + e.what());
  }
  const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return from_json(doc, base);
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json paths = {{"train_corpus", train_corpus.string()},
                          {"test_corpus", test_corpus.string()},
                          {"work_dir", work_dir.string()}};
  if (annotations) paths["annotations"] = annotations->string();
  if (cache_dir) paths["cache_dir"] = cache_dir->string();
  if (profiles_dir) paths["profiles_dir"] = profiles_dir->string();
  if (checkpoints_dir) paths["checkpoints_dir"] = checkpoints_dir->string();
  if (reports_dir) paths["reports_dir"] = reports_dir->string();

  nlohmann::json modes_json = nlohmann::json::array();
  for (const auto m : modes) modes_json.push_back(to_string(m));

  nlohmann::json doc = {
      {"paths", std::move(paths)},
      {"corpus_format", corpus_format == CorpusFormat::Chat ? "chat" : "records"},
      {"catalog", catalog},
      {"llm",
       {{"kind", llm_kind == LlmKind::Mock ? "mock" : "http"},
        {"endpoint_url", llm.endpoint_url},
        {"model_name", llm.model_name},
        {"temperature", llm.temperature},
        {"timeout_ms", llm.timeout.count()},
        {"max_retries", llm.max_retries},
        {"retry_backoff_ms", llm.retry_backoff.count()},
        {"credential_env_var", llm.credential_env_var},
        {"auth_scheme", llm.auth_scheme == AuthScheme::Bearer ? "bearer" : "api-key"},
        {"max_in_flight", llm.max_in_flight},
        {"mock", {{"noise", mock_llm.noise}, {"seed", mock_llm.seed}, {"max_examples", mock_llm.max_examples}}}}},
      {"attribute_embedding", embedding_to_json(attribute_embedding)},
      {"sentence_embedding", embedding_to_json(sentence_embedding)},
      {"model", {{"profile_dim", profile_dim}, {"hidden_dim", hidden_dim}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"seed", train.seed},
        {"learning_rate", train.optimizer.learning_rate},
        {"weight_decay", train.optimizer.weight_decay},
        {"beta1", train.optimizer.beta1},
        {"beta2", train.optimizer.beta2},
        {"eps", train.optimizer.eps}}},
      {"modes", std::move(modes_json)}};
  doc["report"] = {{"case_participant", case_participant ? nlohmann::json(*case_participant) : nlohmann::json()}};
  return doc;
}

fs::path PipelineConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

FusionDims PipelineConfig::fusion_dims() const {
  return {sentence_embedding.dim, attribute_embedding.dim, profile_dim, hidden_dim};
}

void PipelineConfig::validate() const {
  try {
    llm.validate();
    attribute_embedding.validate();
    sentence_embedding.validate();
    train.validate();
    (void)resolve_catalog(catalog);
  } catch (const std::exception& e) {
    throw PipelineError(K::ConfigError, e.what());
  }
  if (modes.empty()) throw PipelineError(K::ConfigError, "at least one mode is required");
  if (profile_dim == 0 || hidden_dim == 0) throw PipelineError(K::ConfigError, "model dimensions must be positive");
  if (llm_kind == LlmKind::Mock && !annotations) {
    throw PipelineError(K::ConfigError, "the mock LLM needs paths.annotations");
  }
  if (llm_kind == LlmKind::Http && llm.endpoint_url.empty()) {
    throw PipelineError(K::ConfigError, "llm.endpoint_url is required for the http LLM");
  }
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<ChatBackend> chat_backend, std::ostream* log)
    : config_(std::move(config)), chat_backend_(std::move(chat_backend)), log_(log) {
  config_.validate();
}

void Pipeline::note(const std::string& message) {
  if (log_) *log_ << "[adprof] " << message << '\n';
}

std::shared_ptr<ChatBackend> Pipeline::chat_backend() {
  if (!chat_backend_) {
    if (config_.llm_kind == LlmKind::Http) {
      chat_backend_ = std::make_shared<HttpChatBackend>();
    } else {
      chat_backend_ = std::make_shared<MockProfilerBackend>();
    }
  }
  return chat_backend_;
}

void Pipeline::run(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return ingest();
    case Stage::Profile: return profile();
    case Stage::Embed: return embed();
    case Stage::Train: return train();
    case Stage::Eval: return eval();
    case Stage::Analyze: return analyze();
    case Stage::Report: return report();
    case Stage::All: {
      ingest();
      profile();
      embed();
      train();
      eval();
      const auto has = [this](FusionMode m) {
        return std::find(config_.modes.begin(), config_.modes.end(), m) != config_.modes.end();
      };
      if (has(FusionMode::Augmented) && has(FusionMode::Baseline)) {
        analyze();
      } else {
        note("analyze skipped: it needs both augmented and baseline modes");
      }
      report();
      return;
    }
  }
}

void Pipeline::ingest() {
  auto train = load_corpus(config_.resolve(config_.train_corpus), config_.corpus_format);
  auto test = load_corpus(config_.resolve(config_.test_corpus), config_.corpus_format);
  std::set<std::string> ids;
  for (const auto* split : {&train, &test}) {
    for (const auto& s : *split) {
      if (!s.label) throw PipelineError(K::StageFailure, "participant " + s.participant_id + " has no HC/AD label");
      if (!ids.insert(s.participant_id).second) {
        throw PipelineError(K::StageFailure, "participant " + s.participant_id + " appears more than once");
      }
    }
  }
  for (const auto& [name, sessions] : {std::pair{"train", &train}, std::pair{"test", &test}}) {
    std::ostringstream out;
    write_records(out, *sessions);
    write_text(config_.sessions_path() / (std::string(name) + ".jsonl"), out.str());
  }
  note("ingest: " + std::to_string(train.size()) + " train and " + std::to_string(test.size()) + " test sessions");
}

void Pipeline::profile() {
  const auto train = read_sessions(config_.sessions_path() / "train.jsonl");
  const auto test = read_sessions(config_.sessions_path() / "test.jsonl");
  std::vector<TranscriptSession> sessions = train;
  sessions.insert(sessions.end(), test.begin(), test.end());
  const auto catalog = resolve_catalog(config_.catalog);

  std::vector<PromptText> prompts;
  std::vector<std::string> ids;
  for (const auto& s : sessions) {
    prompts.push_back(build_prompt(catalog, s));
    ids.push_back(s.participant_id);
  }

  auto llm_config = config_.llm;
  auto backend = chat_backend();
  if (auto* mock = dynamic_cast<MockProfilerBackend*>(backend.get())) {
    char tag[96];
    std::snprintf(tag, sizeof tag, "mock-profiler(noise=%g,seed=%llu)", config_.mock_llm.noise,
                  static_cast<unsigned long long>(config_.mock_llm.seed));
    llm_config.model_name = tag;
    std::ifstream in(config_.resolve(*config_.annotations));
    if (!in) throw PipelineError(K::MissingArtifact, "annotations not found: " + config_.annotations->string());
    std::map<std::string, SessionAnnotation> annotations;
    for (auto& a : read_annotations(in)) annotations[a.participant_id] = std::move(a);
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      const auto it = annotations.find(ids[i]);
      if (it == annotations.end()) throw PipelineError(K::StageFailure, "no annotation for participant " + ids[i]);
      try {
        const auto p = mock_profile(sessions[i], it->second, catalog, config_.mock_llm);
        mock->register_sheet(prompts[i].text, render_sheet(p, catalog));
      } catch (const SynthError& e) {
        throw PipelineError(K::StageFailure, ids[i] + ": " + e.what());
      }
    }
  }

  const LlmClient client(llm_config, backend);
  const ResponseCache cache(config_.cache_path() / "llm");
  std::vector<ProfileQueryResult> results;
  try {
    results = query_profiles(&cache, client, prompts, ids);
  } catch (const LlmError& e) {
    throw PipelineError(K::StageFailure, std::string("profile: ") + e.what());
  }

  std::size_t cached = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    cached += results[i].cached ? 1 : 0;
    try {
      const auto parsed = parse_sheet(results[i].turn2_response, catalog, ids[i]);
      validate(parsed.profile, catalog);
      save_profile(config_.profiles_path(), parsed.profile, parsed.warnings);
    } catch (const ProfileError& e) {
      throw PipelineError(K::StageFailure, "profile for participant " + ids[i] + ": " + e.what());
    }
  }
  note("profile: " + std::to_string(results.size()) + " profiles (" + std::to_string(cached) + " from cache)");
}

void Pipeline::embed() {
  const auto catalog = resolve_catalog(config_.catalog);
  auto attr_cfg = config_.attribute_embedding;
  auto sent_cfg = config_.sentence_embedding;
  if (attr_cfg.kind == ProviderKind::Remote) attr_cfg.cache_dir = config_.cache_path() / "embeddings" / "attribute";
  if (sent_cfg.kind == ProviderKind::Remote) sent_cfg.cache_dir = config_.cache_path() / "embeddings" / "sentence";

  std::unique_ptr<EmbeddingProvider> attr, sent;
  try {
    attr = make_provider(attr_cfg);
    sent = make_provider(sent_cfg);
  } catch (const EmbeddingError& e) {
    throw PipelineError(K::ConfigError, e.what());
  }

  for (const std::string split : {"train", "test"}) {
    const auto sessions = read_sessions(config_.sessions_path() / (split + ".jsonl"));
    std::vector<ParticipantEmbeddings> items;
    for (const auto& s : sessions) {
      const auto profile_file = config_.profiles_path() / (s.participant_id + ".json");
      require(profile_file, "profile");
      try {
        const auto profile = load_profile(config_.profiles_path(), s.participant_id);
        ParticipantEmbeddings item;
        item.participant_id = s.participant_id;
        item.label = *s.label;
        item.n_attr = profile.attribute_count();
        const auto texts = profile_texts(profile, catalog);
        const auto attribute_vectors = attr->embed_batch(texts);
        const auto pooled = max_pool(attribute_vectors);
        item.pooled.assign(pooled.values().begin(), pooled.values().end());
        for (const auto& v : sent->embed_batch(participant_sentences(s))) {
          item.sentences.emplace_back(v.values().begin(), v.values().end());
        }
        items.push_back(std::move(item));
      } catch (const std::exception& e) {
        throw PipelineError(K::StageFailure, "embedding participant " + s.participant_id + ": " + e.what());
      }
    }
    save_embeddings(config_.embeddings_path() / (split + ".cbor"), items, config_);
  }
  note("embed: wrote train and test embeddings");
}

void Pipeline::train() {
  const auto items = load_embeddings(config_.embeddings_path() / "train.cbor", config_);
  for (const auto mode : config_.modes) {
    std::vector<Sample> samples;
    for (const auto& p : items) {
      for (const auto& s : p.sentences) {
        samples.push_back({s, mode == FusionMode::Augmented ? std::span<const double>(p.pooled) : std::span<const double>{},
                           label_index(p.label)});
      }
    }
    auto net = FusionNet::xavier(mode, config_.fusion_dims(), config_.train.seed);
    TrainResult result;
    try {
      result = adprof::train(net, samples, config_.train);
    } catch (const FusionError& e) {
      throw PipelineError(K::StageFailure, std::string("train (") + std::string(to_string(mode)) + "): " + e.what());
    }
    save_checkpoint(config_.checkpoints_path() / mode_file(mode, ".ckpt"), net, result.optimizer);
    const nlohmann::json history = {{"mode", to_string(mode)}, {"loss_history", result.loss_history}};
    write_text(config_.checkpoints_path() / mode_file(mode, ".history.json"), history.dump(2) + "\n");
    note("train (" + std::string(to_string(mode)) + "): final epoch loss " + std::to_string(result.loss_history.back()));
  }
}

void Pipeline::eval() {
  const auto items = load_embeddings(config_.embeddings_path() / "test.cbor", config_);
  for (const auto mode : config_.modes) {
    const auto ckpt_path = config_.checkpoints_path() / mode_file(mode, ".ckpt");
    require(ckpt_path, "train");
    Checkpoint ckpt = [&] {
      try {
        return load_checkpoint(ckpt_path);
      } catch (const FusionError& e) {
        throw PipelineError(K::StageFailure, e.what());
      }
    }();
    if (ckpt.net.mode() != mode || ckpt.net.dims() != config_.fusion_dims()) {
      throw PipelineError(K::StageFailure, ckpt_path.string() + " does not match the configured mode/dimensions");
    }

    std::vector<SentencePrediction> predictions;
    std::vector<std::pair<Label, Label>> finals;
    std::ostringstream participants;
    for (const auto& p : items) {
      const std::span<const double> profile =
          mode == FusionMode::Augmented ? std::span<const double>(p.pooled) : std::span<const double>{};
      std::vector<SentencePrediction> mine;
      for (std::size_t i = 0; i < p.sentences.size(); ++i) {
        mine.push_back(make_sentence_prediction(p.participant_id, i, ckpt.net.forward(p.sentences[i], profile)));
      }
      const auto vote = majority_vote(mine);
      participants << to_json(vote).dump() << '\n';
      finals.emplace_back(vote.final, p.label);
      predictions.insert(predictions.end(), mine.begin(), mine.end());
    }

    std::ostringstream out;
    write_predictions(out, predictions);
    write_text(config_.predictions_path() / mode_file(mode, ".jsonl"), out.str());
    write_text(config_.predictions_path() / mode_file(mode, ".participants.jsonl"), participants.str());
    const auto macro = compute_metrics(finals, Averaging::Macro);
    const auto binary = compute_metrics(finals, Averaging::Binary);
    const nlohmann::json metrics = {{"mode", to_string(mode)}, {"macro", to_json(macro)}, {"binary", to_json(binary)}};
    write_text(config_.predictions_path() / mode_file(mode, ".metrics.json"), metrics.dump(2) + "\n");
    note("eval (" + std::string(to_string(mode)) + "): accuracy " + std::to_string(macro.accuracy));
  }
}

void Pipeline::analyze() {
  const auto aug = read_prediction_file(config_.predictions_path() / mode_file(FusionMode::Augmented, ".jsonl"));
  const auto base = read_prediction_file(config_.predictions_path() / mode_file(FusionMode::Baseline, ".jsonl"));
  const auto test = read_sessions(config_.sessions_path() / "test.jsonl");

  try {
    const auto aug_votes = majority_vote_all(aug);
    const auto base_votes = majority_vote_all(base);
    const auto deltas = risk_ascend(aug_votes, base_votes);

    std::map<std::string, PatientProfile> profiles;
    std::map<std::string, Label> finals;
    for (const auto& v : aug_votes) {
      profiles[v.participant_id] = load_profile(config_.profiles_path(), v.participant_id);
      finals[v.participant_id] = v.final;
    }
    const auto report = group_risk_report(deltas, profiles, truths_of(test), finals);
    write_text(config_.analysis_path() / "risk_ascend.json", to_json(report).dump(2) + "\n");
    note("analyze: risk-ascend report over " + std::to_string(deltas.size()) + " participants");
  } catch (const EvaluationError& e) {
    throw PipelineError(K::StageFailure, std::string("analyze: ") + e.what());
  } catch (const ProfileError& e) {
    throw PipelineError(K::StageFailure, std::string("analyze: ") + e.what());
  }
}

void Pipeline::report() {
  const auto catalog = resolve_catalog(config_.catalog);
  const auto test = read_sessions(config_.sessions_path() / "test.jsonl");

  std::vector<std::pair<std::string, MetricsReport>> macro_rows, binary_rows;
  nlohmann::json summary = {{"catalog", catalog.name}};
  for (const auto mode : {FusionMode::Baseline, FusionMode::Augmented}) {
    const auto path = config_.predictions_path() / mode_file(mode, ".metrics.json");
    if (!fs::exists(path)) continue;
    const auto doc = nlohmann::json::parse(read_text(path));
    const auto name = mode == FusionMode::Baseline ? std::string("baseline") : "augmented+" + catalog.name;
    macro_rows.emplace_back(name, metrics_from_json(doc.at("macro")));
    binary_rows.emplace_back(name, metrics_from_json(doc.at("binary")));
    summary["metrics"][std::string(to_string(mode))] = doc.at("macro");
  }
  if (macro_rows.empty()) {
    throw PipelineError(K::MissingArtifact, "no metrics under " + config_.predictions_path().string() + " (run 'eval' first)");
  }

  const auto reports = config_.reports_path();
  std::string metrics_text = "Participant-level detection metrics (%), macro-averaged over HC/AD\n\n" +
                             render_metrics_table(macro_rows) +
                             "\nAD-positive binary metrics (%)\n\n" + render_metrics_table(binary_rows);
  write_text(reports / "metrics.txt", metrics_text);

  std::optional<RiskAscendReport> risk;
  const auto risk_path = config_.analysis_path() / "risk_ascend.json";
  if (fs::exists(risk_path)) {
    risk = risk_report_from_json(nlohmann::json::parse(read_text(risk_path)));
    write_text(reports / "risk_ascend.txt", "Average risk-ascend index by number of detected attributes\n\n" +
                                                render_risk_report(*risk));
    summary["risk_ascend"] = to_json(*risk)["rows"];
  }

  // Case study: the configured participant, or the HC participant with the
  // most detected attributes and, among those, the largest risk-ascend index.
  std::string case_id;
  if (config_.case_participant) {
    case_id = *config_.case_participant;
  } else {
    std::tuple<int, std::size_t, double> best{-1, 0, 0.0};
    for (const auto& s : test) {
      const auto path = config_.profiles_path() / (s.participant_id + ".json");
      if (!fs::exists(path)) continue;
      const auto n_attr = load_profile(config_.profiles_path(), s.participant_id).attribute_count();
      const double delta = risk && risk->deltas.count(s.participant_id) ? risk->deltas.at(s.participant_id) : 0.0;
      const std::tuple<int, std::size_t, double> key{*s.label == Label::HC ? 1 : 0, n_attr, delta};
      if (key > best) {
        best = key;
        case_id = s.participant_id;
      }
    }
  }
  if (!case_id.empty()) {
    try {
      const auto profile = load_profile(config_.profiles_path(), case_id);
      write_text(reports / ("case_" + case_id + ".txt"), case_report(profile, catalog));
      summary["case_participant"] = case_id;
    } catch (const ProfileError& e) {
      throw PipelineError(K::MissingArtifact, "case study: " + std::string(e.what()));
    }
  }
  write_text(reports / "summary.json", summary.dump(2) + "\n");
  note("report: wrote " + reports.string());
}

// ---------------------------------------------------------------------------

fs::path write_synthetic_workspace(const fs::path& dir, const SynthConfig& train, const SynthConfig& test) {
  fs::create_directories(dir);
  const auto train_corpus = generate_corpus(train);
  const auto test_corpus = generate_corpus(test);

  std::ostringstream train_out, test_out, annotations;
  write_records(train_out, train_corpus.sessions);
  write_records(test_out, test_corpus.sessions);
  write_annotations(annotations, train_corpus.annotations);
  write_annotations(annotations, test_corpus.annotations);
  write_text(dir / "train.jsonl", train_out.str());
  write_text(dir / "test.jsonl", test_out.str());
  write_text(dir / "annotations.jsonl", annotations.str());

  auto config = PipelineConfig::defaults();
  config.train_corpus = "train.jsonl";
  config.test_corpus = "test.jsonl";
  config.annotations = fs::path("annotations.jsonl");
  config.work_dir = "run";
  const auto path = dir / "pipeline.json";
  write_text(path, config.to_json().dump(2) + "\n");
  return path;
}

}  // namespace adprof
