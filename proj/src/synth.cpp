#include "adprof/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

#include <json.hpp>

#include "adprof/hashing.hpp"

namespace adprof {

namespace {

using K = SynthError::Kind;

// Neutral picture-description sentences; none of them contains a deficit marker.
const std::vector<std::string_view>& base_sentences() {
  static const std::vector<std::string_view> sentences = {
      "THE BOY IS TAKING COOKIES OUT OF THE JAR",
      "THE STOOL IS TIPPING OVER",
      "THE MOTHER IS WASHING THE DISHES",
      "THE WATER IS OVERFLOWING FROM THE SINK",
      "THE GIRL IS REACHING FOR A COOKIE",
      "THE BOY IS STANDING ON THE STOOL",
      "THE CURTAINS ARE OPEN",
      "THERE ARE DISHES ON THE COUNTER",
      "THE MOTHER IS DRYING A PLATE",
      "THE WINDOW LOOKS OUT ON THE GARDEN",
      "THE GIRL HAS HER FINGER TO HER LIPS",
      "THE COOKIE JAR IS ON THE TOP SHELF",
      "THE FLOOR IS GETTING WET",
      "THE BOY IS GOING TO FALL",
      "THE CUPBOARD DOOR IS OPEN",
      "THE MOTHER IS NOT PAYING ATTENTION",
      "THERE IS A CUP AND TWO PLATES",
      "THE LADY IS STANDING IN THE WATER",
      "THE GIRL IS LAUGHING AT HER BROTHER",
      "IT LOOKS LIKE A SUMMER DAY OUTSIDE",
  };
  return sentences;
}

const std::vector<std::string_view>& investigator_lines() {
  static const std::vector<std::string_view> lines = {
      "TELL ME EVERYTHING YOU SEE GOING ON IN THIS PICTURE .",
      "ANYTHING ELSE ?",
      "WHAT ELSE IS HAPPENING ?",
      "OKAY GOOD .",
  };
  return lines;
}

// Attributes of the three-attribute catalog expressed through the fine-grained deficits.
const std::map<std::string_view, std::vector<std::string_view>>& deficit_aliases() {
  static const std::map<std::string_view, std::vector<std::string_view>> aliases = {
      {"anomia", {"empty_speech", "circumlocution"}},
      {"dysfluency", {"hesitation_pauses", "word_phrase_repetition", "word_phrase_revision"}},
      {"agrammatism", {"poor_grammar", "telegraphic_speech"}},
  };
  return aliases;
}

std::vector<std::string> words_of(std::string_view sentence) {
  std::vector<std::string> words;
  std::istringstream in{std::string(sentence)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

bool has(const std::vector<std::string>& markers, std::string_view id) {
  return std::find(markers.begin(), markers.end(), id) != markers.end();
}

// Applies the markers in a fixed order so each one survives in the final text.
std::string realize(std::string_view base, const std::vector<std::string>& markers, std::mt19937_64& rng) {
  auto words = words_of(base);
  const auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  const bool trailing = has(markers, "trailing_off_speech");
  if (trailing && words.size() > 3) words.resize(std::max<std::size_t>(2, words.size() / 2 + 1));
  if (has(markers, "empty_speech")) words.back() = pick(0, 1) ? "THING" : "STUFF";
  if (has(markers, "word_phrase_revision") && words.size() >= 2) {
    const auto i = pick(1, words.size() - 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(i), {"I", "MEAN", words[i - 1]});
  }
  if (has(markers, "hesitation_pauses")) {
    const auto i = pick(0, words.size() - 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(i), "UH");
  }
  if (has(markers, "word_phrase_repetition")) {
    const auto i = pick(0, words.size() - 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(i), words[i]);
  }
  if (has(markers, "lack_of_narrative_coherence")) words.insert(words.begin(), "ANYWAY");
  if (has(markers, "limited_recall_of_details")) {
    if (pick(0, 1)) {
      words.insert(words.begin(), {"I", "DON'T", "KNOW"});
    } else {
      words.insert(words.end(), {"I", "DON'T", "KNOW"});
    }
  }
  auto text = join(words);
  text += trailing ? " ..." : " .";
  return text;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  const auto digest = sha256(std::to_string(seed) + '\x1f' + std::string(tag));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | digest[static_cast<std::size_t>(i)];
  return out;
}

std::string participant_name(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%03zu", n);
  return buf;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

const std::vector<std::string_view>& supported_deficits() {
  static const std::vector<std::string_view> ids = {
      "hesitation_pauses",   "word_phrase_repetition", "limited_recall_of_details", "empty_speech",
      "trailing_off_speech", "word_phrase_revision",   "lack_of_narrative_coherence",
  };
  return ids;
}

SynthConfig SynthConfig::defaults() {
  SynthConfig config;
  config.deficit_rates = {
      {"hesitation_pauses", {0.03, 0.10}},
      {"word_phrase_repetition", {0.02, 0.08}},
      {"limited_recall_of_details", {0.02, 0.08}},
      {"empty_speech", {0.02, 0.07}},
      {"trailing_off_speech", {0.02, 0.07}},
      {"word_phrase_revision", {0.02, 0.06}},
      {"lack_of_narrative_coherence", {0.02, 0.06}},
  };
  return config;
}

void SynthConfig::validate() const {
  if (n_hc + n_ad == 0) throw SynthError(K::InvalidConfig, "corpus needs at least one participant");
  if (min_sentences == 0 || max_sentences < min_sentences) {
    throw SynthError(K::InvalidConfig, "sentence range must satisfy 1 <= min <= max");
  }
  const auto& supported = supported_deficits();
  for (const auto& [id, rate] : deficit_rates) {
    if (std::find(supported.begin(), supported.end(), id) == supported.end()) {
      throw SynthError(K::InvalidRates, "unsupported deficit '" + id + "'");
    }
    if (!(rate.hc >= 0.0 && rate.hc <= 1.0 && rate.ad >= 0.0 && rate.ad <= 1.0)) {
      throw SynthError(K::InvalidRates, "rates for '" + id + "' must lie in [0, 1]");
    }
    if (rate.ad < rate.hc) throw SynthError(K::InvalidRates, "rate_ad < rate_hc for '" + id + "'");
  }
}

SynthCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  std::vector<Label> labels(config.n_hc, Label::HC);
  labels.insert(labels.end(), config.n_ad, Label::AD);
  std::shuffle(labels.begin(), labels.end(), rng);

  const auto& bases = base_sentences();
  const auto& inv = investigator_lines();
  SynthCorpus corpus;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    TranscriptSession session;
    session.participant_id = participant_name(config.first_id + p);
    session.label = labels[p];
    SessionAnnotation annotation;
    annotation.participant_id = session.participant_id;

    const auto n = std::uniform_int_distribution<std::size_t>(config.min_sentences, config.max_sentences)(rng);
    std::vector<std::size_t> order(bases.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    session.utterances.push_back({Speaker::Inv, std::string(inv[0])});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<std::string> markers;
      for (const auto& [id, rate] : config.deficit_rates) {
        const double r = labels[p] == Label::AD ? rate.ad : rate.hc;
        if (unit(rng) < r) markers.push_back(id);
      }
      session.utterances.push_back({Speaker::Par, realize(bases[order[s % order.size()]], markers, rng)});
      annotation.sentence_markers.push_back(std::move(markers));
      if (s + 1 < n && unit(rng) < 0.15) {
        session.utterances.push_back({Speaker::Inv, std::string(inv[1 + (s % (inv.size() - 1))])});
      }
    }
    corpus.sessions.push_back(std::move(session));
    corpus.annotations.push_back(std::move(annotation));
  }
  return corpus;
}

void write_annotations(std::ostream& out, std::span<const SessionAnnotation> annotations) {
  for (const auto& a : annotations) {
    out << nlohmann::json{{"participant_id", a.participant_id}, {"sentence_markers", a.sentence_markers}}.dump()
        << '\n';
  }
}

std::vector<SessionAnnotation> read_annotations(std::istream& in) {
  std::vector<SessionAnnotation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto doc = nlohmann::json::parse(line);
    out.push_back({doc.at("participant_id").get<std::string>(),
                   doc.at("sentence_markers").get<std::vector<std::vector<std::string>>>()});
  }
  return out;
}

PatientProfile mock_profile(const TranscriptSession& session, const SessionAnnotation& annotation,
                            const AttributeCatalog& catalog, const MockProfilerConfig& config) {
  const auto sentences = participant_sentences(session);
  if (sentences.size() != annotation.sentence_markers.size()) {
    throw SynthError(K::InvalidConfig, "annotation for " + session.participant_id + " does not match its sentences");
  }
  std::mt19937_64 rng(derive_seed(config.seed, session.participant_id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PatientProfile profile;
  profile.participant_id = session.participant_id;
  for (const auto& attribute : catalog.attributes) {
    std::vector<std::string_view> sources{attribute.id};
    if (const auto it = deficit_aliases().find(attribute.id); it != deficit_aliases().end()) {
      sources.insert(sources.end(), it->second.begin(), it->second.end());
    }
    std::vector<std::string> evidence;
    std::size_t hits = 0;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      const auto& m = annotation.sentence_markers[s];
      const bool hit = std::any_of(sources.begin(), sources.end(), [&m](std::string_view id) { return has(m, id); });
      if (!hit) continue;
      ++hits;
      if (evidence.size() < config.max_examples) evidence.push_back(sentences[s]);
    }

    const bool flip = unit(rng) < config.noise;
    const bool present = hits > 0;
    if (present == flip) continue;

    ProfileEntry entry;
    entry.attribute_id = attribute.id;
    if (present) {
      entry.evidence_examples = std::move(evidence);
      entry.description = "Observed in " + std::to_string(hits) + " of " + std::to_string(sentences.size()) +
                          " utterances.";
    } else {
      entry.description = "Suggested by the overall delivery rather than a specific utterance.";
    }
    profile.entries.push_back(std::move(entry));
  }

  std::string summary = "The participant produced " + std::to_string(sentences.size()) + " utterances about the picture";
  if (profile.entries.empty()) {
    summary += " with no notable deficits.";
  } else {
    summary += "; notable: ";
    for (std::size_t i = 0; i < profile.entries.size(); ++i) {
      if (i) summary += ", ";
      summary += lower(catalog.find(profile.entries[i].attribute_id)->name);
    }
    summary += '.';
  }
  profile.summary = std::move(summary);
  return profile;
}

void MockProfilerBackend::register_sheet(std::string prompt_text, std::string sheet) {
  std::lock_guard lock(mutex_);
  sheets_[std::move(prompt_text)] = std::move(sheet);
}

ChatCompletion MockProfilerBackend::complete(std::span<const ChatMessage> messages, const LlmConfig& config) {
  std::string sheet;
  {
    std::lock_guard lock(mutex_);
    ++requests_;
    if (messages.empty()) throw LlmError(LlmError::Kind::Transport, "empty message list");
    const auto it = sheets_.find(messages.front().content);
    if (it == sheets_.end()) throw LlmError(LlmError::Kind::Transport, "mock profiler has no sheet for this prompt");
    sheet = it->second;
  }
  ChatCompletion completion;
  completion.content = messages.size() == 1 ? "Draft assessment of the transcript.\n\n" + sheet : sheet;
  completion.exchange.request = chat_request_body(messages, config);
  completion.exchange.response = {
      {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", completion.content}}}}}}};
  return completion;
}

std::size_t MockProfilerBackend::request_count() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

}  // namespace adprof
