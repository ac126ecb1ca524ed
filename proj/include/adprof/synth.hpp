#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adprof/attribute_catalog.hpp"
#include "adprof/llm_client.hpp"
#include "adprof/profile.hpp"
#include "adprof/transcript.hpp"

namespace adprof {

class SynthError : public std::runtime_error {
 public:
  enum class Kind { InvalidRates, InvalidConfig };

  SynthError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Per-sentence probability that a deficit marker is injected, by group.
struct DeficitRate {
  double hc = 0.0;
  double ad = 0.0;
};

struct SynthConfig {
  std::size_t n_hc = 54;
  std::size_t n_ad = 54;
  std::size_t min_sentences = 12;
  std::size_t max_sentences = 18;
  std::map<std::string, DeficitRate> deficit_rates;
  std::uint64_t seed = 7;
  std::size_t first_id = 1;  // participants are numbered S001, S002, ... from here

  /// Rates for every supported deficit, with AD above HC.
  static SynthConfig defaults();
  void validate() const;
};

/// Deficits the generator can realize in text, as RA13 attribute ids.
const std::vector<std::string_view>& supported_deficits();

/// Deficits injected into each PAR sentence, parallel to participant_sentences().
struct SessionAnnotation {
  std::string participant_id;
  std::vector<std::vector<std::string>> sentence_markers;

  bool operator==(const SessionAnnotation&) const = default;
};

struct SynthCorpus {
  std::vector<TranscriptSession> sessions;
  std::vector<SessionAnnotation> annotations;
};

SynthCorpus generate_corpus(const SynthConfig& config);

void write_annotations(std::ostream& out, std::span<const SessionAnnotation> annotations);
std::vector<SessionAnnotation> read_annotations(std::istream& in);

struct MockProfilerConfig {
  double noise = 0.1;  // probability of flipping each attribute's detection
  std::uint64_t seed = 11;
  std::size_t max_examples = 3;
};

/// The profile a perfect reader of the annotations would produce, with each
/// attribute's detection flipped with probability `noise`.
PatientProfile mock_profile(const TranscriptSession& session, const SessionAnnotation& annotation,
                            const AttributeCatalog& catalog, const MockProfilerConfig& config);

/// Chat backend that answers profiling prompts with pre-registered sheets.
/// Turn 1 returns a draft containing the sheet; turn 2 returns the sheet.
class MockProfilerBackend final : public ChatBackend {
 public:
  void register_sheet(std::string prompt_text, std::string sheet);

  ChatCompletion complete(std::span<const ChatMessage> messages, const LlmConfig& config) override;
  std::size_t request_count() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> sheets_;
  std::size_t requests_ = 0;
};

}  // namespace adprof
