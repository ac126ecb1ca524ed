#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace adprof {

enum class Speaker { Par, Inv };
enum class Label { HC, AD };

std::string_view to_string(Speaker speaker);
std::string_view to_string(Label label);
std::optional<Speaker> parse_speaker(std::string_view code);
std::optional<Label> parse_label(std::string_view text);

/// Numeric class encoding used by the classifier: HC=0, AD=1.
constexpr int label_index(Label label) { return label == Label::AD ? 1 : 0; }
constexpr Label label_from_index(int index) { return index == 1 ? Label::AD : Label::HC; }

struct Utterance {
  Speaker speaker = Speaker::Par;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

/// One participant's picture-description dialogue.
struct TranscriptSession {
  std::string participant_id;
  std::optional<Label> label;
  std::vector<Utterance> utterances;

  bool operator==(const TranscriptSession&) const = default;
};

class TranscriptError : public std::runtime_error {
 public:
  enum class Kind { NoUtterances, MalformedTier, SchemaError, InvalidSession };

  TranscriptError(Kind kind, const std::string& message, std::size_t line = 0);

  Kind kind() const noexcept { return kind_; }
  /// 1-based input line the error refers to, 0 when not line-specific.
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// Checks the session invariants (non-empty id, non-empty texts, T >= 1).
void validate(const TranscriptSession& session);

/// Parses the CHAT subset: "*PAR:" / "*INV:" tiers and "@" headers.
///
/// The participant id comes from an "@PID:" header when present; otherwise
/// `default_participant_id` is used. The label is read from the group field of
/// the PAR "@ID:" header ("ProbableAD"/"AD" or "Control"/"HC"). All other lines,
/// including dependent tiers and continuation lines, are ignored.
TranscriptSession parse_chat(std::string_view text, std::string_view default_participant_id = {});

/// Parses line-delimited JSON records, one session per non-blank line.
std::vector<TranscriptSession> parse_records(std::istream& in);
std::vector<TranscriptSession> parse_records(std::string_view text);

nlohmann::json to_record(const TranscriptSession& session);
TranscriptSession from_record(const nlohmann::json& record);
void write_records(std::ostream& out, const std::vector<TranscriptSession>& sessions);

/// PAR utterance texts in order; the classifier's T sentences.
std::vector<std::string> participant_sentences(const TranscriptSession& session);

}  // namespace adprof
