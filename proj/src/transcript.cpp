#include "adprof/transcript.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

namespace adprof {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string_view to_string(Speaker speaker) { return speaker == Speaker::Par ? "PAR" : "INV"; }

std::string_view to_string(Label label) { return label == Label::AD ? "AD" : "HC"; }

std::optional<Speaker> parse_speaker(std::string_view code) {
  if (code == "PAR") return Speaker::Par;
  if (code == "INV") return Speaker::Inv;
  return std::nullopt;
}

std::optional<Label> parse_label(std::string_view text) {
  const auto u = upper(trim(text));
  if (u == "AD" || u == "PROBABLEAD" || u == "DEMENTIA") return Label::AD;
  if (u == "HC" || u == "CONTROL") return Label::HC;
  return std::nullopt;
}

TranscriptError::TranscriptError(Kind kind, const std::string& message, std::size_t line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      kind_(kind),
      line_(line) {}

void validate(const TranscriptSession& session) {
  using K = TranscriptError::Kind;
  if (trim(session.participant_id).empty()) {
    throw TranscriptError(K::InvalidSession, "empty participant_id");
  }
  bool has_par = false;
  for (const auto& u : session.utterances) {
    if (trim(u.text).empty()) {
      throw TranscriptError(K::InvalidSession,
                            "empty utterance text in session " + session.participant_id);
    }
    has_par = has_par || u.speaker == Speaker::Par;
  }
  if (!has_par) {
    throw TranscriptError(K::NoUtterances,
                          "session " + session.participant_id + " has no PAR utterances");
  }
}

TranscriptSession parse_chat(std::string_view text, std::string_view default_participant_id) {
  using K = TranscriptError::Kind;
  TranscriptSession session;
  session.participant_id = std::string(trim(default_participant_id));

  std::size_t line_no = 0;
  bool any_tier = false;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.empty()) continue;

    if (raw.front() == '@') {
      const auto colon = raw.find(':');
      if (colon == std::string_view::npos) continue;
      const auto key = raw.substr(1, colon - 1);
      const auto value = trim(raw.substr(colon + 1));
      if (key == "PID" && !value.empty()) {
        session.participant_id = std::string(value);
      } else if (key == "ID") {
        // language|corpus|code|age|sex|group|SES|role|education|custom|
        const auto fields = split(value, '|');
        if (fields.size() > 5 && trim(fields[2]) == "PAR") {
          if (auto label = parse_label(fields[5])) session.label = label;
        }
      }
      continue;
    }
    if (raw.front() != '*') continue;

    const auto colon = raw.find(':');
    if (colon == std::string_view::npos) {
      throw TranscriptError(K::MalformedTier, "tier line without colon", line_no);
    }
    const auto code = raw.substr(1, colon - 1);
    const auto speaker = parse_speaker(code);
    if (!speaker) {
      throw TranscriptError(K::MalformedTier, "unsupported speaker code '" + std::string(code) + "'",
                            line_no);
    }
    const auto body = trim(raw.substr(colon + 1));
    if (body.empty()) {
      throw TranscriptError(K::MalformedTier, "empty tier text", line_no);
    }
    any_tier = true;
    session.utterances.push_back({*speaker, std::string(body)});
  }

  if (!any_tier) {
    throw TranscriptError(K::NoUtterances, "no *PAR: or *INV: tier lines found");
  }
  if (session.participant_id.empty()) {
    throw TranscriptError(K::InvalidSession, "no @PID header and no default participant id");
  }
  validate(session);
  return session;
}

nlohmann::json to_record(const TranscriptSession& session) {
  nlohmann::json utterances = nlohmann::json::array();
  for (const auto& u : session.utterances) {
    utterances.push_back({{"speaker", to_string(u.speaker)}, {"text", u.text}});
  }
  nlohmann::json record = {{"participant_id", session.participant_id}};
  record["label"] = session.label ? nlohmann::json(to_string(*session.label)) : nlohmann::json();
  record["utterances"] = std::move(utterances);
  return record;
}

TranscriptSession from_record(const nlohmann::json& record) {
  using K = TranscriptError::Kind;
  if (!record.is_object()) throw TranscriptError(K::SchemaError, "record is not an object");

  TranscriptSession session;
  const auto id = record.find("participant_id");
  if (id == record.end() || !id->is_string()) {
    throw TranscriptError(K::SchemaError, "participant_id missing or not a string");
  }
  session.participant_id = id->get<std::string>();

  if (const auto label = record.find("label"); label != record.end() && !label->is_null()) {
    if (!label->is_string()) throw TranscriptError(K::SchemaError, "label must be a string or null");
    const auto& s = label->get_ref<const std::string&>();
    if (s == "AD") {
      session.label = Label::AD;
    } else if (s == "HC") {
      session.label = Label::HC;
    } else {
      throw TranscriptError(K::SchemaError, "label must be \"HC\" or \"AD\", got \"" + s + "\"");
    }
  }

  const auto utterances = record.find("utterances");
  if (utterances == record.end() || !utterances->is_array()) {
    throw TranscriptError(K::SchemaError, "utterances missing or not an array");
  }
  for (const auto& u : *utterances) {
    if (!u.is_object()) throw TranscriptError(K::SchemaError, "utterance is not an object");
    const auto speaker = u.find("speaker");
    const auto text = u.find("text");
    if (speaker == u.end() || !speaker->is_string()) {
      throw TranscriptError(K::SchemaError, "utterance speaker missing or not a string");
    }
    if (text == u.end() || !text->is_string()) {
      throw TranscriptError(K::SchemaError, "utterance text missing or not a string");
    }
    const auto parsed = parse_speaker(speaker->get_ref<const std::string&>());
    if (!parsed) {
      throw TranscriptError(K::SchemaError,
                            "unsupported speaker '" + speaker->get<std::string>() + "'");
    }
    session.utterances.push_back({*parsed, text->get<std::string>()});
  }

  try {
    validate(session);
  } catch (const TranscriptError& e) {
    throw TranscriptError(K::SchemaError, e.what());
  }
  return session;
}

std::vector<TranscriptSession> parse_records(std::istream& in) {
  using K = TranscriptError::Kind;
  std::vector<TranscriptSession> sessions;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw TranscriptError(K::SchemaError, std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      sessions.push_back(from_record(record));
    } catch (const TranscriptError& e) {
      throw TranscriptError(K::SchemaError, e.what(), line_no);
    }
    if (!seen.insert(sessions.back().participant_id).second) {
      throw TranscriptError(K::SchemaError,
                            "duplicate participant_id " + sessions.back().participant_id, line_no);
    }
  }
  return sessions;
}

std::vector<TranscriptSession> parse_records(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_records(in);
}

void write_records(std::ostream& out, const std::vector<TranscriptSession>& sessions) {
  for (const auto& s : sessions) out << to_record(s).dump() << '\n';
}

std::vector<std::string> participant_sentences(const TranscriptSession& session) {
  std::vector<std::string> out;
  for (const auto& u : session.utterances) {
    if (u.speaker == Speaker::Par) out.push_back(u.text);
  }
  return out;
}

}  // namespace adprof
