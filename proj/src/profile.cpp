#include "adprof/profile.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace adprof {

namespace {

using K = ProfileError::Kind;

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Drops leading markdown noise ("## ", "**") so "**ATTRIBUTE:** x" reads as a marker line.
std::string_view strip_decoration(std::string_view s) {
  s = trim(s);
  while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == '>' || s.front() == ' ')) s.remove_prefix(1);
  return trim(s);
}

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Returns the text after `marker` when the line starts with it.
std::optional<std::string_view> marker_value(std::string_view line, std::string_view marker) {
  const auto s = strip_decoration(line);
  if (!iequals_prefix(s, marker)) return std::nullopt;
  auto rest = s.substr(marker.size());
  while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
  return trim(rest);
}

bool starts_with_utf8(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with_utf8(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

std::string_view strip_quotes(std::string_view s) {
  s = trim(s);
  if (starts_with_utf8(s, "\"")) {
    s.remove_prefix(1);
  } else if (starts_with_utf8(s, "\xE2\x80\x9C")) {
    s.remove_prefix(3);
  }
  if (ends_with_utf8(s, "\"")) {
    s.remove_suffix(1);
  } else if (ends_with_utf8(s, "\xE2\x80\x9D")) {
    s.remove_suffix(3);
  }
  return trim(s);
}

bool is_none(std::string_view s) {
  const auto k = normalize_attribute_key(s);
  return k.empty() || k == "none" || k == "na";
}

std::optional<std::string_view> bullet_value(std::string_view line) {
  auto s = trim(line);
  if (starts_with_utf8(s, "-") || starts_with_utf8(s, "*")) {
    s.remove_prefix(1);
  } else if (starts_with_utf8(s, "\xE2\x80\xA2")) {
    s.remove_prefix(3);
  } else {
    return std::nullopt;
  }
  return trim(s);
}

std::optional<bool> parse_status(std::string_view value) {
  const auto k = normalize_attribute_key(value);
  if (k.rfind("notdetected", 0) == 0 || k == "no" || k == "absent") return false;
  if (k.rfind("detected", 0) == 0 || k == "yes" || k == "present") return true;
  return std::nullopt;
}

std::string_view strip_numbering(std::string_view s) {
  s = trim(s);
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) return trim(s.substr(i + 1));
  return s;
}

struct RawBlock {
  const AttributeDef* attribute = nullptr;
  std::string heading;
  std::optional<bool> detected;
  std::vector<std::string> evidence;
  std::string description;
};

enum class Field { None, Examples, Description };

void append_unique(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& e : from) {
    if (std::find(into.begin(), into.end(), e) == into.end()) into.push_back(e);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProfileError(K::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const ProfileEntry* PatientProfile::find(std::string_view attribute_id) const {
  for (const auto& e : entries) {
    if (e.attribute_id == attribute_id) return &e;
  }
  return nullptr;
}

SheetParse parse_sheet(std::string_view text, const AttributeCatalog& catalog, std::string participant_id) {
  SheetParse result;
  result.profile.participant_id = std::move(participant_id);

  std::deque<RawBlock> blocks;  // stable addresses for `current`
  RawBlock* current = nullptr;
  bool skipping_unknown = false;
  bool saw_structure = false;
  bool in_summary = false;
  std::string summary;
  Field field = Field::None;

  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();

    if (in_summary) {
      const auto t = trim(line);
      if (!t.empty()) {
        if (!summary.empty()) summary += ' ';
        summary += t;
      }
      continue;
    }

    if (const auto v = marker_value(line, sheet::kAttribute)) {
      saw_structure = true;
      field = Field::None;
      const auto heading = strip_numbering(*v);
      const auto* attribute = catalog.match(heading);
      if (!attribute) {
        result.warnings.push_back("unknown attribute '" + std::string(heading) + "' ignored");
        current = nullptr;
        skipping_unknown = true;
        continue;
      }
      skipping_unknown = false;
      blocks.push_back({attribute, std::string(heading), std::nullopt, {}, {}});
      current = &blocks.back();
      continue;
    }
    if (const auto v = marker_value(line, sheet::kSummary)) {
      saw_structure = true;
      in_summary = true;
      summary = std::string(*v);
      continue;
    }
    if (skipping_unknown || current == nullptr) continue;

    if (const auto v = marker_value(line, sheet::kStatus)) {
      field = Field::None;
      current->detected = parse_status(*v);
      if (!current->detected) {
        result.warnings.push_back("unrecognized status '" + std::string(*v) + "' for " +
                                  current->attribute->id + "; treated as not detected");
        current->detected = false;
      }
    } else if (const auto v = marker_value(line, sheet::kExamples)) {
      field = Field::Examples;
      const auto q = strip_quotes(*v);
      if (!is_none(q)) current->evidence.emplace_back(q);
    } else if (const auto v = marker_value(line, sheet::kDescription)) {
      field = Field::Description;
      if (!is_none(*v)) current->description = std::string(*v);
    } else if (field == Field::Examples) {
      if (const auto b = bullet_value(line)) {
        const auto q = strip_quotes(*b);
        if (!is_none(q)) current->evidence.emplace_back(q);
      }
    } else if (field == Field::Description) {
      const auto t = trim(line);
      if (!t.empty() && !current->description.empty()) {
        current->description += ' ';
        current->description += t;
      }
    }
  }

  if (!saw_structure) {
    throw ProfileError(K::Unparseable, "no answer-sheet blocks found", std::string(text));
  }
  if (trim(summary).empty()) {
    throw ProfileError(K::NoSummary, "answer sheet has no SUMMARY block", std::string(text));
  }
  result.profile.summary = std::string(trim(summary));

  // Merge repeated blocks for the same attribute into the first occurrence.
  std::map<std::size_t, RawBlock> merged;
  for (auto& b : blocks) {
    const auto index = *catalog.index_of(b.attribute->id);
    if (!b.detected) {
      const bool has_content = !b.evidence.empty() || !b.description.empty();
      b.detected = has_content;
      result.warnings.push_back("no status for " + b.attribute->id + "; inferred " +
                                (has_content ? "detected" : "not detected"));
    }
    auto [it, inserted] = merged.try_emplace(index, b);
    if (inserted) continue;
    result.warnings.push_back("attribute " + b.attribute->id + " listed more than once; blocks merged");
    auto& first = it->second;
    first.detected = *first.detected || *b.detected;
    append_unique(first.evidence, b.evidence);
    if (first.description.empty()) first.description = b.description;
  }

  for (auto& [index, b] : merged) {
    if (!*b.detected) continue;
    ProfileEntry entry;
    entry.attribute_id = b.attribute->id;
    append_unique(entry.evidence_examples, b.evidence);
    entry.description = std::move(b.description);
    if (entry.evidence_examples.empty() && entry.description.empty()) {
      result.warnings.push_back("attribute " + entry.attribute_id +
                                " marked detected without evidence or description; dropped");
      continue;
    }
    result.profile.entries.push_back(std::move(entry));
  }
  return result;
}

std::string render_sheet(const PatientProfile& profile, const AttributeCatalog& catalog) {
  std::ostringstream out;
  for (const auto& a : catalog.attributes) {
    const auto* entry = profile.find(a.id);
    out << sheet::kAttribute << ' ' << a.name << '\n';
    if (!entry) {
      out << sheet::kStatus << ' ' << sheet::kNotDetected << "\n\n";
      continue;
    }
    out << sheet::kStatus << ' ' << sheet::kDetected << '\n';
    if (!entry->evidence_examples.empty()) {
      out << sheet::kExamples << '\n';
      for (const auto& e : entry->evidence_examples) out << "- \"" << e << "\"\n";
    }
    if (!entry->description.empty()) out << sheet::kDescription << ' ' << entry->description << '\n';
    out << '\n';
  }
  out << sheet::kSummary << ' ' << profile.summary << '\n';
  return out.str();
}

std::vector<std::string> profile_texts(const PatientProfile& profile, const AttributeCatalog& catalog) {
  std::vector<std::string> texts;
  for (const auto& a : catalog.attributes) {
    const auto* entry = profile.find(a.id);
    if (!entry) continue;
    std::string text = a.name;
    if (!entry->description.empty()) {
      text += ": " + entry->description;
      const char last = entry->description.back();
      if (last != '.' && last != '!' && last != '?') text += '.';
    } else {
      text += '.';
    }
    if (!entry->evidence_examples.empty()) {
      text += " Evidence: ";
      for (std::size_t i = 0; i < entry->evidence_examples.size(); ++i) {
        if (i) text += "; ";
        text += '"' + entry->evidence_examples[i] + '"';
      }
    }
    texts.push_back(std::move(text));
  }
  texts.push_back(profile.summary);
  return texts;
}

void validate(const PatientProfile& profile, const AttributeCatalog& catalog) {
  if (trim(profile.summary).empty()) {
    throw ProfileError(K::InvalidProfile, "profile " + profile.participant_id + " has an empty summary");
  }
  if (profile.entries.size() > catalog.size()) {
    throw ProfileError(K::InvalidProfile, "profile has more entries than the catalog has attributes");
  }
  for (std::size_t i = 0; i < profile.entries.size(); ++i) {
    const auto& e = profile.entries[i];
    if (!catalog.find(e.attribute_id)) {
      throw ProfileError(K::InvalidProfile, "attribute '" + e.attribute_id + "' is not in catalog " + catalog.name);
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (profile.entries[j].attribute_id == e.attribute_id) {
        throw ProfileError(K::InvalidProfile, "duplicate attribute '" + e.attribute_id + "'");
      }
    }
    if (e.evidence_examples.empty() && e.description.empty()) {
      throw ProfileError(K::InvalidProfile, "attribute '" + e.attribute_id + "' has neither evidence nor description");
    }
  }
}

nlohmann::json to_json(const PatientProfile& profile) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : profile.entries) {
    entries.push_back({{"attribute_id", e.attribute_id},
                       {"evidence_examples", e.evidence_examples},
                       {"description", e.description}});
  }
  return {{"participant_id", profile.participant_id}, {"entries", std::move(entries)}, {"summary", profile.summary}};
}

PatientProfile profile_from_json(const nlohmann::json& doc) {
  try {
    PatientProfile profile;
    profile.participant_id = doc.at("participant_id").get<std::string>();
    profile.summary = doc.at("summary").get<std::string>();
    for (const auto& e : doc.at("entries")) {
      ProfileEntry entry;
      entry.attribute_id = e.at("attribute_id").get<std::string>();
      entry.evidence_examples = e.at("evidence_examples").get<std::vector<std::string>>();
      entry.description = e.value("description", std::string{});
      profile.entries.push_back(std::move(entry));
    }
    return profile;
  } catch (const nlohmann::json::exception& e) {
    throw ProfileError(K::InvalidProfile, std::string("malformed profile document: ") + e.what());
  }
}

void save_profile(const std::filesystem::path& dir, const PatientProfile& profile,
                  const std::vector<std::string>& warnings) {
  std::filesystem::create_directories(dir);
  auto doc = to_json(profile);
  doc["warnings"] = warnings;
  const auto path = dir / (profile.participant_id + ".json");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ProfileError(K::Io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

PatientProfile load_profile(const std::filesystem::path& dir, std::string_view participant_id) {
  const auto path = dir / (std::string(participant_id) + ".json");
  try {
    return profile_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ProfileError(K::InvalidProfile, path.string() + ": " + e.what());
  }
}

}  // namespace adprof
