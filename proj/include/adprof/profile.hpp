#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adprof/attribute_catalog.hpp"

namespace adprof {

/// A detected deficit attribute with its supporting evidence.
struct ProfileEntry {
  std::string attribute_id;
  std::vector<std::string> evidence_examples;  // verbatim transcript quotes
  std::string description;                     // may be empty

  bool operator==(const ProfileEntry&) const = default;
};

struct PatientProfile {
  std::string participant_id;
  std::vector<ProfileEntry> entries;  // detected attributes only, catalog order
  std::string summary;

  /// N_attr: detected attributes; the summary is not counted.
  std::size_t attribute_count() const { return entries.size(); }
  const ProfileEntry* find(std::string_view attribute_id) const;

  bool operator==(const PatientProfile&) const = default;
};

class ProfileError : public std::runtime_error {
 public:
  enum class Kind { NoSummary, Unparseable, InvalidProfile, Io };

  ProfileError(Kind kind, const std::string& message, std::string raw_text = {})
      : std::runtime_error(message), kind_(kind), raw_text_(std::move(raw_text)) {}

  Kind kind() const noexcept { return kind_; }
  /// The sheet text that failed to parse, kept for diagnosis.
  const std::string& raw_text() const noexcept { return raw_text_; }

 private:
  Kind kind_;
  std::string raw_text_;
};

struct SheetParse {
  PatientProfile profile;
  std::vector<std::string> warnings;
};

/// Parses an answered sheet (see the `sheet` markers in attribute_catalog.hpp).
///
/// Marker and attribute-name matching ignores case, surrounding markdown
/// emphasis and punctuation. Only DETECTED blocks become entries. Unknown
/// attribute names and repeated blocks produce warnings; repeated blocks are
/// merged (evidence union, first non-empty description wins).
SheetParse parse_sheet(std::string_view text, const AttributeCatalog& catalog,
                       std::string participant_id = {});

/// Renders a well-formed sheet: one block per catalog attribute plus SUMMARY.
std::string render_sheet(const PatientProfile& profile, const AttributeCatalog& catalog);

/// Texts to embed: one line per entry in catalog order, then the summary.
std::vector<std::string> profile_texts(const PatientProfile& profile, const AttributeCatalog& catalog);

void validate(const PatientProfile& profile, const AttributeCatalog& catalog);

nlohmann::json to_json(const PatientProfile& profile);
PatientProfile profile_from_json(const nlohmann::json& doc);

/// One document per participant: <dir>/<participant_id>.json.
void save_profile(const std::filesystem::path& dir, const PatientProfile& profile,
                  const std::vector<std::string>& warnings = {});
PatientProfile load_profile(const std::filesystem::path& dir, std::string_view participant_id);

}  // namespace adprof
