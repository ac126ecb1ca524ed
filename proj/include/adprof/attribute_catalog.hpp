#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adprof/transcript.hpp"

namespace adprof {

/// One linguistic-deficit attribute the LLM is asked to look for.
struct AttributeDef {
  std::string id;    // stable slug, e.g. "hesitation_pauses"
  std::string name;  // display name used in prompts and sheets
  std::string definition;
  bool overridable = false;

  bool operator==(const AttributeDef&) const = default;
};

struct AttributeCatalog {
  std::string name;
  std::vector<AttributeDef> attributes;

  std::size_t size() const { return attributes.size(); }
  const AttributeDef* find(std::string_view id) const;
  /// Index of `id` in catalog order, or nullopt.
  std::optional<std::size_t> index_of(std::string_view id) const;
  /// Resolves an attribute by id or display name, ignoring case, spacing and punctuation.
  const AttributeDef* match(std::string_view name_or_id) const;

  bool operator==(const AttributeCatalog&) const = default;
};

class CatalogError : public std::runtime_error {
 public:
  enum class Kind { DuplicateId, EmptyDefinition, InvalidDocument, UnknownCatalog };

  CatalogError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Loads a catalog document: {"name": ..., "attributes": [{"id","name","definition"}...]}.
/// Catalogs named "RA3" / "RA13" must hold exactly 3 / 13 attributes.
AttributeCatalog load_catalog(const nlohmann::json& document);
AttributeCatalog load_catalog_file(const std::filesystem::path& path);
nlohmann::json to_json(const AttributeCatalog& catalog);

/// The shipped catalogs, addressable as "RA3" and "RA13".
AttributeCatalog builtin_catalog(std::string_view name);
/// "RA3", "RA13", or a path to a catalog document.
AttributeCatalog resolve_catalog(std::string_view name_or_path);

/// Lowercase alphanumerics only; used for lenient attribute-name matching.
std::string normalize_attribute_key(std::string_view text);

// ---------------------------------------------------------------------------
// Prompt construction

enum class PromptSection { Instruction, AttributeDescriptions, NotificationConstraints, FormatConstraints };

inline constexpr std::array<PromptSection, 4> kPromptSections = {
    PromptSection::Instruction, PromptSection::AttributeDescriptions,
    PromptSection::NotificationConstraints, PromptSection::FormatConstraints};

std::string_view to_string(PromptSection section);

/// Half-open character range [begin, end) into PromptText::text.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

struct PromptText {
  std::string text;
  std::array<TextSpan, 4> spans{};

  const TextSpan& span(PromptSection section) const { return spans[static_cast<std::size_t>(section)]; }
  std::string_view section_text(PromptSection section) const;
};

/// Markers of the answer-sheet grammar. The prompt's format section and
/// the sheet parser both use these.
namespace sheet {
inline constexpr std::string_view kAttribute = "ATTRIBUTE:";
inline constexpr std::string_view kStatus = "STATUS:";
inline constexpr std::string_view kDetected = "DETECTED";
inline constexpr std::string_view kNotDetected = "NOT DETECTED";
inline constexpr std::string_view kExamples = "Examples:";
inline constexpr std::string_view kDescription = "Description:";
inline constexpr std::string_view kSummary = "SUMMARY:";
}  // namespace sheet

/// Builds the four-part profiling prompt for one session. The participant's
/// (PAR) utterances are embedded once, inside the instruction section.
PromptText build_prompt(const AttributeCatalog& catalog, const TranscriptSession& session);

/// Throws std::logic_error if the spans are out of order, overlapping or out of range.
void validate_spans(const PromptText& prompt);

}  // namespace adprof
