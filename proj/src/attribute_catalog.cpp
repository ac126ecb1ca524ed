#include "adprof/attribute_catalog.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "builtin_catalogs.hpp"

namespace adprof {

namespace {

using K = CatalogError::Kind;

std::string required_string(const nlohmann::json& obj, const char* key, std::size_t index) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw CatalogError(K::InvalidDocument, "attribute #" + std::to_string(index) + ": '" + key +
                                               "' missing or not a string");
  }
  return it->get<std::string>();
}

bool blank(std::string_view s) {
  for (const unsigned char c : s) {
    if (!std::isspace(c)) return false;
  }
  return true;
}

}  // namespace

std::string normalize_attribute_key(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (const unsigned char c : text) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const AttributeDef* AttributeCatalog::find(std::string_view id) const {
  for (const auto& a : attributes) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

std::optional<std::size_t> AttributeCatalog::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].id == id) return i;
  }
  return std::nullopt;
}

const AttributeDef* AttributeCatalog::match(std::string_view name_or_id) const {
  const auto key = normalize_attribute_key(name_or_id);
  if (key.empty()) return nullptr;
  for (const auto& a : attributes) {
    if (normalize_attribute_key(a.id) == key || normalize_attribute_key(a.name) == key) return &a;
  }
  return nullptr;
}

AttributeCatalog load_catalog(const nlohmann::json& document) {
  if (!document.is_object()) throw CatalogError(K::InvalidDocument, "catalog document is not an object");

  AttributeCatalog catalog;
  if (const auto name = document.find("name"); name != document.end()) {
    if (!name->is_string()) throw CatalogError(K::InvalidDocument, "catalog name is not a string");
    catalog.name = name->get<std::string>();
  }
  const auto attrs = document.find("attributes");
  if (attrs == document.end() || !attrs->is_array() || attrs->empty()) {
    throw CatalogError(K::InvalidDocument, "catalog needs a non-empty 'attributes' array");
  }

  std::unordered_set<std::string> ids;
  std::size_t index = 0;
  for (const auto& entry : *attrs) {
    if (!entry.is_object()) {
      throw CatalogError(K::InvalidDocument, "attribute #" + std::to_string(index) + " is not an object");
    }
    AttributeDef def;
    def.id = required_string(entry, "id", index);
    def.name = required_string(entry, "name", index);
    def.definition = required_string(entry, "definition", index);
    if (const auto o = entry.find("overridable"); o != entry.end() && o->is_boolean()) {
      def.overridable = o->get<bool>();
    }
    if (blank(def.id) || blank(def.name)) {
      throw CatalogError(K::InvalidDocument, "attribute #" + std::to_string(index) + " has an empty id or name");
    }
    if (blank(def.definition)) {
      throw CatalogError(K::EmptyDefinition, "attribute '" + def.id + "' has an empty definition");
    }
    if (!ids.insert(def.id).second) {
      throw CatalogError(K::DuplicateId, "duplicate attribute id '" + def.id + "'");
    }
    catalog.attributes.push_back(std::move(def));
    ++index;
  }

  if (catalog.name == "RA3" && catalog.size() != 3) {
    throw CatalogError(K::InvalidDocument, "RA3 catalog must have exactly 3 attributes");
  }
  if (catalog.name == "RA13" && catalog.size() != 13) {
    throw CatalogError(K::InvalidDocument, "RA13 catalog must have exactly 13 attributes");
  }
  return catalog;
}

AttributeCatalog load_catalog_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CatalogError(K::UnknownCatalog, "cannot open catalog file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CatalogError(K::InvalidDocument, path.string() + ": " + e.what());
  }
  auto catalog = load_catalog(doc);
  if (catalog.name.empty()) catalog.name = path.stem().string();
  return catalog;
}

nlohmann::json to_json(const AttributeCatalog& catalog) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : catalog.attributes) {
    nlohmann::json entry = {{"id", a.id}, {"name", a.name}, {"definition", a.definition}};
    if (a.overridable) entry["overridable"] = true;
    attrs.push_back(std::move(entry));
  }
  return {{"name", catalog.name}, {"attributes", std::move(attrs)}};
}

AttributeCatalog builtin_catalog(std::string_view name) {
  if (name == "RA3") return load_catalog(nlohmann::json::parse(detail::kBuiltinRa3));
  if (name == "RA13") return load_catalog(nlohmann::json::parse(detail::kBuiltinRa13));
  throw CatalogError(K::UnknownCatalog, "no built-in catalog named '" + std::string(name) + "'");
}

AttributeCatalog resolve_catalog(std::string_view name_or_path) {
  if (name_or_path == "RA3" || name_or_path == "RA13") return builtin_catalog(name_or_path);
  return load_catalog_file(std::filesystem::path(std::string(name_or_path)));
}

// ---------------------------------------------------------------------------

std::string_view to_string(PromptSection section) {
  switch (section) {
    case PromptSection::Instruction: return "instruction";
    case PromptSection::AttributeDescriptions: return "attribute_descriptions";
    case PromptSection::NotificationConstraints: return "notification_constraints";
    case PromptSection::FormatConstraints: return "format_constraints";
  }
  return "unknown";
}

std::string_view PromptText::section_text(PromptSection section) const {
  const auto& s = span(section);
  return std::string_view(text).substr(s.begin, s.length());
}

PromptText build_prompt(const AttributeCatalog& catalog, const TranscriptSession& session) {
  const auto sentences = participant_sentences(session);
  if (sentences.empty()) {
    throw TranscriptError(TranscriptError::Kind::NoUtterances,
                          "session " + session.participant_id + " has no PAR utterances");
  }
  if (catalog.attributes.empty()) {
    throw CatalogError(K::InvalidDocument, "cannot build a prompt from an empty catalog");
  }

  PromptText prompt;
  std::ostringstream out;
  const auto open = [&](PromptSection s) {
    prompt.spans[static_cast<std::size_t>(s)].begin = static_cast<std::size_t>(out.tellp());
  };
  const auto close = [&](PromptSection s) {
    prompt.spans[static_cast<std::size_t>(s)].end = static_cast<std::size_t>(out.tellp());
  };

  open(PromptSection::Instruction);
  out << "You are assisting with a clinical language assessment. The transcript below comes from "
         "a participant describing a picture (the Cookie Theft scene) to an investigator. Only the "
         "participant's utterances are shown, one per line, exactly as transcribed.\n\n"
         "Read the whole session. For every linguistic deficit attribute listed below, decide "
         "whether the participant's speech shows it, and collect the utterances that demonstrate "
         "it. Then write a short summary of the participant's overall linguistic profile.\n\n"
         "Transcript:\n";
  for (const auto& s : sentences) out << s << '\n';
  out << '\n';
  close(PromptSection::Instruction);

  open(PromptSection::AttributeDescriptions);
  out << "Linguistic deficit attributes:\n";
  for (std::size_t i = 0; i < catalog.attributes.size(); ++i) {
    const auto& a = catalog.attributes[i];
    out << (i + 1) << ". " << a.name << ": " << a.definition << '\n';
  }
  out << '\n';
  close(PromptSection::AttributeDescriptions);

  open(PromptSection::NotificationConstraints);
  out << "Notes:\n"
         "- Mark an attribute DETECTED only when the transcript contains direct evidence of it.\n"
         "- Quote evidence exactly as it appears in the transcript, keeping capitalization and "
         "fillers. Do not paraphrase, correct, or invent quotes.\n"
         "- Only use the attributes listed above; do not add new ones.\n"
         "- Judge the participant's speech only, not the investigator's.\n\n";
  close(PromptSection::NotificationConstraints);

  open(PromptSection::FormatConstraints);
  out << "Answer format:\n"
         "Answer as a sheet with one block per attribute, in the order listed. Each block is:\n"
      << sheet::kAttribute << " <attribute name>\n"
      << sheet::kStatus << ' ' << sheet::kDetected << " or " << sheet::kNotDetected << '\n'
      << sheet::kExamples << '\n'
      << "- \"<verbatim quote from the transcript>\"\n"
      << sheet::kDescription << " <one sentence explaining the evidence>\n"
      << "Omit the " << sheet::kExamples << " and " << sheet::kDescription
      << " lines for attributes that are " << sheet::kNotDetected << ".\n"
      << "After the last block, end the sheet with a single line:\n"
      << sheet::kSummary << " <summary of the participant's linguistic profile>\n"
      << "Attributes to answer, in order: ";
  for (std::size_t i = 0; i < catalog.attributes.size(); ++i) {
    out << (i ? "; " : "") << catalog.attributes[i].name;
  }
  out << '\n';
  close(PromptSection::FormatConstraints);

  prompt.text = out.str();
  validate_spans(prompt);
  return prompt;
}

void validate_spans(const PromptText& prompt) {
  std::size_t cursor = 0;
  for (const auto section : kPromptSections) {
    const auto& s = prompt.span(section);
    if (s.begin < cursor || s.end <= s.begin || s.end > prompt.text.size()) {
      throw std::logic_error("prompt section '" + std::string(to_string(section)) +
                             "' is empty, out of order or out of range");
    }
    cursor = s.end;
  }
}

}  // namespace adprof
