#include <doctest.h>

#include "adprof/profile.hpp"
#include "support/test_support.hpp"

using namespace adprof;

namespace {

const AttributeCatalog& ra13() {
  static const auto c = builtin_catalog("RA13");
  return c;
}

std::string all_not_detected(const AttributeCatalog& c) {
  std::string text;
  for (const auto& a : c.attributes) text += "ATTRIBUTE: " + a.name + "\nSTATUS: NOT DETECTED\n\n";
  return text + "SUMMARY: Fluent, coherent description.\n";
}

}  // namespace

TEST_CASE("single detected attribute with a verbatim quote") {
  std::string text;
  for (const auto& a : ra13().attributes) {
    text += "ATTRIBUTE: " + a.name + "\n";
    if (a.id == "hesitation_pauses") {
      text += "STATUS: DETECTED\nExamples:\n- \"UH JUST GO AHEAD AND TELL YOU\"\nDescription: Filled pause before answering.\n\n";
    } else {
      text += "STATUS: NOT DETECTED\n\n";
    }
  }
  text += "SUMMARY: Mostly fluent with one filled pause.\n";
  const auto parsed = parse_sheet(text, ra13(), "S1");
  REQUIRE(parsed.profile.entries.size() == 1);
  const auto& e = parsed.profile.entries[0];
  CHECK(e.attribute_id == "hesitation_pauses");
  CHECK(e.evidence_examples == std::vector<std::string>{"UH JUST GO AHEAD AND TELL YOU"});
  CHECK(e.description == "Filled pause before answering.");
  CHECK(parsed.profile.participant_id == "S1");
  CHECK(parsed.warnings.empty());
}

TEST_CASE("nothing detected") {
  const auto parsed = parse_sheet(all_not_detected(ra13()), ra13());
  CHECK(parsed.profile.entries.empty());
  CHECK(parsed.profile.summary == "Fluent, coherent description.");
  CHECK(profile_texts(parsed.profile, ra13()) == std::vector<std::string>{"Fluent, coherent description."});
}

TEST_CASE("repeated blocks are merged with a warning") {
  const std::string text =
      "ATTRIBUTE: Anomia\nSTATUS: DETECTED\nExamples:\n- \"THE THING\"\n- \"THAT STUFF\"\n\n"
      "ATTRIBUTE: anomia\nSTATUS: DETECTED\nExamples:\n- \"THAT STUFF\"\n- \"THE WHATSIT\"\n"
      "Description: Word-finding trouble.\n\n"
      "SUMMARY: Word-finding difficulties.\n";
  const auto parsed = parse_sheet(text, builtin_catalog("RA3"));
  REQUIRE(parsed.profile.entries.size() == 1);
  // Manual union in first-seen order.
  CHECK(parsed.profile.entries[0].evidence_examples ==
        std::vector<std::string>{"THE THING", "THAT STUFF", "THE WHATSIT"});
  CHECK(parsed.profile.entries[0].description == "Word-finding trouble.");
  REQUIRE(parsed.warnings.size() == 1);
  CHECK(parsed.warnings[0].find("merged") != std::string::npos);
}

TEST_CASE("unknown attributes are skipped with a warning") {
  const std::string text =
      "ATTRIBUTE: Jargon\nSTATUS: DETECTED\nExamples:\n- \"BLAH\"\n\n"
      "ATTRIBUTE: Dysfluency\nSTATUS: DETECTED\nExamples:\n- \"UH UH\"\n\nSUMMARY: Some dysfluency.\n";
  const auto parsed = parse_sheet(text, builtin_catalog("RA3"));
  REQUIRE(parsed.profile.entries.size() == 1);
  CHECK(parsed.profile.entries[0].attribute_id == "dysfluency");
  CHECK(parsed.warnings.size() == 1);
}

TEST_CASE("lenient markup") {
  const std::string text =
      "## **ATTRIBUTE:** 2. Dysfluency\n**Status:** Detected\n**Examples:**\n"
      "\xE2\x80\xA2 \xE2\x80\x9CUH I MEAN\xE2\x80\x9D\n\n**SUMMARY:** Short.\n";
  const auto parsed = parse_sheet(text, builtin_catalog("RA3"));
  REQUIRE(parsed.profile.entries.size() == 1);
  CHECK(parsed.profile.entries[0].evidence_examples == std::vector<std::string>{"UH I MEAN"});
}

TEST_CASE("detected without evidence or description is dropped") {
  const auto parsed = parse_sheet("ATTRIBUTE: Anomia\nSTATUS: DETECTED\n\nSUMMARY: x\n", builtin_catalog("RA3"));
  CHECK(parsed.profile.entries.empty());
  CHECK(parsed.warnings.size() == 1);
}

TEST_CASE("failure kinds") {
  try {
    parse_sheet("I could not analyse this transcript.", ra13());
    FAIL("expected Unparseable");
  } catch (const ProfileError& e) {
    CHECK(e.kind() == ProfileError::Kind::Unparseable);
    CHECK(e.raw_text() == "I could not analyse this transcript.");
  }
  try {
    parse_sheet("ATTRIBUTE: Anomia\nSTATUS: NOT DETECTED\n", ra13());
    FAIL("expected NoSummary");
  } catch (const ProfileError& e) {
    CHECK(e.kind() == ProfileError::Kind::NoSummary);
  }
}

TEST_CASE("profile_texts: one line per entry plus the summary") {
  PatientProfile p{"S1",
                   {{"empty_speech", {"THE THING"}, "Vague nouns."},
                    {"hesitation_pauses", {"UH", "UM WELL"}, ""},
                    {"anomia", {}, "Could not name the stool"}},
                   "Summary text."};
  const auto texts = profile_texts(p, ra13());
  REQUIRE(texts.size() == 4);
  CHECK(texts[0] == "Empty speech: Vague nouns. Evidence: \"THE THING\"");
  CHECK(texts[1] == "Hesitation and pauses. Evidence: \"UH\"; \"UM WELL\"");
  CHECK(texts[2] == "Anomia: Could not name the stool.");
  CHECK(texts[3] == "Summary text.");
  CHECK(profile_texts(p, ra13()) == texts);
}

TEST_CASE("render_sheet output parses back to the same profile") {
  PatientProfile p{"S2", {{"telegraphic_speech", {"BOY STOOL FALL"}, "Function words dropped."}}, "Terse."};
  const auto parsed = parse_sheet(render_sheet(p, ra13()), ra13(), "S2");
  CHECK(parsed.profile == p);
  CHECK(parsed.warnings.empty());
}

TEST_CASE("profile files round-trip and validation") {
  testing::TempDir dir;
  PatientProfile p{"S3", {{"anomia", {"THE THING"}, "d"}}, "s"};
  save_profile(dir.path(), p, {"a warning"});
  CHECK(load_profile(dir.path(), "S3") == p);
  CHECK_THROWS_AS(load_profile(dir.path(), "missing"), ProfileError);

  PatientProfile bad = p;
  bad.entries.push_back(p.entries[0]);
  CHECK_THROWS_AS(validate(bad, ra13()), ProfileError);
  bad = p;
  bad.summary = "";
  CHECK_THROWS_AS(validate(bad, ra13()), ProfileError);
}

TEST_CASE("property: generated sheets parse to the encoded attributes and evidence") {
  testing::Gen gen(808);
  for (int trial = 0; trial < 200; ++trial) {
    const auto sheet = testing::random_sheet(gen, ra13());
    const auto parsed = parse_sheet(sheet.text, ra13());
    std::map<std::string, std::vector<std::string>> got;
    for (const auto& e : parsed.profile.entries) got[e.attribute_id] = e.evidence_examples;
    CHECK(got == sheet.evidence);
    CHECK(parsed.profile.summary == sheet.summary);
    CHECK(profile_texts(parsed.profile, ra13()).size() == parsed.profile.attribute_count() + 1);
  }
}
