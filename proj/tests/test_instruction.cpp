#include <doctest.h>

#include <algorithm>
#include <random>

#include "soulstyle/instruction.hpp"

using namespace soulstyle;
using namespace soulstyle::instruction;

namespace {
const char* kSailboat =
    "Turn the white sailboat with three blue sails floating on the sea to the art on fire.";
const char* kSailboatContent = "art on fire";
const char* kSailboatObjects = "the white sailboat with three blue sails floating on the sea";
}  // namespace

TEST_CASE("build_prompt renders the default template") {
  const auto prompt = build_prompt({kSailboat});
  CHECK(prompt ==
        "Split [\"Turn the white sailboat with three blue sails floating on the sea to "
        "the art on fire.\"] into [Stylized Content] and [Stylized Objects]. Returns a "
        "json with two keys: StylizedContent and StylizedObjects.");
}

TEST_CASE("build_prompt rejects empty instructions") {
  CHECK_THROWS_AS(build_prompt({""}), InvalidInput);
  CHECK_THROWS_AS(build_prompt({"   \t"}), InvalidInput);
}

TEST_CASE("build_prompt escapes embedded quotes") {
  const auto prompt = build_prompt({R"(Turn the "Mona Lisa" to pixel art)"});
  CHECK(prompt.find(R"(\"Mona Lisa\")") != std::string::npos);
  // the framing quote structure survives: exactly two unescaped quotes
  int unescaped = 0;
  for (size_t i = 0; i < prompt.size(); ++i)
    if (prompt[i] == '"' && (i == 0 || prompt[i - 1] != '\\')) ++unescaped;
  CHECK(unescaped == 2);
}

TEST_CASE("parse_llm_response reads the sample response") {
  const std::string response =
      "{\n \"Stylized Content\": \"art on fire\",\n \"Stylized Objects\": \"the white "
      "sailboat with three blue sails floating on the sea\"\n}";
  const auto parsed = parse_llm_response(response);
  CHECK(parsed.stylized_content == kSailboatContent);
  CHECK(parsed.stylized_objects == kSailboatObjects);
}

TEST_CASE("parse_llm_response tolerates prose and code fences") {
  const std::string wrapped =
      "Sure! Here is the split you asked for:\n```json\n"
      "{\"StylizedContent\": \"art on fire\", \"StylizedObjects\": \"the white sailboat "
      "with three blue sails floating on the sea\"}\n```\nLet me know if you need more.";
  const auto parsed = parse_llm_response(wrapped);
  CHECK(parsed.stylized_content == kSailboatContent);
  CHECK(parsed.stylized_objects == kSailboatObjects);
}

TEST_CASE("parse_llm_response names the missing key") {
  CHECK_THROWS_WITH_AS(parse_llm_response(R"({"StylizedContent": "x"})"),
                       doctest::Contains("StylizedObjects"), ParseError);
  CHECK_THROWS_WITH_AS(parse_llm_response(R"({"StylizedObjects": "x"})"),
                       doctest::Contains("StylizedContent"), ParseError);
  CHECK_THROWS_AS(parse_llm_response("no json here at all"), ParseError);
  // present but empty also names the key
  CHECK_THROWS_WITH_AS(parse_llm_response(R"({"StylizedContent": "", "StylizedObjects": "x"})"),
                       doctest::Contains("StylizedContent"), ParseError);
}

TEST_CASE("parse_llm_response is idempotent over surrounding whitespace") {
  const std::string core = R"({"StylizedContent": "a", "StylizedObjects": "b"})";
  const auto base = parse_llm_response(core);
  CHECK(parse_llm_response("\n\n   " + core + "  \t\n") == base);
  CHECK(parse_llm_response("prefix text " + core + " suffix") == base);
}

TEST_CASE("fallback_split handles the sailboat instruction") {
  const auto parsed = fallback_split({kSailboat});
  CHECK(parsed.stylized_content == kSailboatContent);
  CHECK(parsed.stylized_objects == kSailboatObjects);
}

TEST_CASE("fallback_split pattern coverage") {
  auto p = fallback_split({"Make the cat look like a watercolor painting"});
  CHECK(p.stylized_content == "a watercolor painting");
  CHECK(p.stylized_objects == "the cat");

  p = fallback_split({"Apply mosaic tile texture to the fountain in the plaza."});
  CHECK(p.stylized_content == "mosaic tile texture");
  CHECK(p.stylized_objects == "the fountain in the plaza");

  p = fallback_split({"Paint the mountain range in the style of ukiyo-e woodblock prints."});
  CHECK(p.stylized_content == "ukiyo-e woodblock prints");
  CHECK(p.stylized_objects == "the mountain range");

  p = fallback_split({"Make the sleeping golden retriever a bronze statue."});
  CHECK(p.stylized_content == "a bronze statue");
  CHECK(p.stylized_objects == "the sleeping golden retriever");
}

TEST_CASE("fallback_split errors") {
  CHECK_THROWS_AS(fallback_split({"hello world"}), ParseError);
  CHECK_THROWS_AS(fallback_split({""}), InvalidInput);
}

TEST_CASE("fallback_split is deterministic") {
  const auto a = fallback_split({kSailboat});
  const auto b = fallback_split({kSailboat});
  CHECK(a == b);
}

TEST_CASE("round trip: prompt + synthesized response reproduces the parse") {
  const auto corpus = load_corpus(SOULSTYLE_DATA_DIR "/corpus.jsonl");
  REQUIRE(corpus.size() == 20);
  for (const auto& [raw, gold] : corpus) {
    ParsedInstruction direct;
    try {
      direct = fallback_split(raw);
    } catch (const Error&) {
      continue;
    }
    (void)build_prompt(raw);
    const std::string synthesized = "{\"Stylized Content\": \"" + direct.stylized_content +
                                    "\", \"Stylized Objects\": \"" + direct.stylized_objects +
                                    "\"}";
    CHECK(parse_llm_response(synthesized) == direct);
  }
}

TEST_CASE("evaluate_corpus counts exact matches") {
  const std::vector<std::pair<RawInstruction, ParsedInstruction>> corpus = {
      {{"i1"}, {"a", "b"}},
      {{"i2"}, {"c", "d"}},
  };
  const auto identity = [&](const RawInstruction& raw) -> std::optional<ParsedInstruction> {
    return raw.text == "i1" ? std::optional<ParsedInstruction>({"a", "b"})
                            : std::optional<ParsedInstruction>({"c", "WRONG"});
  };
  auto report = evaluate_corpus(corpus, identity);
  CHECK(report.total == 2);
  CHECK(report.exact_matches == 1);
  CHECK(report.accuracy == doctest::Approx(0.5));

  const auto gold_parser = [&](const RawInstruction& raw) -> std::optional<ParsedInstruction> {
    for (const auto& [r, g] : corpus)
      if (r.text == raw.text) return g;
    return std::nullopt;
  };
  report = evaluate_corpus(corpus, gold_parser);
  CHECK(report.accuracy == doctest::Approx(1.0));

  CHECK_THROWS_AS(evaluate_corpus({}, identity), InvalidInput);
}

TEST_CASE("evaluate_corpus matching is case-insensitive and trims") {
  const std::vector<std::pair<RawInstruction, ParsedInstruction>> corpus = {
      {{"i1"}, {"Art On Fire", "The Boat"}}};
  const auto parser = [](const RawInstruction&) -> std::optional<ParsedInstruction> {
    return ParsedInstruction{"  art on fire ", "the boat"};
  };
  CHECK(evaluate_corpus(corpus, parser).accuracy == doctest::Approx(1.0));
}

TEST_CASE("evaluate_corpus accuracy is invariant under permutation") {
  auto corpus = load_corpus(SOULSTYLE_DATA_DIR "/corpus.jsonl");
  const auto parser = [](const RawInstruction& raw) -> std::optional<ParsedInstruction> {
    try {
      return fallback_split(raw);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  const double base = evaluate_corpus(corpus, parser).accuracy;
  std::mt19937 gen(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(corpus.begin(), corpus.end(), gen);
    CHECK(evaluate_corpus(corpus, parser).accuracy == doctest::Approx(base));
  }
}
