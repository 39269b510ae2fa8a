#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "soulstyle/errors.hpp"

namespace soulstyle::instruction {

struct RawInstruction {
  std::string text;
};

// The (style, target object) pair extracted from one instruction.
struct ParsedInstruction {
  std::string stylized_content;
  std::string stylized_objects;

  bool operator==(const ParsedInstruction&) const = default;
};

struct EvalItem {
  std::string instruction;
  ParsedInstruction gold;
  std::optional<ParsedInstruction> predicted;  // empty when the parser failed
  bool matched = false;
};

struct EvalReport {
  size_t total = 0;
  size_t exact_matches = 0;
  double accuracy = 0.0;
  std::vector<EvalItem> per_item;
};

// Renders the splitting prompt for one instruction. Double quotes inside
// the instruction are backslash-escaped so the ["..."] framing survives.
std::string build_prompt(const RawInstruction& instr);

// Pulls the first JSON object out of arbitrary model output (prose and
// Markdown fences tolerated) and reads the two keys, accepting both the
// spaced and unspaced spellings case-insensitively.
ParsedInstruction parse_llm_response(const std::string& response);

// Deterministic rule-based splitter used when no LLM endpoint is
// configured. Throws ParseError when no pattern applies.
ParsedInstruction fallback_split(const RawInstruction& instr);

using ParserFn = std::function<std::optional<ParsedInstruction>(const RawInstruction&)>;

// Exact-match protocol: an item counts iff both fields equal gold after
// trimming, case-insensitively. Parser failures count as non-matches.
EvalReport evaluate_corpus(const std::vector<std::pair<RawInstruction, ParsedInstruction>>& corpus,
                           const ParserFn& parser);

// JSON-lines gold corpus: keys `instruction`, `stylized_content`,
// `stylized_objects` per line.
std::vector<std::pair<RawInstruction, ParsedInstruction>> load_corpus(const std::string& path);

std::string trim(const std::string& s);

}  // namespace soulstyle::instruction
