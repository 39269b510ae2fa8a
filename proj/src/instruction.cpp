#include "soulstyle/instruction.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <regex>

#include <json.hpp>

namespace soulstyle::instruction {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string strip_trailing_punct(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?' ||
                        s.back() == ',' || s.back() == ';'))
    s.pop_back();
  return trim(s);
}

// Removes the leading article / "style of" framing from a style phrase:
// "the art on fire" -> "art on fire", "the style of van Gogh" -> "van Gogh".
std::string clean_content(std::string s) {
  s = strip_trailing_punct(trim(s));
  const std::string low = lower(s);
  for (const char* prefix : {"the style of ", "style of ", "the art of ", "the "}) {
    const size_t n = std::strlen(prefix);
    if (low.size() > n && low.compare(0, n, prefix) == 0) {
      s = trim(s.substr(n));
      break;
    }
  }
  return s;
}

std::string escape_quotes(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"') out += '\\';
    out += c;
  }
  return out;
}

// Finds the first balanced {...} span that parses as JSON.
std::optional<nlohmann::json> first_json_object(const std::string& text) {
  for (size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) {
          const auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1),
                                                    nullptr, false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

std::string normalize_key(const std::string& key) {
  std::string out;
  for (char c : key)
    if (c != ' ' && c != '_' && c != '-')
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string build_prompt(const RawInstruction& instr) {
  const std::string text = trim(instr.text);
  if (text.empty()) throw InvalidInput("build_prompt: empty instruction");
  return "Split [\"" + escape_quotes(text) +
         "\"] into [Stylized Content] and [Stylized Objects]. Returns a json with "
         "two keys: StylizedContent and StylizedObjects.";
}

ParsedInstruction parse_llm_response(const std::string& response) {
  const auto obj = first_json_object(response);
  if (!obj) throw ParseError("parse_llm_response: no JSON object found in response");

  std::string content, objects;
  bool have_content = false, have_objects = false;
  for (const auto& [key, value] : obj->items()) {
    const std::string norm = normalize_key(key);
    if (norm == "stylizedcontent" && value.is_string()) {
      content = trim(value.get<std::string>());
      have_content = true;
    } else if (norm == "stylizedobjects" && value.is_string()) {
      objects = trim(value.get<std::string>());
      have_objects = true;
    }
  }
  if (!have_content || content.empty())
    throw ParseError("parse_llm_response: missing or empty key StylizedContent");
  if (!have_objects || objects.empty())
    throw ParseError("parse_llm_response: missing or empty key StylizedObjects");
  return {content, objects};
}

ParsedInstruction fallback_split(const RawInstruction& instr) {
  const std::string text = trim(instr.text);
  if (text.empty()) throw InvalidInput("fallback_split: empty instruction");

  static const auto icase = std::regex::icase | std::regex::ECMAScript;
  // Greedy first group: "to/into" splits at its last occurrence, so the
  // object phrase may itself contain "to".
  static const std::regex turn_to(
      R"(^\s*(?:please\s+)?(?:turn|change)\s+(.+)\s+(?:into|to)\s+(.+?)\s*$)", icase);
  static const std::regex make_look_like(
      R"(^\s*(?:please\s+)?make\s+(.+?)\s+look\s+like\s+(.+?)\s*$)", icase);
  static const std::regex make_bare(
      R"(^\s*(?:please\s+)?make\s+(.+?)\s+((?:a|an)\s+.+?)\s*$)", icase);
  static const std::regex apply_to(
      R"(^\s*(?:please\s+)?apply\s+(.+?)\s+to\s+(.+?)\s*$)", icase);
  static const std::regex in_style_of(
      R"(^\s*(?:please\s+)?(?:render\s+|paint\s+)?(.+?)\s+in\s+(?:the\s+style\s+of\s+)(.+?)\s*$)",
      icase);
  static const std::regex in_x_style(
      R"(^\s*(?:please\s+)?(?:render\s+|paint\s+)?(.+?)\s+in\s+(.+?\s+style)\s*$)", icase);

  std::smatch m;
  std::string content, objects;
  if (std::regex_match(text, m, turn_to)) {
    objects = m[1];
    content = m[2];
  } else if (std::regex_match(text, m, make_look_like) ||
             std::regex_match(text, m, make_bare)) {
    objects = m[1];
    content = m[2];
  } else if (std::regex_match(text, m, apply_to)) {
    content = m[1];
    objects = m[2];
  } else if (std::regex_match(text, m, in_style_of) || std::regex_match(text, m, in_x_style)) {
    objects = m[1];
    content = m[2];
  } else {
    throw ParseError("fallback_split: no pattern matches instruction");
  }

  ParsedInstruction out{clean_content(content), strip_trailing_punct(trim(objects))};
  if (out.stylized_content.empty() || out.stylized_objects.empty())
    throw ParseError("fallback_split: pattern matched but produced an empty field");
  return out;
}

EvalReport evaluate_corpus(const std::vector<std::pair<RawInstruction, ParsedInstruction>>& corpus,
                           const ParserFn& parser) {
  if (corpus.empty()) throw InvalidInput("evaluate_corpus: empty corpus");
  EvalReport report;
  report.total = corpus.size();
  for (const auto& [raw, gold] : corpus) {
    EvalItem item;
    item.instruction = raw.text;
    item.gold = gold;
    item.predicted = parser(raw);
    if (item.predicted) {
      item.matched = lower(trim(item.predicted->stylized_content)) ==
                         lower(trim(gold.stylized_content)) &&
                     lower(trim(item.predicted->stylized_objects)) ==
                         lower(trim(gold.stylized_objects));
    }
    if (item.matched) ++report.exact_matches;
    report.per_item.push_back(std::move(item));
  }
  report.accuracy = static_cast<double>(report.exact_matches) / report.total;
  return report;
}

std::vector<std::pair<RawInstruction, ParsedInstruction>> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_corpus: cannot open " + path);
  std::vector<std::pair<RawInstruction, ParsedInstruction>> corpus;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      throw ParseError("load_corpus: bad JSON on line " + std::to_string(lineno));
    corpus.push_back({RawInstruction{obj.at("instruction").get<std::string>()},
                      ParsedInstruction{obj.at("stylized_content").get<std::string>(),
                                        obj.at("stylized_objects").get<std::string>()}});
  }
  return corpus;
}

}  // namespace soulstyle::instruction
