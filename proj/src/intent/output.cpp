#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

#include "hiaer/intent.hpp"

namespace hiaer::intent {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Strips markdown emphasis and list bullets around a label or value.
std::string_view strip_decoration(std::string_view s) {
  s = trim(s);
  // A '-' counts as a bullet only when followed by a space; "-0.6" is a value.
  auto bullet = [&] { return s.front() == '-' && s.size() > 1 && s[1] == ' '; };
  while (!s.empty() && (s.front() == '*' || s.front() == '_' || bullet() || s.front() == '#' ||
                        s.front() == '`')) {
    s.remove_prefix(1);
    s = trim(s);
  }
  while (!s.empty() && (s.back() == '*' || s.back() == '_' || s.back() == '`')) {
    s.remove_suffix(1);
    s = trim(s);
  }
  return s;
}

enum class Field { Description, Intent, Confidence, Valence, Arousal, Motion, ValenceArousal };

std::optional<Field> field_for_label(std::string_view label) {
  static const std::map<std::string, Field> labels = {
      {"description", Field::Description},
      {"scene description", Field::Description},
      {"intent", Field::Intent},
      {"intention", Field::Intent},
      {"intention inference", Field::Intent},
      {"confidence", Field::Confidence},
      {"confidence score", Field::Confidence},
      {"valence", Field::Valence},
      {"arousal", Field::Arousal},
      {"motion", Field::Motion},
      {"motion primitive", Field::Motion},
      {"primitive", Field::Motion},
      {"gesture", Field::Motion},
      {"v a", Field::ValenceArousal},
      {"va", Field::ValenceArousal},
      {"valence arousal", Field::ValenceArousal},
  };
  std::string key;
  bool space = false;
  for (char raw : lower(strip_decoration(label))) {
    if (std::isalnum(static_cast<unsigned char>(raw))) {
      if (space && !key.empty()) key.push_back(' ');
      key.push_back(raw);
      space = false;
    } else {
      space = true;
    }
  }
  const auto it = labels.find(key);
  if (it == labels.end()) return std::nullopt;
  return it->second;
}

using FieldMap = std::map<Field, std::string>;

// Reads "Label: value" lines; later duplicates replace earlier ones.
FieldMap scan_lines(std::string_view text) {
  FieldMap out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string_view label = line.substr(0, colon);
    if (label.size() > 40) continue;
    if (const auto f = field_for_label(label)) {
      out[*f] = std::string(strip_decoration(line.substr(colon + 1)));
    }
  }
  return out;
}

struct Block {
  std::string_view body;
};

std::vector<Block> fenced_blocks(std::string_view raw) {
  std::vector<Block> blocks;
  std::vector<std::size_t> fences;  // start offsets of fence lines
  std::vector<std::size_t> fence_ends;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t end = std::min(raw.find('\n', pos), raw.size());
    if (trim(raw.substr(pos, end - pos)).starts_with("```")) {
      fences.push_back(pos);
      fence_ends.push_back(end);
    }
    pos = end + 1;
  }
  for (std::size_t k = 0; k + 1 < fences.size(); k += 2) {
    const std::size_t body_start = std::min(fence_ends[k] + 1, raw.size());
    blocks.push_back({raw.substr(body_start, fences[k + 1] - body_start)});
  }
  return blocks;
}

double parse_number(const std::string& text, const char* label) {
  std::string_view s = trim(text);
  bool percent = false;
  if (!s.empty() && s.back() == '%') {
    percent = true;
    s.remove_suffix(1);
  }
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  // Accept a trailing parenthetical or prose after the number.
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr == first) {
    throw ParseError(ParseErrorKind::MalformedValue, label,
                     std::string(label) + " is not a number: '" + text + "'");
  }
  if (!std::isfinite(value)) {
    throw ParseError(ParseErrorKind::ValueOutOfRange, label, std::string(label) + " is not finite");
  }
  return percent ? value / 100.0 : value;
}

std::pair<std::string, std::string> split_pair(const std::string& text) {
  std::string s(trim(text));
  if (!s.empty() && (s.front() == '(' || s.front() == '[')) s.erase(0, 1);
  if (!s.empty() && (s.back() == ')' || s.back() == ']')) s.pop_back();
  const auto comma = s.find_first_of(",;/");
  if (comma == std::string::npos) {
    throw ParseError(ParseErrorKind::MalformedValue, "Valence", "V-A pair is malformed: '" + text + "'");
  }
  auto value_part = [](std::string part) {
    const auto eq = part.find_first_of("=:");
    if (eq != std::string::npos) part = part.substr(eq + 1);
    return std::string(trim(part));
  };
  return {value_part(s.substr(0, comma)), value_part(s.substr(comma + 1))};
}

Intent parse_intent(std::string_view text) {
  Intent out;
  text = trim(text);
  const std::size_t sep = text.find_first_of("-:(|,");
  const std::string_view head = trim(sep == std::string_view::npos ? text : text.substr(0, sep));
  if (const auto c = category_from_string(head)) {
    out.category = *c;
    if (sep != std::string_view::npos) {
      std::string_view rest = trim(text.substr(sep + 1));
      if (text[sep] == '(' && rest.ends_with(')')) rest = trim(rest.substr(0, rest.size() - 1));
      out.free_text = std::string(rest);
    }
    return out;
  }
  // No leading category: look for a category word anywhere, keep all text.
  out.free_text = std::string(text);
  std::string word;
  const std::string low = lower(text);
  for (std::size_t i = 0; i <= low.size(); ++i) {
    if (i < low.size() && std::isalpha(static_cast<unsigned char>(low[i]))) {
      word.push_back(low[i]);
      continue;
    }
    if (!word.empty()) {
      if (const auto c = category_from_string(word)) {
        out.category = *c;
        return out;
      }
      word.clear();
    }
  }
  out.category = IntentCategory::Ambiguous;
  return out;
}

std::string one_line(std::string_view s) {
  std::string out(trim(s));
  for (auto& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(IntentCategory c) {
  switch (c) {
    case IntentCategory::Aggression: return "Aggression";
    case IntentCategory::Celebration: return "Celebration";
    case IntentCategory::CalmGreeting: return "CalmGreeting";
    case IntentCategory::Disappointment: return "Disappointment";
    case IntentCategory::Neutral: return "Neutral";
    case IntentCategory::Ambiguous: return "Ambiguous";
  }
  return "Ambiguous";
}

std::optional<IntentCategory> category_from_string(std::string_view s) {
  static const std::map<std::string, IntentCategory> names = {
      {"aggression", IntentCategory::Aggression},
      {"aggressive", IntentCategory::Aggression},
      {"hostile", IntentCategory::Aggression},
      {"hostility", IntentCategory::Aggression},
      {"celebration", IntentCategory::Celebration},
      {"celebrating", IntentCategory::Celebration},
      {"celebratory", IntentCategory::Celebration},
      {"calmgreeting", IntentCategory::CalmGreeting},
      {"greeting", IntentCategory::CalmGreeting},
      {"disappointment", IntentCategory::Disappointment},
      {"disappointed", IntentCategory::Disappointment},
      {"neutral", IntentCategory::Neutral},
      {"ambiguous", IntentCategory::Ambiguous},
      {"ambiguity", IntentCategory::Ambiguous},
      {"unclear", IntentCategory::Ambiguous},
      {"uncertain", IntentCategory::Ambiguous},
  };
  std::string key;
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  const auto it = names.find(key);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::NoStructuredBlock: return "no_structured_block";
    case ParseErrorKind::MissingField: return "missing_field";
    case ParseErrorKind::ValueOutOfRange: return "value_out_of_range";
    case ParseErrorKind::MalformedValue: return "malformed_value";
  }
  return "no_structured_block";
}

StructuredOutput parse_output(std::string_view raw) {
  FieldMap fields;
  const auto blocks = fenced_blocks(raw);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    fields = scan_lines(it->body);
    if (!fields.empty()) break;
  }
  if (fields.empty()) fields = scan_lines(raw);
  if (fields.empty()) {
    throw ParseError(ParseErrorKind::NoStructuredBlock, "", "no structured block in reply");
  }

  if (const auto it = fields.find(Field::ValenceArousal); it != fields.end()) {
    auto [v, a] = split_pair(it->second);
    fields.try_emplace(Field::Valence, v);
    fields.try_emplace(Field::Arousal, a);
  }

  auto require = [&](Field f, const char* label) -> const std::string& {
    const auto it = fields.find(f);
    if (it == fields.end() || trim(it->second).empty()) {
      throw ParseError(ParseErrorKind::MissingField, label, std::string("missing field ") + label);
    }
    return it->second;
  };

  StructuredOutput out;
  out.raw = std::string(raw);
  out.description = std::string(trim(require(Field::Description, "Description")));
  out.intent = parse_intent(require(Field::Intent, "Intent"));
  const std::string& conf_text = require(Field::Confidence, "Confidence");
  const std::string& v_text = require(Field::Valence, "Valence");
  const std::string& a_text = require(Field::Arousal, "Arousal");
  out.primitive_token = std::string(trim(require(Field::Motion, "Motion")));

  out.confidence = parse_number(conf_text, "Confidence");
  if (out.confidence < 0.0 || out.confidence > 1.0) {
    throw ParseError(ParseErrorKind::ValueOutOfRange, "Confidence",
                     "confidence " + format_number(out.confidence) + " outside [0, 1]");
  }
  const double v = parse_number(v_text, "Valence");
  const double a = parse_number(a_text, "Arousal");
  if (v < -1.0 || v > 1.0) {
    throw ParseError(ParseErrorKind::ValueOutOfRange, "Valence",
                     "valence " + format_number(v) + " outside [-1, 1]");
  }
  if (a < 0.0 || a > 1.0) {
    throw ParseError(ParseErrorKind::ValueOutOfRange, "Arousal",
                     "arousal " + format_number(a) + " outside [0, 1]");
  }
  out.va = affect::VAState::make(v, a, affect::RangeMode::Reject);
  return out;
}

std::string render_fields(const StructuredOutput& o) {
  std::string intent(to_string(o.intent.category));
  const std::string free = one_line(o.intent.free_text);
  if (!free.empty()) intent += " - " + free;
  std::string s = "```\n";
  s += "Description: " + one_line(o.description) + "\n";
  s += "Intent: " + intent + "\n";
  s += "Confidence: " + format_number(o.confidence) + "\n";
  s += "Valence: " + format_number(o.va.valence()) + "\n";
  s += "Arousal: " + format_number(o.va.arousal()) + "\n";
  s += "Motion: " + one_line(o.primitive_token) + "\n";
  s += "```";
  return s;
}

std::string render_output(const StructuredOutput& o, std::string_view reasoning) {
  std::string s = "Reasoning: ";
  s += reasoning.empty() ? std::string("observed the scene and inferred the intent.") : one_line(reasoning);
  s += "\n\n";
  s += render_fields(o);
  s += "\n";
  return s;
}

void to_json(nlohmann::json& j, const StructuredOutput& o) {
  j = {{"description", o.description},
       {"intent", {{"category", to_string(o.intent.category)}, {"free_text", o.intent.free_text}}},
       {"confidence", o.confidence},
       {"valence", o.va.valence()},
       {"arousal", o.va.arousal()},
       {"primitive_token", o.primitive_token},
       {"raw", o.raw}};
}

void from_json(const nlohmann::json& j, StructuredOutput& o) {
  o.description = j.at("description").get<std::string>();
  const auto& intent = j.at("intent");
  const auto cat = category_from_string(intent.at("category").get<std::string>());
  if (!cat) throw ConfigError("unknown intent category " + intent.at("category").dump());
  o.intent.category = *cat;
  o.intent.free_text = intent.value("free_text", std::string());
  o.confidence = j.at("confidence").get<double>();
  if (!(o.confidence >= 0.0 && o.confidence <= 1.0)) throw ConfigError("confidence outside [0, 1]");
  o.va = affect::VAState::make(j.at("valence").get<double>(), j.at("arousal").get<double>(),
                               affect::RangeMode::Reject);
  o.primitive_token = j.at("primitive_token").get<std::string>();
  o.raw = j.value("raw", std::string());
}

}  // namespace hiaer::intent
