#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hiaer/intent.hpp"

namespace hiaer::intent {

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

std::string gesture_list(const affect::Vocabulary& vocab, affect::AffectQuadrant q) {
  std::string out;
  for (const auto& p : vocab.entries()) {
    if (p.safety_class == affect::SafetyClass::Prohibited) continue;
    if (std::find(p.quadrant_affinity.begin(), p.quadrant_affinity.end(), q) == p.quadrant_affinity.end()) {
      continue;
    }
    if (!out.empty()) out += ", ";
    out += p.display_text;
  }
  return out.empty() ? std::string("stand still") : out;
}

std::string user_text(const MultimodalInput& input) {
  std::string s;
  if (input.has_frames()) {
    s += "Observation: " + std::to_string(input.frames.size()) + " camera frame(s), t=";
    s += fmt_time(input.frames.front().timestamp) + ".." + fmt_time(input.frames.back().timestamp) + " s.";
  } else {
    s += "Observation: no camera frames.";
  }
  if (input.has_text()) {
    s += "\nThe person says: \"" + *input.utterance + "\"";
  }
  s += "\nReason step by step, then give the structured block.";
  return s;
}

}  // namespace

double MultimodalInput::newest_timestamp() const {
  double t = 0.0;
  for (const auto& f : frames) t = std::max(t, f.timestamp);
  return t;
}

void MultimodalInput::validate(std::size_t max_frames) const {
  if (!has_frames() && !has_text()) throw EmptyInputError("input has neither frames nor utterance");
  if (frames.size() > max_frames) {
    throw ConfigError("input has " + std::to_string(frames.size()) + " frames, limit " +
                      std::to_string(max_frames));
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].timestamp < frames[i - 1].timestamp) throw ConfigError("frames out of timestamp order");
  }
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::PromptOnly: return "prompt_only";
    case Modality::ImageOnly: return "image_only";
    case Modality::Combined: return "combined";
  }
  return "combined";
}

Modality modality_from_string(std::string_view s) {
  if (s == "prompt_only") return Modality::PromptOnly;
  if (s == "image_only") return Modality::ImageOnly;
  if (s == "combined") return Modality::Combined;
  throw ConfigError("unknown modality: " + std::string(s));
}

MultimodalInput select_modality(const MultimodalInput& input, Modality mode) {
  MultimodalInput out = input;
  if (mode == Modality::PromptOnly) out.frames.clear();
  if (mode == Modality::ImageOnly) out.utterance.reset();
  if (!out.has_frames() && !out.has_text()) {
    throw EmptyInputError("no input left after selecting " + std::string(to_string(mode)));
  }
  return out;
}

std::string PrePrompt::system_text() const {
  return persona_and_task + "\n\n" + output_spec_with_cot + "\n\n" + va_mapping_table + "\n\n" +
         safety_rules;
}

void PrePrompt::validate(const affect::Vocabulary& vocab) const {
  if (persona_and_task.empty() || output_spec_with_cot.empty() || va_mapping_table.empty() ||
      safety_rules.empty()) {
    throw ConfigError("pre-prompt has an empty section");
  }
  if (few_shot.empty()) throw ConfigError("pre-prompt has no few-shot examples");
  for (const auto& ex : few_shot) {
    const auto& o = ex.expected_output;
    if (ex.scene_text.empty() || o.description.empty() || o.primitive_token.empty()) {
      throw ConfigError("few-shot example has an empty field");
    }
    if (!(o.confidence >= 0.0 && o.confidence <= 1.0)) {
      throw ConfigError("few-shot confidence out of range");
    }
    try {
      (void)vocab.resolve(o.primitive_token);
    } catch (const affect::UnknownPrimitiveError&) {
      throw ConfigError("few-shot example uses unknown primitive '" + o.primitive_token + "'");
    }
  }
}

std::string fill_template(std::string_view tmpl,
                          const std::vector<std::pair<std::string, std::string>>& slots) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open);
    if (close == std::string_view::npos) throw ConfigError("unterminated template slot");
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    const auto it = std::find_if(slots.begin(), slots.end(), [&](const auto& s) { return s.first == name; });
    if (it == slots.end()) throw ConfigError("unfilled template slot {{" + name + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string render_va_mapping(const affect::Vocabulary& vocab, const affect::AffectConfig& cfg) {
  using affect::AffectQuadrant;
  const std::string band = fmt2(cfg.neutral_valence_band);
  const std::string split = fmt2(cfg.arousal_split);
  std::string s;
  s += "Quadrant I (V < -" + band + ", A >= " + split + "): gestures of aggression and tension -> " +
       gesture_list(vocab, AffectQuadrant::Q1_AggressionTension) + "\n";
  s += "Quadrant II (V > " + band + ", A >= " + split + "): welcoming, enthusiastic gestures -> " +
       gesture_list(vocab, AffectQuadrant::Q2_Welcoming) + "\n";
  s += "Quadrant III (V > " + band + ", A < " + split + "): calm, supportive gestures -> " +
       gesture_list(vocab, AffectQuadrant::Q3_CalmSupport) + "\n";
  s += "Quadrant IV (V < -" + band + ", A < " + split + "): defensive or withdrawn gestures -> " +
       gesture_list(vocab, AffectQuadrant::Q4_DefensiveWithdrawal) + "\n";
  s += "Neutral (|V| <= " + band + "): " + gesture_list(vocab, AffectQuadrant::Neutral);
  return s;
}

PrePrompt load_preprompt(const std::filesystem::path& prompt_dir,
                         const std::filesystem::path& few_shot_file,
                         const affect::Vocabulary& vocab, const affect::AffectConfig& cfg) {
  std::string allowed;
  std::string prohibited;
  for (const auto& p : vocab.entries()) {
    if (p.safety_class == affect::SafetyClass::Prohibited) {
      prohibited += (prohibited.empty() ? "" : ", ") + p.display_text;
    } else {
      allowed += (allowed.empty() ? "" : ", ") + p.display_text;
    }
  }
  std::string categories;
  for (auto c : kAllCategories) categories += (categories.empty() ? "" : ", ") + std::string(to_string(c));

  const std::vector<std::pair<std::string, std::string>> slots = {
      {"gestures", allowed},
      {"prohibited", prohibited.empty() ? std::string("none") : prohibited},
      {"categories", categories},
      {"fallback", vocab.at(cfg.fallback_primitive_id).display_text},
      {"threshold", fmt2(cfg.confidence_threshold)},
      {"va_table", render_va_mapping(vocab, cfg)},
  };

  PrePrompt pre;
  pre.persona_and_task = fill_template(read_file(prompt_dir / "persona.txt"), slots);
  pre.output_spec_with_cot = fill_template(read_file(prompt_dir / "output_format.txt"), slots);
  pre.va_mapping_table = fill_template(read_file(prompt_dir / "va_mapping.txt"), slots);
  pre.safety_rules = fill_template(read_file(prompt_dir / "safety.txt"), slots);
  for (auto* section : {&pre.persona_and_task, &pre.output_spec_with_cot, &pre.va_mapping_table,
                        &pre.safety_rules}) {
    while (!section->empty() && (section->back() == '\n' || section->back() == ' ')) section->pop_back();
  }

  const auto doc = nlohmann::json::parse(read_file(few_shot_file));
  const auto base = few_shot_file.parent_path();
  for (const auto& e : doc.at("examples")) {
    FewShotExample ex;
    ex.scene_text = e.at("scene_text").get<std::string>();
    ex.reasoning = e.value("reasoning", std::string());
    ex.expected_output = e.at("expected_output").get<StructuredOutput>();
    if (e.contains("image_ref")) {
      ex.image_ref = e.at("image_ref").get<std::string>();
      ImageFrame f;
      f.bytes = read_file(base / *ex.image_ref);
      f.encoding = ex.image_ref->extension() == ".jpg" || ex.image_ref->extension() == ".jpeg" ? "jpeg" : "png";
      ex.image = std::move(f);
    }
    pre.few_shot.push_back(std::move(ex));
  }
  pre.validate(vocab);
  return pre;
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void HistoryBuffer::push(HistoryEntry e) {
  ++total_seen_;
  if (capacity_ == 0) return;
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(e));
}

std::string summarize_input(const MultimodalInput& input) {
  std::string s = "frames: " + std::to_string(input.frames.size());
  if (input.has_frames()) {
    s += " (t=" + fmt_time(input.frames.front().timestamp) + ".." + fmt_time(input.frames.back().timestamp) + " s)";
  }
  s += "; utterance: ";
  s += input.has_text() ? "\"" + *input.utterance + "\"" : std::string("none");
  return s;
}

MessageSequence build_prompt(const PrePrompt& pre, const MultimodalInput& input,
                             const HistoryBuffer& history) {
  MessageSequence msgs;
  msgs.push_back({Role::System, {ContentPart::make_text(pre.system_text())}});
  for (const auto& ex : pre.few_shot) {
    Message user{Role::User, {ContentPart::make_text(ex.scene_text)}};
    if (ex.image) user.parts.push_back(ContentPart::make_image(*ex.image));
    msgs.push_back(std::move(user));
    msgs.push_back({Role::Assistant, {ContentPart::make_text(render_output(ex.expected_output, ex.reasoning))}});
  }
  for (const auto& h : history.entries()) {
    msgs.push_back({Role::User, {ContentPart::make_text("Earlier observation: " + h.input_summary)}});
    msgs.push_back({Role::Assistant, {ContentPart::make_text(render_fields(h.output))}});
  }
  Message user{Role::User, {}};
  for (const auto& f : input.frames) user.parts.push_back(ContentPart::make_image(f));
  user.parts.push_back(ContentPart::make_text(user_text(input)));
  msgs.push_back(std::move(user));
  return msgs;
}

std::string_view mime_type(std::string_view encoding) {
  if (encoding == "jpeg" || encoding == "jpg") return "image/jpeg";
  return "image/png";
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<unsigned char>(bytes[i]) << 16) |
                   (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(table[(n >> 18) & 63]);
    out.push_back(table[(n >> 12) & 63]);
    out.push_back(table[(n >> 6) & 63]);
    out.push_back(table[n & 63]);
  }
  if (i < bytes.size()) {
    unsigned n = static_cast<unsigned char>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out.push_back(table[(n >> 18) & 63]);
    out.push_back(table[(n >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? table[(n >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  unsigned acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value(c);
    if (v < 0) continue;
    acc = (acc << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

nlohmann::json to_chat_json(const MessageSequence& messages) {
  auto arr = nlohmann::json::array();
  for (const auto& m : messages) {
    auto content = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::Text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        const std::string url = "data:" + std::string(mime_type(p.image.encoding)) + ";base64," +
                                base64_encode(p.image.bytes);
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
      }
    }
    arr.push_back({{"role", to_string(m.role)}, {"content", std::move(content)}});
  }
  return arr;
}

std::string digest_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest(const MessageSequence& messages) { return digest_hex(to_chat_json(messages).dump()); }

void from_json(const nlohmann::json& j, IntentConfig& c) {
  c.history_capacity = j.value("history_capacity", c.history_capacity);
  c.frames_per_inference = j.value("frames_per_inference", c.frames_per_inference);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  if (c.frames_per_inference == 0) throw ConfigError("frames_per_inference must be positive");
  if (!(c.timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
}

void to_json(nlohmann::json& j, const IntentConfig& c) {
  j = {{"history_capacity", c.history_capacity},
       {"frames_per_inference", c.frames_per_inference},
       {"timeout_s", c.timeout_s}};
}

}  // namespace hiaer::intent
