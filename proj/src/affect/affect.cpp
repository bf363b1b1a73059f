#include "hiaer/affect.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace hiaer::affect {

VAState VAState::make(double valence, double arousal, RangeMode mode) {
  if (!std::isfinite(valence) || !std::isfinite(arousal)) {
    throw AffectRangeError("valence/arousal must be finite");
  }
  if (mode == RangeMode::Reject) {
    if (valence < -1.0 || valence > 1.0) {
      throw AffectRangeError("valence " + std::to_string(valence) + " outside [-1, 1]");
    }
    if (arousal < 0.0 || arousal > 1.0) {
      throw AffectRangeError("arousal " + std::to_string(arousal) + " outside [0, 1]");
    }
    return {valence, arousal};
  }
  return {std::clamp(valence, -1.0, 1.0), std::clamp(arousal, 0.0, 1.0)};
}

std::string_view to_string(AffectQuadrant q) {
  switch (q) {
    case AffectQuadrant::Q1_AggressionTension: return "Q1_AggressionTension";
    case AffectQuadrant::Q2_Welcoming: return "Q2_Welcoming";
    case AffectQuadrant::Q3_CalmSupport: return "Q3_CalmSupport";
    case AffectQuadrant::Q4_DefensiveWithdrawal: return "Q4_DefensiveWithdrawal";
    case AffectQuadrant::Neutral: return "Neutral";
  }
  return "Neutral";
}

AffectQuadrant quadrant_from_string(std::string_view s) {
  for (auto q : {AffectQuadrant::Q1_AggressionTension, AffectQuadrant::Q2_Welcoming,
                 AffectQuadrant::Q3_CalmSupport, AffectQuadrant::Q4_DefensiveWithdrawal,
                 AffectQuadrant::Neutral}) {
    const auto name = to_string(q);
    if (s == name || s == name.substr(0, 2)) return q;
  }
  throw ConfigError("unknown affect quadrant: " + std::string(s));
}

std::string_view to_string(SafetyClass s) {
  switch (s) {
    case SafetyClass::Safe: return "safe";
    case SafetyClass::Defensive: return "defensive";
    case SafetyClass::Prohibited: return "prohibited";
  }
  return "safe";
}

SafetyClass safety_from_string(std::string_view s) {
  if (s == "safe") return SafetyClass::Safe;
  if (s == "defensive") return SafetyClass::Defensive;
  if (s == "prohibited") return SafetyClass::Prohibited;
  throw ConfigError("unknown safety class: " + std::string(s));
}

std::string normalize_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  bool pending_space = false;
  for (char raw : token) {
    auto c = static_cast<unsigned char>(raw);
    if (c == '_' || c == '-' || std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (c == '"' || c == '\'' || c == '`' || c == '.' || c == ',' || c == '!' || c == ';' ||
        c == '*' || c == '<' || c == '>') {
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<MotionPrimitive> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string> ids;
  for (const auto& p : entries_) {
    if (p.id.empty()) throw ConfigError("vocabulary entry with empty id");
    if (p.display_text.empty()) throw ConfigError("primitive '" + p.id + "' has no display_text");
    if (!ids.insert(p.id).second) throw ConfigError("duplicate primitive id '" + p.id + "'");
  }
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  std::vector<MotionPrimitive> entries;
  const auto& list = j.contains("primitives") ? j.at("primitives") : j;
  for (const auto& e : list) {
    MotionPrimitive p;
    p.id = e.at("id").get<std::string>();
    p.display_text = e.at("display_text").get<std::string>();
    p.aliases = e.value("aliases", std::vector<std::string>{});
    for (const auto& q : e.value("quadrant_affinity", std::vector<std::string>{})) {
      p.quadrant_affinity.push_back(quadrant_from_string(q));
    }
    p.safety_class = safety_from_string(e.value("safety_class", std::string("safe")));
    entries.push_back(std::move(p));
  }
  return Vocabulary(std::move(entries));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary " + path.string());
  return from_json(nlohmann::json::parse(in));
}

const MotionPrimitive* Vocabulary::find(std::string_view id) const {
  for (const auto& p : entries_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

const MotionPrimitive& Vocabulary::at(std::string_view id) const {
  if (const auto* p = find(id)) return *p;
  throw UnknownPrimitiveError(std::string(id));
}

bool Vocabulary::contains(const MotionPrimitive& p) const {
  const auto* found = find(p.id);
  return found != nullptr && *found == p;
}

const MotionPrimitive& Vocabulary::resolve(std::string_view token) const {
  const std::string key = normalize_token(token);
  if (!key.empty()) {
    for (const auto& p : entries_) {
      if (normalize_token(p.id) == key || normalize_token(p.display_text) == key) return p;
    }
    for (const auto& p : entries_) {
      for (const auto& alias : p.aliases) {
        if (normalize_token(alias) == key) return p;
      }
    }
  }
  throw UnknownPrimitiveError(std::string(token));
}

AffectQuadrant classify_quadrant(const VAState& va, const AffectConfig& cfg) {
  const double v = va.valence();
  const double a = va.arousal();
  if (std::abs(v) <= cfg.neutral_valence_band) return AffectQuadrant::Neutral;
  const bool high = a >= cfg.arousal_split;
  if (v < 0.0) return high ? AffectQuadrant::Q1_AggressionTension : AffectQuadrant::Q4_DefensiveWithdrawal;
  return high ? AffectQuadrant::Q2_Welcoming : AffectQuadrant::Q3_CalmSupport;
}

StyleParams modulate_style(const Vocabulary& vocab, const MotionPrimitive& primitive,
                           const VAState& va) {
  if (!vocab.contains(primitive)) throw UnknownPrimitiveError(primitive.id);
  return StyleParams{0.5 + va.arousal(), 0.5 + va.arousal(), va.valence()};
}

const MotionPrimitive& select_fallback(const Vocabulary& vocab, double intent_confidence,
                                       const MotionPrimitive* candidate,
                                       const AffectConfig& cfg) {
  const MotionPrimitive* fallback = vocab.find(cfg.fallback_primitive_id);
  if (fallback == nullptr) {
    throw ConfigError("fallback primitive '" + cfg.fallback_primitive_id + "' not in vocabulary");
  }
  if (candidate == nullptr || !(intent_confidence >= cfg.confidence_threshold) ||
      candidate->safety_class == SafetyClass::Prohibited) {
    return *fallback;
  }
  return *candidate;
}

const MotionPrimitive& resolve_primitive(const Vocabulary& vocab, std::string_view token) {
  return vocab.resolve(token);
}

void validate(const Vocabulary& vocab, const AffectConfig& cfg) {
  if (!(cfg.arousal_split > 0.0 && cfg.arousal_split < 1.0)) {
    throw ConfigError("arousal_split must lie in (0, 1)");
  }
  if (!(cfg.neutral_valence_band >= 0.0)) throw ConfigError("neutral_valence_band must be >= 0");
  if (!(cfg.confidence_threshold >= 0.0 && cfg.confidence_threshold <= 1.0)) {
    throw ConfigError("confidence_threshold must lie in [0, 1]");
  }
  const auto* fallback = vocab.find(cfg.fallback_primitive_id);
  if (fallback == nullptr) {
    throw ConfigError("fallback primitive '" + cfg.fallback_primitive_id + "' not in vocabulary");
  }
  if (fallback->safety_class == SafetyClass::Prohibited) {
    throw ConfigError("fallback primitive '" + cfg.fallback_primitive_id + "' is prohibited");
  }
}

void from_json(const nlohmann::json& j, AffectConfig& cfg) {
  cfg.arousal_split = j.value("arousal_split", cfg.arousal_split);
  cfg.neutral_valence_band = j.value("neutral_valence_band", cfg.neutral_valence_band);
  cfg.confidence_threshold = j.value("confidence_threshold", cfg.confidence_threshold);
  cfg.fallback_primitive_id = j.value("fallback_primitive_id", cfg.fallback_primitive_id);
  if (j.contains("range_mode")) {
    cfg.range_mode = j.at("range_mode").get<std::string>() == "reject" ? RangeMode::Reject
                                                                       : RangeMode::Clamp;
  }
}

void to_json(nlohmann::json& j, const AffectConfig& cfg) {
  j = {{"arousal_split", cfg.arousal_split},
       {"neutral_valence_band", cfg.neutral_valence_band},
       {"confidence_threshold", cfg.confidence_threshold},
       {"fallback_primitive_id", cfg.fallback_primitive_id},
       {"range_mode", cfg.range_mode == RangeMode::Reject ? "reject" : "clamp"}};
}

void to_json(nlohmann::json& j, const StyleParams& s) {
  j = {{"amplitude_scale", s.amplitude_scale},
       {"tempo_scale", s.tempo_scale},
       {"openness", s.openness}};
}

void from_json(const nlohmann::json& j, StyleParams& s) {
  s.amplitude_scale = j.at("amplitude_scale").get<double>();
  s.tempo_scale = j.at("tempo_scale").get<double>();
  s.openness = j.at("openness").get<double>();
}

}  // namespace hiaer::affect
