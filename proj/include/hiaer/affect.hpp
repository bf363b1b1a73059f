#pragma once

// Valence-Arousal affect model, quadrant classification, the motion-primitive
// vocabulary, style modulation and the confidence-aware fallback policy.

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiaer/error.hpp"

namespace hiaer::affect {

class UnknownPrimitiveError : public Error {
 public:
  explicit UnknownPrimitiveError(const std::string& token)
      : Error("unknown_primitive", "unknown motion primitive: '" + token + "'"), token_(token) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

class AffectRangeError : public Error {
 public:
  explicit AffectRangeError(const std::string& m) : Error("value_out_of_range", m) {}
};

enum class RangeMode { Clamp, Reject };

/// Valence in [-1, 1], arousal in [0, 1].
class VAState {
 public:
  VAState() = default;

  /// Clamp or reject out-of-range (and reject non-finite) values.
  static VAState make(double valence, double arousal, RangeMode mode = RangeMode::Clamp);

  double valence() const { return valence_; }
  double arousal() const { return arousal_; }

  bool operator==(const VAState&) const = default;

 private:
  VAState(double v, double a) : valence_(v), arousal_(a) {}
  double valence_ = 0.0;
  double arousal_ = 0.0;
};

/// Style used whenever the pipeline falls back.
inline VAState neutral_va() { return VAState::make(0.0, 0.25); }

enum class AffectQuadrant {
  Q1_AggressionTension,
  Q2_Welcoming,
  Q3_CalmSupport,
  Q4_DefensiveWithdrawal,
  Neutral,
};

std::string_view to_string(AffectQuadrant q);
/// Accepts "Q1".."Q4", "Neutral" and the full enumerator names.
AffectQuadrant quadrant_from_string(std::string_view s);

enum class SafetyClass { Safe, Defensive, Prohibited };

std::string_view to_string(SafetyClass s);
SafetyClass safety_from_string(std::string_view s);

struct MotionPrimitive {
  std::string id;            // lowercase snake token, e.g. wave_right_hand
  std::string display_text;  // text fed to the planner
  std::vector<std::string> aliases;
  std::vector<AffectQuadrant> quadrant_affinity;
  SafetyClass safety_class = SafetyClass::Safe;

  bool operator==(const MotionPrimitive&) const = default;
};

struct StyleParams {
  double amplitude_scale = 1.0;
  double tempo_scale = 1.0;
  double openness = 0.0;

  bool operator==(const StyleParams&) const = default;
};

struct AffectConfig {
  double arousal_split = 0.48;
  double neutral_valence_band = 0.15;
  double confidence_threshold = 0.5;
  std::string fallback_primitive_id = "stand_still";
  RangeMode range_mode = RangeMode::Clamp;
};

/// Immutable set of primitives loaded at startup.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<MotionPrimitive> entries);

  static Vocabulary from_json(const nlohmann::json& j);
  static Vocabulary load(const std::filesystem::path& path);

  const std::vector<MotionPrimitive>& entries() const { return entries_; }
  const MotionPrimitive* find(std::string_view id) const;
  /// Throws UnknownPrimitiveError.
  const MotionPrimitive& at(std::string_view id) const;
  bool contains(const MotionPrimitive& p) const;

  /// Case/whitespace-insensitive match on id, display text and aliases.
  const MotionPrimitive& resolve(std::string_view token) const;

 private:
  std::vector<MotionPrimitive> entries_;
};

/// Lowercase, trims, maps '_' and '-' to spaces, collapses whitespace and
/// strips surrounding quotes/punctuation.
std::string normalize_token(std::string_view token);

AffectQuadrant classify_quadrant(const VAState& va, const AffectConfig& cfg);

/// amplitude = tempo = 0.5 + arousal; openness = valence.
StyleParams modulate_style(const Vocabulary& vocab, const MotionPrimitive& primitive,
                           const VAState& va);

/// Returns the configured fallback for low confidence, a missing candidate or
/// a prohibited one; otherwise the candidate. confidence == threshold passes.
const MotionPrimitive& select_fallback(const Vocabulary& vocab, double intent_confidence,
                                       const MotionPrimitive* candidate,
                                       const AffectConfig& cfg);

const MotionPrimitive& resolve_primitive(const Vocabulary& vocab, std::string_view token);

/// Fails fast if the fallback primitive is absent or prohibited, or a numeric
/// field is out of its range.
void validate(const Vocabulary& vocab, const AffectConfig& cfg);

void from_json(const nlohmann::json& j, AffectConfig& cfg);
void to_json(nlohmann::json& j, const AffectConfig& cfg);
void to_json(nlohmann::json& j, const StyleParams& s);
void from_json(const nlohmann::json& j, StyleParams& s);

}  // namespace hiaer::affect
