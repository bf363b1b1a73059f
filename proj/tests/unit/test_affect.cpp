#include <doctest.h>

#include <random>

#include "hiaer/affect.hpp"
#include "test_support.hpp"

using namespace hiaer::affect;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = Vocabulary::load(hiaer::test::data_dir() / "vocabulary.json");
  return v;
}

}  // namespace

TEST_CASE("VAState clamps or rejects out-of-range values") {
  const auto clamped = VAState::make(-1.7, 1.2);
  CHECK(clamped.valence() == -1.0);
  CHECK(clamped.arousal() == 1.0);
  CHECK_THROWS_AS(VAState::make(0.2, -0.1, RangeMode::Reject), AffectRangeError);
  CHECK_THROWS_AS(VAState::make(1.01, 0.5, RangeMode::Reject), AffectRangeError);
  CHECK_NOTHROW(VAState::make(1.0, 0.0, RangeMode::Reject));
  CHECK_THROWS_AS(VAState::make(std::nan(""), 0.5), AffectRangeError);
}

TEST_CASE("classify_quadrant on reported scenario averages") {
  const AffectConfig cfg;
  CHECK(classify_quadrant(VAState::make(-0.46, 0.64), cfg) == AffectQuadrant::Q1_AggressionTension);
  CHECK(classify_quadrant(VAState::make(0.53, 0.49), cfg) == AffectQuadrant::Q2_Welcoming);
  CHECK(classify_quadrant(VAState::make(0.36, 0.29), cfg) == AffectQuadrant::Q3_CalmSupport);
  CHECK(classify_quadrant(VAState::make(-0.32, 0.47), cfg) == AffectQuadrant::Q4_DefensiveWithdrawal);
  CHECK(classify_quadrant(VAState::make(0.03, 0.25), cfg) == AffectQuadrant::Neutral);
  CHECK(classify_quadrant(VAState::make(0.11, 0.29), cfg) == AffectQuadrant::Neutral);
  CHECK(classify_quadrant(VAState::make(0.0, 0.0), cfg) == AffectQuadrant::Neutral);
}

TEST_CASE("classify_quadrant band edge is inclusive for Neutral") {
  const AffectConfig cfg;
  CHECK(classify_quadrant(VAState::make(0.15, 0.9), cfg) == AffectQuadrant::Neutral);
  CHECK(classify_quadrant(VAState::make(-0.15, 0.1), cfg) == AffectQuadrant::Neutral);
  CHECK(classify_quadrant(VAState::make(0.1500001, 0.48), cfg) == AffectQuadrant::Q2_Welcoming);
}

TEST_CASE("quadrant sign/threshold sweep partitions the V-A rectangle") {
  const AffectConfig cfg;
  for (int iv = 0; iv <= 200; ++iv) {
    for (int ia = 0; ia <= 100; ++ia) {
      const double v = -1.0 + iv * 0.01;
      const double a = ia * 0.01;
      const auto q = classify_quadrant(VAState::make(v, a), cfg);
      if (std::abs(v) <= cfg.neutral_valence_band) {
        CHECK(q == AffectQuadrant::Neutral);
        continue;
      }
      const bool left = (q == AffectQuadrant::Q1_AggressionTension ||
                         q == AffectQuadrant::Q4_DefensiveWithdrawal);
      const bool upper = (q == AffectQuadrant::Q1_AggressionTension ||
                          q == AffectQuadrant::Q2_Welcoming);
      CHECK(q != AffectQuadrant::Neutral);
      CHECK(left == (v < 0));
      CHECK(upper == (a >= cfg.arousal_split));
    }
  }
}

TEST_CASE("modulate_style follows the linear law") {
  const auto& wave = vocab().at("wave_right_hand");
  const auto s = modulate_style(vocab(), wave, VAState::make(0.6, 0.8));
  CHECK(s.amplitude_scale == doctest::Approx(1.3));
  CHECK(s.tempo_scale == doctest::Approx(1.3));
  CHECK(s.openness == doctest::Approx(0.6));

  const auto n = modulate_style(vocab(), vocab().at("point"), VAState::make(0.0, 0.5));
  CHECK(n.amplitude_scale == doctest::Approx(1.0));
  CHECK(n.tempo_scale == doctest::Approx(1.0));
  CHECK(n.openness == 0.0);

  const auto g = modulate_style(vocab(), vocab().at("guard_stance"), VAState::make(-0.6, 0.7));
  CHECK(g.amplitude_scale == doctest::Approx(1.2));
  CHECK(g.tempo_scale == doctest::Approx(1.2));
  CHECK(g.openness == doctest::Approx(-0.6));

  MotionPrimitive foreign{"tap_dance", "tap dance", {}, {}, SafetyClass::Safe};
  CHECK_THROWS_AS(modulate_style(vocab(), foreign, VAState::make(0, 0)), UnknownPrimitiveError);
}

TEST_CASE("modulate_style is monotone in arousal and bounded") {
  const auto& p = vocab().at("cheer");
  double prev_amp = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double a = i * 0.01;
    const double v = -1.0 + 0.02 * i;
    const auto s = modulate_style(vocab(), p, VAState::make(v, a));
    CHECK(s.amplitude_scale >= prev_amp);
    CHECK(s.tempo_scale == s.amplitude_scale);
    CHECK(s.amplitude_scale >= 0.5);
    CHECK(s.amplitude_scale <= 1.5);
    CHECK(s.openness == VAState::make(v, a).valence());
    prev_amp = s.amplitude_scale;
  }
}

TEST_CASE("select_fallback rules") {
  const AffectConfig cfg;
  const auto& wave = vocab().at("wave_right_hand");
  CHECK(select_fallback(vocab(), 0.2, &wave, cfg).id == "stand_still");
  CHECK(select_fallback(vocab(), 0.9, &wave, cfg).id == "wave_right_hand");
  CHECK(select_fallback(vocab(), 0.5, &wave, cfg).id == "wave_right_hand");  // boundary keeps
  CHECK(select_fallback(vocab(), 0.9, nullptr, cfg).id == "stand_still");
  const auto& strike = vocab().at("offensive_strike");
  CHECK(select_fallback(vocab(), 0.9, &strike, cfg).id == "stand_still");
  const auto& guard = vocab().at("guard_stance");
  CHECK(select_fallback(vocab(), 0.9, &guard, cfg).id == "guard_stance");

  AffectConfig bad = cfg;
  bad.fallback_primitive_id = "levitate";
  CHECK_THROWS_AS(select_fallback(vocab(), 0.9, &wave, bad), hiaer::ConfigError);
  CHECK_THROWS_AS(validate(vocab(), bad), hiaer::ConfigError);
  CHECK_NOTHROW(validate(vocab(), cfg));
}

TEST_CASE("select_fallback never yields a prohibited primitive") {
  const AffectConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, vocab().entries().size());
  for (int i = 0; i < 5000; ++i) {
    const std::size_t k = pick(rng);
    const MotionPrimitive* cand = k == vocab().entries().size() ? nullptr : &vocab().entries()[k];
    const auto& out = select_fallback(vocab(), conf(rng), cand, cfg);
    CHECK(out.safety_class != SafetyClass::Prohibited);
  }
}

TEST_CASE("resolve_primitive normalizes case, whitespace and aliases") {
  CHECK(resolve_primitive(vocab(), "Wave right hand").id == "wave_right_hand");
  CHECK(resolve_primitive(vocab(), "  WAVE_RIGHT_HAND ").id == "wave_right_hand");
  CHECK(resolve_primitive(vocab(), "wave").id == "wave_right_hand");
  CHECK(resolve_primitive(vocab(), "wave arms").id == "wave_right_hand");
  CHECK(resolve_primitive(vocab(), "beat gestures").id == "beat_gesture");
  CHECK(resolve_primitive(vocab(), "\"stand still\"").id == "stand_still");
  CHECK(resolve_primitive(vocab(), "punch").id == "guard_stance");
  CHECK(resolve_primitive(vocab(), "Two-Armed Celebration").id == "two_arm_celebration");
  CHECK_THROWS_AS(resolve_primitive(vocab(), "tap dance"), UnknownPrimitiveError);
  CHECK_THROWS_AS(resolve_primitive(vocab(), ""), UnknownPrimitiveError);
}

TEST_CASE("vocabulary loading validates entries") {
  CHECK(vocab().entries().size() == 11);
  CHECK(vocab().at("guard_stance").safety_class == SafetyClass::Defensive);
  const auto dup = nlohmann::json::parse(R"([{"id":"a","display_text":"x"},{"id":"a","display_text":"y"}])");
  CHECK_THROWS_AS(Vocabulary::from_json(dup), hiaer::ConfigError);
  const auto empty_text = nlohmann::json::parse(R"([{"id":"a","display_text":""}])");
  CHECK_THROWS_AS(Vocabulary::from_json(empty_text), hiaer::ConfigError);
}
