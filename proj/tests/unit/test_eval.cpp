#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "hiaer/eval.hpp"
#include "test_support.hpp"

using namespace hiaer;
using namespace hiaer::eval;
using intent::IntentCategory;
using intent::Modality;
using nlohmann::json;

namespace {

const pipeline::Resources& resources() {
  static const pipeline::Resources r = pipeline::load_resources(test::data_dir() / "config.json");
  return r;
}

std::filesystem::path scenario_dir() { return test::data_dir() / "fixtures" / "scenarios"; }

const std::vector<pipeline::Scenario>& scenarios() {
  static const auto s = load_scenarios(scenario_dir(), {"all"});
  return s;
}

const std::vector<TrialResult>& results() {
  static const auto r = run_scenarios(resources(), scenarios(), 7);
  return r;
}

const std::vector<ModeAccuracy>& ablation() {
  static const auto a =
      run_ablation(resources(), scenarios(), {Modality::PromptOnly, Modality::ImageOnly, Modality::Combined}, 7);
  return a;
}

ReferenceTables reference() { return ReferenceTables::load(test::data_dir() / "fixtures" / "reference" / "tables.json"); }

TrialResult synthetic(const std::string& id, std::size_t k, IntentCategory predicted, bool fell_back = false) {
  TrialResult t;
  t.scenario_id = id;
  t.trial = k;
  t.outcome = "success";
  t.predicted = predicted;
  t.fell_back = fell_back;
  t.primitive = "stand_still";
  return t;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("hiaer_eval_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("the six scenario fixtures load with their ground truth") {
  const auto& s = scenarios();
  REQUIRE(s.size() == 6);
  const IntentCategory truth[] = {IntentCategory::Aggression,  IntentCategory::Celebration, IntentCategory::CalmGreeting,
                                  IntentCategory::Disappointment, IntentCategory::Neutral,     IntentCategory::Ambiguous};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s[i].id == kScenarioIds[i]);
    CHECK(s[i].ground_truth == truth[i]);
    CHECK(s[i].trials == 15);
    CHECK(s[i].mock_trials.size() == 15);
  }
  CHECK(load_scenarios(scenario_dir(), {"S3"}).front().id == "S3");
}

TEST_CASE("a missing fixture is a fixture error") {
  CHECK_THROWS_AS(load_scenarios(scenario_dir(), {"S9"}), FixtureError);
  CHECK_THROWS_AS(load_scenarios(scenario_dir(), {}), FixtureError);
}

TEST_CASE("I_acc oracle on hand-built results") {
  const auto& sc = scenarios();
  std::vector<TrialResult> r;
  // S2: 14 of 15 correct; S6 (Ambiguous): all fell back so all correct; S1: none correct.
  for (std::size_t k = 0; k < 15; ++k) {
    r.push_back(synthetic("S2", k, k == 3 ? IntentCategory::Neutral : IntentCategory::Celebration));
    r.push_back(synthetic("S6", k, IntentCategory::CalmGreeting, true));
    r.push_back(synthetic("S1", k, IntentCategory::Aggression, true));
  }
  const std::vector<pipeline::Scenario> subset = {sc[0], sc[1], sc[5]};
  const auto iacc = compute_iacc(r, subset);
  CHECK(iacc.per_scenario.at("S2") == doctest::Approx(14.0 / 15.0).epsilon(1e-12));
  CHECK(iacc.per_scenario.at("S2") == doctest::Approx(0.9333).epsilon(1e-4));
  CHECK(iacc.per_scenario.at("S6") == 1.0);
  CHECK(iacc.per_scenario.at("S1") == 0.0);
  CHECK(iacc.overall == doctest::Approx(29.0 / 45.0));

  SUBCASE("permutation invariant") {
    std::mt19937 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      auto shuffled = r;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto again = compute_iacc(shuffled, subset);
      CHECK(again.per_scenario == iacc.per_scenario);
      CHECK(again.overall == iacc.overall);
    }
  }

  SUBCASE("empty projection scores as incorrect") {
    auto e = synthetic("S6", 0, IntentCategory::Ambiguous, true);
    e.empty_input = true;
    CHECK_FALSE(is_correct(e, IntentCategory::Ambiguous));
    const auto m = confusion({e}, subset);
    CHECK(m.trace() == 0);
    CHECK(m.total() == 1);
  }

  SUBCASE("a scenario without results is an error") {
    std::vector<TrialResult> only_s1(r.begin(), r.end());
    only_s1.erase(std::remove_if(only_s1.begin(), only_s1.end(), [](const auto& t) { return t.scenario_id == "S2"; }),
                  only_s1.end());
    CHECK_THROWS_AS(compute_iacc(only_s1, subset), EmptyScenarioError);
  }
}

TEST_CASE("property: confusion trace over total equals overall I_acc") {
  const auto& sc = scenarios();
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> cat(0, 5);
  std::uniform_int_distribution<int> n(1, 20);
  std::bernoulli_distribution fb(0.2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<TrialResult> r;
    std::map<std::string, std::size_t> per;
    for (const auto& s : sc) {
      const auto count = static_cast<std::size_t>(n(rng));
      per[s.id] = count;
      for (std::size_t k = 0; k < count; ++k) {
        r.push_back(synthetic(s.id, k, intent::kAllCategories[cat(rng)], fb(rng)));
      }
    }
    const auto iacc = compute_iacc(r, sc);
    const auto m = confusion(r, sc);
    CHECK(m.total() == r.size());
    CHECK(static_cast<double>(m.trace()) / static_cast<double>(m.total()) == doctest::Approx(iacc.overall));
    for (const auto& s : sc) CHECK(m.row_sum(*s.ground_truth) == per[s.id]);
  }
}

TEST_CASE("scenario runs reproduce the constructed fixture counts") {
  const auto& r = results();
  REQUIRE(r.size() == 90);
  const auto iacc = compute_iacc(r, scenarios());
  const std::map<std::string, std::size_t> expected = {{"S1", 12}, {"S2", 14}, {"S3", 14},
                                                       {"S4", 14}, {"S5", 13}, {"S6", 12}};
  CHECK(iacc.correct == expected);
  CHECK(iacc.total_correct == 79);
  CHECK(iacc.overall == doctest::Approx(79.0 / 90.0));
  for (const auto& t : r) {
    CHECK_FALSE(t.empty_input);
    CHECK(t.outcome == "success");
    CHECK(t.latency_s > 0.0);
  }

  const auto m = confusion(r, scenarios());
  CHECK(m.trace() == 79);
  CHECK(m.total() == 90);
  for (const auto& s : scenarios()) CHECK(m.row_sum(*s.ground_truth) == 15);

  const auto ref = reference();
  for (const auto& s : scenarios()) {
    CHECK(iacc.per_scenario.at(s.id) == doctest::Approx(*ref.scenario_value(s.id, "i_acc")).epsilon(0.001));
  }
}

TEST_CASE("per-scenario V and A means match the reference columns") {
  const auto report = build_report(results(), scenarios(), resources().affect, 7);
  const auto ref = reference();
  for (const auto& row : report.rows) {
    CHECK(row.v_avg == doctest::Approx(*ref.scenario_value(row.id, "v_avg")).epsilon(1e-9));
    CHECK(row.a_avg == doctest::Approx(*ref.scenario_value(row.id, "a_avg")).epsilon(1e-9));
    CHECK(row.trials == 15);
  }
  CHECK(report.rows[0].mean_quadrant == affect::AffectQuadrant::Q1_AggressionTension);
  CHECK(report.rows[1].mean_quadrant == affect::AffectQuadrant::Q2_Welcoming);
  CHECK(report.rows[4].mean_quadrant == affect::AffectQuadrant::Neutral);
}

TEST_CASE("pinned trials map through vocabulary and style") {
  const auto& r = results();
  const auto& s1 = r[0];
  REQUIRE(s1.scenario_id == "S1");
  CHECK(s1.primitive == "guard_stance");
  CHECK(s1.va.valence() == doctest::Approx(-0.6));
  CHECK(s1.va.arousal() == doctest::Approx(0.7));

  const auto& s2 = r[15];
  REQUIRE(s2.scenario_id == "S2");
  CHECK(s2.primitive == "beat_gesture");
  const auto& res = resources();
  const auto style = affect::modulate_style(res.vocab, res.vocab.at(s2.primitive), s2.va);
  CHECK(style.amplitude_scale == doctest::Approx(1.3));
  CHECK(style.tempo_scale == doctest::Approx(1.3));
  CHECK(style.openness == doctest::Approx(0.6));

  std::size_t s6_fallbacks = 0;
  for (const auto& t : r) {
    if (t.scenario_id != "S6" || !t.fell_back) continue;
    ++s6_fallbacks;
    CHECK(t.primitive == "stand_still");
  }
  CHECK(s6_fallbacks == 12);
}

TEST_CASE("modality ablation orders prompt < image < combined") {
  const auto& a = ablation();
  REQUIRE(a.size() == 3);
  CHECK(a[0].correct == 18);
  CHECK(a[1].correct == 69);
  CHECK(a[2].correct == 79);
  for (const auto& m : a) {
    CHECK(m.trials == 90);
    CHECK(m.empty_input.empty());
  }
  CHECK(a[0].accuracy < a[1].accuracy);
  CHECK(a[1].accuracy < a[2].accuracy);
  CHECK(a[0].accuracy == doctest::Approx(0.20));
  CHECK(a[1].accuracy == doctest::Approx(69.0 / 90.0));
  // Combined ablation is the main run.
  CHECK(a[2].accuracy == doctest::Approx(compute_iacc(results(), scenarios()).overall));
}

TEST_CASE("a mode-insensitive mock gives identical accuracy across modes") {
  auto sc = load_scenarios(scenario_dir(), {"S2"});
  for (auto& m : sc[0].mock_trials) m.by_modality.clear();
  const auto a =
      run_ablation(resources(), sc, {Modality::PromptOnly, Modality::ImageOnly, Modality::Combined}, 7);
  CHECK(a[0].accuracy == a[1].accuracy);
  CHECK(a[1].accuracy == a[2].accuracy);
}

TEST_CASE("same seed reproduces results bit for bit") {
  const auto again = run_scenarios(resources(), scenarios(), 7);
  CHECK(again == results());
  const auto other = run_scenarios(resources(), scenarios(), 8);
  bool latency_differs = false;
  for (std::size_t i = 0; i < other.size(); ++i) {
    CHECK(other[i].primitive == results()[i].primitive);
    latency_differs = latency_differs || other[i].latency_s != results()[i].latency_s;
  }
  CHECK(latency_differs);
}

TEST_CASE("report JSON round trips") {
  auto report = build_report(results(), scenarios(), resources().affect, 7);
  report.ablation = ablation();
  attach_reference(report, reference());
  CHECK(report.ablation[2].reference == doctest::Approx(0.87));
  const json j = report;
  const auto back = j.get<MetricsReport>();
  CHECK(back == report);
  CHECK(json(back).dump() == j.dump());
  CHECK(j.at("scenarios").size() == 6);
  CHECK(j.at("trials").size() == 90);
}

TEST_CASE("rater scores pass through only when supplied") {
  const auto plain = build_report(results(), scenarios(), resources().affect, 7);
  for (const auto& row : plain.rows) CHECK_FALSE(row.ratings.has_value());
  CHECK(json(plain).at("scenarios")[0].contains("ratings") == false);
  CHECK(render_text(plain).find("S_select") == std::string::npos);

  const auto dir = temp_dir("ratings");
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "ratings.json");
    out << R"({"S1": {"s_select": 4.5, "s_affect": 4.0}, "S3": {"baseline_s_affect": 3.0}})";
  }
  const auto ratings = load_rater_scores(dir / "ratings.json");
  const auto rated = build_report(results(), scenarios(), resources().affect, 7, ratings);
  REQUIRE(rated.rows[0].ratings.has_value());
  CHECK(rated.rows[0].ratings->s_select == 4.5);
  CHECK_FALSE(rated.rows[0].ratings->baseline_s_affect.has_value());
  CHECK_FALSE(rated.rows[1].ratings.has_value());
  CHECK(rated.rows[2].ratings->baseline_s_affect == 3.0);
  CHECK(render_text(rated).find("S_select") != std::string::npos);

  {
    std::ofstream out(dir / "bad.json");
    out << R"({"S1": {"s_select": 7}})";
  }
  CHECK_THROWS_AS(load_rater_scores(dir / "bad.json"), FixtureError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("emit_report writes every selected artifact") {
  auto report = build_report(results(), scenarios(), resources().affect, 7);
  report.ablation = ablation();
  attach_reference(report, reference());
  const auto dir = temp_dir("emit");
  const auto written = emit_report(report, {ReportFormat::Text, ReportFormat::Structured, ReportFormat::Plots}, dir,
                                   resources().affect);
  CHECK(written.size() == 4);
  for (const auto& p : written) CHECK(std::filesystem::file_size(p) > 0);
  std::ifstream in(dir / "report.json");
  CHECK(json::parse(in).get<MetricsReport>() == report);

  const auto text = render_text(report);
  CHECK(text.find("93.3%") != std::string::npos);
  CHECK(text.find("trace/total = 79/90") != std::string::npos);
  CHECK(text.find("0.87") != std::string::npos);
  CHECK(render_va_svg(report, resources().affect).find("<circle") != std::string::npos);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(emit_report(report, {ReportFormat::Text}, "/proc/hiaer_no_such/dir", resources().affect), IoError);
}

TEST_CASE("report format names") {
  CHECK(report_format_from_string("text") == ReportFormat::Text);
  CHECK(report_format_from_string("json") == ReportFormat::Structured);
  CHECK(report_format_from_string("structured") == ReportFormat::Structured);
  CHECK(report_format_from_string("plots") == ReportFormat::Plots);
  CHECK_THROWS_AS(report_format_from_string("pdf"), ConfigError);
}
