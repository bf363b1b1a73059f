#include <algorithm>
#include <fstream>

#include "hiaer/eval.hpp"

namespace hiaer::eval {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t category_index(intent::IntentCategory c) {
  const auto* it = std::find(std::begin(intent::kAllCategories), std::end(intent::kAllCategories), c);
  return static_cast<std::size_t>(it - std::begin(intent::kAllCategories));
}

const pipeline::Scenario& scenario_of(const std::vector<pipeline::Scenario>& scenarios, const std::string& id) {
  for (const auto& s : scenarios) {
    if (s.id == id) return s;
  }
  throw FixtureError("result for unknown scenario " + id);
}

intent::IntentCategory truth_of(const pipeline::Scenario& s) {
  if (!s.ground_truth) throw FixtureError("scenario " + s.id + " has no ground_truth_intent");
  return *s.ground_truth;
}

}  // namespace

std::vector<pipeline::Scenario> load_scenarios(const std::filesystem::path& dir, const std::vector<std::string>& ids) {
  std::vector<std::string> wanted;
  for (const auto& id : ids) {
    if (id == "all") {
      wanted.insert(wanted.end(), kScenarioIds.begin(), kScenarioIds.end());
    } else {
      wanted.push_back(id);
    }
  }
  if (wanted.empty()) throw FixtureError("no scenarios selected");
  std::vector<pipeline::Scenario> out;
  for (const auto& id : wanted) {
    const auto path = dir / id / "scenario.json";
    if (!std::filesystem::exists(path)) throw FixtureError("missing fixture for scenario " + id + " (" + path.string() + ")");
    out.push_back(pipeline::Scenario::load(path));
    if (out.back().id != id) throw FixtureError("fixture " + path.string() + " declares id " + out.back().id);
  }
  return out;
}

intent::IntentCategory effective_category(const TrialResult& r) {
  return r.fell_back ? intent::IntentCategory::Ambiguous : r.predicted;
}

bool is_correct(const TrialResult& r, intent::IntentCategory truth) {
  return !r.empty_input && effective_category(r) == truth;
}

std::vector<TrialResult> run_scenarios(const pipeline::Resources& res, const std::vector<pipeline::Scenario>& scenarios,
                                       std::uint64_t seed, std::optional<intent::Modality> mode) {
  std::vector<TrialResult> out;
  for (const auto& s : scenarios) {
    if (s.mock_trials.empty()) throw FixtureError("scenario " + s.id + " has no scripted mock trials");
    for (std::size_t k = 0; k < s.trials; ++k) {
      intent::MockScript script = s.mock_trials[k % s.mock_trials.size()];
      script.seed = splitmix64(script.seed ^ splitmix64(seed));
      pipeline::ReplayOptions opts;
      opts.trial = k;
      opts.modality = mode;
      opts.client = std::make_shared<intent::ScriptedMockClient>(std::move(script),
                                                                 intent::ScriptedMockClient::Clock::Virtual);
      opts.control = false;
      opts.log_frames = false;
      const auto replay = pipeline::run_replay(s, res, opts);

      TrialResult t;
      t.scenario_id = s.id;
      t.trial = k;
      if (replay.decisions.empty()) {
        if (!replay.projection_empty) {
          throw FixtureError("scenario " + s.id + " trial " + std::to_string(k) + " produced no decision within " +
                             std::to_string(s.duration_s) + " s");
        }
        t.outcome = "empty_input";
        t.empty_input = true;
        t.fell_back = true;
        t.primitive = res.affect.fallback_primitive_id;
        t.va = affect::neutral_va();
        out.push_back(std::move(t));
        continue;
      }
      const auto& d = replay.decisions.front().decision;
      t.outcome = std::string(intent::outcome_kind(replay.outcomes.front()));
      t.predicted = d.output.intent.category;
      t.confidence = d.output.confidence;
      t.va = d.output.va;
      t.primitive = d.primitive.id;
      t.fell_back = d.fell_back;
      t.latency_s = intent::outcome_latency(replay.outcomes.front());
      out.push_back(std::move(t));
    }
  }
  return out;
}

IaccResult compute_iacc(const std::vector<TrialResult>& results, const std::vector<pipeline::Scenario>& scenarios) {
  IaccResult r;
  for (const auto& s : scenarios) {
    r.correct[s.id] = 0;
    r.trials[s.id] = 0;
  }
  for (const auto& t : results) {
    const auto& s = scenario_of(scenarios, t.scenario_id);
    ++r.trials[s.id];
    if (is_correct(t, truth_of(s))) ++r.correct[s.id];
  }
  for (const auto& s : scenarios) {
    const std::size_t n = r.trials[s.id];
    if (n == 0) throw EmptyScenarioError(s.id);
    r.per_scenario[s.id] = static_cast<double>(r.correct[s.id]) / static_cast<double>(n);
    r.total_correct += r.correct[s.id];
    r.total_trials += n;
  }
  r.overall = static_cast<double>(r.total_correct) / static_cast<double>(r.total_trials);
  return r;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

std::size_t ConfusionMatrix::row_sum(intent::IntentCategory truth) const {
  std::size_t t = 0;
  for (auto c : counts[category_index(truth)]) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<TrialResult>& results, const std::vector<pipeline::Scenario>& scenarios) {
  ConfusionMatrix m;
  for (const auto& t : results) {
    const auto truth = truth_of(scenario_of(scenarios, t.scenario_id));
    // Empty projections count against the row without landing on the diagonal.
    auto predicted = effective_category(t);
    if (t.empty_input && predicted == truth) {
      predicted = truth == intent::IntentCategory::Ambiguous ? intent::IntentCategory::Neutral
                                                             : intent::IntentCategory::Ambiguous;
    }
    ++m.counts[category_index(truth)][category_index(predicted)];
  }
  return m;
}

std::vector<ModeAccuracy> run_ablation(const pipeline::Resources& res, const std::vector<pipeline::Scenario>& scenarios,
                                       const std::vector<intent::Modality>& modes, std::uint64_t seed) {
  std::vector<ModeAccuracy> out;
  for (auto mode : modes) {
    const auto results = run_scenarios(res, scenarios, seed, mode);
    ModeAccuracy a;
    a.mode = mode;
    for (const auto& t : results) {
      ++a.trials;
      if (is_correct(t, truth_of(scenario_of(scenarios, t.scenario_id)))) ++a.correct;
      if (t.empty_input) a.empty_input.push_back(t.scenario_id + "#" + std::to_string(t.trial));
    }
    a.accuracy = a.trials > 0 ? static_cast<double>(a.correct) / static_cast<double>(a.trials) : 0.0;
    out.push_back(std::move(a));
  }
  return out;
}

ReferenceTables ReferenceTables::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FixtureError("missing reference tables " + path.string());
  try {
    return {nlohmann::json::parse(in)};
  } catch (const nlohmann::json::parse_error& e) {
    throw FixtureError("reference tables " + path.string() + ": " + e.what());
  }
}

std::optional<double> ReferenceTables::scenario_value(const std::string& scenario, const std::string& column) const {
  const auto p = nlohmann::json::json_pointer("/scenario_metrics/rows/" + scenario + "/" + column);
  if (!doc.contains(p) || !doc.at(p).is_number()) return std::nullopt;
  return doc.at(p).get<double>();
}

std::optional<double> ReferenceTables::modality_accuracy(intent::Modality mode) const {
  const auto p = nlohmann::json::json_pointer("/modality_ablation/" + std::string(intent::to_string(mode)));
  if (!doc.contains(p) || !doc.at(p).is_number()) return std::nullopt;
  return doc.at(p).get<double>();
}

std::map<std::string, RaterScores> load_rater_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FixtureError("cannot open rater scores " + path.string());
  std::map<std::string, RaterScores> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [id, v] : j.items()) {
      RaterScores r;
      auto opt = [&](const char* key) -> std::optional<double> {
        if (!v.contains(key) || v.at(key).is_null()) return std::nullopt;
        const double x = v.at(key).get<double>();
        if (!(x >= 1.0 && x <= 5.0)) throw FixtureError(id + "." + key + " must be a 1-5 Likert mean");
        return x;
      };
      r.s_select = opt("s_select");
      r.s_affect = opt("s_affect");
      r.baseline_s_affect = opt("baseline_s_affect");
      out[id] = r;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FixtureError("rater scores " + path.string() + ": " + e.what());
  }
  return out;
}

MetricsReport build_report(const std::vector<TrialResult>& results, const std::vector<pipeline::Scenario>& scenarios,
                           const affect::AffectConfig& affect, std::uint64_t seed,
                           const std::map<std::string, RaterScores>& ratings) {
  const IaccResult iacc = compute_iacc(results, scenarios);
  MetricsReport r;
  r.seed = seed;
  r.results = results;
  r.overall_iacc = iacc.overall;
  r.total_trials = iacc.total_trials;
  r.confusion = confusion(results, scenarios);
  std::size_t fallbacks = 0;
  for (const auto& s : scenarios) {
    ScenarioRow row;
    row.id = s.id;
    row.truth = truth_of(s);
    row.designated = s.designated_quadrant;
    row.trials = iacc.trials.at(s.id);
    row.correct = iacc.correct.at(s.id);
    row.i_acc = iacc.per_scenario.at(s.id);
    double v = 0.0;
    double a = 0.0;
    double lat = 0.0;
    std::size_t fb = 0;
    for (const auto& t : results) {
      if (t.scenario_id != s.id) continue;
      v += t.va.valence();
      a += t.va.arousal();
      lat += t.latency_s;
      if (t.fell_back) ++fb;
    }
    const auto n = static_cast<double>(row.trials);
    row.v_avg = v / n;
    row.a_avg = a / n;
    row.latency_avg_s = lat / n;
    row.fallback_rate = static_cast<double>(fb) / n;
    row.mean_quadrant = affect::classify_quadrant(affect::VAState::make(row.v_avg, row.a_avg), affect);
    if (auto it = ratings.find(s.id); it != ratings.end()) row.ratings = it->second;
    fallbacks += fb;
    r.rows.push_back(std::move(row));
  }
  r.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(r.total_trials);
  return r;
}

void attach_reference(MetricsReport& r, const ReferenceTables& ref) {
  r.reference = ref.doc;
  for (auto& a : r.ablation) a.reference = ref.modality_accuracy(a.mode);
}

}  // namespace hiaer::eval
