#pragma once

// Scenario evaluation: trial execution over the replay path, intent accuracy,
// confusion, modality ablation and report emission next to the reference
// tables.

#include <array>
#include <map>
#include <set>

#include "hiaer/pipeline.hpp"

namespace hiaer::eval {

class FixtureError : public Error {
 public:
  explicit FixtureError(const std::string& message) : Error("fixture_error", message) {}
};

class EmptyScenarioError : public Error {
 public:
  explicit EmptyScenarioError(const std::string& scenario)
      : Error("empty_scenario", "scenario " + scenario + " has no trials to score") {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

inline constexpr std::array<const char*, 6> kScenarioIds = {"S1", "S2", "S3", "S4", "S5", "S6"};

/// Loads `<dir>/<id>/scenario.json` for each id; ids "all" expands to S1..S6.
std::vector<pipeline::Scenario> load_scenarios(const std::filesystem::path& dir, const std::vector<std::string>& ids);

struct TrialResult {
  std::string scenario_id;
  std::size_t trial = 0;
  std::string outcome;  // outcome_kind, or "empty_input" when the projection left nothing
  intent::IntentCategory predicted = intent::IntentCategory::Ambiguous;
  double confidence = 0.0;
  affect::VAState va;
  std::string primitive;
  bool fell_back = false;
  double latency_s = 0.0;
  bool empty_input = false;

  bool operator==(const TrialResult&) const = default;
};

void to_json(nlohmann::json& j, const TrialResult& r);
void from_json(const nlohmann::json& j, TrialResult& r);

/// Category the robot acted on: Ambiguous whenever the decision fell back.
intent::IntentCategory effective_category(const TrialResult& r);
/// Correct when the effective category equals the ground truth. For an
/// Ambiguous ground truth this means the fallback fired or the model said
/// Ambiguous.
bool is_correct(const TrialResult& r, intent::IntentCategory truth);

/// Every trial of every scenario through run_replay with its scripted mock.
/// `seed` is mixed into each mock's latency seed. The first decision of a
/// replay is the trial's result.
std::vector<TrialResult> run_scenarios(const pipeline::Resources& res, const std::vector<pipeline::Scenario>& scenarios,
                                       std::uint64_t seed, std::optional<intent::Modality> mode = std::nullopt);

struct IaccResult {
  std::map<std::string, std::size_t> correct;
  std::map<std::string, std::size_t> trials;
  std::map<std::string, double> per_scenario;
  double overall = 0.0;  // over trials, not over scenarios
  std::size_t total_correct = 0;
  std::size_t total_trials = 0;
};

/// EmptyScenarioError when a scenario in `scenarios` has no results.
IaccResult compute_iacc(const std::vector<TrialResult>& results, const std::vector<pipeline::Scenario>& scenarios);

struct ConfusionMatrix {
  /// counts[truth][effective prediction], indexed by kAllCategories order.
  std::array<std::array<std::size_t, 6>, 6> counts{};

  std::size_t trace() const;
  std::size_t total() const;
  std::size_t row_sum(intent::IntentCategory truth) const;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const std::vector<TrialResult>& results, const std::vector<pipeline::Scenario>& scenarios);

struct ModeAccuracy {
  intent::Modality mode = intent::Modality::Combined;
  std::size_t correct = 0;
  std::size_t trials = 0;
  double accuracy = 0.0;
  std::vector<std::string> empty_input;  // "S3#4": trials whose projection was empty
  std::optional<double> reference;

  bool operator==(const ModeAccuracy&) const = default;
};

void to_json(nlohmann::json& j, const ModeAccuracy& a);
void from_json(const nlohmann::json& j, ModeAccuracy& a);

std::vector<ModeAccuracy> run_ablation(const pipeline::Resources& res, const std::vector<pipeline::Scenario>& scenarios,
                                       const std::vector<intent::Modality>& modes, std::uint64_t seed);

/// Byte-stable copies of the published tables, for display only.
struct ReferenceTables {
  nlohmann::json doc;

  static ReferenceTables load(const std::filesystem::path& path);
  /// Per-scenario value (i_acc, v_avg, a_avg, s_select, s_affect, baseline_s_affect).
  std::optional<double> scenario_value(const std::string& scenario, const std::string& column) const;
  std::optional<double> modality_accuracy(intent::Modality mode) const;
};

/// Externally supplied Likert means per scenario; never computed here.
struct RaterScores {
  std::optional<double> s_select;
  std::optional<double> s_affect;
  std::optional<double> baseline_s_affect;

  bool operator==(const RaterScores&) const = default;
};

void to_json(nlohmann::json& j, const RaterScores& r);
void from_json(const nlohmann::json& j, RaterScores& r);

std::map<std::string, RaterScores> load_rater_scores(const std::filesystem::path& path);

struct ScenarioRow {
  std::string id;
  intent::IntentCategory truth = intent::IntentCategory::Ambiguous;
  std::optional<affect::AffectQuadrant> designated;
  std::size_t trials = 0;
  std::size_t correct = 0;
  double i_acc = 0.0;
  double v_avg = 0.0;
  double a_avg = 0.0;
  affect::AffectQuadrant mean_quadrant = affect::AffectQuadrant::Neutral;
  double fallback_rate = 0.0;
  double latency_avg_s = 0.0;
  std::optional<RaterScores> ratings;

  bool operator==(const ScenarioRow&) const = default;
};

void to_json(nlohmann::json& j, const ScenarioRow& r);
void from_json(const nlohmann::json& j, ScenarioRow& r);

struct MetricsReport {
  std::vector<ScenarioRow> rows;
  double overall_iacc = 0.0;
  std::size_t total_trials = 0;
  double fallback_rate = 0.0;
  ConfusionMatrix confusion;
  std::vector<ModeAccuracy> ablation;
  std::uint64_t seed = 0;
  std::vector<TrialResult> results;
  std::optional<nlohmann::json> reference;  // tables.json, echoed

  bool operator==(const MetricsReport&) const = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

MetricsReport build_report(const std::vector<TrialResult>& results, const std::vector<pipeline::Scenario>& scenarios,
                           const affect::AffectConfig& affect, std::uint64_t seed,
                           const std::map<std::string, RaterScores>& ratings = {});

/// Echoes the tables into the report and fills each ablation row's reference.
void attach_reference(MetricsReport& r, const ReferenceTables& ref);

enum class ReportFormat { Text, Structured, Plots };

ReportFormat report_format_from_string(std::string_view s);

/// Text table in the reference column layout, with reference values beside
/// the measured ones when a reference is attached.
std::string render_text(const MetricsReport& r);
/// V-A scatter of every trial over the quadrant diagram.
std::string render_va_svg(const MetricsReport& r, const affect::AffectConfig& affect);
/// Trial latency histogram.
std::string render_latency_svg(const MetricsReport& r);

/// Writes report.txt, report.json, va_scatter.svg and latency_hist.svg as
/// selected; returns the paths written. IoError when `out_dir` is unwritable.
std::vector<std::filesystem::path> emit_report(const MetricsReport& r, const std::set<ReportFormat>& formats,
                                               const std::filesystem::path& out_dir,
                                               const affect::AffectConfig& affect);

}  // namespace hiaer::eval
