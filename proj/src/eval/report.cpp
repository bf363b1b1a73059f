#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hiaer/eval.hpp"

namespace hiaer::eval {

namespace {

intent::IntentCategory category_or_throw(const std::string& s) {
  const auto c = intent::category_from_string(s);
  if (!c) throw FixtureError("unknown intent category '" + s + "'");
  return *c;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const RaterScores& r) {
  j = {{"s_select", opt_json(r.s_select)},
       {"s_affect", opt_json(r.s_affect)},
       {"baseline_s_affect", opt_json(r.baseline_s_affect)}};
}

void from_json(const nlohmann::json& j, RaterScores& r) {
  r.s_select = opt_double(j, "s_select");
  r.s_affect = opt_double(j, "s_affect");
  r.baseline_s_affect = opt_double(j, "baseline_s_affect");
}

void to_json(nlohmann::json& j, const ScenarioRow& r) {
  j = {{"id", r.id},
       {"ground_truth", intent::to_string(r.truth)},
       {"designated_quadrant", r.designated ? nlohmann::json(affect::to_string(*r.designated)) : nlohmann::json()},
       {"trials", r.trials},
       {"correct", r.correct},
       {"i_acc", r.i_acc},
       {"v_avg", r.v_avg},
       {"a_avg", r.a_avg},
       {"mean_quadrant", affect::to_string(r.mean_quadrant)},
       {"fallback_rate", r.fallback_rate},
       {"latency_avg_s", r.latency_avg_s}};
  // Rater scores are echoed only when supplied.
  if (r.ratings) j["ratings"] = *r.ratings;
}

void from_json(const nlohmann::json& j, ScenarioRow& r) {
  r.id = j.at("id").get<std::string>();
  r.truth = category_or_throw(j.at("ground_truth").get<std::string>());
  r.designated.reset();
  if (!j.at("designated_quadrant").is_null()) {
    r.designated = affect::quadrant_from_string(j.at("designated_quadrant").get<std::string>());
  }
  r.trials = j.at("trials").get<std::size_t>();
  r.correct = j.at("correct").get<std::size_t>();
  r.i_acc = j.at("i_acc").get<double>();
  r.v_avg = j.at("v_avg").get<double>();
  r.a_avg = j.at("a_avg").get<double>();
  r.mean_quadrant = affect::quadrant_from_string(j.at("mean_quadrant").get<std::string>());
  r.fallback_rate = j.at("fallback_rate").get<double>();
  r.latency_avg_s = j.at("latency_avg_s").get<double>();
  r.ratings.reset();
  if (j.contains("ratings")) r.ratings = j.at("ratings").get<RaterScores>();
}

void to_json(nlohmann::json& j, const ModeAccuracy& a) {
  j = {{"mode", intent::to_string(a.mode)},
       {"correct", a.correct},
       {"trials", a.trials},
       {"accuracy", a.accuracy},
       {"empty_input", a.empty_input},
       {"reference", opt_json(a.reference)}};
}

void from_json(const nlohmann::json& j, ModeAccuracy& a) {
  a.mode = intent::modality_from_string(j.at("mode").get<std::string>());
  a.correct = j.at("correct").get<std::size_t>();
  a.trials = j.at("trials").get<std::size_t>();
  a.accuracy = j.at("accuracy").get<double>();
  a.empty_input = j.at("empty_input").get<std::vector<std::string>>();
  a.reference = opt_double(j, "reference");
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string percent(double v) { return fixed(100.0 * v, 1) + "%"; }

std::string cell(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "-"; }

const char* kPalette[] = {"#c0392b", "#e67e22", "#27ae60", "#2c3e80", "#7f8c8d", "#8e44ad"};

}  // namespace

void to_json(nlohmann::json& j, const TrialResult& r) {
  j = {{"scenario", r.scenario_id},
       {"trial", r.trial},
       {"outcome", r.outcome},
       {"predicted", intent::to_string(r.predicted)},
       {"confidence", r.confidence},
       {"valence", r.va.valence()},
       {"arousal", r.va.arousal()},
       {"primitive", r.primitive},
       {"fell_back", r.fell_back},
       {"latency_s", r.latency_s},
       {"empty_input", r.empty_input}};
}

void from_json(const nlohmann::json& j, TrialResult& r) {
  r.scenario_id = j.at("scenario").get<std::string>();
  r.trial = j.at("trial").get<std::size_t>();
  r.outcome = j.at("outcome").get<std::string>();
  r.predicted = category_or_throw(j.at("predicted").get<std::string>());
  r.confidence = j.at("confidence").get<double>();
  r.va = affect::VAState::make(j.at("valence").get<double>(), j.at("arousal").get<double>(), affect::RangeMode::Reject);
  r.primitive = j.at("primitive").get<std::string>();
  r.fell_back = j.at("fell_back").get<bool>();
  r.latency_s = j.at("latency_s").get<double>();
  r.empty_input = j.at("empty_input").get<bool>();
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  nlohmann::json labels = nlohmann::json::array();
  for (auto c : intent::kAllCategories) labels.push_back(intent::to_string(c));
  j = {{"seed", r.seed},
       {"overall_i_acc", r.overall_iacc},
       {"total_trials", r.total_trials},
       {"fallback_rate", r.fallback_rate},
       {"scenarios", r.rows},
       {"confusion", {{"labels", labels}, {"counts", r.confusion.counts}}},
       {"ablation", r.ablation},
       {"trials", r.results},
       {"reference", r.reference ? *r.reference : nlohmann::json()}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.seed = j.at("seed").get<std::uint64_t>();
  r.overall_iacc = j.at("overall_i_acc").get<double>();
  r.total_trials = j.at("total_trials").get<std::size_t>();
  r.fallback_rate = j.at("fallback_rate").get<double>();
  r.rows = j.at("scenarios").get<std::vector<ScenarioRow>>();
  r.confusion.counts = j.at("confusion").at("counts").get<decltype(r.confusion.counts)>();
  r.ablation = j.at("ablation").get<std::vector<ModeAccuracy>>();
  r.results = j.at("trials").get<std::vector<TrialResult>>();
  r.reference.reset();
  if (!j.at("reference").is_null()) r.reference = j.at("reference");
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "structured" || s == "json") return ReportFormat::Structured;
  if (s == "plots" || s == "svg") return ReportFormat::Plots;
  throw ConfigError("report format must be text, structured or plots, got '" + std::string(s) + "'");
}

std::string render_text(const MetricsReport& r) {
  std::optional<ReferenceTables> ref;
  if (r.reference) ref = ReferenceTables{*r.reference};
  auto refv = [&](const std::string& id, const char* col) -> std::optional<double> {
    return ref ? ref->scenario_value(id, col) : std::nullopt;
  };
  bool any_ratings = false;
  for (const auto& row : r.rows) any_ratings = any_ratings || row.ratings.has_value();

  std::ostringstream out;
  out << std::left;
  out << std::setw(6) << "Scen" << std::setw(16) << "Truth" << std::setw(8) << "Trials" << std::setw(10) << "I_acc"
      << std::setw(8) << "(ref)" << std::setw(8) << "V_avg" << std::setw(8) << "(ref)" << std::setw(8) << "A_avg"
      << std::setw(8) << "(ref)" << std::setw(24) << "Quadrant" << std::setw(10) << "Fallback";
  if (any_ratings) out << std::setw(10) << "S_select" << std::setw(10) << "S_affect" << std::setw(10) << "Base_aff";
  out << "\n";
  for (const auto& row : r.rows) {
    const auto ri = refv(row.id, "i_acc");
    out << std::setw(6) << row.id << std::setw(16) << intent::to_string(row.truth) << std::setw(8) << row.trials
        << std::setw(10) << percent(row.i_acc) << std::setw(8) << (ri ? percent(*ri) : "-") << std::setw(8)
        << fixed(row.v_avg, 2) << std::setw(8) << cell(refv(row.id, "v_avg"), 2) << std::setw(8)
        << fixed(row.a_avg, 2) << std::setw(8) << cell(refv(row.id, "a_avg"), 2) << std::setw(24)
        << affect::to_string(row.mean_quadrant) << std::setw(10) << percent(row.fallback_rate);
    if (any_ratings) {
      const RaterScores none;
      const auto& s = row.ratings ? *row.ratings : none;
      out << std::setw(10) << cell(s.s_select, 2) << std::setw(10) << cell(s.s_affect, 2) << std::setw(10)
          << cell(s.baseline_s_affect, 2);
    }
    out << "\n";
  }
  out << "Overall I_acc " << percent(r.overall_iacc) << " over " << r.total_trials << " trials; fallback rate "
      << percent(r.fallback_rate) << "; seed " << r.seed << "\n";

  if (ref) {
    out << "\nReference rater scores (echoed, not computed)\n";
    out << std::setw(6) << "Scen" << std::setw(10) << "S_select" << std::setw(10) << "S_affect" << std::setw(10)
        << "Base_aff" << "\n";
    for (const auto& row : r.rows) {
      out << std::setw(6) << row.id << std::setw(10) << cell(refv(row.id, "s_select"), 2) << std::setw(10)
          << cell(refv(row.id, "s_affect"), 2) << std::setw(10) << cell(refv(row.id, "baseline_s_affect"), 2)
          << "\n";
    }
  }

  out << "\nConfusion (rows: truth, columns: acted-on intent)\n" << std::setw(16) << "";
  for (auto c : intent::kAllCategories) out << std::setw(16) << intent::to_string(c);
  out << "\n";
  for (std::size_t i = 0; i < 6; ++i) {
    out << std::setw(16) << intent::to_string(intent::kAllCategories[i]);
    for (std::size_t k = 0; k < 6; ++k) out << std::setw(16) << r.confusion.counts[i][k];
    out << "\n";
  }
  out << "trace/total = " << r.confusion.trace() << "/" << r.confusion.total() << "\n";

  if (!r.ablation.empty()) {
    out << "\nModality ablation\n" << std::setw(14) << "Mode" << std::setw(12) << "Accuracy" << std::setw(10)
        << "(ref)" << std::setw(10) << "Correct" << "Empty inputs\n";
    for (const auto& a : r.ablation) {
      out << std::setw(14) << intent::to_string(a.mode) << std::setw(12) << fixed(a.accuracy, 3) << std::setw(10)
          << cell(a.reference, 2) << std::setw(10) << (std::to_string(a.correct) + "/" + std::to_string(a.trials))
          << a.empty_input.size() << "\n";
    }
  }

  if (ref && ref->doc.contains("module_latency")) {
    const auto& lat = ref->doc.at("module_latency");
    out << "\nReference module latency: video " << lat.value("video_stream_hz", 0.0) << " Hz, inference "
        << lat.value("pi_i_avg_s", 0.0) << " s avg, planner " << lat.value("pi_p_avg_per_window_s", 0.0)
        << " s per window, control " << lat.value("pi_w_hz", 0.0) << " Hz\n";
  }
  return out.str();
}

std::string render_va_svg(const MetricsReport& r, const affect::AffectConfig& affect) {
  const double w = 480, h = 320, m = 40;
  auto x = [&](double v) { return m + (v + 1.0) / 2.0 * (w - 2 * m); };
  auto y = [&](double a) { return h - m - a * (h - 2 * m); };
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  o << "<rect x=\"" << x(-affect.neutral_valence_band) << "\" y=\"" << y(1.0) << "\" width=\""
    << x(affect.neutral_valence_band) - x(-affect.neutral_valence_band) << "\" height=\"" << y(0.0) - y(1.0)
    << "\" fill=\"#eeeeee\"/>\n";
  o << "<line x1=\"" << x(-1) << "\" y1=\"" << y(affect.arousal_split) << "\" x2=\"" << x(1) << "\" y2=\""
    << y(affect.arousal_split) << "\" stroke=\"#999\" stroke-dasharray=\"4,3\"/>\n";
  o << "<line x1=\"" << x(0) << "\" y1=\"" << y(0) << "\" x2=\"" << x(0) << "\" y2=\"" << y(1) << "\" stroke=\"#999\"/>\n";
  o << "<rect x=\"" << x(-1) << "\" y=\"" << y(1) << "\" width=\"" << x(1) - x(-1) << "\" height=\"" << y(0) - y(1)
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  o << "<text x=\"" << x(-0.95) << "\" y=\"" << y(0.95) << "\">Q1</text><text x=\"" << x(0.85) << "\" y=\""
    << y(0.95) << "\">Q2</text><text x=\"" << x(0.85) << "\" y=\"" << y(0.03) << "\">Q3</text><text x=\""
    << x(-0.95) << "\" y=\"" << y(0.03) << "\">Q4</text>\n";
  o << "<text x=\"" << w / 2 - 20 << "\" y=\"" << h - 10 << "\">valence</text>\n";
  o << "<text x=\"8\" y=\"" << h / 2 << "\" transform=\"rotate(-90 8 " << h / 2 << ")\">arousal</text>\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const char* color = kPalette[i % 6];
    for (const auto& t : r.results) {
      if (t.scenario_id != r.rows[i].id) continue;
      o << "<circle cx=\"" << x(t.va.valence()) << "\" cy=\"" << y(t.va.arousal()) << "\" r=\"3\" fill=\"" << color
        << "\" fill-opacity=\"0.6\"/>\n";
    }
    o << "<rect x=\"" << x(r.rows[i].v_avg) - 4 << "\" y=\"" << y(r.rows[i].a_avg) - 4
      << "\" width=\"8\" height=\"8\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << w - m + 4 << "\" y=\"" << m + 14 * static_cast<double>(i) << "\" fill=\"" << color << "\">"
      << r.rows[i].id << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string render_latency_svg(const MetricsReport& r) {
  const double w = 480, h = 240, m = 40, bin = 0.1;
  std::vector<double> lat;
  for (const auto& t : r.results) {
    if (!t.empty_input) lat.push_back(t.latency_s);
  }
  const double lo = lat.empty() ? 0.0 : std::floor(*std::min_element(lat.begin(), lat.end()) / bin) * bin;
  const double hi = lat.empty() ? 1.0 : std::max(lo + bin, *std::max_element(lat.begin(), lat.end()) + 1e-9);
  const auto nbins = static_cast<std::size_t>(std::ceil((hi - lo) / bin));
  std::vector<std::size_t> counts(std::max<std::size_t>(nbins, 1), 0);
  for (double v : lat) counts[std::min(counts.size() - 1, static_cast<std::size_t>((v - lo) / bin))]++;
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
  const double bw = (w - 2 * m) / static_cast<double>(counts.size());
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double bh = (h - 2 * m) * static_cast<double>(counts[i]) / static_cast<double>(peak);
    o << "<rect x=\"" << m + bw * static_cast<double>(i) << "\" y=\"" << h - m - bh << "\" width=\"" << bw - 1
      << "\" height=\"" << bh << "\" fill=\"#2c3e80\"/>\n";
  }
  o << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m << "\" stroke=\"#333\"/>\n";
  o << "<text x=\"" << m << "\" y=\"" << h - m + 14 << "\">" << lo << " s</text>\n";
  o << "<text x=\"" << w - m - 30 << "\" y=\"" << h - m + 14 << "\">" << hi << " s</text>\n";
  o << "<text x=\"" << m << "\" y=\"" << m - 10 << "\">inference latency, n=" << lat.size() << ", peak " << peak
    << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_report(const MetricsReport& r, const std::set<ReportFormat>& formats,
                                               const std::filesystem::path& out_dir,
                                               const affect::AffectConfig& affect) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
    out.close();
    if (!out) throw IoError("write failed for " + path.string());
    written.push_back(path);
  };
  if (formats.count(ReportFormat::Text) != 0) write("report.txt", render_text(r));
  if (formats.count(ReportFormat::Structured) != 0) write("report.json", nlohmann::json(r).dump(2) + "\n");
  if (formats.count(ReportFormat::Plots) != 0) {
    write("va_scatter.svg", render_va_svg(r, affect));
    write("latency_hist.svg", render_latency_svg(r));
  }
  return written;
}

}  // namespace hiaer::eval
