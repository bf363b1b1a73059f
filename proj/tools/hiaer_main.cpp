// hiaer: live run, scenario replay, latency measurement, HTTP serve and the
// scenario evaluation, all over one config file.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "hiaer/eval.hpp"

namespace pl = hiaer::pipeline;
namespace ev = hiaer::eval;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

struct Global {
  std::string config = std::string(HIAER_DATA_DIR) + "/config.json";
  std::string mock;
  std::string backend;
  std::string log_level = "info";
};

pl::Resources load(const Global& g) {
  pl::Resources res = pl::load_resources(g.config);
  if (!g.backend.empty()) {
    if (g.backend == "procedural") {
      res.pipeline.generator = hiaer::planner::BackendKind::Procedural;
    } else if (g.backend == "remote") {
      res.pipeline.generator = hiaer::planner::BackendKind::Remote;
    } else {
      throw hiaer::ConfigError("--backend must be procedural or remote");
    }
    res.planner.backend = res.pipeline.generator;
  }
  return res;
}

std::optional<std::filesystem::path> mock_path(const Global& g) {
  if (g.mock.empty()) return std::nullopt;
  return std::filesystem::path(g.mock);
}

// A bare id (S1..S6) names a bundled fixture; anything else is a path.
std::filesystem::path scenario_path(const pl::Resources& res, const std::string& arg) {
  if (std::filesystem::exists(arg)) return arg;
  const auto bundled = res.data_dir / "fixtures" / "scenarios" / arg / "scenario.json";
  if (std::filesystem::exists(bundled)) return bundled;
  throw hiaer::ConfigError("no scenario file or bundled scenario named '" + arg + "'");
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hiaer::ConfigError("cannot write " + path);
  out << body;
}

void wait_for_signal() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

int cmd_run(const Global& g, const std::string& scenario, double duration, const std::string& log_out) {
  auto res = load(g);
  const auto s = pl::Scenario::load(scenario_path(res, scenario));
  std::shared_ptr<hiaer::intent::InferenceClient> client;
  // The scenario's own script stands in for the model unless told otherwise.
  if (g.mock.empty() && res.pipeline.inference_backend == "mock" && !s.mock_trials.empty()) {
    client = std::make_shared<hiaer::intent::ScriptedMockClient>(s.mock_trials.front(),
                                                                 hiaer::intent::ScriptedMockClient::Clock::Real);
  } else {
    client = pl::make_inference_client(res, mock_path(g), hiaer::intent::ScriptedMockClient::Clock::Real);
  }
  auto backend = hiaer::planner::make_backend(res.planner);
  pl::Pipeline p(res, client, std::move(backend));
  p.start();
  p.start_intent_loop();
  spdlog::info("running scenario {} for {:.1f} s with {} inference", s.id, duration > 0 ? duration : s.duration_s,
               client->name());
  std::signal(SIGINT, on_signal);
  std::stop_source stop;
  std::jthread watcher([&](std::stop_token st) {
    while (!st.stop_requested()) {
      if (g_interrupted.load()) stop.request_stop();
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  pl::play_scenario(p, s, duration > 0 ? std::optional<double>(duration) : std::nullopt, stop.get_token());
  p.stop();
  watcher.request_stop();
  if (!log_out.empty()) write_file(log_out, p.channels().log.to_jsonl());
  std::cout << p.metrics().summary(res.pipeline).dump(2) << "\n";
  return 0;
}

int cmd_replay(const Global& g, const std::string& scenario, std::size_t trial, const std::string& modality,
               const std::string& out) {
  const auto res = load(g);
  const auto s = pl::Scenario::load(scenario_path(res, scenario));
  pl::ReplayOptions opts;
  opts.trial = trial;
  if (!modality.empty()) opts.modality = hiaer::intent::modality_from_string(modality);
  if (auto m = mock_path(g)) {
    opts.client = std::make_shared<hiaer::intent::ScriptedMockClient>(hiaer::intent::MockScript::load(*m),
                                                                      hiaer::intent::ScriptedMockClient::Clock::Virtual);
  }
  const auto r = pl::run_replay(s, res, opts);
  if (!out.empty()) write_file(out, r.transcript());
  nlohmann::json summary = r.metrics.summary(res.pipeline);
  summary["scenario"] = s.id;
  summary["trial"] = trial;
  summary["final_primitive"] = r.final_primitive.id;
  nlohmann::json decisions = nlohmann::json::array();
  for (const auto& d : r.decisions) decisions.push_back(d.decision);
  summary["decisions"] = decisions;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_latency(const Global& g, std::size_t trials, bool virtual_clock, bool as_json) {
  const auto res = load(g);
  const auto clock =
      virtual_clock ? hiaer::intent::ScriptedMockClient::Clock::Virtual : hiaer::intent::ScriptedMockClient::Clock::Real;
  auto client = pl::make_inference_client(res, mock_path(g), clock);
  const auto report = pl::measure_latency(res, client, trials);
  std::cout << (as_json ? report.to_json().dump(2) + "\n" : report.to_text());
  return 0;
}

int cmd_serve(const Global& g, const std::string& addr) {
  auto res = load(g);
  const auto [host, port] = pl::parse_address(addr.empty() ? res.pipeline.serve_address : addr);
  auto client = pl::make_inference_client(res, mock_path(g), hiaer::intent::ScriptedMockClient::Clock::Real);
  auto backend = hiaer::planner::make_backend(res.planner);
  pl::Pipeline p(res, client, std::move(backend));
  p.start();
  pl::Server server(p);
  server.start(host, port);
  wait_for_signal();
  server.stop();
  p.stop();
  return 0;
}

struct EvalArgs {
  std::string fixtures;
  std::string scenarios = "all";
  std::string modes = "combined,image_only,prompt_only";
  std::uint64_t seed = 7;
  std::string out = "report";
  std::string ratings;
  std::string formats = "text,structured,plots";
};

int cmd_eval(const Global& g, const EvalArgs& a) {
  const auto res = load(g);
  const std::filesystem::path fixtures = a.fixtures.empty() ? res.data_dir / "fixtures" : std::filesystem::path(a.fixtures);
  const auto scenarios = ev::load_scenarios(fixtures / "scenarios", split(a.scenarios));
  std::map<std::string, ev::RaterScores> ratings;
  if (!a.ratings.empty()) ratings = ev::load_rater_scores(a.ratings);

  auto report = ev::build_report(ev::run_scenarios(res, scenarios, a.seed), scenarios, res.affect, a.seed, ratings);
  std::vector<hiaer::intent::Modality> modes;
  for (const auto& m : split(a.modes)) modes.push_back(hiaer::intent::modality_from_string(m));
  if (!modes.empty()) report.ablation = ev::run_ablation(res, scenarios, modes, a.seed);
  const auto tables = fixtures / "reference" / "tables.json";
  if (std::filesystem::exists(tables)) ev::attach_reference(report, ev::ReferenceTables::load(tables));

  std::set<ev::ReportFormat> formats;
  for (const auto& f : split(a.formats)) formats.insert(ev::report_format_from_string(f));
  for (const auto& p : ev::emit_report(report, formats, a.out, res.affect)) spdlog::info("wrote {}", p.string());
  std::cout << ev::render_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affect-aware intent to whole-body motion pipeline"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "Config file")->check(CLI::ExistingFile);
  app.add_option("--mock-inference", g.mock, "Scripted mock inference file")->check(CLI::ExistingFile);
  app.add_option("--backend", g.backend, "Motion generator backend")->check(CLI::IsMember({"procedural", "remote"}));
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  auto* run = app.add_subcommand("run", "Live pipeline fed from a scenario timeline");
  std::string run_scenario = "S3";
  double run_duration = 0.0;
  std::string run_log;
  run->add_option("--scenario", run_scenario, "Scenario id or file");
  run->add_option("--duration", run_duration, "Seconds to run (default: scenario duration)");
  run->add_option("--log", run_log, "Write the event log as JSON lines");

  auto* replay = app.add_subcommand("replay", "Deterministic virtual-time replay of a scenario");
  std::string replay_scenario;
  std::size_t replay_trial = 0;
  std::string replay_modality;
  std::string replay_out;
  replay->add_option("scenario", replay_scenario, "Scenario id or file")->required();
  replay->add_option("--trial", replay_trial, "Mock trial index");
  replay->add_option("--modality", replay_modality, "combined, image_only or prompt_only");
  replay->add_option("--out", replay_out, "Write the transcript as JSON lines");

  auto* latency = app.add_subcommand("latency", "Per-module latency table");
  std::size_t trials = 100;
  bool virtual_clock = false;
  bool latency_json = false;
  latency->add_option("--trials", trials, "Inference cycles and planner windows to time");
  latency->add_flag("--virtual", virtual_clock, "Use the mock's virtual clock instead of sleeping");
  latency->add_flag("--json", latency_json, "Structured output");

  auto* serve = app.add_subcommand("serve", "HTTP API for the operator console");
  std::string addr;
  serve->add_option("--addr", addr, "host:port (default from config)");

  auto* eval = app.add_subcommand("eval", "Scenario evaluation and modality ablation");
  EvalArgs ea;
  eval->add_option("--fixtures", ea.fixtures, "Fixture directory (default: data/fixtures)");
  eval->add_option("--scenarios", ea.scenarios, "Comma list of scenario ids, or all");
  eval->add_option("--modes", ea.modes, "Comma list of ablation modes; empty skips the ablation");
  eval->add_option("--seed", ea.seed, "Latency seed");
  eval->add_option("--out", ea.out, "Report directory");
  eval->add_option("--ratings", ea.ratings, "Per-scenario rater scores (JSON)")->check(CLI::ExistingFile);
  eval->add_option("--format", ea.formats, "Comma list of text, structured, plots");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*run) return cmd_run(g, run_scenario, run_duration, run_log);
    if (*replay) return cmd_replay(g, replay_scenario, replay_trial, replay_modality, replay_out);
    if (*latency) return cmd_latency(g, trials, virtual_clock, latency_json);
    if (*serve) return cmd_serve(g, addr);
    if (*eval) return cmd_eval(g, ea);
  } catch (const hiaer::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
