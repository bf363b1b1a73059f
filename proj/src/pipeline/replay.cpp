#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hiaer/pipeline.hpp"

namespace hiaer::pipeline {

ScenarioParseError::ScenarioParseError(const std::string& field, std::size_t line, const std::string& message)
    : Error("scenario_parse",
            (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                (field.empty() ? std::string() : field + ": ") + message),
      field_(field),
      line_(line) {}

namespace {

template <class T>
T field_as(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioParseError(path, 0, std::string("wrong type (") + e.what() + ")");
  }
}

const nlohmann::json& required(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ScenarioParseError(path + key, 0, "missing required field");
  return j.at(key);
}

std::string read_file(const std::filesystem::path& p, const std::string& field) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ScenarioParseError(field, 0, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

intent::MockScript mock_from(const nlohmann::json& j, const std::filesystem::path& base, const std::string& path) {
  try {
    return intent::MockScript::from_json(j, base);
  } catch (const Error& e) {
    throw ScenarioParseError(path, 0, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioParseError(path, 0, e.what());
  }
}

}  // namespace

Scenario Scenario::parse(std::string_view text, const std::filesystem::path& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n')) + 1;
    throw ScenarioParseError("", line, e.what());
  }
  if (!j.is_object()) throw ScenarioParseError("", 1, "scenario must be a JSON object");

  Scenario s;
  s.id = field_as<std::string>(required(j, "id", ""), "id");
  s.description = field_as<std::string>(j.value("description", nlohmann::json("")), "description");
  if (j.contains("ground_truth_intent")) {
    const auto name = field_as<std::string>(j.at("ground_truth_intent"), "ground_truth_intent");
    s.ground_truth = intent::category_from_string(name);
    if (!s.ground_truth) throw ScenarioParseError("ground_truth_intent", 0, "unknown category '" + name + "'");
  }
  if (j.contains("designated_quadrant")) {
    try {
      s.designated_quadrant = affect::quadrant_from_string(field_as<std::string>(j.at("designated_quadrant"), "designated_quadrant"));
    } catch (const Error& e) {
      throw ScenarioParseError("designated_quadrant", 0, e.what());
    }
  }
  s.trials = field_as<std::size_t>(j.value("trials", nlohmann::json(15)), "trials");
  if (s.trials == 0) throw ScenarioParseError("trials", 0, "must be >= 1");
  s.duration_s = field_as<double>(j.value("duration_s", nlohmann::json(4.0)), "duration_s");
  if (!(s.duration_s > 0.0)) throw ScenarioParseError("duration_s", 0, "must be positive");
  s.max_inferences = field_as<std::size_t>(j.value("max_inferences", nlohmann::json(0)), "max_inferences");

  const auto& inputs = required(j, "inputs", "");
  if (!inputs.is_array() || inputs.empty()) throw ScenarioParseError("inputs", 0, "must be a nonempty array");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string path = "inputs[" + std::to_string(i) + "].";
    const auto& in = inputs[i];
    ScenarioInput si;
    si.t = field_as<double>(in.value("t", nlohmann::json(0.0)), path + "t");
    if (!(si.t >= 0.0)) throw ScenarioParseError(path + "t", 0, "must be >= 0");
    if (in.contains("images")) {
      const auto& imgs = in.at("images");
      if (!imgs.is_array()) throw ScenarioParseError(path + "images", 0, "must be an array of paths");
      for (std::size_t k = 0; k < imgs.size(); ++k) {
        const std::string fpath = path + "images[" + std::to_string(k) + "]";
        const std::filesystem::path rel = field_as<std::string>(imgs[k], fpath);
        intent::ImageFrame f;
        f.bytes = read_file(rel.is_absolute() ? rel : base / rel, fpath);
        const auto ext = rel.extension().string();
        f.encoding = ext == ".jpg" || ext == ".jpeg" ? "jpeg" : "png";
        si.images.push_back(std::move(f));
      }
    }
    if (in.contains("utterance")) si.utterance = field_as<std::string>(in.at("utterance"), path + "utterance");
    if (si.images.empty() && !si.utterance) throw ScenarioParseError(path, 0, "input has neither images nor utterance");
    s.inputs.push_back(std::move(si));
  }
  std::stable_sort(s.inputs.begin(), s.inputs.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

  if (j.contains("mock_trials")) {
    const auto& m = j.at("mock_trials");
    if (!m.is_array() || m.empty()) throw ScenarioParseError("mock_trials", 0, "must be a nonempty array");
    for (std::size_t k = 0; k < m.size(); ++k) s.mock_trials.push_back(mock_from(m[k], base, "mock_trials[" + std::to_string(k) + "]"));
  } else if (j.contains("mock")) {
    s.mock_trials.push_back(mock_from(j.at("mock"), base, "mock"));
  }
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.parent_path());
}

std::string ReplayResult::transcript() const {
  std::ostringstream out;
  for (const auto& r : events) out << nlohmann::json(r).dump() << "\n";
  return out.str();
}

namespace {

using Micros = std::int64_t;

Micros to_us(double s) { return static_cast<Micros>(std::llround(s * 1e6)); }

// Same-time ordering: inputs, then intent, planner, control.
enum Phase { kVideo = 0, kUtterance, kIntentDone, kPlanner, kControl };

}  // namespace

ReplayResult run_replay(const Scenario& s, const Resources& res, const ReplayOptions& opts) {
  std::shared_ptr<intent::InferenceClient> client;
  if (opts.client) {
    client = *opts.client;
  } else {
    if (s.mock_trials.empty()) throw ConfigError("scenario " + s.id + " has no mock script");
    client = std::make_shared<intent::ScriptedMockClient>(s.mock_trials[opts.trial % s.mock_trials.size()],
                                                          intent::ScriptedMockClient::Clock::Virtual);
  }

  Micros now_us = 0;
  const Clock clock = [&now_us] { return static_cast<double>(now_us) / 1e6; };

  Channels ch;
  intent::IntentEngine engine(res.preprompt, client, res.intent);
  engine.set_clock(clock);
  IntentStage intent_stage(res, engine, ch, clock, opts.modality);
  auto backend = planner::make_backend(res.planner);
  PlannerStage planner_stage(res, *backend, ch, clock);
  ControlStage control_stage(res, ch, clock);

  const Micros end = to_us(s.duration_s);
  const Micros video_period = to_us(1.0 / res.pipeline.video_rate);
  const Micros planner_period = to_us(res.planner.window_seconds());
  const Micros control_period = to_us(1.0 / res.pipeline.control_rate);

  ReplayResult out;
  Micros next_video = 0;
  Micros next_planner = 0;
  Micros next_control = 0;
  std::size_t next_utterance = 0;
  std::size_t video_k = 0;
  struct InFlight {
    IntentStage::Cycle cycle;
    intent::InferOutcome outcome;
    Micros done_at;
  };
  std::optional<InFlight> in_flight;

  auto utterance_time = [&]() -> std::optional<Micros> {
    while (next_utterance < s.inputs.size() && !s.inputs[next_utterance].utterance) ++next_utterance;
    if (next_utterance >= s.inputs.size()) return std::nullopt;
    return to_us(s.inputs[next_utterance].t);
  };

  auto try_start = [&] {
    if (in_flight) return;
    if (s.max_inferences > 0 && intent_stage.cycles() >= s.max_inferences) return;
    auto c = intent_stage.begin();
    if (!c) return;
    intent::InferOutcome o;
    try {
      o = intent_stage.call(*c);
    } catch (const intent::TransportError& e) {
      o = intent::TransportFailed{e.what(), 0.0};
    }
    const Micros done = now_us + to_us(intent::outcome_latency(o));
    in_flight = InFlight{std::move(*c), std::move(o), done};
  };

  const Micros never = std::numeric_limits<Micros>::max();
  while (true) {
    std::pair<Micros, int> next{never, 0};
    auto consider = [&](Micros t, int phase) {
      if (t < next.first || (t == next.first && phase < next.second)) next = {t, phase};
    };
    consider(next_video, kVideo);
    if (auto u = utterance_time()) consider(*u, kUtterance);
    if (in_flight) consider(in_flight->done_at, kIntentDone);
    consider(next_planner, kPlanner);
    if (opts.control) consider(next_control, kControl);
    if (next.first > end) break;
    now_us = next.first;

    switch (next.second) {
      case kVideo: {
        const ScenarioInput* active = nullptr;
        for (const auto& in : s.inputs) {
          if (to_us(in.t) <= now_us && !in.images.empty()) active = &in;
        }
        if (active != nullptr) {
          intent::ImageFrame f = active->images[video_k % active->images.size()];
          f.timestamp = clock();
          if (opts.log_frames) {
            EventRecord r;
            r.t = f.timestamp;
            r.stage = "video";
            r.kind = EventKind::FrameIn;
            r.digest = intent::digest_hex(f.bytes);
            r.detail = {{"bytes", f.bytes.size()}};
            ch.log.append(std::move(r));
          }
          ch.inputs.push_frame(std::move(f));
          ch.metrics.update([](PipelineMetrics& m) { ++m.frames_in; });
        }
        ++video_k;
        next_video += video_period;
        break;
      }
      case kUtterance: {
        const std::string& text = *s.inputs[next_utterance].utterance;
        EventRecord r;
        r.t = clock();
        r.stage = "video";
        r.kind = EventKind::FrameIn;
        r.digest = intent::digest_hex(text);
        r.detail = {{"utterance", text}};
        ch.log.append(std::move(r));
        ch.inputs.push_utterance(text);
        ++next_utterance;
        break;
      }
      case kIntentDone: {
        InFlight f = std::move(*in_flight);
        in_flight.reset();
        out.decisions.push_back(intent_stage.finish(f.cycle, f.outcome));
        out.outcomes.push_back(std::move(f.outcome));
        break;
      }
      case kPlanner:
        planner_stage.step();
        next_planner += planner_period;
        break;
      case kControl:
        control_stage.tick(clock());
        next_control += control_period;
        break;
      default:
        break;
    }
    // Start inference only once every input at this instant has landed.
    Micros next_input = next_video;
    if (auto u = utterance_time()) next_input = std::min(next_input, *u);
    if (in_flight) next_input = std::min(next_input, in_flight->done_at);
    if (next_input > now_us) try_start();
  }

  out.events = ch.log.records();
  out.metrics = ch.metrics.snapshot();
  out.final_primitive = planner_stage.state().active.primitive;
  out.final_style = planner_stage.state().active.style;
  out.projection_empty = intent_stage.projection_empty();
  return out;
}

}  // namespace hiaer::pipeline
