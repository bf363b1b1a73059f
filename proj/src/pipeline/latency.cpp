#include <chrono>
#include <iomanip>
#include <sstream>

#include "hiaer/pipeline.hpp"

namespace hiaer::pipeline {

LatencyReport measure_latency(const Resources& res, std::shared_ptr<intent::InferenceClient> client,
                              std::size_t trials) {
  if (trials == 0) throw ConfigError("measure_latency needs trials >= 1");
  LatencyReport rep;
  rep.trials = trials;
  rep.config = res.pipeline;

  intent::IntentEngine engine(res.preprompt, std::move(client), res.intent);
  intent::MultimodalInput input;
  input.utterance = "A person in front of the robot raises a hand.";
  std::vector<double> inference;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto o = engine.infer(input, std::chrono::duration<double>(res.pipeline.inference_timeout_s));
    if (std::holds_alternative<intent::TimeoutExpired>(o)) {
      ++rep.timeouts;
    } else {
      inference.push_back(intent::outcome_latency(o));
    }
  }
  rep.inference = summarize(std::move(inference));

  auto backend = planner::make_backend(res.planner);
  auto state = planner::initialize(res.planner, res.vocab.at(res.affect.fallback_primitive_id));
  const auto& wave = res.vocab.resolve("wave");
  planner::switch_primitive(state, wave, affect::modulate_style(res.vocab, wave, affect::neutral_va()));
  std::vector<double> plan;
  std::vector<double> rt;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto w = planner::step(state, *backend, res.planner);
    const auto t1 = std::chrono::steady_clock::now();
    (void)retarget::retarget_clip(res.net, w.frames, res.robot);
    const auto t2 = std::chrono::steady_clock::now();
    plan.push_back(std::chrono::duration<double>(t1 - t0).count());
    rt.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  rep.planner_window = summarize(std::move(plan));
  rep.retarget_window = summarize(std::move(rt));
  return rep;
}

nlohmann::json LatencyReport::to_json() const {
  return {{"video_stream_hz", config.video_rate},
          {"pi_i_s", pipeline::to_json(inference)},
          {"pi_p_per_window_s", pipeline::to_json(planner_window)},
          {"retarget_per_window_s", pipeline::to_json(retarget_window)},
          {"pi_w_hz", config.control_rate},
          {"trials", trials},
          {"timeouts", timeouts}};
}

std::string LatencyReport::to_text() const {
  std::ostringstream out;
  out << std::fixed;
  auto row = [&](const char* name, const SummaryStats& s, const char* unit) {
    out << std::left << std::setw(22) << name;
    if (s.count == 0) {
      out << "n/a\n";
      return;
    }
    out << std::setprecision(4) << s.avg << " " << unit << " (avg)  median " << s.median << "  range " << s.min
        << " - " << s.max << "  n=" << s.count << "\n";
  };
  out << std::left << std::setw(22) << "Module" << "Latency\n";
  out << std::setw(22) << "Video stream" << std::setprecision(0) << config.video_rate << " Hz\n";
  row("pi_i (inference)", inference, "s");
  row("pi_p (per 8 frames)", planner_window, "s");
  row("retarget (per 8)", retarget_window, "s");
  out << std::setw(22) << "pi_w (control)" << std::setprecision(0) << config.control_rate << " Hz\n";
  if (timeouts > 0) out << "timeouts: " << timeouts << " of " << trials << "\n";
  return out.str();
}

}  // namespace hiaer::pipeline
