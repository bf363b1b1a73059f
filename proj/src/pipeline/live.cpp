#include <spdlog/spdlog.h>
#include <sys/resource.h>
#include <pthread.h>
#include <sched.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>

#include "hiaer/pipeline.hpp"

namespace hiaer::pipeline {

namespace {

using SteadyClock = std::chrono::steady_clock;

SteadyClock::time_point at(SteadyClock::time_point t0, double seconds) {
  return t0 + std::chrono::duration_cast<SteadyClock::duration>(std::chrono::duration<double>(seconds));
}

// Interruptible sleep; false when stop was requested.
bool sleep_until(std::stop_token st, SteadyClock::time_point deadline) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  return !cv.wait_until(lock, st, deadline, [] { return false; }) && !st.stop_requested();
}

// Compute-heavy loops yield to the control thread on a busy core.
void lower_priority() {
  if (setpriority(PRIO_PROCESS, static_cast<id_t>(gettid()), 10) != 0) {
    spdlog::debug("could not lower worker thread priority");
  }
}

// Real-time class for the control loop when permitted; nice otherwise.
void raise_priority() {
  sched_param sp{};
  sp.sched_priority = sched_get_priority_min(SCHED_FIFO);
  if (pthread_setschedparam(pthread_self(), SCHED_FIFO, &sp) == 0) return;
  if (setpriority(PRIO_PROCESS, static_cast<id_t>(gettid()), -5) != 0) {
    spdlog::debug("control thread runs at default priority");
  }
}

// Coarse sleep, then yield until the deadline: timer wakeups alone can land
// milliseconds late on a loaded core.
void wake_at(SteadyClock::time_point deadline) {
  std::this_thread::sleep_until(deadline - std::chrono::microseconds(1500));
  while (SteadyClock::now() < deadline) std::this_thread::yield();
}

}  // namespace

Pipeline::Pipeline(Resources res, std::shared_ptr<intent::InferenceClient> client,
                   std::unique_ptr<planner::GeneratorBackend> backend, ControlSink sink)
    : res_(std::move(res)),
      client_(std::move(client)),
      backend_(backend ? std::move(backend) : planner::make_backend(res_.planner)),
      engine_(res_.preprompt, client_, res_.intent),
      intent_(res_, engine_, ch_, [this] { return now(); }),
      planner_(res_, *backend_, ch_, [this] { return now(); }),
      control_(res_, ch_, [this] { return now(); }, std::move(sink)) {
  res_.pipeline.validate();
  engine_.set_clock([this] { return now(); });
}

Pipeline::~Pipeline() { stop(); }

double Pipeline::now() const {
  return std::max(0.0, std::chrono::duration<double>(SteadyClock::now() - t0_).count());
}

void Pipeline::start() {
  if (running_.exchange(true)) return;
  // Lead time so the first ticks are not scheduled before the threads exist.
  t0_ = SteadyClock::now() + std::chrono::milliseconds(20);
  planner_thread_ = std::jthread([this](std::stop_token st) { planner_loop(st); });
  control_thread_ = std::jthread([this](std::stop_token st) { control_loop(st); });
}

void Pipeline::start_intent_loop() {
  if (!running_) throw ConfigError("start the pipeline before the intent loop");
  if (intent_thread_.joinable()) return;
  intent_thread_ = std::jthread([this](std::stop_token st) { intent_loop(st); });
}

void Pipeline::stop() {
  if (!running_.exchange(false)) return;
  for (auto* t : {&intent_thread_, &planner_thread_, &control_thread_}) {
    t->request_stop();
    if (t->joinable()) t->join();
  }
  ch_.log.close();
}

void Pipeline::planner_loop(std::stop_token st) {
  lower_priority();
  const double period = res_.planner.window_seconds();
  std::size_t k = 0;
  while (!st.stop_requested()) {
    if (!sleep_until(st, at(t0_, static_cast<double>(k) * period))) break;
    try {
      planner_.step();
    } catch (const Error& e) {
      // Control holds the last pose until the backend recovers.
      spdlog::warn("planner window {} failed [{}]: {}", k, e.code(), e.what());
    }
    const auto behind = static_cast<std::size_t>(std::floor(now() / period));
    k = std::max(k + 1, behind + 1);
  }
}

void Pipeline::control_loop(std::stop_token st) {
  raise_priority();
  const double period = 1.0 / res_.pipeline.control_rate;
  for (std::size_t k = 0; !st.stop_requested(); ++k) {
    const double scheduled = static_cast<double>(k) * period;
    wake_at(at(t0_, scheduled));
    try {
      control_.tick(scheduled);
    } catch (const Error& e) {
      spdlog::error("control tick {} failed [{}]: {}", k, e.code(), e.what());
      break;
    }
  }
}

void Pipeline::intent_loop(std::stop_token st) {
  lower_priority();
  const double poll = 0.5 / res_.pipeline.video_rate;
  while (!st.stop_requested()) {
    std::unique_lock lock(intent_mu_);
    std::optional<IntentStage::Cycle> c;
    try {
      c = intent_.begin();
    } catch (const Error& e) {
      spdlog::warn("intent input rejected [{}]: {}", e.code(), e.what());
    }
    if (!c) {
      lock.unlock();
      if (!sleep_until(st, SteadyClock::now() + std::chrono::duration_cast<SteadyClock::duration>(
                                                       std::chrono::duration<double>(poll)))) {
        break;
      }
      continue;
    }
    intent::InferOutcome o;
    try {
      o = intent_.call(*c);
    } catch (const Error& e) {
      // Treated like a timeout: fallback now, next cycle with fresh input.
      o = intent::TransportFailed{e.what(), 0.0};
    }
    intent_.finish(*c, o);
  }
}

SubmitResult Pipeline::submit(intent::MultimodalInput input) {
  std::unique_lock lock(intent_mu_, std::try_to_lock);
  if (!lock.owns_lock() || engine_.busy()) throw PipelineBusyError();
  input.validate(res_.pipeline.frames_per_inference);
  for (auto& f : input.frames) {
    if (f.timestamp == 0.0) f.timestamp = now();
  }
  const IntentStage::Cycle c = intent_.begin_with(std::move(input));
  intent::InferOutcome o;
  try {
    o = intent_.call(c);
  } catch (const intent::EngineBusyError&) {
    throw PipelineBusyError();
  } catch (const intent::TransportError& e) {
    o = intent::TransportFailed{e.what(), 0.0};
  }
  return {o, intent_.finish(c, o)};
}

DecisionMsg Pipeline::override_primitive(const std::string& primitive_id) {
  const auto& p = res_.vocab.at(primitive_id);
  if (p.safety_class == affect::SafetyClass::Prohibited) {
    throw ConfigError("primitive '" + primitive_id + "' is prohibited and cannot be forced");
  }
  DecisionMsg msg;
  msg.cycle = ch_.next_cycle.fetch_add(1);
  msg.decision.output = intent::synthesized_fallback_output(res_.affect, "operator override");
  msg.decision.output.primitive_token = p.display_text;
  msg.decision.primitive = p;
  msg.decision.style = affect::modulate_style(res_.vocab, p, affect::neutral_va());
  msg.decision.reason = intent::FallbackReason::Override;
  msg.decision.operator_forced = true;
  msg.input_timestamp = now();
  msg.published_at = msg.input_timestamp;
  EventRecord r;
  r.t = msg.published_at;
  r.stage = "operator";
  r.kind = EventKind::PrimitiveSwitch;
  r.detail = {{"cycle", msg.cycle}, {"requested", primitive_id}, {"operator_forced", true}};
  ch_.log.append(std::move(r));
  ch_.decisions.write(msg);
  return msg;
}

void Pipeline::push_frame(std::string bytes, std::string encoding) {
  intent::ImageFrame f;
  f.timestamp = now();
  f.encoding = std::move(encoding);
  EventRecord r;
  r.t = f.timestamp;
  r.stage = "video";
  r.kind = EventKind::FrameIn;
  r.digest = intent::digest_hex(bytes);
  r.detail = {{"bytes", bytes.size()}};
  f.bytes = std::move(bytes);
  ch_.inputs.push_frame(std::move(f));
  ch_.metrics.update([](PipelineMetrics& m) { ++m.frames_in; });
  ch_.log.append(std::move(r));
}

void Pipeline::push_utterance(std::string text) {
  EventRecord r;
  r.t = now();
  r.stage = "video";
  r.kind = EventKind::FrameIn;
  r.digest = intent::digest_hex(text);
  r.detail = {{"utterance", text}};
  ch_.inputs.push_utterance(std::move(text));
  ch_.log.append(std::move(r));
}

void play_scenario(Pipeline& p, const Scenario& s, std::optional<double> duration_s, std::stop_token stop) {
  const double duration = duration_s.value_or(s.duration_s);
  const double period = 1.0 / p.resources().pipeline.video_rate;
  const auto t0 = SteadyClock::now();
  std::size_t next_utterance = 0;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * period;
    if (t > duration) break;
    if (!sleep_until(stop, at(t0, t))) break;
    for (; next_utterance < s.inputs.size() && s.inputs[next_utterance].t <= t; ++next_utterance) {
      if (s.inputs[next_utterance].utterance) p.push_utterance(*s.inputs[next_utterance].utterance);
    }
    const ScenarioInput* active = nullptr;
    for (const auto& in : s.inputs) {
      if (in.t <= t && !in.images.empty()) active = &in;
    }
    if (active != nullptr) {
      const auto& img = active->images[k % active->images.size()];
      p.push_frame(img.bytes, img.encoding);
    }
  }
}

}  // namespace hiaer::pipeline
