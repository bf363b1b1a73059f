#include <algorithm>
#include <chrono>
#include <cmath>

#include "hiaer/pipeline.hpp"

namespace hiaer::pipeline {

namespace {

std::string input_digest(const intent::MultimodalInput& in) {
  std::string acc = intent::summarize_input(in);
  for (const auto& f : in.frames) acc += intent::digest_hex(f.bytes);
  return intent::digest_hex(acc);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// --- intent -----------------------------------------------------------------

IntentStage::IntentStage(const Resources& res, intent::IntentEngine& engine, Channels& ch, Clock clock,
                         std::optional<intent::Modality> modality)
    : res_(res), engine_(engine), ch_(ch), clock_(std::move(clock)), modality_(modality) {}

std::optional<IntentStage::Cycle> IntentStage::begin() {
  const std::size_t n = res_.pipeline.frames_per_inference;
  auto sample = ch_.inputs.sample(n, last_used_ts_, n);
  if (!sample) return std::nullopt;
  for (const auto& f : sample->input.frames) last_used_ts_ = std::max(last_used_ts_, f.timestamp);
  if (sample->dropped > 0) ch_.metrics.update([&](PipelineMetrics& m) { m.dropped_stale_inputs += sample->dropped; });
  intent::MultimodalInput input = std::move(sample->input);
  if (modality_) {
    try {
      input = intent::select_modality(input, *modality_);
    } catch (const EmptyInputError&) {
      projection_empty_ = true;
      return std::nullopt;
    }
  }
  const double ts = input.has_frames() ? input.newest_timestamp() : clock_();
  Cycle c = begin_with(std::move(input));
  c.input_timestamp = ts;
  return c;
}

IntentStage::Cycle IntentStage::begin_with(intent::MultimodalInput input) {
  Cycle c;
  c.id = ch_.next_cycle.fetch_add(1);
  c.started_at = clock_();
  c.input_timestamp = c.started_at;
  for (const auto& f : input.frames) last_used_ts_ = std::max(last_used_ts_, f.timestamp);
  c.input = std::move(input);
  ++cycles_;
  ch_.metrics.update([](PipelineMetrics& m) { ++m.inferences_started; });
  EventRecord r;
  r.t = c.started_at;
  r.stage = "intent";
  r.kind = EventKind::InferenceStart;
  r.digest = input_digest(c.input);
  r.detail = {{"cycle", c.id},
              {"frames", c.input.frames.size()},
              {"has_text", c.input.has_text()},
              {"input_timestamp", c.input_timestamp}};
  ch_.log.append(std::move(r));
  return c;
}

intent::InferOutcome IntentStage::call(const Cycle& c) {
  return engine_.infer(c.input, std::chrono::duration<double>(res_.pipeline.inference_timeout_s));
}

DecisionMsg IntentStage::finish(const Cycle& c, const intent::InferOutcome& o) {
  const double now = clock_();
  const std::string kind(intent::outcome_kind(o));
  const double latency = intent::outcome_latency(o);
  const bool timed_out = std::holds_alternative<intent::TimeoutExpired>(o);
  const bool failed = std::holds_alternative<intent::TransportFailed>(o);
  ch_.metrics.update([&](PipelineMetrics& m) {
    if (timed_out) {
      ++m.timeouts;
    } else if (failed) {
      ++m.failures;
    } else {
      ++m.inferences_completed;
      m.inference_latency_s.push_back(latency);
    }
  });

  EventRecord done;
  done.t = now;
  done.stage = "intent";
  done.kind = timed_out ? EventKind::Timeout : EventKind::InferenceDone;
  done.detail = {{"cycle", c.id}, {"outcome", kind}, {"latency_s", latency}};
  if (const auto* ok = std::get_if<intent::InferSuccess>(&o)) {
    done.digest = intent::digest_hex(ok->output.raw);
    done.detail["output"] = ok->output;
  } else if (const auto* p = std::get_if<intent::ParseFailed>(&o)) {
    done.digest = intent::digest_hex(p->raw);
    done.detail["error"] = p->code;
  } else if (const auto* t = std::get_if<intent::TransportFailed>(&o)) {
    done.detail["error"] = t->message;
  }
  ch_.log.append(std::move(done));

  DecisionMsg msg;
  msg.cycle = c.id;
  msg.decision = intent::decide(o, res_.vocab, res_.affect);
  msg.input_timestamp = c.input_timestamp;
  msg.published_at = now;
  if (msg.decision.fell_back) {
    ch_.metrics.update([](PipelineMetrics& m) { ++m.fallbacks; });
    EventRecord fb;
    fb.t = now;
    fb.stage = "intent";
    fb.kind = EventKind::Fallback;
    fb.detail = {{"cycle", c.id},
                 {"reason", intent::to_string(msg.decision.reason)},
                 {"primitive", msg.decision.primitive.id}};
    ch_.log.append(std::move(fb));
  }
  ch_.decisions.write(msg);
  return msg;
}

// --- planner ----------------------------------------------------------------

PlannerStage::PlannerStage(const Resources& res, planner::GeneratorBackend& backend, Channels& ch, Clock clock)
    : res_(res),
      backend_(backend),
      ch_(ch),
      clock_(std::move(clock)),
      state_(planner::initialize(res.planner, res.vocab.at(res.affect.fallback_primitive_id))) {}

WindowMsg PlannerStage::step() {
  if (auto d = ch_.decisions.take_newer(seen_)) {
    if (d->cycle <= applied_cycle_) {
      ch_.metrics.update([](PipelineMetrics& m) { ++m.stale_decisions_rejected; });
    } else {
      applied_cycle_ = d->cycle;
      const auto& cmd = state_.active;
      const bool changed = !(cmd.primitive == d->decision.primitive) || !(cmd.style == d->decision.style) ||
                           cmd.operator_forced != d->decision.operator_forced;
      if (changed) {
        planner::switch_primitive(state_, d->decision);
        pending_reaction_ = d->input_timestamp;
        EventRecord r;
        r.t = clock_();
        r.stage = "planner";
        r.kind = EventKind::PrimitiveSwitch;
        r.detail = {{"cycle", d->cycle},
                    {"primitive", d->decision.primitive.id},
                    {"style", d->decision.style},
                    {"operator_forced", d->decision.operator_forced},
                    {"reason", intent::to_string(d->decision.reason)},
                    {"command_seq", state_.active.seq}};
        ch_.log.append(std::move(r));
      }
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  planner::PlannerWindow w = planner::step(state_, backend_, res_.planner);
  const double plan_s = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  WindowMsg msg;
  msg.robot = retarget::retarget_clip(res_.net, w.frames, res_.robot);
  const double retarget_s = seconds_since(t1);
  msg.window = std::move(w);
  msg.emitted_at = clock_();

  std::string bytes;
  for (const auto& f : msg.window.frames.frames) {
    const motion::FrameVector v = motion::encode_frame(f);
    bytes.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
  EventRecord r;
  r.t = msg.emitted_at;
  r.stage = "planner";
  r.kind = EventKind::WindowEmitted;
  r.digest = intent::digest_hex(bytes);
  r.detail = {{"index", msg.window.index},
              {"first_frame", msg.window.first_frame},
              {"primitive", msg.window.command.primitive.id},
              {"command_seq", msg.window.command.seq},
              {"operator_forced", msg.window.command.operator_forced},
              {"seam", msg.window.seam},
              {"unknown_text", msg.window.unknown_text}};

  std::optional<double> reaction;
  if (pending_reaction_) {
    reaction = msg.emitted_at - *pending_reaction_;
    r.detail["reaction_s"] = *reaction;
    pending_reaction_.reset();
  }
  ch_.metrics.update([&](PipelineMetrics& m) {
    m.planner_window_s.push_back(plan_s);
    m.retarget_window_s.push_back(retarget_s);
    ++m.windows_emitted;
    if (reaction) m.reaction_time_s.push_back(*reaction);
  });
  ch_.log.append(std::move(r));
  ch_.store.put(msg);
  ch_.windows.write(msg);
  return msg;
}

// --- control ----------------------------------------------------------------

namespace {

constexpr std::size_t kControlFrameCapacity = 64;

wbc::RobotState stand_state(const Resources& res) {
  wbc::RobotState s;
  s.q = res.robot.defaults();
  s.root.position.z() = res.wbc.reward.target_base_height;
  return s;
}

}  // namespace

ControlStage::ControlStage(const Resources& res, Channels& ch, Clock clock, ControlSink sink)
    : res_(res),
      ch_(ch),
      clock_(std::move(clock)),
      sink_(std::move(sink)),
      sim_(res.wbc.sim, res.wbc.gains, stand_state(res)),
      target_(res.robot.defaults()) {}

wbc::JointVector ControlStage::reference_at(double t) const {
  if (frames_.empty()) return res_.robot.defaults();
  const double u = (t - res_.pipeline.playout_delay_s) * res_.pipeline.planner_fps - static_cast<double>(base_);
  if (u <= 0.0) return frames_.front();
  const auto k = static_cast<std::size_t>(std::floor(u));
  if (k + 1 >= frames_.size()) return frames_.back();
  const double frac = u - static_cast<double>(k);
  if (frac == 0.0) return frames_[k];
  return (1.0 - frac) * frames_[k] + frac * frames_[k + 1];
}

void ControlStage::tick(double scheduled) {
  const double now = clock_();
  if (auto w = ch_.windows.take_newer(seen_)) {
    const std::size_t first = w->window.first_frame;
    if (frames_.empty()) base_ = first;
    for (std::size_t i = 0; i < w->robot.poses.size(); ++i) {
      const std::size_t idx = first + i;
      if (idx < base_) continue;
      while (base_ + frames_.size() < idx) frames_.push_back(frames_.back());
      if (idx < base_ + frames_.size()) {
        frames_[idx - base_] = w->robot.poses[i];
      } else {
        frames_.push_back(w->robot.poses[i]);
      }
    }
    while (frames_.size() > kControlFrameCapacity) {
      frames_.pop_front();
      ++base_;
    }
  }
  target_ = reference_at(scheduled);
  const wbc::JointVector tau = sim_.tick(target_);
  if (sink_) sink_(target_, tau);
  ++ticks_;
  const double jitter = std::abs(now - scheduled);
  const double err = wbc::tracking_error(sim_.state().q, target_);
  ch_.metrics.update([&](PipelineMetrics& m) {
    m.control_jitter_s.push_back(jitter);
    ++m.control_ticks;
  });
  EventRecord r;
  r.t = scheduled;
  r.stage = "control";
  r.kind = EventKind::ControlTick;
  r.detail = {{"tick", ticks_}, {"error", err}};
  ch_.log.append(std::move(r));
}

}  // namespace hiaer::pipeline
