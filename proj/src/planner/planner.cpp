#include <algorithm>
#include <cmath>

#include "hiaer/planner.hpp"

// After Eigen: resolv.h (pulled in by httplib) defines a `_res` macro.
#include <httplib.h>

namespace hiaer::planner {

void PlannerConfig::validate() const {
  if (window_n < 1) throw ConfigError("window_n must be >= 1");
  if (init_frames < 1) throw ConfigError("init_frames must be >= 1");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  if (!(seam_epsilon > 0.0)) throw ConfigError("seam_epsilon must be positive");
  if (history_capacity < std::max(window_n, init_frames)) {
    throw ConfigError("history_capacity must hold at least one window");
  }
}

void from_json(const nlohmann::json& j, PlannerConfig& c) {
  c.fps = j.value("fps", c.fps);
  c.window_n = j.value("window_n", c.window_n);
  c.init_frames = j.value("init_frames", c.init_frames);
  c.seam_epsilon = j.value("seam_epsilon", c.seam_epsilon);
  c.history_capacity = j.value("history_capacity", c.history_capacity);
  if (j.contains("backend")) {
    const auto b = j.at("backend").get<std::string>();
    if (b == "procedural") {
      c.backend = BackendKind::Procedural;
    } else if (b == "remote") {
      c.backend = BackendKind::Remote;
    } else {
      throw ConfigError("unknown planner backend '" + b + "'");
    }
  }
  c.remote_url = j.value("remote_url", c.remote_url);
  c.remote_timeout_s = j.value("remote_timeout_s", c.remote_timeout_s);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.validate();
}

void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = {{"fps", c.fps},
       {"window_n", c.window_n},
       {"init_frames", c.init_frames},
       {"seam_epsilon", c.seam_epsilon},
       {"history_capacity", c.history_capacity},
       {"backend", c.backend == BackendKind::Remote ? "remote" : "procedural"},
       {"remote_url", c.remote_url},
       {"remote_timeout_s", c.remote_timeout_s},
       {"rng_seed", c.rng_seed}};
}

affect::MotionPrimitive default_stand_primitive() {
  return {"stand_still", "stand still", {}, {affect::AffectQuadrant::Neutral}, affect::SafetyClass::Safe};
}

PlannerState initialize(const PlannerConfig& cfg, affect::MotionPrimitive rest) {
  cfg.validate();
  PlannerState s;
  s.history = motion::stand_clip(cfg.init_frames);
  s.history.fps = cfg.fps;
  s.active.primitive = std::move(rest);
  s.active.style = affect::StyleParams{0.5 + affect::neutral_va().arousal(), 0.5 + affect::neutral_va().arousal(),
                                       affect::neutral_va().valence()};
  return s;
}

double joint_angle_between(const motion::Rotation6D& a, const motion::Rotation6D& b) {
  const motion::Mat3 rel = motion::sixd_to_matrix(a).matrix().transpose() * motion::sixd_to_matrix(b).matrix();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

double seam_discontinuity(const motion::SmplFrame& a, const motion::SmplFrame& b) {
  double worst = (a.root_translation - b.root_translation).cwiseAbs().maxCoeff();
  for (std::size_t j = 0; j < motion::kNumJoints; ++j) {
    worst = std::max(worst, joint_angle_between(a.joints[j], b.joints[j]));
    worst = std::max(worst, (a.joints[j].a - b.joints[j].a).cwiseAbs().maxCoeff());
    worst = std::max(worst, (a.joints[j].b - b.joints[j].b).cwiseAbs().maxCoeff());
  }
  return worst;
}

PlannerWindow step(PlannerState& state, GeneratorBackend& backend, const PlannerConfig& cfg) {
  const std::size_t n = cfg.window_n;
  const motion::MotionClip seed = motion::seed_window(state.history, std::min(n, state.history.size()));
  GeneratedWindow gen = backend.generate(state.active.primitive.display_text, state.active.style, seed, n,
                                         cfg.rng_seed + state.window_index);
  if (gen.frames.size() != n) {
    throw BackendContractError(backend.name() + " returned " + std::to_string(gen.frames.size()) +
                               " frames, expected " + std::to_string(n));
  }
  for (const auto& f : gen.frames) {
    const motion::FrameVector v = motion::encode_frame(f);
    if (!v.allFinite()) throw BackendContractError(backend.name() + " returned a non-finite frame");
    try {
      for (const auto& r : f.joints) (void)motion::sixd_to_matrix(r);
    } catch (const motion::DegenerateRotationError& e) {
      throw BackendContractError(backend.name() + " returned a degenerate rotation: " + e.what());
    }
  }

  PlannerWindow w;
  w.index = state.window_index;
  w.first_frame = state.frames_emitted;
  w.command = state.active;
  w.unknown_text = gen.unknown_text;
  w.seam = seam_discontinuity(state.history.frames.back(), gen.frames.front());
  w.frames.fps = cfg.fps;
  w.frames.label = state.active.primitive.id;
  w.frames.frames = std::move(gen.frames);

  auto& hist = state.history.frames;
  hist.insert(hist.end(), w.frames.frames.begin(), w.frames.frames.end());
  if (hist.size() > cfg.history_capacity) {
    hist.erase(hist.begin(), hist.begin() + static_cast<std::ptrdiff_t>(hist.size() - cfg.history_capacity));
  }
  ++state.window_index;
  state.frames_emitted += n;
  return w;
}

void switch_primitive(PlannerState& state, const affect::MotionPrimitive& primitive,
                      const affect::StyleParams& style, bool operator_forced) {
  state.active.primitive = primitive;
  state.active.style = style;
  state.active.operator_forced = operator_forced;
  ++state.active.seq;
}

void switch_primitive(PlannerState& state, const intent::FinalDecision& decision) {
  switch_primitive(state, decision.primitive, decision.style, decision.operator_forced);
}

std::string styled_text(const std::string& display_text, const affect::StyleParams& style) {
  std::string s = display_text;
  if (style.tempo_scale < 0.85) s += ", slowly";
  if (style.tempo_scale > 1.15) s += ", energetically";
  if (style.amplitude_scale < 0.85) s += ", slightly";
  if (style.amplitude_scale > 1.15) s += ", widely";
  return s;
}

RemoteBackend::RemoteBackend(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme = cfg_.url.find("://");
  if (scheme == std::string::npos || cfg_.url.substr(0, scheme) != "http") {
    throw ConfigError("remote planner url must be http://host:port/path, got '" + cfg_.url + "'");
  }
  const auto slash = cfg_.url.find('/', scheme + 3);
  origin_ = cfg_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.url.substr(slash);
}

nlohmann::json RemoteBackend::request_body(const std::string& display_text, const affect::StyleParams& style,
                                           const motion::MotionClip& seed, std::size_t n,
                                           std::uint64_t rng_seed) const {
  const motion::Vec3 origin = seed.empty() ? motion::Vec3::Zero() : seed.frames.back().root_translation;
  auto frames = nlohmann::json::array();
  for (auto f : seed.frames) {
    f.root_translation -= origin;
    const motion::FrameVector v = motion::encode_frame(f);
    frames.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  return {{"text", styled_text(display_text, style)},
          {"n", n},
          {"fps", cfg_.fps},
          {"seed_frames", std::move(frames)},
          {"rng_seed", rng_seed}};
}

GeneratedWindow RemoteBackend::generate(const std::string& display_text, const affect::StyleParams& style,
                                        const motion::MotionClip& seed, std::size_t n, std::uint64_t rng_seed) {
  httplib::Client cli(origin_);
  const auto t = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(cfg_.timeout_s));
  cli.set_connection_timeout(t);
  cli.set_read_timeout(t);
  cli.set_write_timeout(t);
  const auto res = cli.Post(path_, request_body(display_text, style, seed, n, rng_seed).dump(), "application/json");
  if (!res) throw BackendTransportError("remote planner: " + httplib::to_string(res.error()));
  if (res->status != 200) throw BackendTransportError("remote planner returned HTTP " + std::to_string(res->status));

  const motion::Vec3 origin = seed.empty() ? motion::Vec3::Zero() : seed.frames.back().root_translation;
  GeneratedWindow out;
  try {
    const auto body = nlohmann::json::parse(res->body);
    for (const auto& row : body.at("frames")) {
      const auto values = row.get<std::vector<double>>();
      motion::SmplFrame f = motion::decode_frame(std::span<const double>(values));
      f.root_translation += origin;
      out.frames.push_back(f);
    }
    out.unknown_text = body.value("unknown_text", false);
  } catch (const nlohmann::json::exception& e) {
    throw BackendContractError(std::string("remote planner response: ") + e.what());
  } catch (const motion::MalformedFrameError& e) {
    throw BackendContractError(std::string("remote planner frame: ") + e.what());
  }
  return out;
}

std::unique_ptr<GeneratorBackend> make_backend(const PlannerConfig& cfg) {
  if (cfg.backend == BackendKind::Remote) {
    return std::make_unique<RemoteBackend>(RemoteBackendConfig{cfg.remote_url, cfg.remote_timeout_s, cfg.fps});
  }
  return std::make_unique<ProceduralBackend>(cfg.fps);
}

}  // namespace hiaer::planner
