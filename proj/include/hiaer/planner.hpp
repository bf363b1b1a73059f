#pragma once

// Windowed autoregressive motion planner: each window of n frames is
// generated from the active primitive's text and the previous n frames.
// Two backends: a remote text-to-motion service and a deterministic
// procedural synthesizer.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "hiaer/affect.hpp"
#include "hiaer/intent.hpp"
#include "hiaer/motion.hpp"

namespace hiaer::planner {

class BackendContractError : public Error {
 public:
  explicit BackendContractError(const std::string& m) : Error("backend_contract", m) {}
};

class BackendTransportError : public Error {
 public:
  explicit BackendTransportError(const std::string& m) : Error("backend_transport", m) {}
};

enum class BackendKind { Procedural, Remote };

struct PlannerConfig {
  double fps = motion::kClipFps;
  std::size_t window_n = 8;
  std::size_t init_frames = 4;
  double seam_epsilon = 0.1;
  std::size_t history_capacity = 64;
  BackendKind backend = BackendKind::Procedural;
  std::string remote_url = "http://127.0.0.1:8010/generate";
  double remote_timeout_s = 2.0;
  std::uint64_t rng_seed = 0;

  double window_seconds() const { return static_cast<double>(window_n) / fps; }
  /// Throws ConfigError on violated invariants.
  void validate() const;
};

void from_json(const nlohmann::json& j, PlannerConfig& c);
void to_json(nlohmann::json& j, const PlannerConfig& c);

affect::MotionPrimitive default_stand_primitive();

struct Command {
  affect::MotionPrimitive primitive;
  affect::StyleParams style;
  std::uint64_t seq = 0;  // bumped on every switch, including no-op switches
  bool operator_forced = false;

  bool same_motion(const Command& o) const { return primitive == o.primitive && style == o.style; }
};

struct PlannerState {
  motion::MotionClip history;  // last history_capacity frames
  Command active;
  std::size_t window_index = 0;
  std::size_t frames_emitted = 0;  // excluding the initial stand frames

  bool operator==(const PlannerState& o) const {
    return history == o.history && active.same_motion(o.active) && active.seq == o.active.seq &&
           active.operator_forced == o.active.operator_forced && window_index == o.window_index &&
           frames_emitted == o.frames_emitted;
  }
};

struct GeneratedWindow {
  std::vector<motion::SmplFrame> frames;
  bool unknown_text = false;  // backend did not recognize the text
};

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  /// Exactly n frames following `seed`.
  virtual GeneratedWindow generate(const std::string& display_text, const affect::StyleParams& style,
                                   const motion::MotionClip& seed, std::size_t n,
                                   std::uint64_t rng_seed) = 0;
  virtual std::string name() const = 0;
};

/// Target pose as rotation vectors per joint at time t (seconds) for a style.
using PoseCurve = std::function<std::array<motion::Vec3, motion::kNumJoints>(double t,
                                                                            const affect::StyleParams&)>;

/// Parametric per-primitive curves in joint-rotation space. The window
/// continues the curve at the phase best matching the last seed frames,
/// blends the remaining offset out over the first ceil(n/2) frames, and
/// limits each joint's geodesic step per frame to `max_step` radians.
class ProceduralBackend : public GeneratorBackend {
 public:
  explicit ProceduralBackend(double fps = motion::kClipFps, double max_step = 0.09);

  GeneratedWindow generate(const std::string& display_text, const affect::StyleParams& style,
                           const motion::MotionClip& seed, std::size_t n, std::uint64_t rng_seed) override;
  std::string name() const override { return "procedural"; }

  /// Curve for a display text (normalized); nullptr if unknown.
  const PoseCurve* curve(const std::string& display_text) const;
  std::vector<std::string> known_texts() const;
  double max_step() const { return max_step_; }

 private:
  double fps_;
  double max_step_;
  std::vector<std::pair<std::string, PoseCurve>> curves_;
};

/// Text qualifiers appended for style: tempo -> slowly/energetically,
/// amplitude -> slightly/widely, outside the [0.85, 1.15] dead band.
std::string styled_text(const std::string& display_text, const affect::StyleParams& style);

struct RemoteBackendConfig {
  std::string url;
  double timeout_s = 2.0;
  double fps = motion::kClipFps;
};

/// POST {text, n, fps, seed_frames, rng_seed} -> {frames}. Seed root
/// translations are sent relative to the last seed frame.
class RemoteBackend : public GeneratorBackend {
 public:
  explicit RemoteBackend(RemoteBackendConfig cfg);

  GeneratedWindow generate(const std::string& display_text, const affect::StyleParams& style,
                           const motion::MotionClip& seed, std::size_t n, std::uint64_t rng_seed) override;
  std::string name() const override { return "remote"; }

  nlohmann::json request_body(const std::string& display_text, const affect::StyleParams& style,
                              const motion::MotionClip& seed, std::size_t n, std::uint64_t rng_seed) const;

 private:
  RemoteBackendConfig cfg_;
  std::string origin_;
  std::string path_;
};

std::unique_ptr<GeneratorBackend> make_backend(const PlannerConfig& cfg);

struct PlannerWindow {
  std::size_t index = 0;
  std::size_t first_frame = 0;  // stream index of frames.frames[0]
  motion::MotionClip frames;
  Command command;
  bool unknown_text = false;
  double seam = 0.0;  // discontinuity against the previous frame
};

/// init_frames stand frames, stand_still command with neutral style.
PlannerState initialize(const PlannerConfig& cfg, affect::MotionPrimitive rest = default_stand_primitive());

/// Generates and commits the next window. On any backend error the state is
/// left unchanged and the error propagates.
PlannerWindow step(PlannerState& state, GeneratorBackend& backend, const PlannerConfig& cfg);

/// Replaces the active command; history is untouched.
void switch_primitive(PlannerState& state, const intent::FinalDecision& decision);
void switch_primitive(PlannerState& state, const affect::MotionPrimitive& primitive,
                      const affect::StyleParams& style, bool operator_forced = false);

/// Max over joints of the geodesic angle and over all 6D channels and root
/// coordinates of the absolute difference.
double seam_discontinuity(const motion::SmplFrame& a, const motion::SmplFrame& b);

/// Geodesic angle between two joint rotations given as 6D.
double joint_angle_between(const motion::Rotation6D& a, const motion::Rotation6D& b);

}  // namespace hiaer::planner
