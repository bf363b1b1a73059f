#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hiaer/planner.hpp"

namespace hiaer::planner {

using motion::Mat3;
using motion::Vec3;
namespace smpl = motion::smpl;

namespace {

using Pose = std::array<Vec3, motion::kNumJoints>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSearchSeconds = 32.0;
constexpr int kSubSteps = 4;  // phase search resolution per frame

double ramp(double tau, double duration) {
  const double x = std::clamp(tau / duration, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double osc(double tau, double start, double rise, double hz, double phase = 0.0) {
  return ramp(tau - start, rise) * std::sin(kTwoPi * hz * tau + phase);
}

// Joint axes used throughout: x raises the limb forward (flexion), z lifts it
// outward (abduction, positive on the left), y twists. Elbows flex about x.
Pose zero_pose() {
  Pose p;
  for (auto& v : p) v.setZero();
  return p;
}

void both_arms(Pose& p, double sh_x, double sh_z, double sh_y, double el_x) {
  p[smpl::kLeftShoulder] += Vec3(sh_x, sh_y, sh_z);
  p[smpl::kRightShoulder] += Vec3(sh_x, -sh_y, -sh_z);
  p[smpl::kLeftElbow].x() += el_x;
  p[smpl::kRightElbow].x() += el_x;
}

PoseCurve make_curve(std::function<void(Pose&, double tau)> shape) {
  return [shape = std::move(shape)](double t, const affect::StyleParams& style) {
    Pose p = zero_pose();
    shape(p, std::max(0.0, t) * style.tempo_scale);
    for (auto& v : p) v *= style.amplitude_scale;
    return p;
  };
}

std::vector<std::pair<std::string, PoseCurve>> build_curves() {
  std::vector<std::pair<std::string, PoseCurve>> c;
  c.emplace_back("stand still", make_curve([](Pose&, double) {}));
  c.emplace_back("wave right hand", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    p[smpl::kRightShoulder] = Vec3(0.35 * on, -0.28 * osc(tau, 3.5, 3.0, 0.25), -1.0 * on);
    p[smpl::kRightElbow].x() = 1.1 * on;
  }));
  c.emplace_back("handshake", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 4.0);
    p[smpl::kRightShoulder] = Vec3(0.75 * on + 0.08 * osc(tau, 3.0, 2.0, 0.5), 0.0, -0.15 * on);
    p[smpl::kRightElbow].x() = 0.55 * on;
    p[smpl::kRightWrist].y() = 0.3 * on;
  }));
  c.emplace_back("point", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    p[smpl::kRightShoulder] = Vec3(1.25 * on, 0.0, -0.2 * on);
    p[smpl::kRightElbow].x() = 0.15 * on;
    p[smpl::kRightWrist].x() = -0.2 * on;
  }));
  c.emplace_back("cheer", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    both_arms(p, 0.3 * on, 1.35 * on + 0.15 * osc(tau, 4.0, 3.0, 0.4), 0.0, 0.35 * on);
    p[smpl::kSpine3].x() = -0.08 * on;
  }));
  c.emplace_back("hands on hips", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    both_arms(p, 0.0, 0.45 * on, 0.35 * on, 1.35 * on);
    p[smpl::kLeftWrist].z() = 0.3 * on;
    p[smpl::kRightWrist].z() = -0.3 * on;
  }));
  c.emplace_back("cross arms", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    both_arms(p, 0.55 * on, 0.1 * on, -0.5 * on, 1.5 * on);
  }));
  c.emplace_back("two armed celebration", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    both_arms(p, 0.5 * on, 1.15 * on + 0.2 * osc(tau, 4.0, 3.0, 0.3), 0.0, 0.3 * on);
    p[smpl::kSpine3].x() = -0.1 * on;
    p[smpl::kHead].x() = -0.1 * on;
  }));
  c.emplace_back("guard stance", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 5.0);
    both_arms(p, 0.85 * on, 0.2 * on, 0.0, 1.55 * on);
    p[smpl::kSpine3].x() = 0.08 * on;
    p[smpl::kNeck].x() = -0.05 * on;
  }));
  c.emplace_back("beat gesture", make_curve([](Pose& p, double tau) {
    const double on = ramp(tau, 4.0);
    both_arms(p, 0.35 * on, 0.15 * on, 0.0, 0.85 * on);
    p[smpl::kLeftElbow].x() += 0.18 * osc(tau, 3.0, 2.0, 0.4);
    p[smpl::kRightElbow].x() += 0.18 * osc(tau, 3.0, 2.0, 0.4, std::numbers::pi);
  }));
  return c;
}

using Rotations = std::array<Mat3, motion::kNumJoints>;

Rotations to_rotations(const Pose& p) {
  Rotations r;
  for (std::size_t j = 0; j < motion::kNumJoints; ++j) {
    r[j] = p[j].isZero(0.0) ? Mat3::Identity() : motion::rotation_from_vector(p[j]);
  }
  return r;
}

Rotations to_rotations(const motion::SmplFrame& f) {
  Rotations r;
  for (std::size_t j = 0; j < motion::kNumJoints; ++j) r[j] = motion::sixd_to_matrix(f.joints[j]).matrix();
  return r;
}

double distance(const Rotations& a, const Rotations& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < motion::kNumJoints; ++j) d += (a[j] - b[j]).squaredNorm();
  return d;
}

}  // namespace

ProceduralBackend::ProceduralBackend(double fps, double max_step)
    : fps_(fps), max_step_(max_step), curves_(build_curves()) {
  if (!(fps_ > 0.0)) throw ConfigError("procedural backend fps must be positive");
  if (!(max_step_ > 0.0)) throw ConfigError("procedural backend max_step must be positive");
}

const PoseCurve* ProceduralBackend::curve(const std::string& display_text) const {
  std::string key = affect::normalize_token(display_text);
  if (key == "two arm celebration") key = "two armed celebration";
  for (const auto& [name, c] : curves_) {
    if (name == key) return &c;
  }
  return nullptr;
}

std::vector<std::string> ProceduralBackend::known_texts() const {
  std::vector<std::string> out;
  for (const auto& [name, c] : curves_) out.push_back(name);
  return out;
}

GeneratedWindow ProceduralBackend::generate(const std::string& display_text, const affect::StyleParams& style,
                                            const motion::MotionClip& seed, std::size_t n,
                                            std::uint64_t /*rng_seed*/) {
  if (seed.empty()) throw motion::InsufficientFramesError("procedural backend needs a nonempty seed");
  GeneratedWindow out;
  const PoseCurve* c = curve(display_text);
  if (c == nullptr) {
    out.unknown_text = true;
    c = &curves_.front().second;
  }
  const double dt = 1.0 / fps_;
  const Rotations last = to_rotations(seed.frames.back());
  const bool has_prev = seed.size() >= 2;
  const Rotations prev = has_prev ? to_rotations(seed.frames[seed.size() - 2]) : last;

  // Phase search: the curve time T whose pose matches the last seed frame,
  // with T - dt matching the one before it.
  const int steps = static_cast<int>(kSearchSeconds * fps_) * kSubSteps;
  std::vector<Rotations> evals(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) evals[s] = to_rotations((*c)(s * dt / kSubSteps, style));
  double best_score = std::numeric_limits<double>::infinity();
  int best = 0;
  for (int s = 0; s < steps; ++s) {
    double score = distance(evals[s], last);
    if (has_prev) score += distance(evals[std::max(0, s - kSubSteps)], prev);
    if (score < best_score) {
      best_score = score;
      best = s;
      if (score == 0.0) break;
    }
  }
  const double t0 = best * dt / kSubSteps;

  // Residual between the seed and the matched curve pose, per joint.
  std::array<Vec3, motion::kNumJoints> offset;
  for (std::size_t j = 0; j < motion::kNumJoints; ++j) {
    offset[j] = motion::rotation_to_vector(last[j] * evals[best][j].transpose());
  }

  const std::size_t blend = (n + 1) / 2;
  Rotations carry = last;
  out.frames.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Rotations target_curve = to_rotations((*c)(t0 + static_cast<double>(k + 1) * dt, style));
    const double w = k < blend ? static_cast<double>(k + 1) / static_cast<double>(blend + 1) : 1.0;
    motion::SmplFrame f;
    f.root_translation = seed.frames.back().root_translation;
    for (std::size_t j = 0; j < motion::kNumJoints; ++j) {
      Mat3 target = target_curve[j];
      if (w < 1.0 && !offset[j].isZero(0.0)) target = motion::rotation_from_vector((1.0 - w) * offset[j]) * target;
      const Vec3 step = motion::rotation_to_vector(carry[j].transpose() * target);
      const double angle = step.norm();
      if (angle > max_step_) target = carry[j] * motion::rotation_from_vector(step * (max_step_ / angle));
      carry[j] = target;
      f.joints[j] = motion::matrix_to_sixd(target);
    }
    out.frames.push_back(f);
  }
  return out;
}

}  // namespace hiaer::planner
