#pragma once

// Desk-scale whole-body controller stand-in: reference interpolation to the
// control rate, the 129-dim observation, per-joint PD on a decoupled
// inertia + damping plant with a fixed root, reward terms, domain
// randomization and curriculum termination.

#include <iosfwd>
#include <optional>
#include <random>

#include <Eigen/Geometry>

#include "hiaer/retarget.hpp"

namespace hiaer::wbc {

using retarget::JointVector;
using retarget::kRobotDofs;
using retarget::RobotTrajectory;

struct RootState {
  motion::Vec3 position{0.0, 0.0, 0.78};
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  motion::Vec3 linear_velocity = motion::Vec3::Zero();
  motion::Vec3 angular_velocity = motion::Vec3::Zero();
};

struct RobotState {
  RootState root;
  JointVector q = JointVector::Zero();
  JointVector qdot = JointVector::Zero();

  /// Unit quaternion within 1e-9 and everything finite.
  bool valid() const;
};

inline constexpr std::size_t kRootDim = 13;
inline constexpr std::size_t kObsDim = kRootDim + 4 * kRobotDofs;  // 129
inline constexpr std::size_t kObsQ = 13;
inline constexpr std::size_t kObsQdot = 42;
inline constexpr std::size_t kObsPrevAction = 71;
inline constexpr std::size_t kObsReference = 100;

using Observation = Eigen::Matrix<double, static_cast<int>(kObsDim), 1>;

/// [root pos 3, quat w x y z, lin vel 3, ang vel 3, q, qdot, a_prev, y_ref].
Observation assemble_observation(const RobotState& s, const JointVector& a_prev, const JointVector& y_ref);

struct ObservationParts {
  RobotState state;
  JointVector a_prev;
  JointVector y_ref;
};

ObservationParts unpack_observation(const Observation& o);

struct PDGains {
  JointVector kp = JointVector::Constant(60.0);
  JointVector kd = JointVector::Constant(2.0);
};

struct SimConfig {
  double control_rate = 50.0;
  int substeps = 10;  // plant integration steps per control tick
  JointVector inertia = JointVector::Constant(0.05);
  JointVector damping = JointVector::Constant(0.005);
  JointVector torque_limit = JointVector::Constant(88.0);
  JointVector lower = JointVector::Constant(-3.2);
  JointVector upper = JointVector::Constant(3.2);
  JointVector disturbance = JointVector::Zero();  // constant external joint torque
  double nominal_mass = 35.0;  // kg, for base-mass randomization
  double episode_seconds = 20.0;

  /// Limits from the descriptor, other fields default.
  static SimConfig for_robot(const retarget::RobotDescriptor& desc);
  void validate() const;
};

/// tau = kp (target - q) - kd qdot, clamped to +-torque_limit.
JointVector pd_control(const JointVector& target, const RobotState& s, const PDGains& g, const SimConfig& cfg);

/// Semi-implicit Euler over `cfg.substeps` substeps of dt / substeps:
/// qddot = (tau + disturbance - damping qdot) / inertia. Joints hitting a
/// limit are clamped with velocity zeroed. Root is held fixed.
/// NumericFaultError on non-finite results.
RobotState step_sim(const RobotState& s, const JointVector& tau, const SimConfig& cfg, double dt);

/// Per-joint linear interpolation of the trajectory at control tick `tick`;
/// holds the final pose past the end.
JointVector interpolate_reference(const RobotTrajectory& traj, std::size_t tick, double control_rate = 50.0);

/// Control ticks needed to cover the trajectory's duration.
std::size_t tick_count(const RobotTrajectory& traj, double control_rate = 50.0);

enum class TrackingNorm { L2, Max };

double tracking_error(const JointVector& q, const JointVector& ref, TrackingNorm norm = TrackingNorm::L2);

struct RewardWeights {
  double joint_pos_tracking = 1.25;
  double alive = 0.25;
  double action_rate = -0.05;
  double joint_limits = -5.0;
  double orientation = -5.0;
  double base_height = -10.0;
  double feet_sliding = -0.2;
  double undesired_contacts = -1.0;
  double tracking_sigma = 0.5;  // rad
  double target_base_height = 0.78;
  TrackingNorm norm = TrackingNorm::L2;
};

struct RewardBreakdown {
  double joint_pos_tracking = 0.0;
  double alive = 0.0;
  double action_rate = 0.0;
  double joint_limits = 0.0;
  double orientation = 0.0;
  double base_height = 0.0;
  double feet_sliding = 0.0;
  double undesired_contacts = 0.0;
  double total = 0.0;
};

RewardBreakdown compute_reward(const RobotState& s, const JointVector& y_ref, const JointVector& action,
                               const JointVector& a_prev, const RewardWeights& w,
                               const retarget::RobotDescriptor& desc);

/// Tilt of the root's z axis away from world z, radians.
double tilt_angle(const Eigen::Quaterniond& q);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct RandomizationRanges {
  Interval external_force{-3.0, 3.0};     // N, per axis
  Interval external_torque{-0.5, 0.5};    // N m, per axis
  Interval friction{0.3, 1.0};
  Interval base_mass{-1.0, 3.0};          // kg delta
  Interval angular_velocity{-0.2, 0.2};   // rad/s, per axis
  Interval joint_position{-0.01, 0.01};   // rad, per joint
  Interval joint_velocity{-1.5, 1.5};     // rad/s, per joint
  bool reference_state_init = true;
};

struct RandomizationRecord {
  motion::Vec3 external_force = motion::Vec3::Zero();
  motion::Vec3 external_torque = motion::Vec3::Zero();
  double friction = 1.0;
  double base_mass_delta = 0.0;
  motion::Vec3 angular_velocity = motion::Vec3::Zero();
  JointVector joint_position_noise = JointVector::Zero();
  JointVector joint_velocity_noise = JointVector::Zero();
  std::size_t start_frame = 0;

  bool operator==(const RandomizationRecord&) const = default;
  bool within(const RandomizationRanges& r) const;
};

/// Uniform draws within every interval. `reference_frames` bounds the start
/// frame; 0 or reference_state_init off keeps frame 0.
RandomizationRecord sample_randomization(const RandomizationRanges& r, std::uint64_t seed,
                                         std::size_t reference_frames = 0);

/// Lever arm turning the external force into joint torque.
inline constexpr double kForceLever = 0.25;

/// Mass scales inertia by (nominal + delta) / nominal, friction scales
/// damping, and the external wrench becomes a constant joint torque
/// (joint j takes axis j mod 3 of lever * force + torque).
SimConfig apply_randomization(const SimConfig& cfg, const RandomizationRecord& r);
RobotState initial_state(const JointVector& ref, const RandomizationRecord& r, const SimConfig& cfg);

struct CurriculumSchedule {
  double eps_start = 0.5;
  double eps_end = 0.15;
  bool increasing = false;  // flips the direction: eps goes from eps_end to eps_start
  TrackingNorm norm = TrackingNorm::L2;

  /// Linear in progress, clamped to [0, 1].
  double eps(double progress) const;
};

enum class Termination { Continue, Terminate };

/// Terminate iff tracking_error > eps_term.
Termination curriculum_check(double tracking_error, double eps_term);

struct TrackingOptions {
  RewardWeights weights;
  double eps_term = 0.5;
  TrackingNorm norm = TrackingNorm::L2;
  bool record_steps = true;
};

struct StepRecord {
  std::size_t tick = 0;
  JointVector target;
  JointVector q;
  JointVector torque;
  RewardBreakdown reward;
  double error = 0.0;  // tracking_error(q, target)
};

struct TrackingReport {
  double rms_error = 0.0;  // over ticks and joints
  double max_error = 0.0;  // max abs joint error
  std::vector<double> rewards;
  std::vector<StepRecord> steps;
  bool terminated_early = false;
  std::size_t ticks = 0;
};

/// Stateful controller for one rollout; the pipeline's control loop drives
/// one of these per tick.
class Simulator {
 public:
  Simulator(SimConfig cfg, PDGains gains, RobotState initial);

  /// One control tick toward `target`. Returns the applied torques.
  JointVector tick(const JointVector& target);

  const RobotState& state() const { return state_; }
  const JointVector& last_action() const { return a_prev_; }
  const SimConfig& config() const { return cfg_; }
  std::size_t ticks() const { return ticks_; }

 private:
  SimConfig cfg_;
  PDGains gains_;
  RobotState state_;
  JointVector a_prev_;
  std::size_t ticks_ = 0;
};

TrackingReport run_tracking(const RobotTrajectory& traj, const PDGains& gains, const SimConfig& cfg,
                            const retarget::RobotDescriptor& desc,
                            const std::optional<RandomizationRecord>& randomization = std::nullopt,
                            const TrackingOptions& opts = {});

nlohmann::json report_to_json(const TrackingReport& r);
/// tick, target_*, q_*, torque_*, reward terms.
void write_steps_csv(std::ostream& out, const TrackingReport& r);

struct WbcConfig {
  PDGains gains;
  SimConfig sim;
  RewardWeights reward;
  RandomizationRanges randomization;
  CurriculumSchedule curriculum;
};

/// Every field optional; defaults as above. Uses the descriptor's limits.
WbcConfig wbc_config_from_json(const nlohmann::json& j, const retarget::RobotDescriptor& desc);
nlohmann::json to_json(const WbcConfig& c);

}  // namespace hiaer::wbc
