#pragma once

// Frame-wise retargeting from 135-dim human frames to the robot's 29
// actuated joints: a 3-layer MLP, its trainer and weights file, the robot
// descriptor with wrist forward kinematics, and the wrist-workspace resampler.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hiaer/motion.hpp"

namespace hiaer::retarget {

inline constexpr std::size_t kRobotDofs = 29;
inline constexpr std::size_t kHiddenUnits = 512;

using JointVector = Eigen::Matrix<double, static_cast<int>(kRobotDofs), 1>;
using RobotPose = JointVector;

class WeightsFormatError : public Error {
 public:
  explicit WeightsFormatError(const std::string& m) : Error("weights_format", m) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& m) : Error("diverged", m) {}
};

// --- robot descriptor -------------------------------------------------------

struct RobotJoint {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  double default_angle = 0.0;
};

struct ChainLink {
  std::size_t joint = 0;
  motion::Vec3 axis = motion::Vec3::UnitX();  // unit, in the parent link frame
  motion::Vec3 offset = motion::Vec3::Zero();  // parent frame -> joint origin
};

struct ArmChain {
  std::vector<ChainLink> links;
  motion::Vec3 wrist_offset = motion::Vec3::Zero();  // last joint -> wrist point
  motion::Vec3 rest_wrist = motion::Vec3::Zero();    // documented all-zero position

  /// Sum of link offset norms after the first plus the wrist offset: bound
  /// on the wrist's distance from the first joint.
  double reach() const;
  /// reach() plus the first offset: bound on the distance from the base.
  double total_length() const;
  /// Position of the first joint in the base frame.
  motion::Vec3 origin() const { return links.empty() ? motion::Vec3::Zero() : links.front().offset; }
};

struct WorkspaceBox {
  motion::Vec3 lo = motion::Vec3::Constant(-1.0);
  motion::Vec3 hi = motion::Vec3::Constant(1.0);
};

struct RobotDescriptor {
  std::string name;
  std::vector<RobotJoint> joints;
  ArmChain left_arm;
  ArmChain right_arm;
  WorkspaceBox workspace;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  std::size_t index_of(const std::string& joint_name) const;
  JointVector lower() const;
  JointVector upper() const;
  JointVector defaults() const;
  JointVector clamp(const JointVector& q) const;
  bool within_limits(const JointVector& q, double tol = 0.0) const;

  static RobotDescriptor from_json(const nlohmann::json& j);
  static RobotDescriptor load(const std::filesystem::path& path);
};

struct WristPositions {
  motion::Vec3 left;
  motion::Vec3 right;
};

motion::Vec3 fk_chain(const ArmChain& chain, const JointVector& q);
WristPositions fk_wrist(const JointVector& q, const RobotDescriptor& desc);

// --- network ----------------------------------------------------------------

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1, Identity = 2 };

std::string_view to_string(Activation a);

struct DenseLayer {
  Eigen::MatrixXd w;  // rows = outputs, cols = inputs
  Eigen::VectorXd b;
};

/// Hidden layers use `activation`, the output layer is linear.
class RetargetNetwork {
 public:
  RetargetNetwork() = default;
  RetargetNetwork(std::vector<DenseLayer> layers, Activation activation);

  /// 135 -> 512 -> 512 -> 29, every parameter zero.
  static RetargetNetwork zeros();
  /// He-normal weights scaled by `scale`, zero biases. Hidden sizes default to 512.
  static RetargetNetwork random(std::uint64_t seed, double scale = 1.0, std::size_t hidden = kHiddenUnits);

  /// Unclamped output for one encoded frame.
  Eigen::VectorXd forward_raw(const Eigen::VectorXd& x) const;
  /// Column-wise batch forward.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Activation activation() const { return activation_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().w.cols()); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().w.rows()); }

  /// Shapes chain, input 135, output 29, all finite. Throws WeightsFormatError.
  void validate() const;
  bool operator==(const RetargetNetwork& o) const;

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::Relu;
};

/// "RTG1", activation byte, u32 layer count, then per layer u32 rows, u32
/// cols, row-major f32 weights, f32 biases. Little-endian.
void write_weights(std::ostream& out, const RetargetNetwork& net);
RetargetNetwork read_weights(std::istream& in);
void save_weights(const std::filesystem::path& path, const RetargetNetwork& net);
RetargetNetwork load_weights(const std::filesystem::path& path);

/// encode -> MLP -> clamp to descriptor limits. NumericFaultError on a
/// non-finite output.
RobotPose forward(const RetargetNetwork& net, const motion::SmplFrame& frame, const RobotDescriptor& desc);

struct RobotTrajectory {
  double fps = motion::kClipFps;
  std::vector<RobotPose> poses;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
};

nlohmann::json trajectory_to_json(const RobotTrajectory& t, const RobotDescriptor& desc);

RobotTrajectory retarget_clip(const RetargetNetwork& net, const motion::MotionClip& clip,
                              const RobotDescriptor& desc);

// --- training ---------------------------------------------------------------

struct TrainingPair {
  motion::SmplFrame input;
  RobotPose target;
};

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t rng_seed = 0;
  std::size_t hidden = kHiddenUnits;
  double init_scale = 1.0;
};

void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  RetargetNetwork net;
  double initial_mse = 0.0;            // full-set MSE before the first update
  std::vector<double> epoch_mse;       // full-set MSE after each epoch
  double final_mse() const { return epoch_mse.empty() ? initial_mse : epoch_mse.back(); }
};

/// Mini-batch SGD with momentum on unclamped MSE. Deterministic in rng_seed.
/// DivergenceError when the loss turns non-finite or grows 1e6-fold.
TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg);

/// Mean over pairs and joints of the squared unclamped error.
double mean_squared_error(const RetargetNetwork& net, const std::vector<TrainingPair>& pairs);

/// Hand-written human-to-robot joint mapping used to label synthetic frames:
/// rotation-vector components of the relevant human joints, offset by the
/// robot's default angles and clamped to limits. Identity rotations map to
/// the defaults exactly.
RobotPose reference_mapping(const motion::SmplFrame& frame, const RobotDescriptor& desc);

struct SyntheticDataConfig {
  std::size_t windows_per_style = 12;
  std::size_t stride = 2;          // keep every stride-th generated frame
  std::size_t stand_copies = 200;  // extra stand frames
  std::size_t jitter_copies = 1;   // perturbed copies per generated frame
  double jitter_rad = 0.08;
  std::uint64_t rng_seed = 0;
};

/// Procedural planner rollouts over every known primitive text and a style
/// grid, labelled by reference_mapping.
std::vector<TrainingPair> synthetic_pairs(const RobotDescriptor& desc, const SyntheticDataConfig& cfg = {});

// --- wrist-workspace resampling ---------------------------------------------

enum class WristMode { Right, Left, Both };

struct WorkspaceGrid {
  WorkspaceBox bounds;
  std::size_t resolution = 8;

  std::size_t cell_count() const { return resolution * resolution * resolution; }
  /// Points outside the box fall in the nearest boundary cell.
  std::size_t cell_of(const motion::Vec3& p) const;
};

struct Occupancy {
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;

  /// Counts for the wrist(s) selected by the mode; Both sums both.
  std::vector<std::size_t> counts(WristMode mode) const;
};

Occupancy occupancy(const std::vector<RobotPose>& frames, const WorkspaceGrid& grid, const RobotDescriptor& desc);

struct OccupancyStats {
  std::size_t nonempty = 0;
  double max_share = 0.0;             // largest cell / total
  double mean_nonempty_share = 0.0;   // 1 / nonempty
  double cv = 0.0;                    // stddev / mean over nonempty cells
};

OccupancyStats occupancy_stats(const std::vector<std::size_t>& counts);

struct ResampleReport {
  std::vector<RobotPose> frames;
  std::vector<std::size_t> source_index;  // into the flattened dataset
  Occupancy before;
  Occupancy after;
  std::vector<std::string> warnings;
};

/// Weights each frame by 1 / occupancy of its bin (the selected wrist's
/// cell, or the (left, right) cell pair in Both mode) and draws target_size
/// frames with replacement by systematic resampling.
ResampleReport resample_balanced(const std::vector<RobotTrajectory>& dataset, const WorkspaceGrid& grid,
                                 std::size_t target_size, std::uint64_t rng_seed, const RobotDescriptor& desc,
                                 WristMode mode = WristMode::Right);

nlohmann::json occupancy_to_json(const Occupancy& o, const WorkspaceGrid& grid);

}  // namespace hiaer::retarget
