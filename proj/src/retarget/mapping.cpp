#include <random>

#include "hiaer/planner.hpp"
#include "hiaer/retarget.hpp"

namespace hiaer::retarget {

using motion::Vec3;
namespace smpl = motion::smpl;

namespace {

Vec3 rotvec(const motion::SmplFrame& f, int joint) {
  return motion::rotation_to_vector(motion::sixd_to_matrix(f.joints[static_cast<std::size_t>(joint)]).matrix());
}

struct Indexer {
  const RobotDescriptor& desc;
  JointVector& q;
  void add(const std::string& name, double delta) { q[static_cast<Eigen::Index>(desc.index_of(name))] += delta; }
};

void map_leg(Indexer& ix, const std::string& side, const Vec3& hip, const Vec3& knee, const Vec3& ankle) {
  ix.add(side + "_hip_pitch_joint", -hip.x());
  ix.add(side + "_hip_roll_joint", hip.z());
  ix.add(side + "_hip_yaw_joint", hip.y());
  ix.add(side + "_knee_joint", knee.x());
  ix.add(side + "_ankle_pitch_joint", -ankle.x());
  ix.add(side + "_ankle_roll_joint", ankle.z());
}

void map_arm(Indexer& ix, const std::string& side, const Vec3& collar, const Vec3& shoulder, const Vec3& elbow,
             const Vec3& wrist) {
  ix.add(side + "_shoulder_pitch_joint", -(shoulder.x() + collar.x()));
  ix.add(side + "_shoulder_roll_joint", shoulder.z() + collar.z());
  ix.add(side + "_shoulder_yaw_joint", shoulder.y());
  ix.add(side + "_elbow_joint", elbow.x());
  ix.add(side + "_wrist_roll_joint", wrist.y());
  ix.add(side + "_wrist_pitch_joint", wrist.x());
  ix.add(side + "_wrist_yaw_joint", wrist.z());
}

}  // namespace

RobotPose reference_mapping(const motion::SmplFrame& f, const RobotDescriptor& desc) {
  JointVector q = desc.defaults();
  Indexer ix{desc, q};
  map_leg(ix, "left", rotvec(f, smpl::kLeftHip), rotvec(f, smpl::kLeftKnee), rotvec(f, smpl::kLeftAnkle));
  map_leg(ix, "right", rotvec(f, smpl::kRightHip), rotvec(f, smpl::kRightKnee), rotvec(f, smpl::kRightAnkle));
  const Vec3 spine = rotvec(f, smpl::kSpine1) + rotvec(f, smpl::kSpine2) + rotvec(f, smpl::kSpine3);
  ix.add("waist_yaw_joint", spine.y());
  ix.add("waist_roll_joint", spine.z());
  ix.add("waist_pitch_joint", spine.x());
  map_arm(ix, "left", rotvec(f, smpl::kLeftCollar), rotvec(f, smpl::kLeftShoulder), rotvec(f, smpl::kLeftElbow),
          rotvec(f, smpl::kLeftWrist));
  map_arm(ix, "right", rotvec(f, smpl::kRightCollar), rotvec(f, smpl::kRightShoulder),
          rotvec(f, smpl::kRightElbow), rotvec(f, smpl::kRightWrist));
  return desc.clamp(q);
}

std::vector<TrainingPair> synthetic_pairs(const RobotDescriptor& desc, const SyntheticDataConfig& cfg) {
  std::vector<motion::SmplFrame> frames;
  planner::ProceduralBackend backend;
  planner::PlannerConfig pcfg;
  for (const auto& text : backend.known_texts()) {
    for (double amp : {0.6, 1.0, 1.4}) {
      for (double tempo : {0.7, 1.0, 1.3}) {
        auto state = planner::initialize(pcfg);
        affect::MotionPrimitive p;
        p.id = text;
        p.display_text = text;
        planner::switch_primitive(state, p, {amp, tempo, 0.0});
        for (std::size_t w = 0; w < cfg.windows_per_style; ++w) {
          const auto win = planner::step(state, backend, pcfg);
          for (std::size_t k = 0; k < win.frames.size(); k += cfg.stride) frames.push_back(win.frames.frames[k]);
        }
      }
    }
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> noise(0.0, cfg.jitter_rad);
  const std::size_t base = frames.size();
  for (std::size_t c = 0; c < cfg.jitter_copies; ++c) {
    for (std::size_t i = 0; i < base; ++i) {
      motion::SmplFrame f = frames[i];
      for (auto& r : f.joints) {
        const Vec3 d(noise(rng), noise(rng), noise(rng));
        r = motion::matrix_to_sixd(motion::rotation_from_vector(d) * motion::sixd_to_matrix(r).matrix());
      }
      frames.push_back(f);
    }
  }
  for (std::size_t i = 0; i < cfg.stand_copies; ++i) frames.push_back(motion::stand_pose());

  std::vector<TrainingPair> pairs;
  pairs.reserve(frames.size());
  for (const auto& f : frames) pairs.push_back({f, reference_mapping(f, desc)});
  return pairs;
}

}  // namespace hiaer::retarget
