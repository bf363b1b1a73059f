#include <cmath>
#include <fstream>

#include <Eigen/Geometry>

#include "hiaer/retarget.hpp"

namespace hiaer::retarget {

using motion::Mat3;
using motion::Vec3;

namespace {

Vec3 vec3(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ArmChain chain_from_json(const nlohmann::json& j, const RobotDescriptor& d, const std::string& side) {
  ArmChain c;
  for (const auto& l : j.at("links")) {
    ChainLink link;
    link.joint = d.index_of(l.at("joint").get<std::string>());
    link.axis = vec3(l.at("axis"), side + " chain axis");
    link.offset = vec3(l.at("offset"), side + " chain offset");
    c.links.push_back(link);
  }
  c.wrist_offset = vec3(j.at("wrist_offset"), side + " wrist_offset");
  c.rest_wrist = vec3(j.at("rest_wrist"), side + " rest_wrist");
  return c;
}

void validate_chain(const ArmChain& c, std::size_t dofs, const std::string& side) {
  if (c.links.empty()) throw ConfigError(side + " arm chain is empty");
  for (const auto& l : c.links) {
    if (l.joint >= dofs) throw ConfigError(side + " arm chain references joint " + std::to_string(l.joint));
    if (std::abs(l.axis.norm() - 1.0) > 1e-9) throw ConfigError(side + " arm chain axis is not unit length");
  }
}

}  // namespace

double ArmChain::reach() const {
  double r = wrist_offset.norm();
  for (std::size_t i = 1; i < links.size(); ++i) r += links[i].offset.norm();
  return r;
}

double ArmChain::total_length() const { return reach() + origin().norm(); }

void RobotDescriptor::validate() const {
  if (joints.size() != kRobotDofs) {
    throw ConfigError("robot descriptor needs " + std::to_string(kRobotDofs) + " joints, got " +
                      std::to_string(joints.size()));
  }
  for (const auto& j : joints) {
    if (!(j.lower < j.upper)) throw ConfigError("joint " + j.name + ": lower limit must be below upper");
    if (j.default_angle < j.lower || j.default_angle > j.upper) {
      throw ConfigError("joint " + j.name + ": default angle outside limits");
    }
  }
  validate_chain(left_arm, joints.size(), "left");
  validate_chain(right_arm, joints.size(), "right");
  if (!(workspace.lo.array() < workspace.hi.array()).all()) throw ConfigError("workspace box is empty");
}

std::size_t RobotDescriptor::index_of(const std::string& joint_name) const {
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].name == joint_name) return i;
  }
  throw ConfigError("robot descriptor has no joint '" + joint_name + "'");
}

JointVector RobotDescriptor::lower() const {
  JointVector v;
  for (std::size_t i = 0; i < kRobotDofs; ++i) v[i] = joints.at(i).lower;
  return v;
}

JointVector RobotDescriptor::upper() const {
  JointVector v;
  for (std::size_t i = 0; i < kRobotDofs; ++i) v[i] = joints.at(i).upper;
  return v;
}

JointVector RobotDescriptor::defaults() const {
  JointVector v;
  for (std::size_t i = 0; i < kRobotDofs; ++i) v[i] = joints.at(i).default_angle;
  return v;
}

JointVector RobotDescriptor::clamp(const JointVector& q) const { return q.cwiseMax(lower()).cwiseMin(upper()); }

bool RobotDescriptor::within_limits(const JointVector& q, double tol) const {
  return (q.array() >= lower().array() - tol).all() && (q.array() <= upper().array() + tol).all();
}

RobotDescriptor RobotDescriptor::from_json(const nlohmann::json& j) {
  RobotDescriptor d;
  try {
    d.name = j.value("name", "");
    for (const auto& e : j.at("joints")) {
      d.joints.push_back({e.at("name").get<std::string>(), e.at("lower").get<double>(), e.at("upper").get<double>(),
                          e.value("default", 0.0)});
    }
    d.left_arm = chain_from_json(j.at("arm_chains").at("left"), d, "left");
    d.right_arm = chain_from_json(j.at("arm_chains").at("right"), d, "right");
    if (j.contains("workspace")) {
      d.workspace.lo = vec3(j["workspace"].at("lo"), "workspace.lo");
      d.workspace.hi = vec3(j["workspace"].at("hi"), "workspace.hi");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("robot descriptor: ") + e.what());
  }
  d.validate();
  return d;
}

RobotDescriptor RobotDescriptor::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open robot descriptor " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Vec3 fk_chain(const ArmChain& chain, const JointVector& q) {
  Mat3 r = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  for (const auto& l : chain.links) {
    p += r * l.offset;
    r = r * Eigen::AngleAxisd(q[static_cast<Eigen::Index>(l.joint)], l.axis).toRotationMatrix();
  }
  return p + r * chain.wrist_offset;
}

WristPositions fk_wrist(const JointVector& q, const RobotDescriptor& desc) {
  return {fk_chain(desc.left_arm, q), fk_chain(desc.right_arm, q)};
}

}  // namespace hiaer::retarget
