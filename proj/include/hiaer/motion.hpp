#pragma once

// Human motion representation: 135-dimensional SMPL-style frames (root
// translation + 22 joints in the continuous 6D rotation form), clips at a
// fixed 12.5 FPS, and their file formats.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hiaer/error.hpp"

namespace hiaer::motion {

inline constexpr std::size_t kNumJoints = 22;
inline constexpr std::size_t kSixDDim = 6;
inline constexpr std::size_t kFrameDim = 3 + kNumJoints * kSixDDim;  // 135
inline constexpr double kClipFps = 12.5;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using FrameVector = Eigen::Matrix<double, static_cast<int>(kFrameDim), 1>;

class MalformedFrameError : public Error {
 public:
  explicit MalformedFrameError(const std::string& m) : Error("malformed_frame", m) {}
};

class DegenerateRotationError : public Error {
 public:
  explicit DegenerateRotationError(const std::string& m) : Error("degenerate_rotation", m) {}
};

class InvalidRotationError : public Error {
 public:
  explicit InvalidRotationError(const std::string& m) : Error("invalid_rotation", m) {}
};

class InsufficientFramesError : public Error {
 public:
  explicit InsufficientFramesError(const std::string& m) : Error("insufficient_frames", m) {}
};

class ClipFormatError : public Error {
 public:
  explicit ClipFormatError(const std::string& m) : Error("clip_format", m) {}
};

/// Two unnormalized basis columns of a rotation matrix.
struct Rotation6D {
  Vec3 a = Vec3::UnitX();
  Vec3 b = Vec3::UnitY();

  static Rotation6D identity() { return {}; }
  bool operator==(const Rotation6D& o) const { return a == o.a && b == o.b; }
};

/// A 3x3 rotation: orthonormal with determinant +1 (within kTolerance).
class RotationMatrix {
 public:
  static constexpr double kTolerance = 1e-9;

  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Validates the matrix; throws InvalidRotationError otherwise.
  explicit RotationMatrix(const Mat3& m);

  /// Skips validation. Only for matrices constructed orthonormal by design.
  static RotationMatrix unchecked(const Mat3& m) {
    RotationMatrix r;
    r.m_ = m;
    return r;
  }

  static bool is_rotation(const Mat3& m, double tol = kTolerance);

  const Mat3& matrix() const { return m_; }

 private:
  Mat3 m_;
};

/// Gram-Schmidt completion of the two columns. Throws DegenerateRotationError
/// on a zero or parallel pair.
RotationMatrix sixd_to_matrix(const Rotation6D& rot);

/// First two columns of R. Throws InvalidRotationError if R is not a rotation.
Rotation6D matrix_to_sixd(const Mat3& r);

/// Rotation from an axis-angle vector (direction = axis, norm = angle).
Mat3 rotation_from_vector(const Vec3& rotvec);

/// Inverse of rotation_from_vector, angle in [0, pi].
Vec3 rotation_to_vector(const Mat3& r);

struct SmplFrame {
  Vec3 root_translation = Vec3::Zero();
  std::array<Rotation6D, kNumJoints> joints{};

  bool operator==(const SmplFrame& o) const {
    return root_translation == o.root_translation && joints == o.joints;
  }
};

/// Zero translation, identity rotation on every joint.
SmplFrame stand_pose();

/// Layout: [r(3), joint0(6), ..., joint21(6)] with each 6D as [a, b].
FrameVector encode_frame(const SmplFrame& f);

/// Throws MalformedFrameError on wrong length or non-finite entries.
SmplFrame decode_frame(std::span<const double> v);
inline SmplFrame decode_frame(const FrameVector& v) {
  return decode_frame(std::span<const double>(v.data(), kFrameDim));
}

struct MotionClip {
  std::vector<SmplFrame> frames;
  double fps = kClipFps;
  std::string label;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  double duration_seconds() const { return static_cast<double>(frames.size()) / fps; }
  bool operator==(const MotionClip&) const = default;
};

/// Clip of `count` stand frames.
MotionClip stand_clip(std::size_t count);

/// Last n frames; fps and label carried. Throws InsufficientFramesError.
MotionClip seed_window(const MotionClip& clip, std::size_t n);

// --- Clip files --------------------------------------------------------------
// Binary "HMC1": magic, fps (f32), frame count (u32), label length (u32) +
// UTF-8 label, then frame-major 135 x f32 records, all little-endian.

void write_clip_binary(std::ostream& out, const MotionClip& clip);
MotionClip read_clip_binary(std::istream& in);
void save_clip(const std::filesystem::path& path, const MotionClip& clip);
MotionClip load_clip(const std::filesystem::path& path);

/// JSON text form: {"fps": .., "label": .., "frames": [[135 numbers], ...]}.
std::string clip_to_json(const MotionClip& clip);
MotionClip clip_from_json(const std::string& text);

// --- Skeleton descriptor -----------------------------------------------------

struct SkeletonJoint {
  std::string name;
  int parent = -1;
};

/// Joint order for the 22 rotation slots; loaded from a data file.
struct SkeletonDescriptor {
  std::vector<SkeletonJoint> joints;
  int index_of(const std::string& name) const;
};

SkeletonDescriptor load_skeleton(const std::filesystem::path& path);

/// Standard SMPL body-joint indices used by the procedural generator and the
/// reference retargeting map.
namespace smpl {
inline constexpr int kPelvis = 0;
inline constexpr int kLeftHip = 1;
inline constexpr int kRightHip = 2;
inline constexpr int kSpine1 = 3;
inline constexpr int kLeftKnee = 4;
inline constexpr int kRightKnee = 5;
inline constexpr int kSpine2 = 6;
inline constexpr int kLeftAnkle = 7;
inline constexpr int kRightAnkle = 8;
inline constexpr int kSpine3 = 9;
inline constexpr int kLeftFoot = 10;
inline constexpr int kRightFoot = 11;
inline constexpr int kNeck = 12;
inline constexpr int kLeftCollar = 13;
inline constexpr int kRightCollar = 14;
inline constexpr int kHead = 15;
inline constexpr int kLeftShoulder = 16;
inline constexpr int kRightShoulder = 17;
inline constexpr int kLeftElbow = 18;
inline constexpr int kRightElbow = 19;
inline constexpr int kLeftWrist = 20;
inline constexpr int kRightWrist = 21;
}  // namespace smpl

}  // namespace hiaer::motion
