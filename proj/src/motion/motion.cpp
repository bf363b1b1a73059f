#include "hiaer/motion.hpp"

#include <Eigen/Geometry>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace hiaer::motion {

namespace {

constexpr double kDegenerateEps = 1e-12;

}  // namespace

RotationMatrix::RotationMatrix(const Mat3& m) : m_(m) {
  if (!is_rotation(m)) {
    throw InvalidRotationError("matrix is not orthonormal with determinant +1");
  }
}

bool RotationMatrix::is_rotation(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  const Mat3 gram = m.transpose() * m - Mat3::Identity();
  if (gram.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(m.determinant() - 1.0) <= tol;
}

RotationMatrix sixd_to_matrix(const Rotation6D& rot) {
  if (!rot.a.allFinite() || !rot.b.allFinite()) {
    throw DegenerateRotationError("non-finite 6D rotation");
  }
  const double na = rot.a.norm();
  if (na < kDegenerateEps) throw DegenerateRotationError("first 6D column is zero");
  const Vec3 c1 = rot.a / na;

  Vec3 ortho = rot.b - c1.dot(rot.b) * c1;
  const double nb = rot.b.norm();
  const double no = ortho.norm();
  if (nb < kDegenerateEps || no < kDegenerateEps * nb) {
    throw DegenerateRotationError("6D columns are zero or parallel");
  }
  Vec3 c2 = ortho / no;
  // Second pass recovers orthogonality lost to cancellation when a and b are
  // nearly parallel.
  c2 -= c1.dot(c2) * c1;
  c2.normalize();
  const Vec3 c3 = c1.cross(c2);

  Mat3 m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c3;
  return RotationMatrix::unchecked(m);
}

Rotation6D matrix_to_sixd(const Mat3& r) {
  if (!RotationMatrix::is_rotation(r)) {
    throw InvalidRotationError("matrix_to_sixd expects an orthonormal matrix with det +1");
  }
  return Rotation6D{r.col(0), r.col(1)};
}

Mat3 rotation_from_vector(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
}

Vec3 rotation_to_vector(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

SmplFrame stand_pose() { return SmplFrame{}; }

FrameVector encode_frame(const SmplFrame& f) {
  FrameVector v;
  v.segment<3>(0) = f.root_translation;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const auto base = static_cast<Eigen::Index>(3 + j * kSixDDim);
    v.segment<3>(base) = f.joints[j].a;
    v.segment<3>(base + 3) = f.joints[j].b;
  }
  return v;
}

SmplFrame decode_frame(std::span<const double> v) {
  if (v.size() != kFrameDim) {
    throw MalformedFrameError("frame vector has " + std::to_string(v.size()) +
                              " entries, expected " + std::to_string(kFrameDim));
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw MalformedFrameError("non-finite value at frame index " + std::to_string(i));
    }
  }
  SmplFrame f;
  f.root_translation = Vec3(v[0], v[1], v[2]);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const std::size_t base = 3 + j * kSixDDim;
    f.joints[j].a = Vec3(v[base], v[base + 1], v[base + 2]);
    f.joints[j].b = Vec3(v[base + 3], v[base + 4], v[base + 5]);
  }
  return f;
}

MotionClip stand_clip(std::size_t count) {
  MotionClip clip;
  clip.frames.assign(count, stand_pose());
  clip.label = "stand";
  return clip;
}

MotionClip seed_window(const MotionClip& clip, std::size_t n) {
  if (clip.frames.size() < n) {
    throw InsufficientFramesError("clip has " + std::to_string(clip.frames.size()) +
                                  " frames, seed window needs " + std::to_string(n));
  }
  MotionClip out;
  out.fps = clip.fps;
  out.label = clip.label;
  out.frames.assign(clip.frames.end() - static_cast<std::ptrdiff_t>(n), clip.frames.end());
  return out;
}

// --- binary clip files -------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "clip and weight file writers assume a little-endian host");

constexpr char kClipMagic[4] = {'H', 'M', 'C', '1'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ClipFormatError("truncated clip file");
  return value;
}

}  // namespace

void write_clip_binary(std::ostream& out, const MotionClip& clip) {
  out.write(kClipMagic, 4);
  write_pod<float>(out, static_cast<float>(clip.fps));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(clip.frames.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(clip.label.size()));
  out.write(clip.label.data(), static_cast<std::streamsize>(clip.label.size()));
  for (const auto& frame : clip.frames) {
    const FrameVector v = encode_frame(frame);
    for (Eigen::Index i = 0; i < v.size(); ++i) write_pod<float>(out, static_cast<float>(v[i]));
  }
  if (!out) throw ClipFormatError("failed writing clip");
}

MotionClip read_clip_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kClipMagic, 4) != 0) throw ClipFormatError("bad clip magic");
  MotionClip clip;
  clip.fps = read_pod<float>(in);
  const auto count = read_pod<std::uint32_t>(in);
  const auto label_len = read_pod<std::uint32_t>(in);
  clip.label.resize(label_len);
  in.read(clip.label.data(), label_len);
  if (!in) throw ClipFormatError("truncated clip label");
  clip.frames.reserve(count);
  std::array<double, kFrameDim> buf{};
  for (std::uint32_t k = 0; k < count; ++k) {
    for (auto& x : buf) x = read_pod<float>(in);
    clip.frames.push_back(decode_frame(buf));
  }
  return clip;
}

void save_clip(const std::filesystem::path& path, const MotionClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ClipFormatError("cannot open " + path.string() + " for writing");
  write_clip_binary(out, clip);
}

MotionClip load_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ClipFormatError("cannot open " + path.string());
  return read_clip_binary(in);
}

std::string clip_to_json(const MotionClip& clip) {
  nlohmann::json j;
  j["fps"] = clip.fps;
  j["label"] = clip.label;
  auto frames = nlohmann::json::array();
  for (const auto& f : clip.frames) {
    const FrameVector v = encode_frame(f);
    frames.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

MotionClip clip_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ClipFormatError(std::string("clip JSON: ") + e.what());
  }
  MotionClip clip;
  clip.fps = j.value("fps", kClipFps);
  clip.label = j.value("label", std::string{});
  for (const auto& row : j.at("frames")) {
    const auto v = row.get<std::vector<double>>();
    clip.frames.push_back(decode_frame(v));
  }
  return clip;
}

int SkeletonDescriptor::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

SkeletonDescriptor load_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open skeleton descriptor " + path.string());
  const auto j = nlohmann::json::parse(in);
  SkeletonDescriptor desc;
  for (const auto& e : j.at("joints")) {
    desc.joints.push_back({e.at("name").get<std::string>(), e.at("parent").get<int>()});
  }
  if (desc.joints.size() != kNumJoints) {
    throw ConfigError("skeleton descriptor must list " + std::to_string(kNumJoints) + " joints");
  }
  return desc;
}

}  // namespace hiaer::motion
