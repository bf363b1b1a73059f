#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "hiaer/retarget.hpp"

namespace hiaer::retarget {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

namespace {

constexpr char kWeightsMagic[4] = {'R', 'T', 'G', '1'};
// Loss growth beyond this factor over the initial loss counts as divergence.
constexpr double kDivergenceFactor = 1e6;

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Tanh:
      return z.array().tanh().matrix();
    case Activation::Identity:
      break;
  }
  return z;
}

// Derivative expressed through the activation output h.
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& h, Activation a) {
  switch (a) {
    case Activation::Relu:
      return (h.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh:
      return (1.0 - h.array().square()).matrix();
    case Activation::Identity:
      break;
  }
  return Eigen::MatrixXd::Ones(h.rows(), h.cols());
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw WeightsFormatError("truncated weights file");
  return value;
}

Eigen::MatrixXd encode_inputs(const std::vector<TrainingPair>& pairs) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(motion::kFrameDim), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = motion::encode_frame(pairs[i].input);
  return x;
}

Eigen::MatrixXd encode_targets(const std::vector<TrainingPair>& pairs) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(kRobotDofs), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) y.col(static_cast<Eigen::Index>(i)) = pairs[i].target;
  return y;
}

double mse(const RetargetNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  constexpr Eigen::Index kChunk = 1024;
  double sum = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); c += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.cols() - c);
    sum += (net.forward_batch(x.middleCols(c, n)) - y.middleCols(c, n)).squaredNorm();
  }
  return sum / static_cast<double>(y.size());
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "?";
}

RetargetNetwork::RetargetNetwork(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {}

RetargetNetwork RetargetNetwork::zeros() {
  const std::size_t dims[] = {motion::kFrameDim, kHiddenUnits, kHiddenUnits, kRobotDofs};
  std::vector<DenseLayer> layers;
  for (int i = 0; i < 3; ++i) {
    const auto rows = static_cast<Eigen::Index>(dims[i + 1]);
    layers.push_back({Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(dims[i])), Eigen::VectorXd::Zero(rows)});
  }
  return RetargetNetwork(std::move(layers), Activation::Relu);
}

RetargetNetwork RetargetNetwork::random(std::uint64_t seed, double scale, std::size_t hidden) {
  const std::size_t dims[] = {motion::kFrameDim, hidden, hidden, kRobotDofs};
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (int i = 0; i < 3; ++i) {
    const auto rows = static_cast<Eigen::Index>(dims[i + 1]);
    const auto cols = static_cast<Eigen::Index>(dims[i]);
    std::normal_distribution<double> n(0.0, scale * std::sqrt(2.0 / static_cast<double>(cols)));
    DenseLayer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd::Zero(rows)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) l.w(r, c) = n(rng);
    }
    layers.push_back(std::move(l));
  }
  return RetargetNetwork(std::move(layers), Activation::Relu);
}

Eigen::MatrixXd RetargetNetwork::forward_batch(const Eigen::MatrixXd& x) const {
  if (layers_.empty()) throw WeightsFormatError("network has no layers");
  if (x.rows() != static_cast<Eigen::Index>(input_dim())) {
    throw motion::MalformedFrameError("network input must have " + std::to_string(input_dim()) + " rows, got " +
                                      std::to_string(x.rows()));
  }
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].w * h;
    z.colwise() += layers_[i].b;
    h = i + 1 < layers_.size() ? activate(z, activation_) : std::move(z);
  }
  return h;
}

Eigen::VectorXd RetargetNetwork::forward_raw(const Eigen::VectorXd& x) const { return forward_batch(x); }

void RetargetNetwork::validate() const {
  if (layers_.empty()) throw WeightsFormatError("network has no layers");
  if (input_dim() != motion::kFrameDim) {
    throw WeightsFormatError("network input is " + std::to_string(input_dim()) + ", expected " +
                             std::to_string(motion::kFrameDim));
  }
  if (output_dim() != kRobotDofs) {
    throw WeightsFormatError("network output is " + std::to_string(output_dim()) + ", expected " +
                             std::to_string(kRobotDofs));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.b.size() != l.w.rows()) throw WeightsFormatError("layer " + std::to_string(i) + " bias size mismatch");
    if (i > 0 && l.w.cols() != layers_[i - 1].w.rows()) {
      throw WeightsFormatError("layer " + std::to_string(i) + " input does not match the previous output");
    }
    if (!l.w.allFinite() || !l.b.allFinite()) throw WeightsFormatError("layer " + std::to_string(i) + " is not finite");
  }
}

bool RetargetNetwork::operator==(const RetargetNetwork& o) const {
  if (activation_ != o.activation_ || layers_.size() != o.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = o.layers_[i];
    if (a.w.rows() != b.w.rows() || a.w.cols() != b.w.cols() || a.w != b.w || a.b != b.b) return false;
  }
  return true;
}

void write_weights(std::ostream& out, const RetargetNetwork& net) {
  out.write(kWeightsMagic, 4);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(net.activation()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(l.w.cols()));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) write_pod<float>(out, static_cast<float>(l.w(r, c)));
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) write_pod<float>(out, static_cast<float>(l.b[r]));
  }
  if (!out) throw WeightsFormatError("failed writing weights");
}

RetargetNetwork read_weights(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0) throw WeightsFormatError("bad weights magic");
  const auto tag = read_pod<std::uint8_t>(in);
  if (tag > static_cast<std::uint8_t>(Activation::Identity)) {
    throw WeightsFormatError("unknown activation tag " + std::to_string(tag));
  }
  const auto count = read_pod<std::uint32_t>(in);
  if (count == 0 || count > 16) throw WeightsFormatError("implausible layer count " + std::to_string(count));
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536) throw WeightsFormatError("implausible layer shape");
    DenseLayer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = read_pod<float>(in);
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = read_pod<float>(in);
    layers.push_back(std::move(l));
  }
  RetargetNetwork net(std::move(layers), static_cast<Activation>(tag));
  net.validate();
  return net;
}

void save_weights(const std::filesystem::path& path, const RetargetNetwork& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightsFormatError("cannot write " + path.string());
  write_weights(out, net);
}

RetargetNetwork load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightsFormatError("cannot open " + path.string());
  return read_weights(in);
}

RobotPose forward(const RetargetNetwork& net, const motion::SmplFrame& frame, const RobotDescriptor& desc) {
  const Eigen::VectorXd x = motion::encode_frame(frame);
  const Eigen::VectorXd y = net.forward_raw(x);
  if (y.size() != static_cast<Eigen::Index>(kRobotDofs)) {
    throw WeightsFormatError("network output is " + std::to_string(y.size()) + ", expected 29");
  }
  if (!y.allFinite()) throw NumericFaultError("retarget network produced a non-finite output");
  return desc.clamp(y);
}

RobotTrajectory retarget_clip(const RetargetNetwork& net, const motion::MotionClip& clip,
                              const RobotDescriptor& desc) {
  if (clip.empty()) throw EmptyInputError("cannot retarget an empty clip");
  RobotTrajectory t;
  t.fps = clip.fps;
  t.poses.reserve(clip.size());
  for (const auto& f : clip.frames) t.poses.push_back(forward(net, f, desc));
  return t;
}

nlohmann::json trajectory_to_json(const RobotTrajectory& t, const RobotDescriptor& desc) {
  auto names = nlohmann::json::array();
  for (const auto& j : desc.joints) names.push_back(j.name);
  auto poses = nlohmann::json::array();
  for (const auto& p : t.poses) poses.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  return {{"fps", t.fps}, {"joints", std::move(names)}, {"poses", std::move(poses)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.hidden = j.value("hidden", c.hidden);
  c.init_scale = j.value("init_scale", c.init_scale);
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
}

double mean_squared_error(const RetargetNetwork& net, const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) throw EmptyInputError("no training pairs");
  return mse(net, encode_inputs(pairs), encode_targets(pairs));
}

TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg) {
  if (pairs.empty()) throw EmptyInputError("no training pairs");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  const Eigen::MatrixXd x = encode_inputs(pairs);
  const Eigen::MatrixXd y = encode_targets(pairs);

  TrainResult result;
  result.net = RetargetNetwork::random(cfg.rng_seed, cfg.init_scale, cfg.hidden);
  auto& layers = result.net.layers();
  const Activation act = result.net.activation();
  result.initial_mse = mse(result.net, x, y);

  std::vector<Eigen::MatrixXd> vw;
  std::vector<Eigen::VectorXd> vb;
  for (const auto& l : layers) {
    vw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    vb.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }

  std::mt19937_64 rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t nl = layers.size();
  std::vector<Eigen::MatrixXd> h(nl + 1);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      h[0].resize(x.rows(), static_cast<Eigen::Index>(n));
      Eigen::MatrixXd target(y.rows(), static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k) {
        h[0].col(static_cast<Eigen::Index>(k)) = x.col(order[start + k]);
        target.col(static_cast<Eigen::Index>(k)) = y.col(order[start + k]);
      }
      for (std::size_t i = 0; i < nl; ++i) {
        Eigen::MatrixXd z = layers[i].w * h[i];
        z.colwise() += layers[i].b;
        h[i + 1] = i + 1 < nl ? activate(z, act) : std::move(z);
      }
      Eigen::MatrixXd delta = (2.0 / static_cast<double>(target.size())) * (h[nl] - target);
      for (std::size_t i = nl; i-- > 0;) {
        const Eigen::MatrixXd gw = delta * h[i].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (i > 0) delta = (layers[i].w.transpose() * delta).cwiseProduct(activation_grad(h[i], act));
        vw[i] = cfg.momentum * vw[i] - cfg.learning_rate * gw;
        vb[i] = cfg.momentum * vb[i] - cfg.learning_rate * gb;
        layers[i].w += vw[i];
        layers[i].b += vb[i];
      }
    }
    const double loss = mse(result.net, x, y);
    if (!std::isfinite(loss) || loss > kDivergenceFactor * std::max(result.initial_mse, 1e-12)) {
      throw DivergenceError("training loss diverged (" + std::to_string(loss) + ") at epoch " +
                            std::to_string(epoch + 1) + "; try a smaller learning_rate");
    }
    result.epoch_mse.push_back(loss);
  }
  return result;
}

}  // namespace hiaer::retarget
