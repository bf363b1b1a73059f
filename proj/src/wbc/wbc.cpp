#include "hiaer/wbc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace hiaer::wbc {

namespace {

JointVector joint_vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (j.is_number()) return JointVector::Constant(j.get<double>());
  if (!j.is_array() || j.size() != kRobotDofs) {
    throw ConfigError(what + " must be a number or an array of " + std::to_string(kRobotDofs));
  }
  JointVector v;
  for (std::size_t i = 0; i < kRobotDofs; ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

nlohmann::json joint_vector_json(const JointVector& v) {
  if ((v.array() == v[0]).all()) return v[0];
  return std::vector<double>(v.data(), v.data() + v.size());
}

Interval interval_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(what + " must be [lo, hi]");
  Interval i{j[0].get<double>(), j[1].get<double>()};
  if (i.lo > i.hi) throw ConfigError(what + ": lo > hi");
  return i;
}

TrackingNorm norm_from_string(const std::string& s) {
  if (s == "l2") return TrackingNorm::L2;
  if (s == "max") return TrackingNorm::Max;
  throw ConfigError("tracking norm must be l2 or max, got '" + s + "'");
}

const char* norm_name(TrackingNorm n) { return n == TrackingNorm::Max ? "max" : "l2"; }

double draw(std::mt19937_64& rng, const Interval& i) {
  if (i.lo == i.hi) {
    (void)rng();  // keep the stream aligned with the non-degenerate case
    return i.lo;
  }
  return std::uniform_real_distribution<double>(i.lo, i.hi)(rng);
}

}  // namespace

bool RobotState::valid() const {
  return std::abs(root.orientation.norm() - 1.0) <= 1e-9 && root.position.allFinite() &&
         root.orientation.coeffs().allFinite() && root.linear_velocity.allFinite() &&
         root.angular_velocity.allFinite() && q.allFinite() && qdot.allFinite();
}

Observation assemble_observation(const RobotState& s, const JointVector& a_prev, const JointVector& y_ref) {
  Observation o;
  o.segment<3>(0) = s.root.position;
  o[3] = s.root.orientation.w();
  o[4] = s.root.orientation.x();
  o[5] = s.root.orientation.y();
  o[6] = s.root.orientation.z();
  o.segment<3>(7) = s.root.linear_velocity;
  o.segment<3>(10) = s.root.angular_velocity;
  o.segment<kRobotDofs>(kObsQ) = s.q;
  o.segment<kRobotDofs>(kObsQdot) = s.qdot;
  o.segment<kRobotDofs>(kObsPrevAction) = a_prev;
  o.segment<kRobotDofs>(kObsReference) = y_ref;
  return o;
}

ObservationParts unpack_observation(const Observation& o) {
  ObservationParts p;
  p.state.root.position = o.segment<3>(0);
  p.state.root.orientation = Eigen::Quaterniond(o[3], o[4], o[5], o[6]);
  p.state.root.linear_velocity = o.segment<3>(7);
  p.state.root.angular_velocity = o.segment<3>(10);
  p.state.q = o.segment<kRobotDofs>(kObsQ);
  p.state.qdot = o.segment<kRobotDofs>(kObsQdot);
  p.a_prev = o.segment<kRobotDofs>(kObsPrevAction);
  p.y_ref = o.segment<kRobotDofs>(kObsReference);
  return p;
}

SimConfig SimConfig::for_robot(const retarget::RobotDescriptor& desc) {
  SimConfig c;
  c.lower = desc.lower();
  c.upper = desc.upper();
  return c;
}

void SimConfig::validate() const {
  if (control_rate != 50.0) throw ConfigError("control_rate must be 50 Hz");
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
  if (!(inertia.array() > 0.0).all()) throw ConfigError("inertia must be positive");
  if (!(damping.array() >= 0.0).all()) throw ConfigError("damping must be nonnegative");
  if (!(torque_limit.array() > 0.0).all()) throw ConfigError("torque_limit must be positive");
  if (!(lower.array() < upper.array()).all()) throw ConfigError("joint limits must satisfy lower < upper");
  if (!(nominal_mass > 0.0)) throw ConfigError("nominal_mass must be positive");
  if (!(episode_seconds > 0.0)) throw ConfigError("episode_seconds must be positive");
}

JointVector pd_control(const JointVector& target, const RobotState& s, const PDGains& g, const SimConfig& cfg) {
  const JointVector tau = g.kp.cwiseProduct(target - s.q) - g.kd.cwiseProduct(s.qdot);
  return tau.cwiseMax(-cfg.torque_limit).cwiseMin(cfg.torque_limit);
}

RobotState step_sim(const RobotState& s, const JointVector& tau, const SimConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw ConfigError("step_sim needs dt > 0");
  RobotState n = s;
  const double h = dt / cfg.substeps;
  for (int k = 0; k < cfg.substeps; ++k) {
    const JointVector qddot = (tau + cfg.disturbance - cfg.damping.cwiseProduct(n.qdot)).cwiseQuotient(cfg.inertia);
    n.qdot += h * qddot;
    n.q += h * n.qdot;
    for (Eigen::Index j = 0; j < n.q.size(); ++j) {
      if (n.q[j] < cfg.lower[j]) {
        n.q[j] = cfg.lower[j];
        n.qdot[j] = 0.0;
      } else if (n.q[j] > cfg.upper[j]) {
        n.q[j] = cfg.upper[j];
        n.qdot[j] = 0.0;
      }
    }
  }
  if (!n.q.allFinite() || !n.qdot.allFinite()) throw NumericFaultError("simulation produced a non-finite state");
  return n;
}

JointVector interpolate_reference(const RobotTrajectory& traj, std::size_t tick, double control_rate) {
  if (traj.empty()) throw EmptyInputError("empty reference trajectory");
  const double u = static_cast<double>(tick) * traj.fps / control_rate;
  const auto k = static_cast<std::size_t>(std::floor(u));
  if (k + 1 >= traj.size()) return traj.poses.back();
  const double frac = u - static_cast<double>(k);
  if (frac == 0.0) return traj.poses[k];
  return (1.0 - frac) * traj.poses[k] + frac * traj.poses[k + 1];
}

std::size_t tick_count(const RobotTrajectory& traj, double control_rate) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(traj.size()) * control_rate / traj.fps));
}

double tracking_error(const JointVector& q, const JointVector& ref, TrackingNorm norm) {
  return norm == TrackingNorm::Max ? (q - ref).cwiseAbs().maxCoeff() : (q - ref).norm();
}

double tilt_angle(const Eigen::Quaterniond& q) {
  const motion::Vec3 z = q.normalized() * motion::Vec3::UnitZ();
  return std::acos(std::clamp(z.z(), -1.0, 1.0));
}

RewardBreakdown compute_reward(const RobotState& s, const JointVector& y_ref, const JointVector& action,
                               const JointVector& a_prev, const RewardWeights& w,
                               const retarget::RobotDescriptor& desc) {
  RewardBreakdown r;
  const double e = tracking_error(s.q, y_ref, w.norm);
  r.joint_pos_tracking = w.joint_pos_tracking * std::exp(-(e * e) / (w.tracking_sigma * w.tracking_sigma));
  r.alive = w.alive;
  r.action_rate = w.action_rate * (action - a_prev).squaredNorm();
  const JointVector excess = (s.q - desc.upper()).cwiseMax(0.0) + (desc.lower() - s.q).cwiseMax(0.0);
  r.joint_limits = w.joint_limits * excess.squaredNorm();
  const double tilt = tilt_angle(s.root.orientation);
  r.orientation = w.orientation * tilt * tilt;
  const double dz = s.root.position.z() - w.target_base_height;
  r.base_height = w.base_height * dz * dz;
  // Fixed root: no foot motion and no contacts to penalize.
  r.feet_sliding = w.feet_sliding * 0.0;
  r.undesired_contacts = w.undesired_contacts * 0.0;
  r.total = r.joint_pos_tracking + r.alive + r.action_rate + r.joint_limits + r.orientation + r.base_height +
            r.feet_sliding + r.undesired_contacts;
  return r;
}

bool RandomizationRecord::within(const RandomizationRanges& r) const {
  for (int a = 0; a < 3; ++a) {
    if (!r.external_force.contains(external_force[a]) || !r.external_torque.contains(external_torque[a]) ||
        !r.angular_velocity.contains(angular_velocity[a])) {
      return false;
    }
  }
  for (Eigen::Index j = 0; j < joint_position_noise.size(); ++j) {
    if (!r.joint_position.contains(joint_position_noise[j]) || !r.joint_velocity.contains(joint_velocity_noise[j])) {
      return false;
    }
  }
  return r.friction.contains(friction) && r.base_mass.contains(base_mass_delta);
}

RandomizationRecord sample_randomization(const RandomizationRanges& r, std::uint64_t seed,
                                         std::size_t reference_frames) {
  std::mt19937_64 rng(seed);
  RandomizationRecord rec;
  for (int a = 0; a < 3; ++a) rec.external_force[a] = draw(rng, r.external_force);
  for (int a = 0; a < 3; ++a) rec.external_torque[a] = draw(rng, r.external_torque);
  rec.friction = draw(rng, r.friction);
  rec.base_mass_delta = draw(rng, r.base_mass);
  for (int a = 0; a < 3; ++a) rec.angular_velocity[a] = draw(rng, r.angular_velocity);
  for (Eigen::Index j = 0; j < rec.joint_position_noise.size(); ++j) rec.joint_position_noise[j] = draw(rng, r.joint_position);
  for (Eigen::Index j = 0; j < rec.joint_velocity_noise.size(); ++j) rec.joint_velocity_noise[j] = draw(rng, r.joint_velocity);
  if (r.reference_state_init && reference_frames > 0) {
    rec.start_frame = std::uniform_int_distribution<std::size_t>(0, reference_frames - 1)(rng);
  }
  return rec;
}

SimConfig apply_randomization(const SimConfig& cfg, const RandomizationRecord& r) {
  SimConfig c = cfg;
  c.inertia *= (cfg.nominal_mass + r.base_mass_delta) / cfg.nominal_mass;
  c.damping *= r.friction;
  for (Eigen::Index j = 0; j < c.disturbance.size(); ++j) {
    const auto a = static_cast<int>(j % 3);
    c.disturbance[j] += kForceLever * r.external_force[a] + r.external_torque[a];
  }
  return c;
}

RobotState initial_state(const JointVector& ref, const RandomizationRecord& r, const SimConfig& cfg) {
  RobotState s;
  s.q = (ref + r.joint_position_noise).cwiseMax(cfg.lower).cwiseMin(cfg.upper);
  s.qdot = r.joint_velocity_noise;
  s.root.angular_velocity = r.angular_velocity;
  return s;
}

double CurriculumSchedule::eps(double progress) const {
  const double p = std::clamp(progress, 0.0, 1.0);
  const double from = increasing ? eps_end : eps_start;
  const double to = increasing ? eps_start : eps_end;
  return from + (to - from) * p;
}

Termination curriculum_check(double tracking_error, double eps_term) {
  if (!std::isfinite(tracking_error) || !(eps_term > 0.0)) {
    throw ConfigError("curriculum_check needs a finite error and eps_term > 0");
  }
  return tracking_error > eps_term ? Termination::Terminate : Termination::Continue;
}

Simulator::Simulator(SimConfig cfg, PDGains gains, RobotState initial)
    : cfg_(std::move(cfg)), gains_(std::move(gains)), state_(std::move(initial)), a_prev_(state_.q) {
  cfg_.validate();
}

JointVector Simulator::tick(const JointVector& target) {
  const JointVector tau = pd_control(target, state_, gains_, cfg_);
  state_ = step_sim(state_, tau, cfg_, 1.0 / cfg_.control_rate);
  a_prev_ = target;
  ++ticks_;
  return tau;
}

TrackingReport run_tracking(const RobotTrajectory& traj, const PDGains& gains, const SimConfig& cfg,
                            const retarget::RobotDescriptor& desc,
                            const std::optional<RandomizationRecord>& randomization, const TrackingOptions& opts) {
  if (traj.empty()) throw EmptyInputError("run_tracking needs a nonempty trajectory");
  const RandomizationRecord rec = randomization.value_or(RandomizationRecord{});
  const SimConfig sim_cfg = randomization ? apply_randomization(cfg, rec) : cfg;
  const std::size_t total = tick_count(traj, sim_cfg.control_rate);
  const auto start = std::min(
      total - 1, static_cast<std::size_t>(std::llround(static_cast<double>(rec.start_frame) * sim_cfg.control_rate /
                                                       traj.fps)));

  const JointVector ref0 = interpolate_reference(traj, start, sim_cfg.control_rate);
  Simulator sim(sim_cfg, gains, initial_state(ref0, rec, sim_cfg));
  TrackingReport report;
  double sq = 0.0;
  JointVector a_prev = ref0;
  for (std::size_t k = start; k < total; ++k) {
    const JointVector target = interpolate_reference(traj, k, sim_cfg.control_rate);
    const RobotState& s = sim.state();
    const double err = tracking_error(s.q, target, opts.norm);
    sq += (s.q - target).squaredNorm();
    report.max_error = std::max(report.max_error, (s.q - target).cwiseAbs().maxCoeff());
    const RewardBreakdown r = compute_reward(s, target, target, a_prev, opts.weights, desc);
    report.rewards.push_back(r.total);
    ++report.ticks;
    StepRecord rec_step{k, target, s.q, JointVector::Zero(), r, err};
    if (curriculum_check(err, opts.eps_term) == Termination::Terminate) {
      report.terminated_early = true;
      if (opts.record_steps) report.steps.push_back(rec_step);
      break;
    }
    rec_step.torque = sim.tick(target);
    a_prev = target;
    if (opts.record_steps) report.steps.push_back(std::move(rec_step));
  }
  report.rms_error = std::sqrt(sq / (static_cast<double>(report.ticks) * static_cast<double>(kRobotDofs)));
  return report;
}

nlohmann::json report_to_json(const TrackingReport& r) {
  return {{"rms_error", r.rms_error},         {"max_error", r.max_error}, {"ticks", r.ticks},
          {"terminated_early", r.terminated_early}, {"rewards", r.rewards}};
}

void write_steps_csv(std::ostream& out, const TrackingReport& r) {
  out << "tick";
  for (const char* p : {"target", "q", "torque"}) {
    for (std::size_t j = 0; j < kRobotDofs; ++j) out << ',' << p << '_' << j;
  }
  out << ",error,joint_pos_tracking,alive,action_rate,joint_limits,orientation,base_height,feet_sliding,"
         "undesired_contacts,total\n";
  for (const auto& s : r.steps) {
    out << s.tick;
    for (const JointVector* v : {&s.target, &s.q, &s.torque}) {
      for (Eigen::Index j = 0; j < v->size(); ++j) out << ',' << (*v)[j];
    }
    const auto& w = s.reward;
    out << ',' << s.error << ',' << w.joint_pos_tracking << ',' << w.alive << ',' << w.action_rate << ','
        << w.joint_limits << ',' << w.orientation << ',' << w.base_height << ',' << w.feet_sliding << ','
        << w.undesired_contacts << ',' << w.total << '\n';
  }
}

WbcConfig wbc_config_from_json(const nlohmann::json& j, const retarget::RobotDescriptor& desc) {
  WbcConfig c;
  c.sim = SimConfig::for_robot(desc);
  try {
    if (j.contains("gains")) {
      const auto& g = j["gains"];
      if (g.contains("kp")) c.gains.kp = joint_vector_from_json(g["kp"], "gains.kp");
      if (g.contains("kd")) c.gains.kd = joint_vector_from_json(g["kd"], "gains.kd");
      if (!(c.gains.kp.array() >= 0.0).all() || !(c.gains.kd.array() >= 0.0).all()) {
        throw ConfigError("PD gains must be nonnegative");
      }
    }
    if (j.contains("sim")) {
      const auto& s = j["sim"];
      c.sim.control_rate = s.value("control_rate", c.sim.control_rate);
      c.sim.substeps = s.value("substeps", c.sim.substeps);
      if (s.contains("inertia")) c.sim.inertia = joint_vector_from_json(s["inertia"], "sim.inertia");
      if (s.contains("damping")) c.sim.damping = joint_vector_from_json(s["damping"], "sim.damping");
      if (s.contains("torque_limit")) c.sim.torque_limit = joint_vector_from_json(s["torque_limit"], "sim.torque_limit");
      c.sim.nominal_mass = s.value("nominal_mass", c.sim.nominal_mass);
      c.sim.episode_seconds = s.value("episode_seconds", c.sim.episode_seconds);
    }
    c.sim.validate();
    if (j.contains("reward")) {
      const auto& r = j["reward"];
      auto& w = c.reward;
      w.joint_pos_tracking = r.value("joint_pos_tracking", w.joint_pos_tracking);
      w.alive = r.value("alive", w.alive);
      w.action_rate = r.value("action_rate", w.action_rate);
      w.joint_limits = r.value("joint_limits", w.joint_limits);
      w.orientation = r.value("orientation", w.orientation);
      w.base_height = r.value("base_height", w.base_height);
      w.feet_sliding = r.value("feet_sliding", w.feet_sliding);
      w.undesired_contacts = r.value("undesired_contacts", w.undesired_contacts);
      w.tracking_sigma = r.value("tracking_sigma", w.tracking_sigma);
      w.target_base_height = r.value("target_base_height", w.target_base_height);
      if (r.contains("norm")) w.norm = norm_from_string(r["norm"].get<std::string>());
      if (!(w.tracking_sigma > 0.0)) throw ConfigError("tracking_sigma must be positive");
    }
    if (j.contains("randomization")) {
      const auto& r = j["randomization"];
      auto& g = c.randomization;
      auto set = [&](const char* key, Interval& i) {
        if (r.contains(key)) i = interval_from_json(r[key], std::string("randomization.") + key);
      };
      set("external_force", g.external_force);
      set("external_torque", g.external_torque);
      set("friction", g.friction);
      set("base_mass", g.base_mass);
      set("angular_velocity", g.angular_velocity);
      set("joint_position", g.joint_position);
      set("joint_velocity", g.joint_velocity);
      g.reference_state_init = r.value("reference_state_init", g.reference_state_init);
    }
    if (j.contains("curriculum")) {
      const auto& r = j["curriculum"];
      auto& s = c.curriculum;
      s.eps_start = r.value("eps_start", s.eps_start);
      s.eps_end = r.value("eps_end", s.eps_end);
      if (r.contains("direction")) {
        const auto d = r["direction"].get<std::string>();
        if (d != "increasing" && d != "decreasing") throw ConfigError("curriculum.direction must be increasing or decreasing");
        s.increasing = d == "increasing";
      }
      if (r.contains("norm")) s.norm = norm_from_string(r["norm"].get<std::string>());
      if (!(s.eps_start > 0.0) || !(s.eps_end > 0.0)) throw ConfigError("curriculum eps must be positive");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("wbc config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const WbcConfig& c) {
  auto iv = [](const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); };
  const auto& w = c.reward;
  const auto& r = c.randomization;
  return {{"gains", {{"kp", joint_vector_json(c.gains.kp)}, {"kd", joint_vector_json(c.gains.kd)}}},
          {"sim",
           {{"control_rate", c.sim.control_rate},
            {"substeps", c.sim.substeps},
            {"inertia", joint_vector_json(c.sim.inertia)},
            {"damping", joint_vector_json(c.sim.damping)},
            {"torque_limit", joint_vector_json(c.sim.torque_limit)},
            {"nominal_mass", c.sim.nominal_mass},
            {"episode_seconds", c.sim.episode_seconds}}},
          {"reward",
           {{"joint_pos_tracking", w.joint_pos_tracking},
            {"alive", w.alive},
            {"action_rate", w.action_rate},
            {"joint_limits", w.joint_limits},
            {"orientation", w.orientation},
            {"base_height", w.base_height},
            {"feet_sliding", w.feet_sliding},
            {"undesired_contacts", w.undesired_contacts},
            {"tracking_sigma", w.tracking_sigma},
            {"target_base_height", w.target_base_height},
            {"norm", norm_name(w.norm)}}},
          {"randomization",
           {{"external_force", iv(r.external_force)},
            {"external_torque", iv(r.external_torque)},
            {"friction", iv(r.friction)},
            {"base_mass", iv(r.base_mass)},
            {"angular_velocity", iv(r.angular_velocity)},
            {"joint_position", iv(r.joint_position)},
            {"joint_velocity", iv(r.joint_velocity)},
            {"reference_state_init", r.reference_state_init}}},
          {"curriculum",
           {{"eps_start", c.curriculum.eps_start},
            {"eps_end", c.curriculum.eps_end},
            {"direction", c.curriculum.increasing ? "increasing" : "decreasing"},
            {"norm", norm_name(c.curriculum.norm)}}}};
}

}  // namespace hiaer::wbc
