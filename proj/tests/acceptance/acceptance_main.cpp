// Acceptance run: one PASS/FAIL line per primary criterion. Tolerances and
// time budgets are pinned below. `acceptance 3 5` runs a subset.

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "hiaer/eval.hpp"

namespace {

using namespace hiaer;
using nlohmann::json;

std::filesystem::path data_dir() { return std::filesystem::path(HIAER_DATA_DIR); }

// --- pinned tolerances --------------------------------------------------------

constexpr double kRotTol = 1e-9;
constexpr double kOracleTol = 1e-6;
constexpr double kRewardTol = 1e-6;
constexpr double kSeamBound = 0.1;
constexpr double kStepTol = 0.05;
constexpr double kOvershoot = 0.20;
constexpr double kStandRms = 1e-3;
constexpr double kWaveRms = 0.05;
constexpr double kWaveRandRms = 0.1;
constexpr double kLatencyMean = 2.392;
constexpr double kLatencyRel = 0.05;
constexpr double kJitterBound = 0.005;
constexpr double kWindowS = 0.64;
constexpr double kReactionMargin = 0.25;

// --- reporting ------------------------------------------------------------------

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "FAILED: ";
      detail << what << "; ";
      pass = false;
    }
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

const pipeline::Resources& resources() {
  static const pipeline::Resources r = pipeline::load_resources(data_dir() / "config.json");
  return r;
}

// --- 1 -------------------------------------------------------------------------

void quadrant_calibration(Outcome& o) {
  const auto ref = eval::ReferenceTables::load(data_dir() / "fixtures" / "reference" / "tables.json");
  const affect::AffectConfig cfg;
  using Q = affect::AffectQuadrant;
  const std::pair<const char*, Q> expected[] = {{"S1", Q::Q1_AggressionTension}, {"S2", Q::Q2_Welcoming},
                                                {"S3", Q::Q3_CalmSupport},      {"S4", Q::Q4_DefensiveWithdrawal},
                                                {"S5", Q::Neutral},             {"S6", Q::Neutral}};
  int ok = 0;
  for (const auto& [id, q] : expected) {
    const auto v = ref.scenario_value(id, "v_avg");
    const auto a = ref.scenario_value(id, "a_avg");
    o.require(v && a, std::string("reference row ") + id + " present");
    if (!v || !a) continue;
    const auto got = affect::classify_quadrant(affect::VAState::make(*v, *a), cfg);
    o.require(got == q, std::string(id) + " -> " + std::string(affect::to_string(got)));
    if (got == q) ++ok;
  }
  o.detail << ok << "/6 rows in their designated quadrant";
}

// --- 2 -------------------------------------------------------------------------

void rotation_math(Outcome& o) {
  using motion::Mat3;
  using motion::Vec3;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  auto rv = [&] { return Vec3(n(rng), n(rng), n(rng)); };
  double orth = 0.0, det = 0.0, inv = 0.0, trip = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 a = rv(), b = rv();
    const Mat3 m = motion::sixd_to_matrix({a, b}).matrix();
    orth = std::max(orth, (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff());
    det = std::max(det, std::abs(m.determinant() - 1.0));
    const Mat3 s = motion::sixd_to_matrix({scale(rng) * a, scale(rng) * b}).matrix();
    inv = std::max(inv, (s - m).cwiseAbs().maxCoeff());
    const Mat3 back = motion::sixd_to_matrix(motion::matrix_to_sixd(m)).matrix();
    trip = std::max(trip, (back - m).cwiseAbs().maxCoeff());
    // 6D -> matrix -> 6D recovers the normalized first column.
    const auto six = motion::matrix_to_sixd(m);
    trip = std::max(trip, (six.a - a.normalized()).cwiseAbs().maxCoeff());
  }
  o.require(orth < kRotTol, "orthonormality");
  o.require(det < kRotTol, "determinant");
  o.require(inv < kRotTol, "scale invariance");
  o.require(trip < kRotTol, "round trip");
  o.detail << std::scientific << std::setprecision(2) << "max |RtR-I| " << orth << ", |det-1| " << det << ", scale "
           << inv << ", round trip " << trip << " over 10^4 inputs";
}

// --- 3 -------------------------------------------------------------------------

void codec(Outcome& o) {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n(0.0, 1.0);
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    motion::SmplFrame f;
    f.root_translation = motion::Vec3(n(rng), n(rng), n(rng));
    for (auto& j : f.joints) {
      j.a = motion::Vec3(n(rng), n(rng), n(rng));
      j.b = motion::Vec3(n(rng), n(rng), n(rng));
    }
    if (motion::decode_frame(motion::encode_frame(f)) == f) ++exact;
  }
  o.require(exact == 1000, "round trip exact");
  const motion::FrameVector v = motion::encode_frame(motion::stand_pose());
  bool stand_ok = v.size() == 135;
  for (Eigen::Index k = 0; stand_ok && k < 3; ++k) stand_ok = v[k] == 0.0;
  const double block[6] = {1, 0, 0, 0, 1, 0};
  for (Eigen::Index j = 0; stand_ok && j < 22; ++j) {
    for (int k = 0; k < 6; ++k) stand_ok = stand_ok && v[3 + 6 * j + k] == block[k];
  }
  o.require(stand_ok, "stand pose vector");
  o.detail << exact << "/1000 exact round trips; stand pose = [0,0,0] + 22 x [1,0,0,0,1,0]";
}

// --- 4 -------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> valid_transcripts() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(data_dir() / "fixtures" / "transcripts")) {
    out.push_back(read_file(e.path()));
  }
  // Every scripted reply in the scenario fixtures is also a valid transcript.
  for (const auto& s : eval::load_scenarios(data_dir() / "fixtures" / "scenarios", {"all"})) {
    for (const auto& m : s.mock_trials) {
      for (const auto& r : m.replies) out.push_back(r.text);
      for (const auto& [mode, replies] : m.by_modality) {
        for (const auto& r : replies) out.push_back(r.text);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::string join(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

void parser_robustness(Outcome& o) {
  const std::regex field(R"(^[\s\-\*]*(Description|Intent|Confidence|Valence|Arousal|Motion|V-A)\b[^:]*:.*)");
  const std::regex number(R"(-?\d+(\.\d+)?)");
  const auto corpus = valid_transcripts();
  std::size_t parsed = 0, mutants = 0, designated = 0, crashes = 0;
  std::mt19937_64 rng(404);

  // kind == expected, any other exception is a crash.
  auto expect = [&](const std::string& text, std::optional<intent::ParseErrorKind> kind,
                    const intent::StructuredOutput* same) {
    ++mutants;
    try {
      const auto out = intent::parse_output(text);
      if (!kind && same != nullptr && out.same_fields(*same)) ++designated;
    } catch (const intent::ParseError& e) {
      if (kind && e.kind() == *kind) ++designated;
    } catch (...) {
      ++crashes;
    }
  };

  for (const auto& text : corpus) {
    intent::StructuredOutput original;
    try {
      original = intent::parse_output(text);
      ++parsed;
    } catch (...) {
      continue;
    }
    const auto lines = lines_of(text);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (std::regex_match(lines[i], field)) idx.push_back(i);
    }
    for (std::size_t k : idx) {
      auto del = lines;
      del.erase(del.begin() + static_cast<std::ptrdiff_t>(k));
      expect(join(del), intent::ParseErrorKind::MissingField, nullptr);

      const std::string& line = lines[k];
      const auto colon = line.find(':');
      std::string bad;
      if (line.find("Confidence") != std::string::npos) bad = line.find('%') != std::string::npos ? "170%" : "1.7";
      if (line.find("Valence") != std::string::npos || line.find("V-A") != std::string::npos) bad = "-1.2";
      if (line.find("Arousal") != std::string::npos) bad = "1.5";
      if (!bad.empty()) {
        auto range = lines;
        const std::string value = line.substr(colon + 1);
        range[k] = line.substr(0, colon + 1) + std::regex_replace(value, number, bad, std::regex_constants::format_first_only);
        expect(join(range), intent::ParseErrorKind::ValueOutOfRange, nullptr);
      }
    }
    for (int t = 0; t < 5; ++t) {
      std::vector<std::string> block;
      for (std::size_t k : idx) block.push_back(lines[k]);
      std::shuffle(block.begin(), block.end(), rng);
      auto perm = lines;
      for (std::size_t i = 0; i < idx.size(); ++i) perm[idx[i]] = block[i];
      expect(join(perm), std::nullopt, &original);
    }
  }
  o.require(corpus.size() >= 5 && parsed == corpus.size(), "valid set parses");
  o.require(designated == mutants, "mutants yield the designated variant");
  o.require(crashes == 0, "no crashes");
  o.detail << parsed << "/" << corpus.size() << " valid transcripts parse; " << designated << "/" << mutants
           << " mutants (deletion, range, reordering) designated; " << crashes << " crashes";
}

// --- 5 -------------------------------------------------------------------------

class RecordingBackend : public planner::GeneratorBackend {
 public:
  planner::GeneratedWindow generate(const std::string& text, const affect::StyleParams& style,
                                    const motion::MotionClip& seed, std::size_t n, std::uint64_t rng) override {
    seeds.push_back(seed);
    return inner.generate(text, style, seed, n, rng);
  }
  std::string name() const override { return "recording"; }
  planner::ProceduralBackend inner;
  std::vector<motion::MotionClip> seeds;
};

void planner_contract(Outcome& o) {
  const auto& vocab = resources().vocab;
  planner::PlannerConfig cfg;
  const auto init = planner::initialize(cfg);
  bool prelude = init.history.size() == 4;
  for (const auto& f : init.history.frames) prelude = prelude && f == motion::stand_pose();
  o.require(prelude, "initialize gives 4 stand frames");

  planner::ProceduralBackend backend;
  double worst = 0.0;
  std::size_t windows = 0;
  bool eight = true;
  const auto& entries = vocab.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    for (double amp : {0.5, 0.75, 1.0, 1.25, 1.5}) {
      for (double tempo : {0.5, 1.0, 1.5}) {
        for (double open : {-1.0, 0.0, 1.0}) {
          auto s = planner::initialize(cfg);
          planner::switch_primitive(s, entries[p], affect::StyleParams{amp, tempo, open});
          for (int k = 0; k < 6; ++k) {
            const auto w = planner::step(s, backend, cfg);
            eight = eight && w.frames.size() == 8;
            worst = std::max(worst, w.seam);
            ++windows;
          }
          // Transition into every other primitive from here.
          const auto& next = entries[(p + 1 + static_cast<std::size_t>(amp * 4)) % entries.size()];
          planner::switch_primitive(s, next, affect::StyleParams{2.0 - amp, tempo, -open});
          for (int k = 0; k < 3; ++k) {
            const auto w = planner::step(s, backend, cfg);
            eight = eight && w.frames.size() == 8;
            worst = std::max(worst, w.seam);
            ++windows;
          }
        }
      }
    }
  }
  for (const auto& from : entries) {
    for (const auto& to : entries) {
      auto s = planner::initialize(cfg);
      planner::switch_primitive(s, from, affect::StyleParams{1.3, 1.3, 0.5});
      for (int k = 0; k < 4; ++k) worst = std::max(worst, planner::step(s, backend, cfg).seam);
      planner::switch_primitive(s, to, affect::StyleParams{1.3, 1.3, 0.5});
      for (int k = 0; k < 3; ++k) {
        const auto w = planner::step(s, backend, cfg);
        eight = eight && w.frames.size() == 8;
        worst = std::max(worst, w.seam);
        windows += 1;
      }
    }
  }
  o.require(eight, "every window has 8 frames");
  o.require(worst < kSeamBound, "seam bound");

  auto s = planner::initialize(cfg);
  RecordingBackend rec;
  planner::switch_primitive(s, vocab.at("cheer"), affect::StyleParams{1.1, 1.1, 0.2});
  std::vector<planner::PlannerWindow> ws;
  for (int k = 0; k < 6; ++k) ws.push_back(planner::step(s, rec, cfg));
  bool seeded = rec.seeds[0].frames == motion::stand_clip(4).frames;
  for (std::size_t k = 1; k < ws.size(); ++k) seeded = seeded && rec.seeds[k].frames == ws[k - 1].frames.frames;
  o.require(seeded, "autoregressive seed identity");

  auto replay = [&] {
    auto st = planner::initialize(cfg);
    planner::ProceduralBackend b;
    std::vector<double> out;
    for (const char* id : {"wave_right_hand", "guard_stance", "beat_gesture", "hands_on_hips", "stand_still"}) {
      planner::switch_primitive(st, vocab.at(id), affect::StyleParams{1.25, 0.9, -0.3});
      for (int k = 0; k < 4; ++k) {
        for (const auto& f : planner::step(st, b, cfg).frames.frames) {
          const auto v = motion::encode_frame(f);
          out.insert(out.end(), v.data(), v.data() + v.size());
        }
      }
    }
    return out;
  };
  const bool identical = replay() == replay();
  o.require(identical, "deterministic replay");
  o.detail << "prelude ok; " << windows << " windows over " << entries.size()
           << " primitives x style grid, worst seam " << std::setprecision(4) << worst << " rad; seed identity "
           << (seeded ? "holds" : "broken") << "; replay " << (identical ? "bit-identical" : "differs");
}

// --- 6 -------------------------------------------------------------------------

void retarget_oracle(Outcome& o) {
  const auto& g1 = resources().robot;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  auto frame = [&](double scale) {
    motion::SmplFrame f;
    f.root_translation = motion::Vec3(n(rng), n(rng), n(rng)) * 0.3 * scale;
    for (auto& r : f.joints) {
      r.a = motion::Vec3(n(rng), n(rng), n(rng)) * scale;
      r.b = motion::Vec3(n(rng), n(rng), n(rng)) * scale;
    }
    return f;
  };
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto net = retarget::RetargetNetwork::random(5000 + static_cast<std::uint64_t>(t), 0.5, t % 10 == 0 ? 256 : 32);
    const auto f = frame(1.0);
    const auto enc = motion::encode_frame(f);
    std::vector<double> h(enc.data(), enc.data() + enc.size());
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      std::vector<double> z(static_cast<std::size_t>(layers[i].w.rows()));
      for (Eigen::Index r = 0; r < layers[i].w.rows(); ++r) {
        double s = layers[i].b[r];
        for (Eigen::Index c = 0; c < layers[i].w.cols(); ++c) s += layers[i].w(r, c) * h[static_cast<std::size_t>(c)];
        z[static_cast<std::size_t>(r)] = i + 1 < layers.size() ? std::max(0.0, s) : s;
      }
      h = std::move(z);
    }
    const auto raw = net.forward_raw(enc);
    retarget::JointVector oracle;
    for (int i = 0; i < 29; ++i) {
      worst = std::max(worst, std::abs(raw[i] - h[static_cast<std::size_t>(i)]));
      oracle[i] = h[static_cast<std::size_t>(i)];
    }
    worst = std::max(worst, (retarget::forward(net, f, g1) - g1.clamp(oracle)).cwiseAbs().maxCoeff());
  }
  o.require(worst < kOracleTol, "forward matches oracle");

  std::mt19937_64 lrng(21);
  std::normal_distribution<double> ln(0.0, 1.0);
  Eigen::MatrixXd a(29, 135);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = ln(lrng) / std::sqrt(135.0);
  Eigen::VectorXd b(29);
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.2 * ln(lrng);
  std::vector<retarget::TrainingPair> pairs;
  for (int k = 0; k < 64; ++k) {
    motion::SmplFrame f;
    f.root_translation = motion::Vec3(ln(lrng), ln(lrng), ln(lrng)) * 0.3 * 0.5;
    for (auto& r : f.joints) {
      r.a = motion::Vec3(ln(lrng), ln(lrng), ln(lrng)) * 0.5;
      r.b = motion::Vec3(ln(lrng), ln(lrng), ln(lrng)) * 0.5;
    }
    pairs.push_back({f, a * motion::encode_frame(f) + b});
  }
  retarget::TrainConfig tc;
  tc.rng_seed = 4;
  const auto tr = retarget::train(pairs, tc);
  const double ratio = tr.final_mse() / tr.initial_mse;
  o.require(tr.epoch_mse.size() == 200 && ratio <= 0.10, "training MSE ratio");

  bool clamped = true;
  for (int t = 0; t < 50; ++t) {
    const auto net = retarget::RetargetNetwork::random(static_cast<std::uint64_t>(t), 2.0, 64);
    clamped = clamped && g1.within_limits(retarget::forward(net, frame(1e3), g1));
  }
  o.require(clamped, "clamp under x1e3 inputs");
  o.detail << std::scientific << std::setprecision(2) << "oracle max diff " << worst << " over 100 nets; "
           << std::fixed << "MSE " << tr.initial_mse << " -> " << tr.final_mse() << " (" << std::setprecision(1)
           << 100.0 * ratio << "%) in 200 epochs; clamp " << (clamped ? "holds" : "violated");
}

// --- 7 -------------------------------------------------------------------------

void resampler(Outcome& o) {
  const auto& g1 = resources().robot;
  const retarget::WorkspaceGrid grid{g1.workspace, 8};
  std::mt19937_64 rng(123);
  std::vector<retarget::JointVector> pool;
  std::set<std::size_t> seen;
  for (int k = 0; k < 20000 && pool.size() < 21; ++k) {
    retarget::JointVector q;
    for (std::size_t i = 0; i < retarget::kRobotDofs; ++i) {
      q[static_cast<Eigen::Index>(i)] = std::uniform_real_distribution<double>(g1.joints[i].lower, g1.joints[i].upper)(rng);
    }
    if (seen.insert(grid.cell_of(retarget::fk_wrist(q, g1).right)).second) pool.push_back(q);
  }
  o.require(pool.size() == 21, "21 distinct cells");
  retarget::RobotTrajectory t;
  for (std::size_t c = 0; c < pool.size(); ++c) {
    const std::size_t copies = c == 0 ? 9000 : 50;  // 90% of 10'000 frames in one cell
    for (std::size_t k = 0; k < copies; ++k) t.poses.push_back(pool[c]);
  }
  std::shuffle(t.poses.begin(), t.poses.end(), rng);
  const auto r = retarget::resample_balanced({t}, grid, 10000, 3, g1);
  const auto before = retarget::occupancy_stats(r.before.right);
  const auto after = retarget::occupancy_stats(r.after.right);
  o.require(std::abs(before.max_share - 0.9) < 1e-9, "input skew is 90%");
  o.require(after.max_share <= 2.0 * after.mean_nonempty_share, "max share <= 2x mean");
  o.require(after.cv < before.cv, "CV strictly decreases");
  o.detail << std::setprecision(3) << "max share " << before.max_share << " -> " << after.max_share << " (mean "
           << after.mean_nonempty_share << "), CV " << before.cv << " -> " << after.cv;
}

// --- 8 -------------------------------------------------------------------------

wbc::RobotState rest(const wbc::JointVector& q) {
  wbc::RobotState s;
  s.q = q;
  return s;
}

void control_stack(Outcome& o) {
  const auto& res = resources();
  const auto& g1 = res.robot;
  const auto cfg = wbc::SimConfig::for_robot(g1);
  const wbc::PDGains gains;
  const auto s0 = rest(g1.defaults());
  o.require(wbc::pd_control(s0.q, s0, gains, cfg).isZero(), "zero error gives zero torque");

  double worst_step = 0.0;
  double worst_overshoot = 0.0;
  for (std::size_t j = 0; j < retarget::kRobotDofs; ++j) {
    const auto ji = static_cast<Eigen::Index>(j);
    const auto start = g1.defaults();
    auto target = start;
    // 0.4 rad toward the roomier limit, kept inside the range (ankle roll spans only 0.52 rad).
    const double up = cfg.upper[ji] - start[ji];
    const double down = start[ji] - cfg.lower[ji];
    const double step = up > down ? std::min(0.4, 0.8 * up) : -std::min(0.4, 0.8 * down);
    target[ji] += step;
    wbc::Simulator sim(cfg, gains, rest(start));
    for (int k = 1; k <= 75; ++k) {
      sim.tick(target);
      worst_overshoot = std::max(worst_overshoot, (sim.state().q[ji] - start[ji]) / step - 1.0);
      if (k >= 25) worst_step = std::max(worst_step, std::abs(sim.state().q[ji] - target[ji]));
    }
  }
  o.require(worst_step < kStepTol, "step response");
  o.require(worst_overshoot <= kOvershoot, "overshoot");

  wbc::RobotTrajectory stand;
  stand.poses.assign(50, g1.defaults());
  const auto st = wbc::run_tracking(stand, gains, cfg, g1);
  o.require(st.rms_error < kStandRms, "stand tracking");

  planner::ProceduralBackend backend;
  planner::PlannerConfig pcfg;
  auto state = planner::initialize(pcfg);
  planner::switch_primitive(state, res.vocab.at("wave_right_hand"), {});
  motion::MotionClip clip = state.history;
  for (int w = 0; w < 6; ++w) {
    const auto win = planner::step(state, backend, pcfg);
    clip.frames.insert(clip.frames.end(), win.frames.frames.begin(), win.frames.frames.end());
  }
  const auto wave = retarget::retarget_clip(res.net, clip, g1);
  const auto nominal = wbc::run_tracking(wave, gains, cfg, g1);
  o.require(nominal.rms_error < kWaveRms, "nominal wave tracking");

  const wbc::RandomizationRanges ranges;
  double worst_rand = 0.0;
  bool in_bounds = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto rec = wbc::sample_randomization(ranges, seed, wave.size());
    in_bounds = in_bounds && rec.within(ranges);
    worst_rand = std::max(worst_rand, wbc::run_tracking(wave, gains, cfg, g1, rec).rms_error);
  }
  o.require(in_bounds, "draws within randomization bounds");
  o.require(worst_rand < kWaveRandRms, "randomized wave tracking");
  o.detail << std::scientific << std::setprecision(2) << "step err after 0.5 s " << worst_step << " rad, overshoot " << std::fixed
           << std::setprecision(1) << 100.0 * std::max(0.0, worst_overshoot) << "% (29 joints); " << std::scientific
           << std::setprecision(2) << "stand rms "
           << st.rms_error << "; wave rms " << nominal.rms_error << " nominal, " << worst_rand
           << " worst of 20 draws";
}

// --- 9 -------------------------------------------------------------------------

void reward_arithmetic(Outcome& o) {
  const auto& g1 = resources().robot;
  const wbc::RewardWeights w;
  const auto ref = g1.defaults();
  const auto perfect = wbc::compute_reward(rest(ref), ref, ref, ref, w, g1);
  auto off = rest(ref);
  off.q[20] += 0.3;
  off.q[22] -= 0.4;  // error norm 0.5 = sigma
  const auto sig = wbc::compute_reward(off, ref, ref, ref, w, g1);
  o.require(std::abs(perfect.total - 1.50) < kRewardTol, "perfect reward 1.50");
  o.require(std::abs(sig.total - (1.25 * std::exp(-1.0) + 0.25)) < kRewardTol, "sigma reward");
  o.require(std::abs(sig.total - 0.7098) < 1e-4, "sigma reward ~ 0.7098");

  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool monotone = true;
  for (int t = 0; t < 200; ++t) {
    wbc::JointVector dir;
    for (auto& x : dir) x = u(rng);
    dir.normalize();
    double prev = 2.0;
    for (double e = 0.0; e <= 2.0; e += 0.05) {
      const double r = wbc::compute_reward(rest(ref + e * dir), ref, ref, ref, w, g1).joint_pos_tracking;
      monotone = monotone && r < prev;
      prev = r;
    }
  }
  o.require(monotone, "tracking term monotone");
  o.detail << std::setprecision(7) << "perfect " << perfect.total << ", sigma-error " << sig.total
           << ", tracking term strictly decreasing";
}

// --- 10 ------------------------------------------------------------------------

long host_steal_ticks() {
  std::ifstream in("/proc/stat");
  std::string cpu;
  long v[8] = {};
  in >> cpu;
  for (auto& x : v) in >> x;
  return in ? v[7] : 0;
}

std::string reply(const std::string& token, const std::string& category, double v, double a) {
  std::ostringstream out;
  out << "```\nDescription: scripted\nIntent: " << category << " - scripted\nConfidence: 0.9\nValence: " << v
      << "\nArousal: " << a << "\nMotion: " << token << "\n```\n";
  return out.str();
}

pipeline::Scenario live_scenario(double duration) {
  json in = {{"t", 0.0},
             {"images", json::array({"few_shot/greeting.png", "few_shot/unclear.png", "few_shot/greeting.png"})},
             {"utterance", "hello robot"}};
  json s = {{"id", "live"}, {"duration_s", duration}, {"max_inferences", 0}, {"inputs", json::array({in})}, {"mock", {{"replies", json::array({{{"text", "x"}}})}}}};
  return pipeline::Scenario::parse(s.dump(), data_dir());
}

std::vector<pipeline::EventRecord> of_kind(const std::vector<pipeline::EventRecord>& ev, pipeline::EventKind k) {
  std::vector<pipeline::EventRecord> out;
  for (const auto& r : ev) {
    if (r.kind == k) out.push_back(r);
  }
  return out;
}

void pipeline_timing(Outcome& o) {
  using pipeline::EventKind;
  const auto& res = resources();

  // (a) calibrated mock, real clock.
  intent::MockScript cal;
  cal.replies.push_back({0.0, reply("wave right hand", "CalmGreeting", 0.5, 0.4), false});
  cal.latency = intent::LatencyProfile::calibrated();
  cal.seed = 10;
  auto cal_client = std::make_shared<intent::ScriptedMockClient>(cal, intent::ScriptedMockClient::Clock::Real);
  const auto lat = pipeline::measure_latency(res, cal_client, 100);
  const bool mean_ok = lat.timeouts == 0 && lat.inference.count == 100 &&
                       std::abs(lat.inference.avg - kLatencyMean) <= kLatencyRel * kLatencyMean;
  o.require(mean_ok, "calibrated mean within 5%");

  // (b) 3.5 s mock, live threads, real clock.
  intent::MockScript slow;
  slow.replies.push_back({3.5, reply("cheer", "Celebration", 0.8, 0.8), false});
  auto slow_client = std::make_shared<intent::ScriptedMockClient>(slow, intent::ScriptedMockClient::Clock::Real);
  pipeline::Pipeline live(res, slow_client, nullptr);
  const long steal0 = host_steal_ticks();
  live.start();
  live.start_intent_loop();
  pipeline::play_scenario(live, live_scenario(12.5));
  live.stop();
  const long steal = host_steal_ticks() - steal0;
  const auto m = live.metrics();
  const auto ev = live.channels().log.records();
  const bool every_cycle = m.inferences_started >= 4 && m.timeouts == m.inferences_started &&
                           m.inferences_completed == 0 && m.fallbacks == m.timeouts;
  bool stale_never = of_kind(ev, EventKind::PrimitiveSwitch).empty() && live.history().size() == 0;
  for (const auto& r : of_kind(ev, EventKind::WindowEmitted)) stale_never = stale_never && r.detail.at("primitive") == "stand_still";
  const auto jitter = pipeline::summarize(m.control_jitter_s);
  o.require(every_cycle, "timeout every cycle");
  o.require(stale_never, "stale decisions never applied");
  o.require(jitter.max < kJitterBound, "control jitter < 5 ms");

  // Replay of the same stall: fresh input each cycle.
  json mock = {{"replies", json::array({{{"delay_s", 3.5}, {"text", reply("cheer", "Celebration", 0.8, 0.8)}}})}};
  auto sc = live_scenario(12.0);
  sc.mock_trials = {intent::MockScript::from_json(mock)};
  const auto rp = pipeline::run_replay(sc, res);
  const auto starts = of_kind(rp.events, EventKind::InferenceStart);
  // The last cycle may still be in flight when the scenario ends.
  bool fresh = starts.size() >= 4 && rp.metrics.timeouts + 1 >= starts.size() && rp.metrics.timeouts >= 3 &&
               of_kind(rp.events, EventKind::InferenceDone).empty() &&
               of_kind(rp.events, EventKind::PrimitiveSwitch).empty();
  for (std::size_t i = 1; i < starts.size(); ++i) {
    fresh = fresh && starts[i].detail.at("input_timestamp").get<double>() >
                         starts[i - 1].detail.at("input_timestamp").get<double>();
  }
  o.require(fresh, "replayed stall: " + std::to_string(starts.size()) + " starts, " +
                       std::to_string(rp.metrics.timeouts) + " timeouts, fresh input each cycle");

  // (c) reaction bound, live with alternating calibrated replies.
  intent::MockScript alt;
  alt.replies.push_back({0.0, reply("cheer", "Celebration", 0.8, 0.8), false});
  alt.replies.push_back({0.0, reply("wave right hand", "CalmGreeting", 0.4, 0.3), false});
  alt.latency = intent::LatencyProfile::calibrated();
  alt.seed = 12;
  auto alt_client = std::make_shared<intent::ScriptedMockClient>(alt, intent::ScriptedMockClient::Clock::Real);
  pipeline::Pipeline react(res, alt_client, nullptr);
  react.start();
  react.start_intent_loop();
  pipeline::play_scenario(react, live_scenario(16.0));
  react.stop();
  const auto rev = react.channels().log.records();
  std::map<std::uint64_t, double> latency_of;
  for (const auto& r : of_kind(rev, EventKind::InferenceDone)) {
    latency_of[r.detail.at("cycle").get<std::uint64_t>()] = r.detail.at("latency_s").get<double>();
  }
  std::size_t reactions = 0;
  double worst_slack = -1e9;
  std::optional<std::uint64_t> pending;
  for (const auto& r : rev) {
    if (r.kind == EventKind::PrimitiveSwitch) pending = r.detail.at("cycle").get<std::uint64_t>();
    if (r.kind == EventKind::WindowEmitted && pending && r.detail.contains("reaction_s")) {
      const double bound = latency_of.at(*pending) + kWindowS + kReactionMargin;
      worst_slack = std::max(worst_slack, r.detail.at("reaction_s").get<double>() - bound);
      ++reactions;
      pending.reset();
    }
  }
  o.require(reactions >= 4 && worst_slack <= 0.0, "reaction <= inference + 0.64 + 0.25 s");

  o.detail << std::fixed << std::setprecision(3) << "pi_i avg " << lat.inference.avg << " s over "
           << lat.inference.count << " real-clock trials (" << std::showpos
           << 100.0 * (lat.inference.avg - kLatencyMean) / kLatencyMean << std::noshowpos << "%); 3.5 s mock: "
           << m.timeouts << "/" << m.inferences_started << " cycles timed out, " << m.control_ticks
           << " ticks, jitter max " << std::setprecision(2) << 1e3 * jitter.max << " ms (host steal ticks " << steal
           << "); " << reactions << " reactions, worst margin to bound " << std::setprecision(3) << worst_slack << " s";
}

// --- 11 ------------------------------------------------------------------------

void harness_arithmetic(Outcome& o) {
  const auto& res = resources();
  const auto fixtures = data_dir() / "fixtures";
  const auto scenarios = eval::load_scenarios(fixtures / "scenarios", {"all"});
  const auto results = eval::run_scenarios(res, scenarios, 7);
  o.require(results.size() == 90, "90 results");
  auto report = eval::build_report(results, scenarios, res.affect, 7);
  report.ablation = eval::run_ablation(
      res, scenarios, {intent::Modality::PromptOnly, intent::Modality::ImageOnly, intent::Modality::Combined}, 7);
  const auto ref = eval::ReferenceTables::load(fixtures / "reference" / "tables.json");
  eval::attach_reference(report, ref);

  const std::map<std::string, std::size_t> correct = {{"S1", 12}, {"S2", 14}, {"S3", 14},
                                                      {"S4", 14}, {"S5", 13}, {"S6", 12}};
  bool exact = true;
  for (const auto& row : report.rows) {
    exact = exact && row.correct == correct.at(row.id) && row.trials == 15;
    const double r = *ref.scenario_value(row.id, "i_acc");
    exact = exact && std::abs(std::round(1000.0 * row.i_acc) / 1000.0 - r) < 1e-12;
  }
  o.require(exact, "per-scenario I_acc reproduces 80.0% / 93.3%");
  const bool trace = report.confusion.total() == 90 &&
                     std::abs(static_cast<double>(report.confusion.trace()) / 90.0 - report.overall_iacc) < 1e-12;
  o.require(trace, "confusion trace identity");
  const std::string text = eval::render_text(report);
  const bool rendered = text.find("80.0%     80.0%") != std::string::npos &&
                        text.find("93.3%     93.3%") != std::string::npos && text.find("0.87") != std::string::npos &&
                        text.find("0.77") != std::string::npos && text.find("0.20") != std::string::npos &&
                        text.find("4.42") != std::string::npos;
  o.require(rendered, "reference tables render alongside");
  o.detail << std::fixed << std::setprecision(1) << "90 results; I_acc";
  for (const auto& row : report.rows) o.detail << " " << row.id << " " << 100.0 * row.i_acc << "%";
  o.detail << "; trace " << report.confusion.trace() << "/" << report.confusion.total() << " = overall "
           << 100.0 * report.overall_iacc << "%; ablation";
  for (const auto& a : report.ablation) {
    o.detail << " " << intent::to_string(a.mode) << " " << std::setprecision(3) << a.accuracy << " (ref "
             << std::setprecision(2) << a.reference.value_or(-1) << ")";
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "quadrant calibration", 1.0, quadrant_calibration},
      {2, "rotation math", 5.0, rotation_math},
      {3, "codec", 1.0, codec},
      {4, "parser robustness", 5.0, parser_robustness},
      {5, "planner contract", 30.0, planner_contract},
      {6, "retargeting oracle equivalence", 120.0, retarget_oracle},
      {7, "resampler", 10.0, resampler},
      {8, "control stack", 60.0, control_stack},
      {9, "reward arithmetic", 1.0, reward_arithmetic},
      {10, "pipeline timing", 900.0, pipeline_timing},
      {11, "harness arithmetic", 60.0, harness_arithmetic},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  (void)resources();

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && wanted.count(c.id) == 0) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s >= c.budget_s) o.require(false, "over the time budget");
    if (!o.pass) ++failed;
    std::cout << "criterion " << std::setw(2) << c.id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << c.name << " ("
              << std::fixed << std::setprecision(2) << s << " s, budget " << std::setprecision(0) << c.budget_s
              << " s): " << o.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
