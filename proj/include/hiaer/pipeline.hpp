#pragma once

// Orchestrator for intent inference (on demand, 3 s deadline), the windowed
// planner (12.5 FPS, one window per 0.64 s) and the 50 Hz control loop.
// Stages hand off through latest-wins slots. The same stage objects run on
// threads in real time (Pipeline) or under a virtual-time scheduler (replay).

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "hiaer/intent_engine.hpp"
#include "hiaer/planner.hpp"
#include "hiaer/wbc.hpp"

namespace hiaer::pipeline {

struct PipelineConfig {
  double video_rate = 20.0;
  std::size_t frames_per_inference = 3;
  double inference_timeout_s = 3.0;
  double planner_fps = motion::kClipFps;
  double control_rate = 50.0;
  std::string inference_backend = "mock";  // mock | http
  planner::BackendKind generator = planner::BackendKind::Procedural;
  std::string serve_address = "127.0.0.1:8080";
  /// Control plays planner frames this long after the window is due, so a
  /// window normally lands before its first frame is needed.
  double playout_delay_s = 0.64;
  std::size_t window_store_capacity = 64;

  void validate() const;
};

void from_json(const nlohmann::json& j, PipelineConfig& c);
void to_json(nlohmann::json& j, const PipelineConfig& c);

// --- hand-off ---------------------------------------------------------------

/// Single-capacity cell: write replaces, readers see only the newest value.
template <class T>
class LatestWinsSlot {
 public:
  void write(T v) {
    std::lock_guard lock(mu_);
    value_ = std::move(v);
    ++version_;
  }

  /// Newest value if written after version `*seen`; advances `*seen`.
  std::optional<T> take_newer(std::uint64_t& seen) const {
    std::lock_guard lock(mu_);
    if (version_ == seen || !value_) return std::nullopt;
    seen = version_;
    return value_;
  }

  std::optional<T> peek() const {
    std::lock_guard lock(mu_);
    return value_;
  }

  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return version_;
  }

 private:
  mutable std::mutex mu_;
  std::optional<T> value_;
  std::uint64_t version_ = 0;
};

// --- events -----------------------------------------------------------------

enum class EventKind {
  FrameIn,
  InferenceStart,
  InferenceDone,
  Timeout,
  Fallback,
  WindowEmitted,
  ControlTick,
  PrimitiveSwitch
};

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct EventRecord {
  std::uint64_t seq = 0;  // assigned by the log, 1-based
  double t = 0.0;         // seconds since pipeline start
  std::string stage;      // video | intent | planner | control | operator
  EventKind kind = EventKind::FrameIn;
  std::string digest;     // payload digest (FNV-1a hex)
  nlohmann::json detail = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const EventRecord& r);
void from_json(const nlohmann::json& j, EventRecord& r);

/// Append-only, thread-safe; readers can block for new records.
class EventLog {
 public:
  std::uint64_t append(EventRecord r);
  std::vector<EventRecord> records() const;
  std::vector<EventRecord> since(std::uint64_t seq, std::size_t max = SIZE_MAX) const;
  std::uint64_t last_seq() const;
  /// Waits until a record after `seq` exists, the log closes or the timeout
  /// passes. True when such a record exists.
  bool wait_after(std::uint64_t seq, std::chrono::milliseconds timeout) const;
  void close();
  bool closed() const;

  /// One JSON object per line.
  std::string to_jsonl() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<EventRecord> records_;
  bool closed_ = false;
};

// --- metrics ----------------------------------------------------------------

struct SummaryStats {
  std::size_t count = 0;
  double avg = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

SummaryStats summarize(std::vector<double> samples);
/// null when count == 0.
nlohmann::json to_json(const SummaryStats& s);

struct PipelineMetrics {
  std::vector<double> inference_latency_s;
  std::vector<double> planner_window_s;
  std::vector<double> retarget_window_s;
  std::vector<double> control_jitter_s;  // |wake - scheduled| per tick
  std::vector<double> reaction_time_s;   // input capture -> first changed window

  std::size_t frames_in = 0;
  std::size_t inferences_started = 0;
  std::size_t inferences_completed = 0;  // a reply arrived (parsed or not)
  std::size_t timeouts = 0;
  std::size_t failures = 0;  // transport failures
  std::size_t fallbacks = 0;
  std::size_t dropped_stale_inputs = 0;
  std::size_t windows_emitted = 0;
  std::size_t control_ticks = 0;
  std::size_t stale_decisions_rejected = 0;

  /// Per-stage latency summary plus counters.
  nlohmann::json summary(const PipelineConfig& cfg) const;
};

class MetricsRecorder {
 public:
  template <class F>
  void update(F&& f) {
    std::lock_guard lock(mu_);
    f(m_);
  }
  PipelineMetrics snapshot() const {
    std::lock_guard lock(mu_);
    return m_;
  }

 private:
  mutable std::mutex mu_;
  PipelineMetrics m_;
};

// --- resources --------------------------------------------------------------

/// Everything the stages read but never mutate.
struct Resources {
  affect::Vocabulary vocab;
  affect::AffectConfig affect;
  intent::PrePrompt preprompt;
  intent::IntentConfig intent;
  intent::HttpClientConfig http;
  planner::PlannerConfig planner;
  retarget::RobotDescriptor robot;
  retarget::RetargetNetwork net;
  wbc::WbcConfig wbc;
  PipelineConfig pipeline;
  std::filesystem::path data_dir;
};

/// Loads the JSON config (paths relative to the file's directory, or to
/// `data_dir` when given inside the file) and every resource it names.
Resources load_resources(const std::filesystem::path& config_path);
Resources load_resources(const nlohmann::json& config, const std::filesystem::path& base);

std::shared_ptr<intent::InferenceClient> make_inference_client(const Resources& res,
                                                               const std::optional<std::filesystem::path>& mock_script,
                                                               intent::ScriptedMockClient::Clock clock);

// --- messages ---------------------------------------------------------------

struct DecisionMsg {
  std::uint64_t cycle = 0;  // inference cycle; override messages get their own
  intent::FinalDecision decision;
  double input_timestamp = 0.0;  // capture time of the newest input frame
  double published_at = 0.0;
};

struct WindowMsg {
  planner::PlannerWindow window;
  retarget::RobotTrajectory robot;
  double emitted_at = 0.0;
};

nlohmann::json window_to_json(const WindowMsg& w);

/// Recent windows by index for the stream endpoint.
class WindowStore {
 public:
  explicit WindowStore(std::size_t capacity = 64) : capacity_(capacity) {}
  void put(WindowMsg w);
  std::optional<WindowMsg> get(std::size_t index) const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::deque<WindowMsg> windows_;
  std::size_t capacity_;
};

// --- inputs -----------------------------------------------------------------

/// Recent camera frames plus a one-shot utterance cell.
class InputBuffer {
 public:
  explicit InputBuffer(std::size_t capacity = 32) : capacity_(capacity) {}

  void push_frame(intent::ImageFrame f);
  void push_utterance(std::string text);

  struct Sample {
    intent::MultimodalInput input;
    std::size_t dropped = 0;  // fresh frames skipped because newer ones existed
  };

  /// Newest `max_frames` frames captured after `after_ts`, and the pending
  /// utterance (consumed). nullopt when there is no utterance and fewer than
  /// `min_frames` fresh frames.
  std::optional<Sample> sample(std::size_t max_frames, double after_ts, std::size_t min_frames = 1);
  bool has_fresh(double after_ts) const;
  std::size_t frames_seen() const;

 private:
  mutable std::mutex mu_;
  std::deque<intent::ImageFrame> frames_;
  std::optional<std::string> utterance_;
  std::size_t capacity_;
  std::size_t seen_ = 0;
};

// --- stages -----------------------------------------------------------------

struct Channels {
  EventLog log;
  MetricsRecorder metrics;
  LatestWinsSlot<DecisionMsg> decisions;
  LatestWinsSlot<WindowMsg> windows;
  WindowStore store;
  InputBuffer inputs;
  /// Shared by inference cycles and operator overrides; the planner rejects
  /// decisions older than the last one it applied.
  std::atomic<std::uint64_t> next_cycle{1};
};

/// Seconds since pipeline start: wall time live, virtual time in replay.
using Clock = std::function<double()>;

class IntentStage {
 public:
  IntentStage(const Resources& res, intent::IntentEngine& engine, Channels& ch, Clock clock,
              std::optional<intent::Modality> modality = std::nullopt);

  struct Cycle {
    std::uint64_t id = 0;
    intent::MultimodalInput input;
    double started_at = 0.0;
    double input_timestamp = 0.0;
  };

  /// Samples fresh input (never frames used by an earlier cycle) once a full
  /// frame set or an utterance is available. nullopt when not ready, or when the modality projection leaves
  /// nothing (flagged in `projection_empty`).
  std::optional<Cycle> begin();
  /// Cycle on an explicit input (serve mode); its frames count as used.
  Cycle begin_with(intent::MultimodalInput input);
  /// Runs the engine call for a cycle (blocking for real clients).
  intent::InferOutcome call(const Cycle& c);
  /// Logs the outcome, applies the decision step and publishes it.
  DecisionMsg finish(const Cycle& c, const intent::InferOutcome& o);

  std::size_t cycles() const { return cycles_; }
  bool projection_empty() const { return projection_empty_; }

 private:
  const Resources& res_;
  intent::IntentEngine& engine_;
  Channels& ch_;
  Clock clock_;
  std::optional<intent::Modality> modality_;
  std::size_t cycles_ = 0;
  double last_used_ts_ = -1.0;
  bool projection_empty_ = false;
};

class PlannerStage {
 public:
  PlannerStage(const Resources& res, planner::GeneratorBackend& backend, Channels& ch, Clock clock);

  /// Consumes the newest decision (switching the command when it differs),
  /// generates, retargets and publishes one window. Backend errors
  /// propagate with the planner state unchanged.
  WindowMsg step();

  const planner::PlannerState& state() const { return state_; }

 private:
  const Resources& res_;
  planner::GeneratorBackend& backend_;
  Channels& ch_;
  Clock clock_;
  planner::PlannerState state_;
  std::uint64_t seen_ = 0;
  std::uint64_t applied_cycle_ = 0;
  std::optional<double> pending_reaction_;  // input timestamp awaiting its first window
};

using ControlSink = std::function<void(const wbc::JointVector& target, const wbc::JointVector& torque)>;

class ControlStage {
 public:
  ControlStage(const Resources& res, Channels& ch, Clock clock, ControlSink sink = {});

  /// One 50 Hz tick at nominal time `scheduled`; the clock's distance from
  /// it is the jitter sample.
  void tick(double scheduled);

  const wbc::Simulator& simulator() const { return sim_; }
  const wbc::JointVector& last_target() const { return target_; }

 private:
  wbc::JointVector reference_at(double t) const;

  const Resources& res_;
  Channels& ch_;
  Clock clock_;
  ControlSink sink_;
  wbc::Simulator sim_;
  std::uint64_t seen_ = 0;
  std::deque<wbc::JointVector> frames_;  // stream frames [base_, base_ + size)
  std::size_t base_ = 0;
  wbc::JointVector target_;
  std::size_t ticks_ = 0;
};

// --- live -------------------------------------------------------------------

struct SubmitResult {
  intent::InferOutcome outcome;
  DecisionMsg decision;
};

class PipelineBusyError : public Error {
 public:
  PipelineBusyError() : Error("busy", "an inference is already in flight") {}
};

/// Live pipeline: planner and control threads always run; the intent loop
/// runs continuously when `run_intent_loop` is called (camera mode) or on
/// demand through `submit` (serve mode).
class Pipeline {
 public:
  Pipeline(Resources res, std::shared_ptr<intent::InferenceClient> client,
           std::unique_ptr<planner::GeneratorBackend> backend, ControlSink sink = {});
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void start();
  void stop();
  bool running() const { return running_.load(); }

  /// Continuous perception/intent loop on the input buffer.
  void start_intent_loop();

  /// One on-demand inference; PipelineBusyError while another is in flight.
  SubmitResult submit(intent::MultimodalInput input);
  /// Operator-forced primitive; UnknownPrimitiveError or ConfigError
  /// (prohibited) on bad ids.
  DecisionMsg override_primitive(const std::string& primitive_id);

  /// Camera frame capture (timestamp is assigned from the pipeline clock).
  void push_frame(std::string bytes, std::string encoding = "png");
  void push_utterance(std::string text);

  double now() const;
  Channels& channels() { return ch_; }
  const Resources& resources() const { return res_; }
  intent::HistoryBuffer history() const { return engine_.history(); }
  PipelineMetrics metrics() const { return ch_.metrics.snapshot(); }

 private:
  void planner_loop(std::stop_token st);
  void control_loop(std::stop_token st);
  void intent_loop(std::stop_token st);

  Resources res_;
  std::shared_ptr<intent::InferenceClient> client_;
  std::unique_ptr<planner::GeneratorBackend> backend_;
  Channels ch_;
  intent::IntentEngine engine_;
  IntentStage intent_;
  PlannerStage planner_;
  ControlStage control_;
  std::mutex intent_mu_;
  std::atomic<bool> running_{false};
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
  std::jthread planner_thread_;
  std::jthread control_thread_;
  std::jthread intent_thread_;
};

// --- scenarios and replay ----------------------------------------------------

struct Scenario;

/// Plays a scenario's timeline into a running pipeline in real time (camera
/// frames at video_rate, utterances at their times) for `duration_s`
/// seconds, or the scenario's duration. Returns early on stop.
void play_scenario(Pipeline& p, const Scenario& s, std::optional<double> duration_s = std::nullopt,
                   std::stop_token stop = {});

class ScenarioParseError : public Error {
 public:
  ScenarioParseError(const std::string& field, std::size_t line, const std::string& message);
  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

struct ScenarioInput {
  double t = 0.0;
  std::vector<intent::ImageFrame> images;  // the camera cycles these from t on
  std::optional<std::string> utterance;
};

struct Scenario {
  std::string id;
  std::string description;
  std::optional<intent::IntentCategory> ground_truth;
  std::optional<affect::AffectQuadrant> designated_quadrant;
  std::size_t trials = 15;
  double duration_s = 4.0;
  std::size_t max_inferences = 0;  // 0 = unlimited
  std::vector<ScenarioInput> inputs;
  /// Mock script per trial; trial k uses entry k mod size.
  std::vector<intent::MockScript> mock_trials;

  static Scenario parse(std::string_view text, const std::filesystem::path& base);
  static Scenario load(const std::filesystem::path& path);
};

struct ReplayOptions {
  std::size_t trial = 0;
  std::optional<intent::Modality> modality;  // projection applied to every input
  std::optional<std::shared_ptr<intent::InferenceClient>> client;  // else the scenario mock
  bool control = true;
  bool log_frames = true;
};

struct ReplayResult {
  std::vector<EventRecord> events;
  PipelineMetrics metrics;
  std::vector<DecisionMsg> decisions;
  std::vector<intent::InferOutcome> outcomes;
  affect::MotionPrimitive final_primitive;
  affect::StyleParams final_style;
  bool projection_empty = false;

  /// Deterministic JSONL transcript of the events.
  std::string transcript() const;
};

/// Virtual-time run of a scenario through the same stages as the live
/// pipeline, with the scenario's scripted mock on a virtual clock.
ReplayResult run_replay(const Scenario& s, const Resources& res, const ReplayOptions& opts = {});

// --- latency ----------------------------------------------------------------

struct LatencyReport {
  SummaryStats inference;
  SummaryStats planner_window;
  SummaryStats retarget_window;
  std::size_t trials = 0;
  std::size_t timeouts = 0;
  PipelineConfig config;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// `trials` inference cycles through the engine and `trials` planner windows
/// through the configured generator and the retargeting network.
LatencyReport measure_latency(const Resources& res, std::shared_ptr<intent::InferenceClient> client,
                              std::size_t trials);

// --- serve ------------------------------------------------------------------

/// HTTP front end for the operator console over a running Pipeline.
class Server {
 public:
  explicit Server(Pipeline& p);
  ~Server();

  /// Binds host:port (port 0 picks a free one) and serves on a thread.
  int start(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// "host:port" -> (host, port); ConfigError on malformed input.
std::pair<std::string, int> parse_address(const std::string& addr);

}  // namespace hiaer::pipeline
