#include <algorithm>
#include <fstream>
#include <sstream>

#include "hiaer/pipeline.hpp"

namespace hiaer::pipeline {

void PipelineConfig::validate() const {
  if (!(video_rate > 0.0)) throw ConfigError("video_rate must be positive");
  if (frames_per_inference == 0) throw ConfigError("frames_per_inference must be positive");
  if (!(inference_timeout_s > 0.0)) throw ConfigError("inference_timeout_s must be positive");
  if (!(planner_fps > 0.0)) throw ConfigError("planner fps must be positive");
  if (control_rate != 50.0) throw ConfigError("control_rate must be 50 Hz");
  if (inference_backend != "mock" && inference_backend != "http") {
    throw ConfigError("inference_backend must be mock or http, got '" + inference_backend + "'");
  }
  if (!(playout_delay_s >= 0.0)) throw ConfigError("playout_delay_s must be nonnegative");
  if (window_store_capacity == 0) throw ConfigError("window_store_capacity must be positive");
  (void)parse_address(serve_address);
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c.video_rate = j.value("video_rate", c.video_rate);
  c.frames_per_inference = j.value("frames_per_inference", c.frames_per_inference);
  c.inference_timeout_s = j.value("inference_timeout_s", c.inference_timeout_s);
  c.planner_fps = j.value("planner_fps", c.planner_fps);
  c.control_rate = j.value("control_rate", c.control_rate);
  c.inference_backend = j.value("inference_backend", c.inference_backend);
  if (j.contains("generator")) {
    const auto g = j.at("generator").get<std::string>();
    if (g == "procedural") {
      c.generator = planner::BackendKind::Procedural;
    } else if (g == "remote") {
      c.generator = planner::BackendKind::Remote;
    } else {
      throw ConfigError("generator must be procedural or remote, got '" + g + "'");
    }
  }
  c.serve_address = j.value("serve_address", c.serve_address);
  c.playout_delay_s = j.value("playout_delay_s", c.playout_delay_s);
  c.window_store_capacity = j.value("window_store_capacity", c.window_store_capacity);
  c.validate();
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"video_rate", c.video_rate},
       {"frames_per_inference", c.frames_per_inference},
       {"inference_timeout_s", c.inference_timeout_s},
       {"planner_fps", c.planner_fps},
       {"control_rate", c.control_rate},
       {"inference_backend", c.inference_backend},
       {"generator", c.generator == planner::BackendKind::Remote ? "remote" : "procedural"},
       {"serve_address", c.serve_address},
       {"playout_delay_s", c.playout_delay_s},
       {"window_store_capacity", c.window_store_capacity}};
}

std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("address must be host:port, got '" + addr + "'");
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw ConfigError("bad port in address '" + addr + "'");
  return {addr.substr(0, colon), port};
}

// --- events -----------------------------------------------------------------

namespace {

constexpr std::pair<EventKind, std::string_view> kKindNames[] = {
    {EventKind::FrameIn, "frame_in"},           {EventKind::InferenceStart, "inference_start"},
    {EventKind::InferenceDone, "inference_done"}, {EventKind::Timeout, "timeout"},
    {EventKind::Fallback, "fallback"},          {EventKind::WindowEmitted, "window_emitted"},
    {EventKind::ControlTick, "control_tick"},   {EventKind::PrimitiveSwitch, "primitive_switch"}};

}  // namespace

std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

EventKind event_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  throw ConfigError("unknown event kind '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const EventRecord& r) {
  j = {{"seq", r.seq}, {"t", r.t}, {"stage", r.stage}, {"kind", to_string(r.kind)}, {"digest", r.digest},
       {"detail", r.detail}};
}

void from_json(const nlohmann::json& j, EventRecord& r) {
  r.seq = j.at("seq").get<std::uint64_t>();
  r.t = j.at("t").get<double>();
  r.stage = j.at("stage").get<std::string>();
  r.kind = event_kind_from_string(j.at("kind").get<std::string>());
  r.digest = j.value("digest", "");
  r.detail = j.value("detail", nlohmann::json::object());
}

std::uint64_t EventLog::append(EventRecord r) {
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(mu_);
    r.seq = records_.size() + 1;
    seq = r.seq;
    records_.push_back(std::move(r));
  }
  cv_.notify_all();
  return seq;
}

std::vector<EventRecord> EventLog::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<EventRecord> EventLog::since(std::uint64_t seq, std::size_t max) const {
  std::lock_guard lock(mu_);
  std::vector<EventRecord> out;
  for (std::size_t i = seq; i < records_.size() && out.size() < max; ++i) out.push_back(records_[i]);
  return out;
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

bool EventLog::wait_after(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return records_.size() > seq || closed_; });
  return records_.size() > seq;
}

void EventLog::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventLog::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::string EventLog::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : records()) out << nlohmann::json(r).dump() << "\n";
  return out.str();
}

// --- metrics ----------------------------------------------------------------

SummaryStats summarize(std::vector<double> samples) {
  SummaryStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double x : samples) sum += x;
  s.avg = sum / static_cast<double>(samples.size());
  const std::size_t n = samples.size();
  s.median = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  s.min = samples.front();
  s.max = samples.back();
  return s;
}

nlohmann::json to_json(const SummaryStats& s) {
  if (s.count == 0) return nullptr;
  return {{"count", s.count}, {"avg", s.avg}, {"median", s.median}, {"min", s.min}, {"max", s.max}};
}

nlohmann::json PipelineMetrics::summary(const PipelineConfig& cfg) const {
  return {{"video_stream_hz", cfg.video_rate},
          {"pi_i_s", to_json(summarize(inference_latency_s))},
          {"pi_p_per_window_s", to_json(summarize(planner_window_s))},
          {"retarget_per_window_s", to_json(summarize(retarget_window_s))},
          {"pi_w_hz", cfg.control_rate},
          {"control_jitter_s", to_json(summarize(control_jitter_s))},
          {"reaction_time_s", to_json(summarize(reaction_time_s))},
          {"counts",
           {{"frames_in", frames_in},
            {"inferences_started", inferences_started},
            {"inferences_completed", inferences_completed},
            {"timeouts", timeouts},
            {"failures", failures},
            {"fallbacks", fallbacks},
            {"dropped_stale_inputs", dropped_stale_inputs},
            {"windows_emitted", windows_emitted},
            {"control_ticks", control_ticks},
            {"stale_decisions_rejected", stale_decisions_rejected}}}};
}

// --- windows and inputs -------------------------------------------------------

nlohmann::json window_to_json(const WindowMsg& w) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : w.window.frames.frames) {
    const motion::FrameVector v = motion::encode_frame(f);
    frames.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& q : w.robot.poses) joints.push_back(std::vector<double>(q.data(), q.data() + q.size()));
  return {{"index", w.window.index},
          {"first_frame", w.window.first_frame},
          {"primitive", w.window.command.primitive.id},
          {"display_text", w.window.command.primitive.display_text},
          {"style", w.window.command.style},
          {"operator_forced", w.window.command.operator_forced},
          {"command_seq", w.window.command.seq},
          {"unknown_text", w.window.unknown_text},
          {"seam", w.window.seam},
          {"emitted_at", w.emitted_at},
          {"fps", w.window.frames.fps},
          {"frames", std::move(frames)},
          {"joints", std::move(joints)}};
}

void WindowStore::put(WindowMsg w) {
  std::lock_guard lock(mu_);
  windows_.push_back(std::move(w));
  while (windows_.size() > capacity_) windows_.pop_front();
}

std::optional<WindowMsg> WindowStore::get(std::size_t index) const {
  std::lock_guard lock(mu_);
  for (const auto& w : windows_) {
    if (w.window.index == index) return w;
  }
  return std::nullopt;
}

std::size_t WindowStore::size() const {
  std::lock_guard lock(mu_);
  return windows_.size();
}

void InputBuffer::push_frame(intent::ImageFrame f) {
  std::lock_guard lock(mu_);
  frames_.push_back(std::move(f));
  ++seen_;
  while (frames_.size() > capacity_) frames_.pop_front();
}

void InputBuffer::push_utterance(std::string text) {
  std::lock_guard lock(mu_);
  utterance_ = std::move(text);
}

std::optional<InputBuffer::Sample> InputBuffer::sample(std::size_t max_frames, double after_ts,
                                                       std::size_t min_frames) {
  std::lock_guard lock(mu_);
  std::vector<intent::ImageFrame> fresh;
  for (const auto& f : frames_) {
    if (f.timestamp > after_ts) fresh.push_back(f);
  }
  if (!utterance_ && (fresh.empty() || fresh.size() < min_frames)) return std::nullopt;
  Sample s;
  if (fresh.size() > max_frames) {
    s.dropped = fresh.size() - max_frames;
    fresh.erase(fresh.begin(), fresh.end() - static_cast<std::ptrdiff_t>(max_frames));
  }
  s.input.frames = std::move(fresh);
  s.input.utterance = std::move(utterance_);
  utterance_.reset();
  return s;
}

bool InputBuffer::has_fresh(double after_ts) const {
  std::lock_guard lock(mu_);
  return utterance_.has_value() || (!frames_.empty() && frames_.back().timestamp > after_ts);
}

std::size_t InputBuffer::frames_seen() const {
  std::lock_guard lock(mu_);
  return seen_;
}

// --- resources --------------------------------------------------------------

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const nlohmann::json& j, const char* key,
                              const char* fallback) {
  const std::filesystem::path p = j.value(key, std::string(fallback));
  return p.is_absolute() ? p : base / p;
}

}  // namespace

Resources load_resources(const nlohmann::json& j, const std::filesystem::path& base) {
  Resources r;
  try {
    const std::filesystem::path data = resolve(base, j, "data_dir", ".");
    r.data_dir = data;
    r.vocab = affect::Vocabulary::load(resolve(data, j, "vocabulary", "vocabulary.json"));
    if (j.contains("affect")) r.affect = j.at("affect").get<affect::AffectConfig>();
    affect::validate(r.vocab, r.affect);
    if (j.contains("pipeline")) r.pipeline = j.at("pipeline").get<PipelineConfig>();
    r.pipeline.validate();
    if (j.contains("intent")) r.intent = j.at("intent").get<intent::IntentConfig>();
    // The pipeline's rate table is the authority for these two.
    r.intent.timeout_s = r.pipeline.inference_timeout_s;
    r.intent.frames_per_inference = r.pipeline.frames_per_inference;
    if (j.contains("inference_http")) r.http = j.at("inference_http").get<intent::HttpClientConfig>();
    r.http.timeout_s = r.pipeline.inference_timeout_s;
    r.preprompt = intent::load_preprompt(resolve(data, j, "prompts", "prompts"),
                                         resolve(data, j, "few_shot", "few_shot/few_shot.json"), r.vocab, r.affect);
    if (j.contains("planner")) r.planner = j.at("planner").get<planner::PlannerConfig>();
    r.planner.fps = r.pipeline.planner_fps;
    r.planner.backend = r.pipeline.generator;
    r.planner.validate();
    r.robot = retarget::RobotDescriptor::load(resolve(data, j, "robot_descriptor", "g1_descriptor.json"));
    r.net = retarget::load_weights(resolve(data, j, "retarget_weights", "retarget_ref.rtg1"));
    r.wbc = wbc::wbc_config_from_json(j.value("wbc", nlohmann::json::object()), r.robot);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return r;
}

Resources load_resources(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config " + config_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + config_path.string() + ": " + e.what());
  }
  return load_resources(j, config_path.parent_path());
}

std::shared_ptr<intent::InferenceClient> make_inference_client(const Resources& res,
                                                               const std::optional<std::filesystem::path>& mock_script,
                                                               intent::ScriptedMockClient::Clock clock) {
  if (mock_script) {
    return std::make_shared<intent::ScriptedMockClient>(intent::MockScript::load(*mock_script), clock);
  }
  if (res.pipeline.inference_backend == "http") return std::make_shared<intent::HttpInferenceClient>(res.http);
  return std::make_shared<intent::ScriptedMockClient>(intent::MockScript::load(res.data_dir / "mocks" / "default.json"),
                                                      clock);
}

}  // namespace hiaer::pipeline
