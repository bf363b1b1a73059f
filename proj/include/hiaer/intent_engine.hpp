#pragma once

// Inference clients (HTTP and scripted mocks) and the intent engine that
// drives one inference lane: prompt, call with deadline, parse, history.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <stop_token>
#include <variant>

#include "hiaer/intent.hpp"

namespace hiaer::intent {

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& m) : Error("transport_failed", m) {}
};

class EngineBusyError : public Error {
 public:
  EngineBusyError() : Error("busy", "an inference is already in flight on this engine") {}
};

struct ClientReply {
  std::string text;
  /// Set by virtual-clock mocks in place of wall time.
  std::optional<double> simulated_latency_s;
};

class InferenceClient {
 public:
  virtual ~InferenceClient() = default;
  /// Blocks until a reply; should return early (throwing TransportError)
  /// once `stop` is requested.
  virtual ClientReply send(const MessageSequence& messages, std::stop_token stop) = 0;
  /// True when latency is simulated and send() returns without waiting.
  virtual bool simulated() const { return false; }
  virtual std::string name() const = 0;
};

/// Which modality a prompt's final user turn carries.
Modality detect_modality(const MessageSequence& messages);

/// Latency distribution given by its quantile function: linear between
/// (u, seconds) knots with u from 0 to 1.
class LatencyProfile {
 public:
  LatencyProfile() = default;
  explicit LatencyProfile(std::vector<std::pair<double, double>> knots);

  /// Calibrated to the reported inference statistics: mean 2.392 s,
  /// median 2.25 s, range [1.72, 2.83] s.
  static LatencyProfile calibrated();
  static LatencyProfile constant(double seconds);

  double quantile(double u) const;
  double sample(std::mt19937_64& rng) const { return quantile(std::uniform_real_distribution<double>(0.0, 1.0)(rng)); }
  double mean() const;
  double min() const { return knots_.front().second; }
  double max() const { return knots_.back().second; }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

 private:
  std::vector<std::pair<double, double>> knots_{{0.0, 0.0}, {1.0, 0.0}};
};

void from_json(const nlohmann::json& j, LatencyProfile& p);

struct MockReply {
  double delay_s = 0.0;
  std::string text;
  bool transport_failure = false;
};

struct MockScript {
  std::vector<MockReply> replies;
  /// Per-modality replies; when the prompt's modality has an entry it is used
  /// instead of `replies`. Each list keeps its own cursor.
  std::map<Modality, std::vector<MockReply>> by_modality;
  /// When set, delays are drawn from the profile instead of delay_s.
  std::optional<LatencyProfile> latency;
  std::uint64_t seed = 0;
  bool cycle = true;  // otherwise the last reply repeats

  static MockScript from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
  static MockScript load(const std::filesystem::path& path);
};

/// Deterministic scripted client. Real clock: sleeps for the delay
/// (interruptible). Virtual clock: returns at once with the delay reported
/// as simulated latency.
class ScriptedMockClient : public InferenceClient {
 public:
  enum class Clock { Real, Virtual };

  ScriptedMockClient(MockScript script, Clock clock);

  ClientReply send(const MessageSequence& messages, std::stop_token stop) override;
  bool simulated() const override { return clock_ == Clock::Virtual; }
  std::string name() const override { return "mock"; }
  std::size_t calls() const { return calls_.load(); }

 private:
  MockReply next(Modality m);

  MockScript script_;
  Clock clock_;
  std::mutex mu_;
  std::map<int, std::size_t> cursors_;
  std::mt19937_64 rng_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpClientConfig {
  std::string url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "qwen2.5-vl-7b-instruct";
  std::string api_key_env = "HIAER_API_KEY";
  double timeout_s = 3.0;
  int max_tokens = 512;
  double temperature = 0.0;
};

void from_json(const nlohmann::json& j, HttpClientConfig& c);
void to_json(nlohmann::json& j, const HttpClientConfig& c);

/// Chat-completions-compatible HTTP endpoint.
class HttpInferenceClient : public InferenceClient {
 public:
  explicit HttpInferenceClient(HttpClientConfig cfg);

  ClientReply send(const MessageSequence& messages, std::stop_token stop) override;
  std::string name() const override { return "http"; }

  nlohmann::json request_body(const MessageSequence& messages) const;
  /// Extracts the assistant text from a chat-completions response.
  static std::string reply_text(const nlohmann::json& response);

 private:
  HttpClientConfig cfg_;
  std::string origin_;
  std::string path_;
};

// --- engine -----------------------------------------------------------------

struct InferSuccess {
  StructuredOutput output;
  double latency_s = 0.0;
};

struct TimeoutExpired {
  double timeout_s = 0.0;
};

struct ParseFailed {
  std::string code;  // no_structured_block | missing_field | ...
  std::string field;
  std::string message;
  std::string raw;
  double latency_s = 0.0;
};

struct TransportFailed {
  std::string message;
  double latency_s = 0.0;
};

using InferOutcome = std::variant<InferSuccess, TimeoutExpired, ParseFailed, TransportFailed>;

std::string_view outcome_kind(const InferOutcome& o);
/// Time the lane was occupied: reply latency, or the timeout when expired.
double outcome_latency(const InferOutcome& o);

struct TranscriptRecord {
  double t = 0.0;
  std::string prompt_digest;
  std::string raw;
  std::string outcome;
  double latency_s = 0.0;
};

void to_json(nlohmann::json& j, const TranscriptRecord& r);

/// Append-only transcript; optionally mirrored to a JSONL stream.
class TranscriptLog {
 public:
  TranscriptLog() = default;
  explicit TranscriptLog(const std::filesystem::path& jsonl_path);

  void append(TranscriptRecord r);
  std::vector<TranscriptRecord> records() const;

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptRecord> records_;
  std::unique_ptr<std::ostream> out_;
};

class IntentEngine {
 public:
  IntentEngine(PrePrompt pre, std::shared_ptr<InferenceClient> client, IntentConfig cfg = {});

  /// One inference with the configured timeout. Throws EngineBusyError when
  /// another call is in flight, EmptyInputError / ConfigError on bad input.
  InferOutcome infer(const MultimodalInput& input);
  InferOutcome infer(const MultimodalInput& input, std::chrono::duration<double> timeout);

  HistoryBuffer history() const;
  bool busy() const { return in_flight_.load(); }
  const PrePrompt& preprompt() const { return pre_; }
  const IntentConfig& config() const { return cfg_; }
  InferenceClient& client() { return *client_; }

  void set_transcript(std::shared_ptr<TranscriptLog> log) { transcript_ = std::move(log); }
  /// Timestamp source for transcript records (defaults to steady clock).
  void set_clock(std::function<double()> now) { now_ = std::move(now); }

 private:
  InferOutcome finish(const std::string& raw, double latency, const MultimodalInput& input);
  void record(const std::string& digest, const std::string& raw, const InferOutcome& o);

  PrePrompt pre_;
  std::shared_ptr<InferenceClient> client_;
  IntentConfig cfg_;
  mutable std::mutex history_mu_;
  HistoryBuffer history_;
  std::atomic<bool> in_flight_{false};
  std::shared_ptr<TranscriptLog> transcript_;
  std::function<double()> now_;
};

/// Maps an inference outcome onto a safe command; total.
FinalDecision decide(const InferOutcome& outcome, const affect::Vocabulary& vocab,
                     const affect::AffectConfig& cfg);

}  // namespace hiaer::intent
