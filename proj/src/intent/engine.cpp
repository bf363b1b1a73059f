#include <condition_variable>
#include <fstream>
#include <thread>

#include "hiaer/intent_engine.hpp"

namespace hiaer::intent {

std::string_view outcome_kind(const InferOutcome& o) {
  switch (o.index()) {
    case 0: return "success";
    case 1: return "timeout_expired";
    case 2: return "parse_failed";
    default: return "transport_failed";
  }
}

double outcome_latency(const InferOutcome& o) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TimeoutExpired>) {
          return v.timeout_s;
        } else {
          return v.latency_s;
        }
      },
      o);
}

void to_json(nlohmann::json& j, const TranscriptRecord& r) {
  j = {{"t", r.t},
       {"prompt_digest", r.prompt_digest},
       {"raw", r.raw},
       {"outcome", r.outcome},
       {"latency_s", r.latency_s}};
}

TranscriptLog::TranscriptLog(const std::filesystem::path& jsonl_path)
    : out_(std::make_unique<std::ofstream>(jsonl_path, std::ios::app)) {
  if (!*out_) throw ConfigError("cannot open transcript log " + jsonl_path.string());
}

void TranscriptLog::append(TranscriptRecord r) {
  std::lock_guard lock(mu_);
  if (out_) {
    *out_ << nlohmann::json(r).dump() << '\n';
    out_->flush();
  }
  records_.push_back(std::move(r));
}

std::vector<TranscriptRecord> TranscriptLog::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

IntentEngine::IntentEngine(PrePrompt pre, std::shared_ptr<InferenceClient> client, IntentConfig cfg)
    : pre_(std::move(pre)), client_(std::move(client)), cfg_(cfg), history_(cfg.history_capacity) {
  if (!client_) throw ConfigError("intent engine needs an inference client");
  const auto start = std::chrono::steady_clock::now();
  now_ = [start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
}

HistoryBuffer IntentEngine::history() const {
  std::lock_guard lock(history_mu_);
  return history_;
}

InferOutcome IntentEngine::infer(const MultimodalInput& input) {
  return infer(input, std::chrono::duration<double>(cfg_.timeout_s));
}

namespace {

struct Guard {
  std::atomic<bool>& flag;
  ~Guard() { flag.store(false); }
};

// Shared between the caller and the detached worker; the worker may outlive
// the call when the deadline passes first.
struct Pending {
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::optional<ClientReply> reply;
  std::string error;
  std::stop_source stop;
};

}  // namespace

InferOutcome IntentEngine::infer(const MultimodalInput& input, std::chrono::duration<double> timeout) {
  bool expected = false;
  if (!in_flight_.compare_exchange_strong(expected, true)) throw EngineBusyError();
  Guard guard{in_flight_};

  input.validate(cfg_.frames_per_inference);
  const MessageSequence msgs = build_prompt(pre_, input, history());
  const std::string prompt_digest = digest(msgs);
  const double limit = timeout.count();

  if (client_->simulated()) {
    InferOutcome o;
    try {
      const ClientReply r = client_->send(msgs, std::stop_token{});
      const double latency = r.simulated_latency_s.value_or(0.0);
      if (latency > limit) {
        o = TimeoutExpired{limit};
        record(prompt_digest, "", o);
        return o;
      }
      o = finish(r.text, latency, input);
      record(prompt_digest, r.text, o);
    } catch (const TransportError& e) {
      o = TransportFailed{e.what(), 0.0};
      record(prompt_digest, "", o);
    }
    return o;
  }

  auto pending = std::make_shared<Pending>();
  const auto t0 = std::chrono::steady_clock::now();
  std::thread([pending, client = client_, msgs] {
    std::optional<ClientReply> reply;
    std::string error;
    try {
      reply = client->send(msgs, pending->stop.get_token());
    } catch (const std::exception& e) {
      error = e.what();
      if (error.empty()) error = "transport failure";
    }
    std::lock_guard lock(pending->mu);
    pending->reply = std::move(reply);
    pending->error = std::move(error);
    pending->done = true;
    pending->cv.notify_all();
  }).detach();

  std::unique_lock lock(pending->mu);
  const bool finished = pending->cv.wait_until(
      lock, t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout),
      [&] { return pending->done; });
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  InferOutcome o;
  if (!finished) {
    // The late reply, if any, lands in `pending` and is dropped with it.
    pending->stop.request_stop();
    lock.unlock();
    o = TimeoutExpired{limit};
    record(prompt_digest, "", o);
    return o;
  }
  if (!pending->reply) {
    o = TransportFailed{pending->error, elapsed};
    const std::string raw;
    lock.unlock();
    record(prompt_digest, raw, o);
    return o;
  }
  const std::string raw = pending->reply->text;
  lock.unlock();
  o = finish(raw, elapsed, input);
  record(prompt_digest, raw, o);
  return o;
}

InferOutcome IntentEngine::finish(const std::string& raw, double latency, const MultimodalInput& input) {
  try {
    StructuredOutput out = parse_output(raw);
    {
      std::lock_guard lock(history_mu_);
      history_.push({summarize_input(input), out});
    }
    return InferSuccess{std::move(out), latency};
  } catch (const ParseError& e) {
    return ParseFailed{e.code(), e.field(), e.what(), raw, latency};
  }
}

void IntentEngine::record(const std::string& prompt_digest, const std::string& raw, const InferOutcome& o) {
  if (!transcript_) return;
  std::string outcome(outcome_kind(o));
  if (const auto* p = std::get_if<ParseFailed>(&o)) outcome += ":" + p->code;
  transcript_->append({now_(), prompt_digest, raw, outcome, outcome_latency(o)});
}

}  // namespace hiaer::intent
