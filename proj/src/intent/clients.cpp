#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "hiaer/intent_engine.hpp"

namespace hiaer::intent {

Modality detect_modality(const MessageSequence& messages) {
  if (messages.empty()) return Modality::Combined;
  const Message& last = messages.back();
  bool images = false;
  bool speech = false;
  for (const auto& p : last.parts) {
    if (p.kind == ContentPart::Kind::Image) images = true;
    if (p.kind == ContentPart::Kind::Text && p.text.find("The person says:") != std::string::npos) {
      speech = true;
    }
  }
  if (images && speech) return Modality::Combined;
  if (images) return Modality::ImageOnly;
  return Modality::PromptOnly;
}

LatencyProfile::LatencyProfile(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 2 || knots_.front().first != 0.0 || knots_.back().first != 1.0) {
    throw ConfigError("latency profile knots must span u = 0 to 1");
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].first > knots_[i - 1].first) || knots_[i].second < knots_[i - 1].second) {
      throw ConfigError("latency profile must be strictly increasing in u and monotone in time");
    }
  }
  if (knots_.front().second < 0.0) throw ConfigError("latency must be non-negative");
}

LatencyProfile LatencyProfile::calibrated() {
  return LatencyProfile({{0.0, 1.72}, {0.1, 2.05}, {0.5, 2.25}, {0.6, 2.6675}, {0.9, 2.78}, {1.0, 2.83}});
}

LatencyProfile LatencyProfile::constant(double seconds) {
  return LatencyProfile({{0.0, seconds}, {1.0, seconds}});
}

double LatencyProfile::quantile(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (u <= knots_[i].first) {
      const auto [u0, x0] = knots_[i - 1];
      const auto [u1, x1] = knots_[i];
      return x0 + (x1 - x0) * (u - u0) / (u1 - u0);
    }
  }
  return knots_.back().second;
}

double LatencyProfile::mean() const {
  double m = 0.0;
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    m += (knots_[i].first - knots_[i - 1].first) * 0.5 * (knots_[i].second + knots_[i - 1].second);
  }
  return m;
}

void from_json(const nlohmann::json& j, LatencyProfile& p) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name != "calibrated") throw ConfigError("unknown latency profile '" + name + "'");
    p = LatencyProfile::calibrated();
  } else if (j.is_number()) {
    p = LatencyProfile::constant(j.get<double>());
  } else {
    std::vector<std::pair<double, double>> knots;
    for (const auto& k : j) knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    p = LatencyProfile(std::move(knots));
  }
}

namespace {

std::vector<MockReply> replies_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  std::vector<MockReply> out;
  for (const auto& r : j) {
    MockReply m;
    m.delay_s = r.value("delay_s", 0.0);
    m.transport_failure = r.value("transport_failure", false);
    if (r.contains("text")) {
      m.text = r.at("text").get<std::string>();
    } else if (r.contains("text_file")) {
      std::ifstream in(base / r.at("text_file").get<std::string>(), std::ios::binary);
      if (!in) throw ConfigError("cannot open mock reply " + r.at("text_file").get<std::string>());
      m.text.assign(std::istreambuf_iterator<char>(in), {});
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

MockScript MockScript::from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  MockScript s;
  if (j.contains("replies")) s.replies = replies_from_json(j.at("replies"), base);
  if (j.contains("by_modality")) {
    for (const auto& [k, v] : j.at("by_modality").items()) {
      s.by_modality[modality_from_string(k)] = replies_from_json(v, base);
    }
  }
  if (j.contains("latency")) s.latency = j.at("latency").get<LatencyProfile>();
  s.seed = j.value("seed", std::uint64_t{0});
  s.cycle = j.value("cycle", true);
  if (s.replies.empty() && s.by_modality.empty()) throw ConfigError("mock script has no replies");
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  return from_json(nlohmann::json::parse(in), path.parent_path());
}

ScriptedMockClient::ScriptedMockClient(MockScript script, Clock clock)
    : script_(std::move(script)), clock_(clock), rng_(script_.seed) {
  if (script_.replies.empty() && script_.by_modality.empty()) {
    throw ConfigError("mock script has no replies");
  }
}

MockReply ScriptedMockClient::next(Modality m) {
  std::lock_guard lock(mu_);
  const auto it = script_.by_modality.find(m);
  const bool keyed = it != script_.by_modality.end() && !it->second.empty();
  const auto& list = keyed ? it->second : script_.replies;
  if (list.empty()) throw TransportError("mock has no reply for modality " + std::string(to_string(m)));
  const int key = keyed ? static_cast<int>(m) : -1;
  std::size_t& cursor = cursors_[key];
  const std::size_t idx = script_.cycle ? cursor % list.size() : std::min(cursor, list.size() - 1);
  ++cursor;
  MockReply r = list[idx];
  if (script_.latency) r.delay_s = script_.latency->sample(rng_);
  return r;
}

ClientReply ScriptedMockClient::send(const MessageSequence& messages, std::stop_token stop) {
  ++calls_;
  const MockReply r = next(detect_modality(messages));
  if (clock_ == Clock::Virtual) {
    if (r.transport_failure) throw TransportError("scripted transport failure");
    return {r.text, r.delay_s};
  }
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  cv.wait_for(lock, stop, std::chrono::duration<double>(r.delay_s), [] { return false; });
  if (stop.stop_requested()) throw TransportError("request cancelled");
  if (r.transport_failure) throw TransportError("scripted transport failure");
  return {r.text, std::nullopt};
}

void from_json(const nlohmann::json& j, HttpClientConfig& c) {
  c.url = j.value("url", c.url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.temperature = j.value("temperature", c.temperature);
}

void to_json(nlohmann::json& j, const HttpClientConfig& c) {
  j = {{"url", c.url},
       {"model", c.model},
       {"api_key_env", c.api_key_env},
       {"timeout_s", c.timeout_s},
       {"max_tokens", c.max_tokens},
       {"temperature", c.temperature}};
}

HttpInferenceClient::HttpInferenceClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme = cfg_.url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint url needs a scheme: " + cfg_.url);
  if (cfg_.url.substr(0, scheme) != "http") {
    throw ConfigError("only http endpoints are supported: " + cfg_.url);
  }
  const auto slash = cfg_.url.find('/', scheme + 3);
  origin_ = cfg_.url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.url.substr(slash);
}

nlohmann::json HttpInferenceClient::request_body(const MessageSequence& messages) const {
  return {{"model", cfg_.model},
          {"messages", to_chat_json(messages)},
          {"max_tokens", cfg_.max_tokens},
          {"temperature", cfg_.temperature},
          {"stream", false}};
}

std::string HttpInferenceClient::reply_text(const nlohmann::json& response) {
  if (!response.contains("choices") || response.at("choices").empty()) {
    throw TransportError("response has no choices");
  }
  const auto& content = response.at("choices").at(0).at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  std::string text;
  for (const auto& part : content) {
    if (part.value("type", std::string()) == "text") text += part.value("text", std::string());
  }
  return text;
}

ClientReply HttpInferenceClient::send(const MessageSequence& messages, std::stop_token stop) {
  httplib::Client cli(origin_);
  const auto secs = std::chrono::duration<double>(cfg_.timeout_s);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    cli.set_bearer_token_auth(key);
  }
  std::stop_callback on_stop(stop, [&cli] { cli.stop(); });
  const auto res = cli.Post(path_, request_body(messages).dump(), "application/json");
  if (stop.stop_requested()) throw TransportError("request cancelled");
  if (!res) throw TransportError("http error: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed endpoint response: ") + e.what());
  }
  try {
    return {reply_text(body), std::nullopt};
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected endpoint response: ") + e.what());
  }
}

}  // namespace hiaer::intent
