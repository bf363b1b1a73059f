#include "hiaer/pipeline.hpp"

// After Eigen: resolv.h (pulled in by httplib) defines a `_res` macro.
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace hiaer::pipeline {

namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  reply_json(res, status, {{"error", code}, {"message", message}});
}

bool strict_base64(const std::string& s) {
  std::size_t pad = 0;
  for (char c : s) {
    if (c == '=') {
      ++pad;
      continue;
    }
    if (pad > 0) return false;
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/';
    if (!ok) return false;
  }
  return pad <= 2 && (s.size() % 4 == 0);
}

std::string sse(const std::string& event, std::uint64_t id, const std::string& data) {
  std::string out;
  if (id > 0) out += "id: " + std::to_string(id) + "\n";
  out += "event: " + event + "\ndata: " + data + "\n\n";
  return out;
}

}  // namespace

struct Server::Impl {
  Pipeline& p;
  httplib::Server svr;
  std::thread th;

  explicit Impl(Pipeline& pipeline) : p(pipeline) { routes(); }

  void routes() {
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"}});
    svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply_json(res, 200, {{"ok", true}}); });

    svr.Post("/session/input", [this](const httplib::Request& req, httplib::Response& res) { input(req, res); });

    svr.Get("/session/history", [this](const httplib::Request&, httplib::Response& res) {
      const auto h = p.history();
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& e : h.entries()) entries.push_back({{"input_summary", e.input_summary}, {"output", e.output}});
      reply_json(res, 200, {{"entries", entries}, {"capacity", h.capacity()}, {"total_seen", h.total_seen()}});
    });

    svr.Post("/session/override", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        return reply_error(res, 400, "malformed_request", e.what());
      }
      if (!body.is_object() || !body.contains("primitive_id") || !body["primitive_id"].is_string()) {
        return reply_error(res, 400, "malformed_request", "body must be {\"primitive_id\": string}");
      }
      try {
        const auto msg = p.override_primitive(body["primitive_id"].get<std::string>());
        reply_json(res, 200, {{"cycle", msg.cycle}, {"decision", msg.decision}});
      } catch (const affect::UnknownPrimitiveError& e) {
        reply_error(res, 404, e.code(), e.what());
      } catch (const ConfigError& e) {
        reply_error(res, 403, "prohibited", e.what());
      }
    });

    svr.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      reply_json(res, 200, p.metrics().summary(p.resources().pipeline));
    });

    svr.Get("/stream", [this](const httplib::Request& req, httplib::Response& res) { stream(req, res); });
  }

  void input(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      return reply_error(res, 400, "malformed_request", e.what());
    }
    if (!body.is_object()) return reply_error(res, 400, "malformed_request", "body must be a JSON object");
    intent::MultimodalInput in;
    try {
      if (body.contains("text") && !body["text"].is_null()) in.utterance = body["text"].get<std::string>();
      const std::string encoding = body.value("encoding", std::string("png"));
      if (body.contains("images_base64")) {
        for (const auto& img : body["images_base64"]) {
          const auto text = img.get<std::string>();
          if (!strict_base64(text)) return reply_error(res, 400, "malformed_request", "image is not valid base64");
          intent::ImageFrame f;
          f.bytes = intent::base64_decode(text);
          f.encoding = encoding;
          in.frames.push_back(std::move(f));
        }
      }
      if (body.contains("modality")) {
        in = intent::select_modality(in, intent::modality_from_string(body["modality"].get<std::string>()));
      }
      const SubmitResult r = p.submit(std::move(in));
      reply_json(res, 200,
                 {{"cycle", r.decision.cycle},
                  {"outcome", intent::outcome_kind(r.outcome)},
                  {"latency_s", intent::outcome_latency(r.outcome)},
                  {"output", r.decision.decision.output},
                  {"decision", r.decision.decision}});
    } catch (const PipelineBusyError& e) {
      reply_error(res, 409, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, "malformed_request", e.what());
    } catch (const Error& e) {
      reply_error(res, 400, e.code(), e.what());
    }
  }

  void stream(const httplib::Request& req, httplib::Response& res) {
    std::uint64_t start = 0;
    try {
      if (req.has_header("Last-Event-ID")) start = std::stoull(req.get_header_value("Last-Event-ID"));
      if (req.has_param("since")) start = std::stoull(req.get_param_value("since"));
    } catch (const std::exception&) {
      return reply_error(res, 400, "malformed_request", "since must be an event sequence number");
    }
    const bool control = req.get_param_value("control") != "0";
    const bool frames = req.get_param_value("frames") != "0";
    const long limit = req.has_param("limit") ? std::stol(req.get_param_value("limit")) : -1;
    auto cursor = std::make_shared<std::uint64_t>(start);
    auto sent = std::make_shared<long>(0);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [this, cursor, sent, control, frames, limit](std::size_t, httplib::DataSink& sink) {
          if (!p.channels().log.wait_after(*cursor, std::chrono::milliseconds(250))) {
            if (p.channels().log.closed()) {
              sink.done();
              return true;
            }
            const std::string keepalive = ": keepalive\n\n";
            return sink.write(keepalive.data(), keepalive.size());
          }
          for (const auto& r : p.channels().log.since(*cursor, 256)) {
            *cursor = r.seq;
            if (!control && r.kind == EventKind::ControlTick) continue;
            if (!frames && r.kind == EventKind::FrameIn) continue;
            std::string chunk = sse("record", r.seq, nlohmann::json(r).dump());
            if (r.kind == EventKind::WindowEmitted) {
              if (auto w = p.channels().store.get(r.detail.at("index").get<std::size_t>())) {
                chunk += sse("window", 0, window_to_json(*w).dump());
              }
            }
            if (!sink.write(chunk.data(), chunk.size())) return false;
            if (limit >= 0 && ++*sent >= limit) {
              sink.done();
              return true;
            }
          }
          return true;
        });
  }
};

Server::Server(Pipeline& p) : impl_(std::make_unique<Impl>(p)) {}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  if (impl_->th.joinable()) throw ConfigError("server already started");
  if (port == 0) {
    port_ = impl_->svr.bind_to_any_port(host);
  } else {
    port_ = impl_->svr.bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  impl_->th = std::thread([this] { impl_->svr.listen_after_bind(); });
  impl_->svr.wait_until_ready();
  spdlog::info("serving on http://{}:{}", host, port_);
  return port_;
}

void Server::stop() {
  if (!impl_ || !impl_->th.joinable()) return;
  impl_->svr.stop();
  impl_->th.join();
}

}  // namespace hiaer::pipeline
