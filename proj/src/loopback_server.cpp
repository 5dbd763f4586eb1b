#include <atomic>

#include "bbf/error.hpp"
#include "bbf/remote.hpp"
#include "bbf/serialize.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a _res macro.
#include <httplib.h>

namespace bbf {

struct LoopbackServer::Impl {
  httplib::Server server;
  std::atomic<long> served{0};
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
  res.status = status;
  res.set_content(json{{"error", code}, {"detail", detail}}.dump(), "application/json");
}

}  // namespace

LoopbackServer::LoopbackServer(const ScoringOracle& oracle, int port) : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  auto* served = &impl_->served;

  server.Get("/v1/meta", [&oracle, served](const httplib::Request&, httplib::Response& res) {
    ++*served;
    res.set_content(to_json(oracle.meta()).dump(), "application/json");
  });

  server.Post("/v1/score", [&oracle, served](const httplib::Request& req, httplib::Response& res) {
    ++*served;
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return reply_error(res, 400, "malformed", e.what());
    }
    PromptContexts contexts;
    Split split;
    std::vector<int> indices;
    try {
      contexts = matrix_from_json(body.at("contexts"), "contexts");
      split = parse_split(body.at("split").get<std::string>());
      indices = body.at("indices").get<std::vector<int>>();
    } catch (const std::exception& e) {
      return reply_error(res, 400, "malformed", e.what());
    }
    if (contexts.rows() < 1 || contexts.cols() != oracle.meta().D)
      return reply_error(res, 400, "shape", "contexts must be m x " + std::to_string(oracle.meta().D));
    try {
      const auto scored = oracle.score(contexts, split, indices);
      json conf = json::array();
      json labels = json::array();
      for (const auto& s : scored) {
        conf.push_back(vector_to_json(s.confidence));
        labels.push_back(s.label);
      }
      res.set_content(json{{"confidences", std::move(conf)}, {"labels", std::move(labels)}}.dump(),
                      "application/json");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IndexOutOfRange || e.kind() == ErrorKind::ShapeMismatch)
        return reply_error(res, 400, "shape", e.what());
      return reply_error(res, 500, "backend", e.what());
    } catch (const std::exception& e) {
      return reply_error(res, 500, "backend", e.what());
    }
  });

  port_ = port == 0 ? server.bind_to_any_port("127.0.0.1") : (server.bind_to_port("127.0.0.1", port) ? port : -1);
  if (port_ < 0) throw Error(ErrorKind::Transport, "cannot bind 127.0.0.1:" + std::to_string(port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

LoopbackServer::~LoopbackServer() { stop(); }

long LoopbackServer::requests_served() const { return impl_->served.load(); }

void LoopbackServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void LoopbackServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace bbf
