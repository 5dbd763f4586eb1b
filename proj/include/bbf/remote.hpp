#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "bbf/oracle.hpp"

namespace bbf {

struct RemoteOptions {
  int max_attempts = 3;  // total tries per request on transport failure
  std::chrono::milliseconds backoff{50};  // doubled after every failed attempt
  std::chrono::seconds timeout{30};
};

/// Environment variable consulted for the default endpoint.
inline constexpr const char* kEndpointEnv = "BBFORGET_ENDPOINT";

/// ScoringOracle over the JSON wire protocol (GET /v1/meta, POST /v1/score).
/// Meta is fetched once at construction; requests are idempotent and retried
/// on transport failure only.
class RemoteOracle final : public ScoringOracle {
 public:
  explicit RemoteOracle(std::string endpoint, RemoteOptions options = {});

  const OracleMeta& meta() const override { return meta_; }
  std::vector<Scored> score(const PromptContexts& contexts, Split split,
                            std::span<const int> indices) const override;

  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  RemoteOptions options_;
  OracleMeta meta_;
};

/// Minimal HTTP server exposing any ScoringOracle through the wire protocol.
/// Used as the loopback fixture for conformance tests; binds 127.0.0.1.
class LoopbackServer {
 public:
  /// port 0 picks a free port.
  explicit LoopbackServer(const ScoringOracle& oracle, int port = 0);
  ~LoopbackServer();
  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;

  int port() const { return port_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  long requests_served() const;
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace bbf
