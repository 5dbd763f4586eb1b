#include <doctest.h>

#include <chrono>
#include <thread>

#include "bbf/error.hpp"
#include "support.hpp"
#include "bbf/remote.hpp"
#include "bbf/serialize.hpp"
#include "bbf/surrogate.hpp"

#include <httplib.h>

using namespace bbf;

namespace {

SurrogateOracle make_oracle() {
  const auto spec = SurrogateSpec::generate(SurrogateParams{});
  return SurrogateOracle(spec, surrogate_generate_data(spec, 4, 6, 0));
}

RemoteOptions fast() {
  RemoteOptions o;
  o.backoff = std::chrono::milliseconds(5);
  o.timeout = std::chrono::seconds(5);
  return o;
}

// Oracle whose scoring always fails inside the backend.
class BrokenOracle final : public ScoringOracle {
 public:
  explicit BrokenOracle(OracleMeta meta) : meta_(std::move(meta)) {}
  const OracleMeta& meta() const override { return meta_; }
  std::vector<Scored> score(const PromptContexts&, Split, std::span<const int>) const override {
    throw Error(ErrorKind::NumericalFailure, "backend exploded");
  }

 private:
  OracleMeta meta_;
};

// A bare server answering /v1/meta with a caller-supplied document.
struct FakeServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit FakeServer(json meta) {
    server.Get("/v1/meta", [meta](const httplib::Request&, httplib::Response& res) {
      res.set_content(meta.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_SUITE("remote") {

TEST_CASE("loopback scores match the in-process oracle") {
  const auto local = make_oracle();
  LoopbackServer server(local);
  const RemoteOracle remote(server.endpoint(), fast());
  CHECK(remote.meta() == local.meta());

  Eigen::MatrixXd P = local.spec().reference_contexts;
  P(1, 2) += 0.3;
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    const auto idx = all_indices(local.meta(), split);
    const auto a = local.score(P, split, idx);
    const auto b = remote.score(P, split, idx);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].label == b[i].label);
      CHECK((a[i].confidence - b[i].confidence).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  // Contexts with a different number of rows are accepted.
  const std::vector<int> one{0};
  CHECK(remote.score(P.topRows(2), Split::Val, one).size() == 1);
}

TEST_CASE("identical requests give identical replies") {
  const auto local = make_oracle();
  LoopbackServer server(local);
  const RemoteOracle remote(server.endpoint(), fast());
  const auto idx = all_indices(local.meta(), Split::Val);
  const auto a = remote.score(local.spec().reference_contexts, Split::Val, idx);
  const auto b = remote.score(local.spec().reference_contexts, Split::Val, idx);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].confidence == b[i].confidence);
}

TEST_CASE("malformed contexts fail on the client before any request") {
  const auto local = make_oracle();
  LoopbackServer server(local);
  const RemoteOracle remote(server.endpoint(), fast());
  const long before = server.requests_served();
  const std::vector<int> idx{0};
  CHECK(kind_of([&] { remote.score(Eigen::MatrixXd::Zero(4, 63), Split::Val, idx); }) ==
        ErrorKind::ProtocolMismatch);
  const std::vector<int> bad{100000};
  CHECK(kind_of([&] { remote.score(local.spec().reference_contexts, Split::Val, bad); }) ==
        ErrorKind::IndexOutOfRange);
  CHECK(server.requests_served() == before);
}

TEST_CASE("server answers wrong-D contexts with 400 shape") {
  const auto local = make_oracle();
  LoopbackServer server(local);
  httplib::Client client(server.endpoint());
  const json body = {{"contexts", matrix_to_json(Eigen::MatrixXd::Zero(4, 5))},
                     {"split", "val"},
                     {"indices", {0}}};
  auto res = client.Post("/v1/score", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).at("error") == "shape");

  res = client.Post("/v1/score", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = client.Get("/v1/meta");
  REQUIRE(res);
  const auto meta = json::parse(res->body);
  CHECK(meta.at("version") == 1);
  CHECK(meta.at("D") == 64);
  CHECK(meta.at("C") == 10);
  CHECK(meta.at("splits").at("train") == 40);
}

TEST_CASE("backend failures surface as ServerError") {
  const auto local = make_oracle();
  const BrokenOracle broken(local.meta());
  LoopbackServer server(broken);
  const RemoteOracle remote(server.endpoint(), fast());
  const std::vector<int> idx{0};
  CHECK(kind_of([&] { remote.score(local.spec().reference_contexts, Split::Val, idx); }) ==
        ErrorKind::ServerError);
}

TEST_CASE("unreachable endpoint raises Transport after the retry budget") {
  int port = 0;
  {
    const auto local = make_oracle();
    LoopbackServer server(local);
    port = server.port();
  }
  auto opts = fast();
  opts.max_attempts = 3;
  const auto start = std::chrono::steady_clock::now();
  std::string message;
  try {
    RemoteOracle("http://127.0.0.1:" + std::to_string(port), opts);
    FAIL("connected to a closed port");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Transport);
    message = e.what();
  }
  CHECK(message.find("3 attempts") != std::string::npos);
  // Two backoff sleeps: 5 ms then 10 ms.
  CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(15));
}

TEST_CASE("protocol version and meta consistency are checked") {
  const auto local = make_oracle();
  json meta = to_json(local.meta());
  meta["version"] = 2;
  {
    FakeServer fake(meta);
    CHECK(kind_of([&] { RemoteOracle(fake.endpoint(), fast()); }) == ErrorKind::ProtocolMismatch);
  }
  meta["version"] = 1;
  meta["C"] = 3;
  {
    FakeServer fake(meta);
    CHECK(kind_of([&] { RemoteOracle(fake.endpoint(), fast()); }) == ErrorKind::ProtocolMismatch);
  }
}

}  // TEST_SUITE
