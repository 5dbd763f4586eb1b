#include "bbf/remote.hpp"

#include "bbf/error.hpp"
#include "bbf/serialize.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a _res macro.
#include <httplib.h>

namespace bbf {

namespace {

httplib::Client make_client(const std::string& endpoint, const RemoteOptions& options) {
  httplib::Client client(endpoint);
  client.set_connection_timeout(options.timeout);
  client.set_read_timeout(options.timeout);
  client.set_write_timeout(options.timeout);
  return client;
}

// Runs `request` until it yields a response or the attempt budget is spent.
template <typename Request>
httplib::Result with_retries(const std::string& endpoint, const RemoteOptions& options,
                             const char* what, Request&& request) {
  auto delay = options.backoff;
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    auto client = make_client(endpoint, options);
    auto result = request(client);
    if (result) return result;
    last_error = httplib::to_string(result.error());
    if (attempt < options.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  throw Error(ErrorKind::Transport, std::string(what) + " " + endpoint + " failed after " +
                                        std::to_string(options.max_attempts) +
                                        " attempts: " + last_error);
}

void check_status(const httplib::Result& res, const char* what) {
  if (res->status >= 500)
    throw Error(ErrorKind::ServerError, std::string(what) + ": HTTP " + std::to_string(res->status) +
                                            ": " + res->body);
  if (res->status != 200)
    throw Error(ErrorKind::ProtocolMismatch, std::string(what) + ": HTTP " +
                                                 std::to_string(res->status) + ": " + res->body);
}

json parse_body(const httplib::Result& res, const char* what) {
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ProtocolMismatch, std::string(what) + ": malformed JSON: " + e.what());
  }
}

}  // namespace

RemoteOracle::RemoteOracle(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
  if (endpoint_.empty()) throw Error(ErrorKind::InvalidConfig, "empty endpoint");
  if (options_.max_attempts < 1) throw Error(ErrorKind::InvalidConfig, "max_attempts must be >= 1");
  auto res = with_retries(endpoint_, options_, "GET /v1/meta",
                          [](httplib::Client& c) { return c.Get("/v1/meta"); });
  check_status(res, "GET /v1/meta");
  meta_ = meta_from_json(parse_body(res, "GET /v1/meta"));
  if (meta_.version != 1)
    throw Error(ErrorKind::ProtocolMismatch, "server speaks protocol version " +
                                                 std::to_string(meta_.version) + ", client speaks 1");
  if (meta_.D < 1 || meta_.C < 2 || static_cast<int>(meta_.classes.size()) != meta_.C)
    throw Error(ErrorKind::ProtocolMismatch, "inconsistent meta from server");
}

std::vector<Scored> RemoteOracle::score(const PromptContexts& contexts, Split split,
                                        std::span<const int> indices) const {
  if (contexts.rows() < 1 || contexts.cols() != meta_.D)
    throw Error(ErrorKind::ProtocolMismatch, "contexts are " + std::to_string(contexts.rows()) + "x" +
                                                 std::to_string(contexts.cols()) + ", server expects D=" +
                                                 std::to_string(meta_.D));
  const int n = meta_.split_size(split);
  for (int i : indices)
    if (i < 0 || i >= n)
      throw Error(ErrorKind::IndexOutOfRange, "sample index " + std::to_string(i) + " outside " +
                                                  std::string(to_string(split)) + " split");

  const json body = {{"contexts", matrix_to_json(contexts)},
                     {"split", std::string(to_string(split))},
                     {"indices", std::vector<int>(indices.begin(), indices.end())}};
  const std::string payload = body.dump();
  auto res = with_retries(endpoint_, options_, "POST /v1/score", [&](httplib::Client& c) {
    return c.Post("/v1/score", payload, "application/json");
  });
  check_status(res, "POST /v1/score");
  const json reply = parse_body(res, "POST /v1/score");
  if (!reply.contains("confidences") || !reply.contains("labels"))
    throw Error(ErrorKind::ProtocolMismatch, "score reply lacks confidences/labels");
  const auto& conf = reply.at("confidences");
  const auto& labels = reply.at("labels");
  if (!conf.is_array() || !labels.is_array() || conf.size() != indices.size() ||
      labels.size() != indices.size())
    throw Error(ErrorKind::ProtocolMismatch, "score reply has the wrong number of rows");
  std::vector<Scored> out;
  out.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    Scored s;
    try {
      s.confidence = vector_from_json(conf[i], "confidences");
      s.label = labels[i].get<int>();
    } catch (const Error& e) {
      throw Error(ErrorKind::ProtocolMismatch, e.what());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ProtocolMismatch, e.what());
    }
    if (s.confidence.size() != meta_.C || s.label < 0 || s.label >= meta_.C)
      throw Error(ErrorKind::ProtocolMismatch, "score reply row " + std::to_string(i) + " malformed");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace bbf
