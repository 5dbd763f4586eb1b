#include "bbf/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bbf/error.hpp"

namespace bbf {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidConfig, what + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(ErrorKind::ShapeMismatch, what + ": ragged matrix at row " + std::to_string(r));
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw Error(ErrorKind::InvalidConfig, what + ": non-numeric entry");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidConfig, what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::InvalidConfig, what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw Error(ErrorKind::InvalidConfig, what + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidConfig, what + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const ParamScheme& s) {
  if (s.mode == SchemeMode::Bbt) return {{"mode", "bbt"}, {"m", s.m}, {"d", s.d}, {"D", s.D}};
  return {{"mode", "lcs"}, {"m", s.m}, {"d_s", s.d_s}, {"d_u", s.d_u}, {"D", s.D}};
}

ParamScheme scheme_from_json(const json& j) {
  const auto mode = field<std::string>(j, "mode", "scheme");
  ParamScheme s;
  if (mode == "bbt") {
    s = ParamScheme::bbt(field<int>(j, "m", "scheme"), field<int>(j, "d", "scheme"),
                         field<int>(j, "D", "scheme"));
  } else if (mode == "lcs") {
    s = ParamScheme::lcs(field<int>(j, "m", "scheme"), field<int>(j, "d_s", "scheme"),
                         field<int>(j, "d_u", "scheme"), field<int>(j, "D", "scheme"));
  } else {
    throw Error(ErrorKind::InvalidScheme, "unknown scheme mode '" + mode + "'");
  }
  s.validate();
  return s;
}

json to_json(const ProjectionSpec& spec, const ParamScheme& scheme, bool include_matrices) {
  json j = {{"seed", spec.seed},
            {"sigma", spec.sigma},
            {"per_context", spec.per_context},
            {"D", scheme.D},
            {"latent_dim", scheme.latent_dim()},
            {"m", scheme.m}};
  if (include_matrices) {
    json mats = json::array();
    for (const auto& a : spec.matrices) mats.push_back(matrix_to_json(a));
    j["matrices"] = std::move(mats);
    j["initial_contexts"] = matrix_to_json(spec.initial_contexts);
  }
  return j;
}

ProjectionSpec projection_from_json(const json& j) {
  if (!j.contains("matrices") || !j.contains("initial_contexts"))
    throw Error(ErrorKind::InvalidConfig, "projection document lacks matrices for replay");
  ProjectionSpec spec;
  spec.seed = field<std::uint64_t>(j, "seed", "projection");
  spec.sigma = field<double>(j, "sigma", "projection");
  spec.per_context = field<bool>(j, "per_context", "projection");
  for (const auto& a : j.at("matrices")) spec.matrices.push_back(matrix_from_json(a, "projection.matrices"));
  spec.initial_contexts = matrix_from_json(j.at("initial_contexts"), "projection.initial_contexts");
  return spec;
}

json to_json(const SurrogateSpec& spec) {
  const auto& p = spec.params;
  return {{"format", "bbforget-surrogate"},
          {"version", 1},
          {"D", p.D},
          {"H", p.H},
          {"F", p.F},
          {"C", p.C},
          {"m", p.m},
          {"token_scale", p.token_scale},
          {"logit_scale", p.logit_scale},
          {"noise_scale", p.noise_scale},
          {"seed", p.seed},
          {"classes", spec.class_names},
          {"class_tokens", matrix_to_json(spec.class_tokens)},
          {"w1", matrix_to_json(spec.w1)},
          {"w2", matrix_to_json(spec.w2)},
          {"reference_contexts", matrix_to_json(spec.reference_contexts)}};
}

SurrogateSpec surrogate_from_json(const json& j) {
  const std::string what = "surrogate";
  if (field<std::string>(j, "format", what) != "bbforget-surrogate")
    throw Error(ErrorKind::InvalidConfig, "not a surrogate file");
  SurrogateSpec spec;
  auto& p = spec.params;
  p.D = field<int>(j, "D", what);
  p.H = field<int>(j, "H", what);
  p.F = field<int>(j, "F", what);
  p.C = field<int>(j, "C", what);
  p.m = field<int>(j, "m", what);
  p.token_scale = field<double>(j, "token_scale", what);
  p.logit_scale = field<double>(j, "logit_scale", what);
  p.noise_scale = field<double>(j, "noise_scale", what);
  p.seed = field<std::uint64_t>(j, "seed", what);
  p.validate();
  spec.class_names = field<std::vector<std::string>>(j, "classes", what);
  spec.class_tokens = matrix_from_json(j.at("class_tokens"), "class_tokens");
  spec.w1 = matrix_from_json(j.at("w1"), "w1");
  spec.w2 = matrix_from_json(j.at("w2"), "w2");
  spec.reference_contexts = matrix_from_json(j.at("reference_contexts"), "reference_contexts");
  if (static_cast<int>(spec.class_names.size()) != p.C || spec.class_tokens.rows() != p.C ||
      spec.class_tokens.cols() != p.D || spec.w1.rows() != p.H || spec.w1.cols() != p.D ||
      spec.w2.rows() != p.F || spec.w2.cols() != p.H || spec.reference_contexts.rows() != p.m ||
      spec.reference_contexts.cols() != p.D)
    throw Error(ErrorKind::ShapeMismatch, "surrogate weights do not match declared dimensions");
  return spec;
}

json to_json(const OracleMeta& meta) {
  return {{"version", meta.version},
          {"D", meta.D},
          {"C", meta.C},
          {"classes", meta.classes},
          {"m", meta.m},
          {"splits", {{"train", meta.train}, {"val", meta.val}, {"test", meta.test}}}};
}

OracleMeta meta_from_json(const json& j) {
  const std::string what = "meta";
  OracleMeta meta;
  try {
    meta.version = field<int>(j, "version", what);
    meta.D = field<int>(j, "D", what);
    meta.C = field<int>(j, "C", what);
    meta.classes = field<std::vector<std::string>>(j, "classes", what);
    meta.m = field<int>(j, "m", what);
    const auto& splits = j.at("splits");
    meta.train = field<int>(splits, "train", what);
    meta.val = field<int>(splits, "val", what);
    meta.test = field<int>(splits, "test", what);
  } catch (const Error& e) {
    throw Error(ErrorKind::ProtocolMismatch, e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProtocolMismatch, std::string("meta: ") + e.what());
  }
  return meta;
}

json to_json(const Metrics& m) { return {{"err_for", m.err_for}, {"acc_mem", m.acc_mem}, {"h", m.h}}; }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bbf
