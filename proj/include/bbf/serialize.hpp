#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <string>

#include "bbf/objective.hpp"
#include "bbf/oracle.hpp"
#include "bbf/parametrization.hpp"
#include "bbf/surrogate.hpp"

namespace bbf {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j, const std::string& what);

json to_json(const ParamScheme& scheme);
ParamScheme scheme_from_json(const json& j);

/// `include_matrices` adds A and q for bit-exact replay; otherwise the
/// document carries only what is needed to regenerate them.
json to_json(const ProjectionSpec& spec, const ParamScheme& scheme, bool include_matrices);
ProjectionSpec projection_from_json(const json& j);

json to_json(const SurrogateSpec& spec);
SurrogateSpec surrogate_from_json(const json& j);

/// Feature file: {"F", "classes", "samples": [{"class", "split", "feature"}]}.
json to_json(const FeatureStore& store);

/// Loads a feature file. When the file carries "val" samples the splits are
/// taken verbatim; otherwise k train and k val samples per class are drawn
/// from the "train" pool with `sampling_seed` (InvalidK if the pool is short)
/// and every "test" sample is kept.
FeatureStore features_from_json(const json& j, int k, std::uint64_t sampling_seed);

json to_json(const OracleMeta& meta);
OracleMeta meta_from_json(const json& j);

json to_json(const Metrics& m);

json read_json_file(const std::filesystem::path& path);
/// Writes with 2-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const json& j);

}  // namespace bbf
