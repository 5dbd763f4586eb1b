#include "bbf/parametrization.hpp"

#include <cmath>
#include <string>

#include "bbf/error.hpp"
#include "bbf/rng.hpp"

namespace bbf {

ParamScheme ParamScheme::bbt(int m, int d, int D) {
  ParamScheme s;
  s.mode = SchemeMode::Bbt;
  s.m = m;
  s.d = d;
  s.d_s = 0;
  s.d_u = 0;
  s.D = D;
  return s;
}

ParamScheme ParamScheme::lcs(int m, int d_s, int d_u, int D) {
  ParamScheme s;
  s.mode = SchemeMode::Lcs;
  s.m = m;
  s.d = 0;
  s.d_s = d_s;
  s.d_u = d_u;
  s.D = D;
  return s;
}

void ParamScheme::validate() const {
  if (m < 1) throw Error(ErrorKind::InvalidScheme, "m must be >= 1");
  if (D < 1) throw Error(ErrorKind::InvalidScheme, "D must be >= 1");
  if (mode == SchemeMode::Bbt) {
    if (d < 1) throw Error(ErrorKind::InvalidScheme, "d must be >= 1 for bbt");
  } else {
    if (d_s < 0 || d_u < 0) throw Error(ErrorKind::InvalidScheme, "d_s, d_u must be >= 0");
    if (d_s + d_u < 1) throw Error(ErrorKind::InvalidScheme, "d_s + d_u must be >= 1");
  }
}

int ParamScheme::latent_dim() const { return mode == SchemeMode::Bbt ? d : d_s + d_u; }

int ParamScheme::total_params() const { return mode == SchemeMode::Bbt ? m * d : d_s + m * d_u; }

std::vector<int> ParamScheme::block_dims() const {
  std::vector<int> dims;
  if (mode == SchemeMode::Bbt) return std::vector<int>(m, d);
  if (d_s > 0) dims.push_back(d_s);
  if (d_u > 0) dims.insert(dims.end(), m, d_u);
  return dims;
}

LatentParams LatentParams::zeros(const ParamScheme& scheme) {
  LatentParams p;
  const int per = scheme.mode == SchemeMode::Bbt ? scheme.d : scheme.d_u;
  p.shared = Eigen::VectorXd::Zero(scheme.mode == SchemeMode::Lcs ? scheme.d_s : 0);
  p.unique.assign(scheme.m, Eigen::VectorXd::Zero(per));
  return p;
}

SigmaSource SigmaSource::explicit_value(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw Error(ErrorKind::InvalidConfig, "projection sigma must be positive");
  return SigmaSource{sigma};
}

SigmaSource SigmaSource::from_embeddings(const Eigen::MatrixXd& table) {
  if (table.size() == 0) throw Error(ErrorKind::InvalidConfig, "empty embedding table");
  const double mean = table.mean();
  const double var = (table.array() - mean).square().mean();
  return explicit_value(std::sqrt(var));
}

bool ProjectionSpec::operator==(const ProjectionSpec& o) const {
  if (matrices.size() != o.matrices.size()) return false;
  for (std::size_t i = 0; i < matrices.size(); ++i)
    if (matrices[i].rows() != o.matrices[i].rows() || matrices[i].cols() != o.matrices[i].cols() ||
        matrices[i] != o.matrices[i])
      return false;
  return initial_contexts.rows() == o.initial_contexts.rows() &&
         initial_contexts.cols() == o.initial_contexts.cols() &&
         initial_contexts == o.initial_contexts && sigma == o.sigma && seed == o.seed &&
         per_context == o.per_context;
}

ProjectionSpec make_projection(const ParamScheme& scheme, SigmaSource sigma, std::uint64_t seed,
                               const ProjectionOptions& options) {
  scheme.validate();
  ProjectionSpec spec;
  spec.sigma = sigma.value;
  spec.seed = seed;
  spec.per_context = options.per_context;

  Rng rng(seed);
  const int count = options.per_context ? scheme.m : 1;
  for (int k = 0; k < count; ++k) {
    Eigen::MatrixXd a(scheme.D, scheme.latent_dim());
    for (int c = 0; c < a.cols(); ++c)
      for (int r = 0; r < a.rows(); ++r) a(r, c) = rng.normal(0.0, sigma.value);
    spec.matrices.push_back(std::move(a));
  }

  switch (options.initial) {
    case InitialContexts::Random:
      spec.initial_contexts.resize(scheme.m, scheme.D);
      for (int i = 0; i < scheme.m; ++i)
        for (int j = 0; j < scheme.D; ++j) spec.initial_contexts(i, j) = rng.normal(0.0, sigma.value);
      break;
    case InitialContexts::Zero:
      spec.initial_contexts = PromptContexts::Zero(scheme.m, scheme.D);
      break;
    case InitialContexts::Explicit:
      if (options.explicit_contexts.rows() != scheme.m || options.explicit_contexts.cols() != scheme.D)
        throw Error(ErrorKind::ShapeMismatch,
                    "explicit initial contexts are " + std::to_string(options.explicit_contexts.rows()) +
                        "x" + std::to_string(options.explicit_contexts.cols()) + ", scheme needs " +
                        std::to_string(scheme.m) + "x" + std::to_string(scheme.D));
      spec.initial_contexts = options.explicit_contexts;
      break;
  }
  return spec;
}

void check_shapes(const ParamScheme& scheme, const LatentParams& params) {
  const int per = scheme.mode == SchemeMode::Bbt ? scheme.d : scheme.d_u;
  const int shared = scheme.mode == SchemeMode::Lcs ? scheme.d_s : 0;
  if (params.shared.size() != shared)
    throw Error(ErrorKind::ShapeMismatch, "shared latent has length " +
                                              std::to_string(params.shared.size()) + ", expected " +
                                              std::to_string(shared));
  if (static_cast<int>(params.unique.size()) != scheme.m)
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(scheme.m) + " latents, got " +
                                              std::to_string(params.unique.size()));
  for (const auto& u : params.unique)
    if (u.size() != per)
      throw Error(ErrorKind::ShapeMismatch, "latent has length " + std::to_string(u.size()) +
                                                ", expected " + std::to_string(per));
}

Eigen::VectorXd assemble_latent(const ParamScheme& scheme, const LatentParams& params, int i) {
  if (i < 0 || i >= scheme.m)
    throw Error(ErrorKind::IndexOutOfRange, "context index " + std::to_string(i) + " not in [0, " +
                                                std::to_string(scheme.m) + ")");
  if (scheme.mode == SchemeMode::Bbt) return params.unique[i];
  Eigen::VectorXd z(scheme.d_s + scheme.d_u);
  z << params.shared, params.unique[i];
  return z;
}

PromptContexts project(const ProjectionSpec& spec, const ParamScheme& scheme,
                       const LatentParams& params) {
  check_shapes(scheme, params);
  if (spec.initial_contexts.rows() != scheme.m || spec.initial_contexts.cols() != scheme.D ||
      spec.matrix_for(0).rows() != scheme.D || spec.matrix_for(0).cols() != scheme.latent_dim() ||
      (spec.per_context && static_cast<int>(spec.matrices.size()) != scheme.m))
    throw Error(ErrorKind::ShapeMismatch, "projection does not match the parameter scheme");
  PromptContexts out(scheme.m, scheme.D);
  for (int i = 0; i < scheme.m; ++i)
    out.row(i) = spec.initial_contexts.row(i) +
                 (spec.matrix_for(i) * assemble_latent(scheme, params, i)).transpose();
  return out;
}

std::vector<Eigen::VectorXd> flatten(const ParamScheme& scheme, const LatentParams& params) {
  check_shapes(scheme, params);
  std::vector<Eigen::VectorXd> blocks;
  if (scheme.mode == SchemeMode::Lcs && scheme.d_s > 0) blocks.push_back(params.shared);
  if (scheme.mode == SchemeMode::Bbt || scheme.d_u > 0)
    blocks.insert(blocks.end(), params.unique.begin(), params.unique.end());
  return blocks;
}

LatentParams unflatten(const ParamScheme& scheme, const std::vector<Eigen::VectorXd>& blocks) {
  const auto dims = scheme.block_dims();
  if (blocks.size() != dims.size())
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(dims.size()) + " blocks, got " +
                                              std::to_string(blocks.size()));
  for (std::size_t b = 0; b < dims.size(); ++b)
    if (blocks[b].size() != dims[b])
      throw Error(ErrorKind::ShapeMismatch, "block " + std::to_string(b) + " has length " +
                                                std::to_string(blocks[b].size()) + ", expected " +
                                                std::to_string(dims[b]));
  LatentParams p = LatentParams::zeros(scheme);
  std::size_t next = 0;
  if (scheme.mode == SchemeMode::Lcs && scheme.d_s > 0) p.shared = blocks[next++];
  if (scheme.mode == SchemeMode::Bbt || scheme.d_u > 0)
    for (int i = 0; i < scheme.m; ++i) p.unique[i] = blocks[next++];
  return p;
}

Eigen::VectorXd to_vector(const ParamScheme& scheme, const LatentParams& params) {
  const auto blocks = flatten(scheme, params);
  Eigen::VectorXd flat(scheme.total_params());
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    flat.segment(offset, b.size()) = b;
    offset += b.size();
  }
  return flat;
}

LatentParams from_vector(const ParamScheme& scheme, const Eigen::VectorXd& flat) {
  if (flat.size() != scheme.total_params())
    throw Error(ErrorKind::ShapeMismatch, "flat parameter vector has length " +
                                              std::to_string(flat.size()) + ", expected " +
                                              std::to_string(scheme.total_params()));
  std::vector<Eigen::VectorXd> blocks;
  Eigen::Index offset = 0;
  for (int dim : scheme.block_dims()) {
    blocks.push_back(flat.segment(offset, dim));
    offset += dim;
  }
  return unflatten(scheme, blocks);
}

}  // namespace bbf
