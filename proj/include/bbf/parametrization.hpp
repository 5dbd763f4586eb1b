#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace bbf {

/// m context embeddings of dimension D, one per row.
using PromptContexts = Eigen::MatrixXd;

enum class SchemeMode { Bbt, Lcs };

/// Shape of the latent parametrization.
///
/// Bbt: m independent latents of dimension d.
/// Lcs: one shared latent (d_s) concatenated with a per-context unique latent
/// (d_u), so context i sees the latent [z_s; z_u_i] of dimension d_s + d_u.
struct ParamScheme {
  SchemeMode mode = SchemeMode::Lcs;
  int m = 4;
  int d = 10;
  int d_s = 20;
  int d_u = 5;
  int D = 64;

  static ParamScheme bbt(int m, int d, int D);
  static ParamScheme lcs(int m, int d_s, int d_u, int D);

  /// Throws InvalidScheme.
  void validate() const;
  /// Dimension of the latent fed through the projection for a single context.
  int latent_dim() const;
  int total_params() const;
  /// Independent optimisation blocks: Lcs gives [d_s, d_u x m] with empty
  /// blocks dropped, Bbt gives [d x m].
  std::vector<int> block_dims() const;

  bool operator==(const ParamScheme&) const = default;
};

struct LatentParams {
  Eigen::VectorXd shared;               // Lcs only, length d_s
  std::vector<Eigen::VectorXd> unique;  // m vectors of length d_u (Lcs) or d (Bbt)

  static LatentParams zeros(const ParamScheme& scheme);
};

/// Where the projection's standard deviation comes from.
struct SigmaSource {
  double value = 1.0;

  static SigmaSource explicit_value(double sigma);
  /// Population standard deviation over every entry of the table.
  static SigmaSource from_embeddings(const Eigen::MatrixXd& table);
};

enum class InitialContexts { Random, Zero, Explicit };

struct ProjectionOptions {
  bool per_context = false;
  InitialContexts initial = InitialContexts::Random;
  PromptContexts explicit_contexts;  // used when initial == Explicit
};

/// Frozen random projection plus the offsets q_i the latents are added to.
struct ProjectionSpec {
  std::vector<Eigen::MatrixXd> matrices;  // one shared D x latent_dim matrix, or m of them
  PromptContexts initial_contexts;        // m x D
  double sigma = 1.0;
  std::uint64_t seed = 0;
  bool per_context = false;

  const Eigen::MatrixXd& matrix_for(int context) const {
    return per_context ? matrices[context] : matrices.front();
  }
  bool operator==(const ProjectionSpec& o) const;
};

ProjectionSpec make_projection(const ParamScheme& scheme, SigmaSource sigma, std::uint64_t seed,
                               const ProjectionOptions& options = {});

/// Latent of context i: concat(z_s, z_u_i) for Lcs, z_i for Bbt.
Eigen::VectorXd assemble_latent(const ParamScheme& scheme, const LatentParams& params, int i);

/// P_i = q_i + A assemble_latent(i).
PromptContexts project(const ProjectionSpec& spec, const ParamScheme& scheme,
                       const LatentParams& params);

std::vector<Eigen::VectorXd> flatten(const ParamScheme& scheme, const LatentParams& params);
LatentParams unflatten(const ParamScheme& scheme, const std::vector<Eigen::VectorXd>& blocks);

/// Single concatenated vector in block order.
Eigen::VectorXd to_vector(const ParamScheme& scheme, const LatentParams& params);
LatentParams from_vector(const ParamScheme& scheme, const Eigen::VectorXd& flat);

void check_shapes(const ParamScheme& scheme, const LatentParams& params);

}  // namespace bbf
