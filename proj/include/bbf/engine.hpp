#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbf/cma.hpp"
#include "bbf/objective.hpp"
#include "bbf/oracle.hpp"
#include "bbf/parametrization.hpp"

namespace bbf {

enum class Optimizer { BlockCma, BlockCmaDiagonal, GradientDescent, ZerothOrder, CEmbedding, CombinedCEmb };
/// PerBlock runs one CMA-ES per parameter block; Joint runs a single CMA-ES
/// over the concatenated vector (the BBT baseline).
enum class BlockLayout { PerBlock, Joint };
/// LockStep: every block samples each iteration and candidates are paired by
/// index. RoundRobin: one block moves per iteration, the others sit at their means.
enum class BlockSync { LockStep, RoundRobin };

enum class SigmaMode { Embedding, Explicit };

/// How the run's projection is built. The engine itself consumes a finished
/// ProjectionSpec; these settings are echoed so a run can be replayed.
struct ProjectionSettings {
  SigmaMode sigma_mode = SigmaMode::Embedding;
  double sigma = 1.0;  // used when sigma_mode == Explicit
  InitialContexts initial = InitialContexts::Explicit;  // Explicit = the model's reference prompt
  bool per_context = false;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

/// Steps along the unit gradient direction: the raw gradient vanishes on the
/// plateau the loss enters once forgotten-class confidences flatten.
struct GradientConfig {
  double step_size = 0.5;
  double decay = 0.5;  // applied every quarter of the iteration budget
};

struct ZerothOrderConfig {
  double perturbation = 0.1;
  int directions = 10;  // two oracle calls each
  double step_size = 0.05;
  double decay = 0.5;
};

struct CEmbConfig {
  double step_size = 0.1;
  /// Forgotten classes without training samples (CombinedCEmb only). Empty
  /// means the second half of the forgotten list.
  std::optional<std::vector<int>> sampleless;
};

struct RunConfig {
  ParamScheme scheme = ParamScheme::lcs(4, 20, 5, 64);
  ClassPartition partition = ClassPartition::first_fraction(10, 0.4);
  LossConfig loss;
  ProjectionSettings projection;
  int population_size = 20;
  double initial_step_size = 1.0;
  int iterations = 400;
  int eval_interval = 10;
  Optimizer optimizer = Optimizer::BlockCma;
  BlockLayout layout = BlockLayout::PerBlock;
  BlockSync sync = BlockSync::LockStep;
  GradientConfig gradient;
  ZerothOrderConfig zeroth_order;
  CEmbConfig c_emb;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string failure_dump;  // written on NumericalFailure when non-empty

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  long evaluations = 0;  // oracle score calls so far
  double best_loss = 0.0;
  double median_loss = 0.0;
  std::vector<double> sigmas;  // one per block; empty for gradient methods
};

struct EvalRecord {
  int iteration = 0;
  Metrics val;
};

struct RunReport {
  std::vector<IterationRecord> iterations;
  std::vector<EvalRecord> evaluations;
  Metrics zero_shot_val;
  Metrics zero_shot_test;
  std::optional<Metrics> best_test;   // parameters with maximal validation H
  std::optional<Metrics> final_test;  // final mean parameters
  int best_iteration = 0;
  double best_val_h = 0.0;
  Eigen::VectorXd best_params;   // flat, block order
  Eigen::VectorXd final_params;
  std::map<int, Eigen::VectorXd> class_overrides;  // C-Emb replacements
  std::vector<double> c_emb_best_cos;              // mean cos(z_best, z_c) per iteration
  long oracle_calls = 0;
  int covariance_repairs = 0;
  double wall_clock_seconds = 0.0;
};

/// Black-box forgetting with block-coordinate CMA-ES (BlockCma,
/// BlockCmaDiagonal), the C-Emb modes, or dispatch to the baselines below.
RunReport run_forgetting(const RunConfig& config, const ScoringOracle& oracle,
                         const ProjectionSpec& projection);

/// White-box reference: normalized gradient descent on the flat latent vector.
/// Requires an oracle implementing WhiteBoxOracle.
RunReport run_gradient_baseline(const RunConfig& config, const ScoringOracle& oracle,
                                const ProjectionSpec& projection);

/// Two-point random-direction gradient estimates, descent on the flat vector.
RunReport run_zeroth_order_baseline(const RunConfig& config, const ScoringOracle& oracle,
                                    const ProjectionSpec& projection);

/// Zero-shot class-embedding forgetting and its combination with BlockCma.
RunReport run_c_embedding(const RunConfig& config, const ScoringOracle& oracle,
                          const ProjectionSpec& projection);

/// Chain rule through project(): gradient w.r.t. contexts (m x D) mapped onto
/// the latent blocks.
LatentParams latent_gradient(const ProjectionSpec& spec, const ParamScheme& scheme,
                             const Eigen::MatrixXd& context_gradient);

/// Mean of two-point estimates (f(x + mu u) - f(x - mu u)) / (2 mu) u with
/// u ~ N(0, I). Exposed for testing the estimator in isolation.
Eigen::VectorXd two_point_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double perturbation, int directions,
                                   Rng& rng);

// ---------------------------------------------------------------- presets

/// "Ours": Lcs scheme, one CMA-ES per block, lock-step.
RunConfig preset_ours(RunConfig base);
/// "Ours (w/o LCS)": Lcs with d_s = 0 and d_u = total / m at the same budget.
RunConfig preset_ours_without_lcs(RunConfig base);
/// BBT: a single CMA-ES over m*d latents (d = total / m).
RunConfig preset_bbt(RunConfig base, bool separable = false);

// ---------------------------------------------------------------- sweeps

enum class SweepAxis { M, DsRatio, ForgetRatio, ClassChoice, ForgetWeight, ProjectionSigma };

SweepAxis parse_axis(const std::string& name);
std::string to_string(SweepAxis axis);

/// Applies one axis value to a config:
///  m: number of contexts (latent dims kept);
///  ds_ratio: d_s = round(v * total), d_u = floor((total - d_s) / m), then d_s
///    absorbs the remainder so the budget stays exact;
///  r_for: first round(v * C) classes forgotten;
///  class_choice: v = 0 keeps the first classes, otherwise a random subset of
///    the same size drawn with seed v;
///  w_f: forget weight;
///  sigma_A: v > 0 explicit projection sigma, v = 0 embedding statistics.
RunConfig apply_axis(RunConfig config, SweepAxis axis, double value);

struct SweepPoint {
  double value = 0.0;
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct SweepSummary {
  double value = 0.0;
  Metrics mean;
  Metrics stddev;
  int runs = 0;
};

using Runner = std::function<RunReport(const RunConfig&)>;

/// One run per (value, seed); points reported with the best-by-validation test metrics.
std::vector<SweepPoint> sweep(const RunConfig& base, SweepAxis axis, std::span<const double> values,
                              std::span<const std::uint64_t> seeds, const Runner& runner);

std::vector<SweepSummary> summarize(std::span<const SweepPoint> points);

/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_stddev(std::span<const double> values);

}  // namespace bbf
