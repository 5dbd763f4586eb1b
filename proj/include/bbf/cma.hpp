#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "bbf/rng.hpp"

namespace bbf::cma {

enum class CovarianceMode { Full, Diagonal };

struct CmaConfig {
  int dimension = 1;
  int population_size = 20;
  double initial_step_size = 1.0;
  Eigen::VectorXd initial_mean;  // empty means the zero vector
  CovarianceMode covariance_mode = CovarianceMode::Full;
  std::uint64_t seed = 0;
  int max_iterations = 1000;
};

/// Strategy constants derived from (dimension, population size, mode).
/// Defaults follow Hansen's CMA-ES tutorial with mu = floor(lambda/2) and
/// log-linear positive recombination weights.
struct StrategyParams {
  int lambda = 0;
  int mu = 0;
  std::vector<double> weights;
  double mu_eff = 0.0;
  double c_sigma = 0.0;
  double d_sigma = 0.0;
  double c_c = 0.0;
  double c_1 = 0.0;
  double c_mu = 0.0;
  double chi_n = 0.0;  // E||N(0, I)||

  static StrategyParams standard(int dimension, int lambda, CovarianceMode mode);
};

struct Candidate {
  int index = 0;
  Eigen::VectorXd point;
  double fitness = std::numeric_limits<double>::quiet_NaN();
};

struct CmaState {
  CovarianceMode mode = CovarianceMode::Full;
  StrategyParams params;
  Eigen::VectorXd mean;
  double step_size = 1.0;
  Eigen::MatrixXd covariance;  // Full mode
  Eigen::VectorXd diagonal;    // Diagonal mode
  Eigen::VectorXd path_sigma;
  Eigen::VectorXd path_c;
  int iteration = 0;
  Rng rng;

  // Sampling factorization C = B diag(D^2) B^T refreshed on every ask.
  Eigen::MatrixXd basis;
  Eigen::VectorXd axis_lengths;
  double min_eigenvalue = 1.0;
  int repairs = 0;

  // Points handed out by the last ask, used to verify the matching tell.
  Eigen::MatrixXd pending;
  std::uint64_t generation = 0;
  bool awaiting_tell = false;

  int dimension() const { return static_cast<int>(mean.size()); }
  /// Full covariance matrix regardless of mode.
  Eigen::MatrixXd covariance_matrix() const;
};

/// Fails with InvalidConfig on non-positive dimension, lambda < 2, sigma0 <= 0
/// or an initial mean of the wrong length.
CmaState init(const CmaConfig& config);

/// Draws lambda candidates from N(mean, sigma^2 C). Recomputes the eigen
/// factorization every call; repairs once with eps*I (eps = 1e-12 tr(C)/d)
/// before giving up with NumericalFailure.
std::vector<Candidate> ask(CmaState& state);

/// Ranks by (fitness, index) and applies the CSA, rank-one and rank-mu
/// updates. Candidates must be exactly the last ask's output with finite
/// fitness attached.
void tell(CmaState& state, const std::vector<Candidate>& candidates);

struct StopCriteria {
  long max_evaluations = std::numeric_limits<long>::max();
  double target_fitness = -std::numeric_limits<double>::infinity();
  double min_step_size = 0.0;
};

struct TraceRow {
  int iteration = 0;
  long evaluations = 0;
  double best_fitness = 0.0;
  double median_fitness = 0.0;
  double sigma = 0.0;
  double min_eig = 0.0;
};

struct RunResult {
  Eigen::VectorXd best_point;
  double best_fitness = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  std::vector<TraceRow> trace;
  CmaState final_state;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Ask/evaluate/tell driver. Stops on max_iterations, the evaluation budget,
/// reaching target_fitness, or sigma falling under min_step_size.
RunResult run(const CmaConfig& config, const Objective& objective,
              const StopCriteria& stop = {});

/// CSV export. The header carries the derived strategy constants as comment
/// lines; min_eig is present only for Full mode.
void write_trace_csv(std::ostream& out, const StrategyParams& params, CovarianceMode mode,
                     const std::vector<TraceRow>& trace);

}  // namespace bbf::cma
