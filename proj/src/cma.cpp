#include "bbf/cma.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <ostream>
#include <string>

#include "bbf/error.hpp"

namespace bbf::cma {

StrategyParams StrategyParams::standard(int dimension, int lambda, CovarianceMode mode) {
  StrategyParams p;
  const double n = dimension;
  p.lambda = lambda;
  p.mu = lambda / 2;

  p.weights.resize(p.mu);
  for (int i = 0; i < p.mu; ++i) p.weights[i] = std::log(p.mu + 0.5) - std::log(i + 1.0);
  const double sum = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  double sum_sq = 0.0;
  for (double& w : p.weights) {
    w /= sum;
    sum_sq += w * w;
  }
  p.mu_eff = 1.0 / sum_sq;

  p.c_sigma = (p.mu_eff + 2.0) / (n + p.mu_eff + 5.0);
  p.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mu_eff - 1.0) / (n + 1.0)) - 1.0) + p.c_sigma;
  p.c_c = (4.0 + p.mu_eff / n) / (n + 4.0 + 2.0 * p.mu_eff / n);
  p.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + p.mu_eff);
  p.c_mu = std::min(1.0 - p.c_1, 2.0 * (p.mu_eff - 2.0 + 1.0 / p.mu_eff) /
                                     ((n + 2.0) * (n + 2.0) + p.mu_eff));
  if (mode == CovarianceMode::Diagonal) {
    // sep-CMA: diagonal-only learning rates are raised by (n + 2) / 3.
    const double scale = (n + 2.0) / 3.0;
    p.c_1 = std::min(1.0, p.c_1 * scale);
    p.c_mu = std::min(1.0 - p.c_1, p.c_mu * scale);
  }
  p.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  return p;
}

Eigen::MatrixXd CmaState::covariance_matrix() const {
  if (mode == CovarianceMode::Diagonal) return diagonal.asDiagonal();
  return covariance;
}

CmaState init(const CmaConfig& config) {
  if (config.dimension < 1) throw Error(ErrorKind::InvalidConfig, "dimension must be >= 1");
  if (config.population_size < 2)
    throw Error(ErrorKind::InvalidConfig, "population_size must be >= 2");
  if (!(config.initial_step_size > 0.0) || !std::isfinite(config.initial_step_size))
    throw Error(ErrorKind::InvalidConfig, "initial_step_size must be positive");
  if (config.max_iterations < 0)
    throw Error(ErrorKind::InvalidConfig, "max_iterations must be non-negative");
  const int d = config.dimension;
  if (config.initial_mean.size() != 0 && config.initial_mean.size() != d)
    throw Error(ErrorKind::InvalidConfig, "initial_mean length " +
                                              std::to_string(config.initial_mean.size()) +
                                              " != dimension " + std::to_string(d));

  CmaState s;
  s.mode = config.covariance_mode;
  s.params = StrategyParams::standard(d, config.population_size, config.covariance_mode);
  s.mean = config.initial_mean.size() ? config.initial_mean : Eigen::VectorXd::Zero(d);
  s.step_size = config.initial_step_size;
  if (s.mode == CovarianceMode::Full) {
    s.covariance = Eigen::MatrixXd::Identity(d, d);
  } else {
    s.diagonal = Eigen::VectorXd::Ones(d);
  }
  s.path_sigma = Eigen::VectorXd::Zero(d);
  s.path_c = Eigen::VectorXd::Zero(d);
  s.rng = Rng(config.seed);
  s.basis = Eigen::MatrixXd::Identity(d, d);
  s.axis_lengths = Eigen::VectorXd::Ones(d);
  return s;
}

namespace {

bool try_factorize(CmaState& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s.covariance);
  if (solver.info() != Eigen::Success) return false;
  const Eigen::VectorXd& ev = solver.eigenvalues();
  if (!ev.allFinite() || ev.minCoeff() <= 0.0) return false;
  s.basis = solver.eigenvectors();
  s.axis_lengths = ev.cwiseSqrt();
  s.min_eigenvalue = ev.minCoeff();
  return true;
}

void factorize(CmaState& s) {
  if (s.mode == CovarianceMode::Diagonal) {
    if (!s.diagonal.allFinite() || s.diagonal.minCoeff() <= 0.0)
      throw Error(ErrorKind::NumericalFailure, "diagonal covariance lost positivity");
    s.axis_lengths = s.diagonal.cwiseSqrt();
    s.min_eigenvalue = s.diagonal.minCoeff();
    return;
  }
  if (try_factorize(s)) return;
  const int d = s.dimension();
  const double eps = 1e-12 * s.covariance.trace() / d;
  std::clog << "cma: covariance repair at iteration " << s.iteration << " (eps=" << eps << ")\n";
  ++s.repairs;
  if (std::isfinite(eps) && eps > 0.0) {
    s.covariance += eps * Eigen::MatrixXd::Identity(d, d);
    if (try_factorize(s)) return;
  }
  throw Error(ErrorKind::NumericalFailure,
              "covariance factorization failed after repair at iteration " +
                  std::to_string(s.iteration));
}

// C^{-1/2} v using the current factorization.
Eigen::VectorXd inv_sqrt_times(const CmaState& s, const Eigen::VectorXd& v) {
  if (s.mode == CovarianceMode::Diagonal) return v.cwiseQuotient(s.axis_lengths);
  return s.basis * (s.basis.transpose() * v).cwiseQuotient(s.axis_lengths);
}

}  // namespace

std::vector<Candidate> ask(CmaState& s) {
  factorize(s);
  const int d = s.dimension();
  const int lambda = s.params.lambda;
  s.pending.resize(d, lambda);
  std::vector<Candidate> out(lambda);
  Eigen::VectorXd z(d);
  for (int k = 0; k < lambda; ++k) {
    for (int i = 0; i < d; ++i) z[i] = s.rng.normal();
    Eigen::VectorXd y = s.mode == CovarianceMode::Diagonal
                            ? Eigen::VectorXd(s.axis_lengths.cwiseProduct(z))
                            : Eigen::VectorXd(s.basis * s.axis_lengths.cwiseProduct(z));
    out[k].index = k;
    out[k].point = s.mean + s.step_size * y;
    s.pending.col(k) = out[k].point;
  }
  ++s.generation;
  s.awaiting_tell = true;
  return out;
}

void tell(CmaState& s, const std::vector<Candidate>& candidates) {
  const auto& p = s.params;
  const int d = s.dimension();
  if (!s.awaiting_tell) throw Error(ErrorKind::StaleCandidates, "tell without a pending ask");
  if (static_cast<int>(candidates.size()) != p.lambda)
    throw Error(ErrorKind::StaleCandidates, "expected " + std::to_string(p.lambda) +
                                                " candidates, got " +
                                                std::to_string(candidates.size()));
  std::vector<const Candidate*> by_index(p.lambda, nullptr);
  for (const auto& c : candidates) {
    if (c.index < 0 || c.index >= p.lambda || by_index[c.index] != nullptr)
      throw Error(ErrorKind::StaleCandidates, "bad or duplicate candidate index " +
                                                  std::to_string(c.index));
    if (c.point.size() != d || c.point != s.pending.col(c.index))
      throw Error(ErrorKind::StaleCandidates,
                  "candidate " + std::to_string(c.index) + " does not match the last ask");
    if (!std::isfinite(c.fitness))
      throw Error(ErrorKind::MissingFitness,
                  "candidate " + std::to_string(c.index) + " has non-finite fitness");
    by_index[c.index] = &c;
  }

  std::vector<int> order(p.lambda);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return by_index[a]->fitness < by_index[b]->fitness;
  });

  const Eigen::VectorXd old_mean = s.mean;
  Eigen::MatrixXd ys(d, p.mu);
  Eigen::VectorXd y_w = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < p.mu; ++i) {
    ys.col(i) = (by_index[order[i]]->point - old_mean) / s.step_size;
    y_w += p.weights[i] * ys.col(i);
  }
  s.mean = old_mean + s.step_size * y_w;

  s.path_sigma = (1.0 - p.c_sigma) * s.path_sigma +
                 std::sqrt(p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff) * inv_sqrt_times(s, y_w);
  const double ps_norm = s.path_sigma.norm();
  const double decay = 1.0 - std::pow(1.0 - p.c_sigma, 2.0 * (s.iteration + 1));
  const bool h_sigma = ps_norm / std::sqrt(decay) < (1.4 + 2.0 / (d + 1.0)) * p.chi_n;
  s.path_c = (1.0 - p.c_c) * s.path_c +
             (h_sigma ? std::sqrt(p.c_c * (2.0 - p.c_c) * p.mu_eff) : 0.0) * y_w;

  const double old_weight =
      1.0 - p.c_1 - p.c_mu + (h_sigma ? 0.0 : p.c_1 * p.c_c * (2.0 - p.c_c));
  if (s.mode == CovarianceMode::Full) {
    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < p.mu; ++i) rank_mu.noalias() += p.weights[i] * ys.col(i) * ys.col(i).transpose();
    s.covariance = old_weight * s.covariance + p.c_1 * s.path_c * s.path_c.transpose() +
                   p.c_mu * rank_mu;
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  } else {
    Eigen::VectorXd rank_mu = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < p.mu; ++i) rank_mu += p.weights[i] * ys.col(i).cwiseAbs2();
    s.diagonal = old_weight * s.diagonal + p.c_1 * s.path_c.cwiseAbs2() + p.c_mu * rank_mu;
  }

  s.step_size *= std::exp((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0));
  ++s.iteration;
  s.awaiting_tell = false;
}

RunResult run(const CmaConfig& config, const Objective& objective, const StopCriteria& stop) {
  RunResult result;
  result.final_state = init(config);
  CmaState& s = result.final_state;
  std::vector<double> fitness(s.params.lambda);
  while (s.iteration < config.max_iterations && result.evaluations < stop.max_evaluations) {
    auto candidates = ask(s);
    for (auto& c : candidates) {
      c.fitness = objective(c.point);
      fitness[c.index] = c.fitness;
      ++result.evaluations;
      if (c.fitness < result.best_fitness) {
        result.best_fitness = c.fitness;
        result.best_point = c.point;
      }
    }
    const double min_eig = s.min_eigenvalue;
    tell(s, candidates);

    std::sort(fitness.begin(), fitness.end());
    const std::size_t n = fitness.size();
    TraceRow row;
    row.iteration = s.iteration;
    row.evaluations = result.evaluations;
    row.best_fitness = fitness.front();
    row.median_fitness = n % 2 ? fitness[n / 2] : 0.5 * (fitness[n / 2 - 1] + fitness[n / 2]);
    row.sigma = s.step_size;
    row.min_eig = min_eig;
    result.trace.push_back(row);

    if (result.best_fitness <= stop.target_fitness) break;
    if (s.step_size < stop.min_step_size) break;
  }
  return result;
}

void write_trace_csv(std::ostream& out, const StrategyParams& p, CovarianceMode mode,
                     const std::vector<TraceRow>& trace) {
  out << std::setprecision(17);
  out << "# mode=" << (mode == CovarianceMode::Full ? "full" : "diagonal")
      << " lambda=" << p.lambda << " mu=" << p.mu << " mu_eff=" << p.mu_eff
      << " c_sigma=" << p.c_sigma << " d_sigma=" << p.d_sigma << " c_c=" << p.c_c
      << " c_1=" << p.c_1 << " c_mu=" << p.c_mu << "\n";
  out << "iteration,evaluations,best_fitness,median_fitness,sigma";
  if (mode == CovarianceMode::Full) out << ",min_eig";
  out << "\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << r.evaluations << ',' << r.best_fitness << ','
        << r.median_fitness << ',' << r.sigma;
    if (mode == CovarianceMode::Full) out << ',' << r.min_eig;
    out << "\n";
  }
}

}  // namespace bbf::cma
