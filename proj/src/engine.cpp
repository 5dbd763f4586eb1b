#include "bbf/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "bbf/error.hpp"
#include "bbf/serialize.hpp"

namespace bbf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream per purpose so adding a block or a baseline never shifts
// another component's random numbers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x5151));
}

constexpr std::uint64_t kZerothOrderStream = 1000;
constexpr std::uint64_t kCEmbStream = 2000;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

using Scorer = std::function<std::vector<Scored>(const PromptContexts&, Split, std::span<const int>)>;

// Everything a run needs to turn latent vectors into losses and metrics,
// counting oracle calls as it goes.
class Evaluator {
 public:
  Evaluator(const RunConfig& config, const ScoringOracle& oracle, const ProjectionSpec& projection,
            Scorer scorer = {})
      : config_(config), oracle_(oracle), projection_(projection), scorer_(std::move(scorer)) {
    if (!scorer_)
      scorer_ = [this](const PromptContexts& p, Split s, std::span<const int> idx) {
        return oracle_.score(p, s, idx);
      };
    train_ = all_indices(oracle.meta(), Split::Train);
    val_ = all_indices(oracle.meta(), Split::Val);
    test_ = all_indices(oracle.meta(), Split::Test);
  }

  void restrict_training(const std::function<bool(int label)>& keep) {
    // Labels are only known through scoring; one call at the reference prompt
    // tells us which training samples belong where.
    const auto scored = score(projection_.initial_contexts, Split::Train, train_);
    std::vector<int> kept;
    for (std::size_t i = 0; i < train_.size(); ++i)
      if (keep(scored[i].label)) kept.push_back(train_[i]);
    train_ = std::move(kept);
    if (train_.empty()) throw Error(ErrorKind::EmptyBatch, "no training samples left");
  }

  PromptContexts contexts(const Eigen::VectorXd& flat) const {
    return project(projection_, config_.scheme, from_vector(config_.scheme, flat));
  }

  std::vector<Scored> score(const PromptContexts& p, Split split, std::span<const int> idx) {
    ++calls_;
    return scorer_(p, split, idx);
  }

  double train_loss(const Eigen::VectorXd& flat) {
    const auto scored = score(contexts(flat), Split::Train, train_);
    return loss_total(scored, config_.partition, config_.loss);
  }

  // Losses for a population, optionally fanned out over `jobs` threads.
  // Results are stored by candidate index, so the outcome does not depend on
  // the thread count.
  std::vector<double> train_losses(const std::vector<Eigen::VectorXd>& flats) {
    std::vector<double> out(flats.size());
    const int jobs = std::max(1, std::min<int>(config_.jobs, static_cast<int>(flats.size())));
    if (jobs == 1) {
      for (std::size_t j = 0; j < flats.size(); ++j) out[j] = train_loss(flats[j]);
      return out;
    }
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t j = w; j < flats.size(); j += jobs) out[j] = train_loss(flats[j]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return out;
  }

  Metrics metrics(const Eigen::VectorXd& flat, Split split) {
    const auto& idx = split == Split::Val ? val_ : test_;
    return metrics_from_scored(score(contexts(flat), split, idx), config_.partition);
  }

  Metrics metrics_at(const PromptContexts& p, Split split) {
    const auto& idx = split == Split::Val ? val_ : test_;
    return metrics_from_scored(score(p, split, idx), config_.partition);
  }

  long calls() const { return calls_.load(); }

 private:
  const RunConfig& config_;
  const ScoringOracle& oracle_;
  const ProjectionSpec& projection_;
  Scorer scorer_;
  std::vector<int> train_, val_, test_;
  std::atomic<long> calls_{0};
};

void check_compatible(const RunConfig& config, const ScoringOracle& oracle,
                      const ProjectionSpec& projection) {
  config.validate();
  const auto& meta = oracle.meta();
  if (meta.D != config.scheme.D)
    throw Error(ErrorKind::OracleMismatch, "oracle context dimension D=" + std::to_string(meta.D) +
                                               " but scheme has D=" + std::to_string(config.scheme.D));
  if (meta.C != config.partition.num_classes())
    throw Error(ErrorKind::OracleMismatch, "oracle has C=" + std::to_string(meta.C) +
                                               " classes but partition covers " +
                                               std::to_string(config.partition.num_classes()));
  if (meta.train < 1 || meta.val < 1 || meta.test < 1)
    throw Error(ErrorKind::OracleMismatch, "oracle lacks train/val/test samples");
  if (projection.initial_contexts.rows() != config.scheme.m ||
      projection.initial_contexts.cols() != config.scheme.D ||
      projection.matrix_for(0).cols() != config.scheme.latent_dim())
    throw Error(ErrorKind::ShapeMismatch, "projection does not match the parameter scheme");
}

// Validation bookkeeping shared by every optimizer: evaluates the current
// parameters every eval_interval iterations (and at the last one) and keeps
// the first parameters reaching the best H.
class Selection {
 public:
  Selection(const RunConfig& config, RunReport& report) : config_(config), report_(report) {}

  void maybe_evaluate(int iteration, const Eigen::VectorXd& params, Evaluator& eval) {
    if (iteration % config_.eval_interval != 0 && iteration != config_.iterations) return;
    const Metrics val = eval.metrics(params, Split::Val);
    report_.evaluations.push_back({iteration, val});
    if (!have_best_ || val.h > report_.best_val_h) {
      have_best_ = true;
      report_.best_val_h = val.h;
      report_.best_iteration = iteration;
      report_.best_params = params;
    }
  }

  void finish(const Eigen::VectorXd& final_params, Evaluator& eval) {
    report_.final_params = final_params;
    if (!have_best_) return;
    report_.best_test = eval.metrics(report_.best_params, Split::Test);
    report_.final_test = report_.best_params == final_params
                             ? *report_.best_test
                             : eval.metrics(final_params, Split::Test);
  }

 private:
  const RunConfig& config_;
  RunReport& report_;
  bool have_best_ = false;
};

void zero_shot(RunReport& report, Evaluator& eval, const ProjectionSpec& projection) {
  report.zero_shot_val = eval.metrics_at(projection.initial_contexts, Split::Val);
  report.zero_shot_test = eval.metrics_at(projection.initial_contexts, Split::Test);
}

void dump_failure(const RunConfig& config, const std::vector<cma::CmaState>& states, int iteration,
                  const Error& error) {
  if (config.failure_dump.empty()) return;
  json blocks = json::array();
  for (const auto& s : states)
    blocks.push_back({{"iteration", s.iteration},
                      {"sigma", s.step_size},
                      {"mean", vector_to_json(s.mean)},
                      {"covariance", matrix_to_json(s.covariance_matrix())},
                      {"repairs", s.repairs}});
  try {
    write_json_file(config.failure_dump,
                    {{"iteration", iteration}, {"error", error.what()}, {"blocks", std::move(blocks)}});
  } catch (const Error&) {
    // the original failure is the one worth reporting
  }
}

std::vector<int> layout_dims(const RunConfig& config) {
  if (config.layout == BlockLayout::Joint) return {config.scheme.total_params()};
  return config.scheme.block_dims();
}

Eigen::VectorXd concat(const std::vector<Eigen::VectorXd>& parts, int total) {
  Eigen::VectorXd flat(total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    flat.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return flat;
}

// The block-coordinate CMA-ES loop. `eval` decides how candidates are scored.
void block_cma(const RunConfig& config, Evaluator& eval, RunReport& report) {
  const auto dims = layout_dims(config);
  const int blocks = static_cast<int>(dims.size());
  const int total = config.scheme.total_params();
  const int lambda = config.population_size;

  std::vector<cma::CmaState> states;
  for (int b = 0; b < blocks; ++b) {
    cma::CmaConfig cc;
    cc.dimension = dims[b];
    cc.population_size = lambda;
    cc.initial_step_size = config.initial_step_size;
    cc.covariance_mode = config.optimizer == Optimizer::BlockCmaDiagonal ? cma::CovarianceMode::Diagonal
                                                                         : cma::CovarianceMode::Full;
    cc.seed = derive_seed(config.seed, static_cast<std::uint64_t>(b));
    cc.max_iterations = config.iterations;
    states.push_back(cma::init(cc));
  }
  auto means = [&] {
    std::vector<Eigen::VectorXd> parts;
    for (const auto& s : states) parts.push_back(s.mean);
    return concat(parts, total);
  };

  Selection selection(config, report);
  for (int it = 1; it <= config.iterations; ++it) {
    try {
      std::vector<int> moving;
      if (config.sync == BlockSync::LockStep) {
        moving.resize(blocks);
        std::iota(moving.begin(), moving.end(), 0);
      } else {
        moving.push_back((it - 1) % blocks);
      }

      std::vector<std::vector<cma::Candidate>> asked(blocks);
      for (int b : moving) asked[b] = cma::ask(states[b]);

      // Candidate j of the full vector pairs the j-th sample of every moving
      // block with the current mean of every resting block.
      std::vector<Eigen::VectorXd> population(lambda);
      for (int j = 0; j < lambda; ++j) {
        std::vector<Eigen::VectorXd> parts;
        for (int b = 0; b < blocks; ++b)
          parts.push_back(asked[b].empty() ? states[b].mean : asked[b][j].point);
        population[j] = concat(parts, total);
      }
      const auto losses = eval.train_losses(population);
      for (int b : moving) {
        for (int j = 0; j < lambda; ++j) asked[b][j].fitness = losses[j];
        cma::tell(states[b], asked[b]);
      }

      IterationRecord rec;
      rec.iteration = it;
      rec.evaluations = eval.calls();
      rec.best_loss = *std::min_element(losses.begin(), losses.end());
      rec.median_loss = median_of(losses);
      for (const auto& s : states) rec.sigmas.push_back(s.step_size);
      report.iterations.push_back(std::move(rec));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NumericalFailure) dump_failure(config, states, it, e);
      throw;
    }
    selection.maybe_evaluate(it, means(), eval);
  }
  for (const auto& s : states) report.covariance_repairs += s.repairs;
  selection.finish(means(), eval);
}

template <typename Body>
RunReport timed(Body&& body) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report = body();
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// Step size after the quarter-budget decays.
double scheduled_step(double step, double decay, int iteration, int iterations) {
  const int quarter = std::max(1, iterations / 4);
  return step * std::pow(decay, (iteration - 1) / quarter);
}

}  // namespace

void RunConfig::validate() const {
  scheme.validate();
  loss.validate();
  partition.require_both_sides();
  if (iterations < 0) throw Error(ErrorKind::InvalidConfig, "iterations must be >= 0");
  if (eval_interval < 1) throw Error(ErrorKind::InvalidConfig, "eval_interval must be >= 1");
  if (population_size < 2) throw Error(ErrorKind::InvalidConfig, "population_size must be >= 2");
  if (!(initial_step_size > 0.0)) throw Error(ErrorKind::InvalidConfig, "initial_step_size must be > 0");
  if (jobs < 1) throw Error(ErrorKind::InvalidConfig, "jobs must be >= 1");
  if (!(gradient.step_size >= 0.0) || !(gradient.decay > 0.0))
    throw Error(ErrorKind::InvalidConfig, "gradient step_size must be >= 0 and decay > 0");
  if (!(zeroth_order.perturbation > 0.0))
    throw Error(ErrorKind::InvalidConfig, "zeroth_order.perturbation must be > 0");
  if (zeroth_order.directions < 1)
    throw Error(ErrorKind::InvalidConfig, "zeroth_order.directions must be >= 1");
  if (!(zeroth_order.step_size >= 0.0) || !(zeroth_order.decay > 0.0))
    throw Error(ErrorKind::InvalidConfig, "zeroth_order step_size must be >= 0 and decay > 0");
  if (!(c_emb.step_size > 0.0)) throw Error(ErrorKind::InvalidConfig, "c_emb.step_size must be > 0");
  if (projection.sigma_mode == SigmaMode::Explicit && !(projection.sigma > 0.0))
    throw Error(ErrorKind::InvalidConfig, "projection sigma must be > 0");
}

RunReport run_forgetting(const RunConfig& config, const ScoringOracle& oracle,
                         const ProjectionSpec& projection) {
  switch (config.optimizer) {
    case Optimizer::GradientDescent: return run_gradient_baseline(config, oracle, projection);
    case Optimizer::ZerothOrder: return run_zeroth_order_baseline(config, oracle, projection);
    case Optimizer::CEmbedding:
    case Optimizer::CombinedCEmb: return run_c_embedding(config, oracle, projection);
    case Optimizer::BlockCma:
    case Optimizer::BlockCmaDiagonal: break;
  }
  check_compatible(config, oracle, projection);
  return timed([&] {
    RunReport report;
    Evaluator eval(config, oracle, projection);
    zero_shot(report, eval, projection);
    block_cma(config, eval, report);
    report.oracle_calls = eval.calls();
    return report;
  });
}

LatentParams latent_gradient(const ProjectionSpec& spec, const ParamScheme& scheme,
                             const Eigen::MatrixXd& context_gradient) {
  if (context_gradient.rows() != scheme.m || context_gradient.cols() != scheme.D)
    throw Error(ErrorKind::ShapeMismatch, "context gradient does not match the scheme");
  LatentParams g = LatentParams::zeros(scheme);
  for (int i = 0; i < scheme.m; ++i) {
    const Eigen::VectorXd gl = spec.matrix_for(i).transpose() * context_gradient.row(i).transpose();
    if (scheme.mode == SchemeMode::Bbt) {
      g.unique[i] = gl;
    } else {
      g.shared += gl.head(scheme.d_s);
      g.unique[i] = gl.tail(scheme.d_u);
    }
  }
  return g;
}

RunReport run_gradient_baseline(const RunConfig& config, const ScoringOracle& oracle,
                                const ProjectionSpec& projection) {
  const auto* white_box = dynamic_cast<const WhiteBoxOracle*>(&oracle);
  if (white_box == nullptr)
    throw Error(ErrorKind::UnsupportedOracle, "gradient baseline needs an oracle exposing gradients");
  check_compatible(config, oracle, projection);
  return timed([&] {
    RunReport report;
    Evaluator eval(config, oracle, projection);
    zero_shot(report, eval, projection);
    const auto train = all_indices(oracle.meta(), Split::Train);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(config.scheme.total_params());
    Selection selection(config, report);
    for (int it = 1; it <= config.iterations; ++it) {
      const PromptContexts contexts = eval.contexts(z);
      const Eigen::MatrixXd gp =
          white_box->loss_gradient(contexts, Split::Train, train, config.partition, config.loss);
      const Eigen::VectorXd gz = to_vector(config.scheme, latent_gradient(projection, config.scheme, gp));
      IterationRecord rec;
      rec.iteration = it;
      rec.best_loss = rec.median_loss = eval.train_loss(z);
      const double norm = gz.norm();
      if (norm > 0.0)
        z -= scheduled_step(config.gradient.step_size, config.gradient.decay, it, config.iterations) / norm * gz;
      rec.evaluations = eval.calls();
      report.iterations.push_back(std::move(rec));
      selection.maybe_evaluate(it, z, eval);
    }
    selection.finish(z, eval);
    report.oracle_calls = eval.calls();
    return report;
  });
}

Eigen::VectorXd two_point_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double perturbation, int directions,
                                   Rng& rng) {
  if (!(perturbation > 0.0)) throw Error(ErrorKind::InvalidConfig, "perturbation must be > 0");
  if (directions < 1) throw Error(ErrorKind::InvalidConfig, "directions must be >= 1");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd u(x.size());
  for (int k = 0; k < directions; ++k) {
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
    const double diff = f(x + perturbation * u) - f(x - perturbation * u);
    g += diff / (2.0 * perturbation) * u;
  }
  return g / directions;
}

RunReport run_zeroth_order_baseline(const RunConfig& config, const ScoringOracle& oracle,
                                    const ProjectionSpec& projection) {
  check_compatible(config, oracle, projection);
  return timed([&] {
    RunReport report;
    Evaluator eval(config, oracle, projection);
    zero_shot(report, eval, projection);
    const auto& zo = config.zeroth_order;
    Rng rng(derive_seed(config.seed, kZerothOrderStream));
    const int n = config.scheme.total_params();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    Selection selection(config, report);
    for (int it = 1; it <= config.iterations; ++it) {
      // Draw every direction first so the 2K evaluations can run as one population.
      std::vector<Eigen::VectorXd> dirs(zo.directions, Eigen::VectorXd(n));
      for (auto& u : dirs)
        for (int i = 0; i < n; ++i) u[i] = rng.normal();
      std::vector<Eigen::VectorXd> points;
      for (const auto& u : dirs) {
        points.push_back(z + zo.perturbation * u);
        points.push_back(z - zo.perturbation * u);
      }
      const auto losses = eval.train_losses(points);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < zo.directions; ++k)
        g += (losses[2 * k] - losses[2 * k + 1]) / (2.0 * zo.perturbation) * dirs[k];
      g /= zo.directions;
      z -= scheduled_step(zo.step_size, zo.decay, it, config.iterations) * g;

      IterationRecord rec;
      rec.iteration = it;
      rec.evaluations = eval.calls();
      rec.best_loss = *std::min_element(losses.begin(), losses.end());
      rec.median_loss = median_of(losses);
      report.iterations.push_back(std::move(rec));
      selection.maybe_evaluate(it, z, eval);
    }
    selection.finish(z, eval);
    report.oracle_calls = eval.calls();
    return report;
  });
}

RunReport run_c_embedding(const RunConfig& config, const ScoringOracle& oracle,
                          const ProjectionSpec& projection) {
  const auto* embeddings = dynamic_cast<const ClassEmbeddingOracle*>(&oracle);
  if (embeddings == nullptr)
    throw Error(ErrorKind::UnsupportedOracle, "C-Emb needs an oracle exposing class embeddings");
  check_compatible(config, oracle, projection);

  std::vector<int> targets;
  const auto& forgotten = config.partition.forgotten();
  if (config.optimizer == Optimizer::CEmbedding) {
    targets = forgotten;
  } else if (config.c_emb.sampleless) {
    targets = *config.c_emb.sampleless;
    for (int c : targets)
      if (c < 0 || c >= config.partition.num_classes() || !config.partition.is_forgotten(c))
        throw Error(ErrorKind::InvalidConfig,
                    "sampleless class " + std::to_string(c) + " is not a forgotten class");
  } else {
    targets.assign(forgotten.begin() + static_cast<long>(forgotten.size() / 2), forgotten.end());
  }

  return timed([&] {
    RunReport report;
    const Eigen::MatrixXd reference = embeddings->class_embeddings(projection.initial_contexts);
    std::vector<Eigen::VectorXd> others;
    for (int c : config.partition.memorized()) others.push_back(reference.row(c).transpose());

    // One CMA-ES per target class over the F-dimensional embedding.
    const double tau = config.loss.temperature;
    std::vector<cma::CmaState> states;
    std::vector<Eigen::VectorXd> best(targets.size());
    std::vector<double> best_loss(targets.size(), std::numeric_limits<double>::infinity());
    for (std::size_t t = 0; t < targets.size(); ++t) {
      cma::CmaConfig cc;
      cc.dimension = static_cast<int>(reference.cols());
      cc.population_size = config.population_size;
      cc.initial_step_size = config.c_emb.step_size;
      cc.initial_mean = reference.row(targets[t]).transpose();
      cc.seed = derive_seed(config.seed, kCEmbStream + t);
      cc.max_iterations = config.iterations;
      states.push_back(cma::init(cc));
      best[t] = cc.initial_mean;
      best_loss[t] = loss_c_emb(best[t], cc.initial_mean, others, tau);
    }
    if (!targets.empty()) {
      for (int it = 1; it <= config.iterations; ++it) {
        double loss_sum = 0.0, cos_sum = 0.0;
        for (std::size_t t = 0; t < targets.size(); ++t) {
          const Eigen::VectorXd z_c = reference.row(targets[t]).transpose();
          auto cands = cma::ask(states[t]);
          for (auto& c : cands) {
            c.fitness = loss_c_emb(c.point, z_c, others, tau);
            if (c.fitness < best_loss[t]) {
              best_loss[t] = c.fitness;
              best[t] = c.point;
            }
          }
          cma::tell(states[t], cands);
          loss_sum += best_loss[t];
          cos_sum += best[t].normalized().dot(z_c.normalized());
        }
        if (config.optimizer == Optimizer::CEmbedding) {
          IterationRecord rec;
          rec.iteration = it;
          rec.best_loss = rec.median_loss = loss_sum / targets.size();
          report.iterations.push_back(std::move(rec));
        }
        report.c_emb_best_cos.push_back(cos_sum / targets.size());
      }
    }
    for (std::size_t t = 0; t < targets.size(); ++t) report.class_overrides[targets[t]] = best[t].normalized();

    const auto overrides = report.class_overrides;
    Scorer scorer = [embeddings, overrides](const PromptContexts& p, Split s, std::span<const int> idx) {
      return embeddings->score_with_overrides(p, overrides, s, idx);
    };
    if (overrides.empty()) scorer = {};
    Evaluator plain(config, oracle, projection);
    zero_shot(report, plain, projection);
    Evaluator eval(config, oracle, projection, scorer);

    if (config.optimizer == Optimizer::CEmbedding) {
      // No samples are consumed: the prompt stays at the reference contexts.
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(config.scheme.total_params());
      const Metrics val = eval.metrics(zero, Split::Val);
      report.evaluations.push_back({config.iterations, val});
      report.best_val_h = val.h;
      report.best_iteration = config.iterations;
      report.best_params = report.final_params = zero;
      report.best_test = report.final_test = eval.metrics(zero, Split::Test);
    } else {
      std::vector<bool> sampleless(config.partition.num_classes(), false);
      for (int c : targets) sampleless[c] = true;
      if (!targets.empty()) eval.restrict_training([&](int label) { return !sampleless[label]; });
      block_cma(config, eval, report);
    }
    report.oracle_calls = eval.calls() + plain.calls();
    return report;
  });
}

RunConfig preset_ours(RunConfig base) {
  if (base.scheme.mode != SchemeMode::Lcs)
    throw Error(ErrorKind::InvalidConfig, "the 'ours' preset needs an lcs scheme");
  base.optimizer = Optimizer::BlockCma;
  base.layout = BlockLayout::PerBlock;
  return base;
}

RunConfig preset_ours_without_lcs(RunConfig base) {
  const int total = base.scheme.total_params();
  const int m = base.scheme.m;
  if (total % m != 0)
    throw Error(ErrorKind::InvalidConfig, "budget " + std::to_string(total) + " not divisible by m=" +
                                              std::to_string(m));
  base.scheme = ParamScheme::lcs(m, 0, total / m, base.scheme.D);
  base.optimizer = Optimizer::BlockCma;
  base.layout = BlockLayout::PerBlock;
  return base;
}

RunConfig preset_bbt(RunConfig base, bool separable) {
  const int total = base.scheme.total_params();
  const int m = base.scheme.m;
  if (total % m != 0)
    throw Error(ErrorKind::InvalidConfig, "budget " + std::to_string(total) + " not divisible by m=" +
                                              std::to_string(m));
  base.scheme = ParamScheme::bbt(m, total / m, base.scheme.D);
  base.optimizer = separable ? Optimizer::BlockCmaDiagonal : Optimizer::BlockCma;
  base.layout = BlockLayout::Joint;
  return base;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "m") return SweepAxis::M;
  if (name == "ds_ratio") return SweepAxis::DsRatio;
  if (name == "r_for") return SweepAxis::ForgetRatio;
  if (name == "class_choice") return SweepAxis::ClassChoice;
  if (name == "w_f") return SweepAxis::ForgetWeight;
  if (name == "sigma_A") return SweepAxis::ProjectionSigma;
  throw Error(ErrorKind::InvalidConfig, "unknown sweep axis '" + name +
                                            "' (expected m, ds_ratio, r_for, class_choice, w_f, sigma_A)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::M: return "m";
    case SweepAxis::DsRatio: return "ds_ratio";
    case SweepAxis::ForgetRatio: return "r_for";
    case SweepAxis::ClassChoice: return "class_choice";
    case SweepAxis::ForgetWeight: return "w_f";
    case SweepAxis::ProjectionSigma: return "sigma_A";
  }
  return "?";
}

RunConfig apply_axis(RunConfig config, SweepAxis axis, double value) {
  const auto as_int = [&](const char* what) {
    if (value != std::floor(value))
      throw Error(ErrorKind::InvalidConfig, std::string(what) + " values must be integers");
    return static_cast<int>(value);
  };
  switch (axis) {
    case SweepAxis::M:
      config.scheme.m = as_int("m");
      break;
    case SweepAxis::DsRatio: {
      if (config.scheme.mode != SchemeMode::Lcs)
        throw Error(ErrorKind::InvalidConfig, "ds_ratio sweeps need an lcs scheme");
      if (!(value >= 0.0 && value <= 1.0)) throw Error(ErrorKind::InvalidConfig, "ds_ratio must lie in [0, 1]");
      const int total = config.scheme.total_params();
      const int m = config.scheme.m;
      const int target = static_cast<int>(std::lround(value * total));
      const int d_u = (total - target) / m;
      config.scheme.d_u = d_u;
      config.scheme.d_s = total - m * d_u;
      break;
    }
    case SweepAxis::ForgetRatio:
      config.partition = ClassPartition::first_fraction(config.partition.num_classes(), value);
      break;
    case SweepAxis::ClassChoice: {
      const int seed = as_int("class_choice");
      const int c = config.partition.num_classes();
      const auto count = config.partition.forgotten().size();
      std::vector<int> classes(c);
      std::iota(classes.begin(), classes.end(), 0);
      if (seed != 0) {
        Rng rng(static_cast<std::uint64_t>(seed));
        rng.shuffle(classes.begin(), classes.end());
      }
      classes.resize(count);
      std::sort(classes.begin(), classes.end());
      config.partition = ClassPartition(c, classes);
      break;
    }
    case SweepAxis::ForgetWeight:
      config.loss.forget_weight = value;
      break;
    case SweepAxis::ProjectionSigma:
      if (value > 0.0) {
        config.projection.sigma_mode = SigmaMode::Explicit;
        config.projection.sigma = value;
      } else {
        config.projection.sigma_mode = SigmaMode::Embedding;
      }
      break;
  }
  config.validate();
  return config;
}

std::vector<SweepPoint> sweep(const RunConfig& base, SweepAxis axis, std::span<const double> values,
                              std::span<const std::uint64_t> seeds, const Runner& runner) {
  std::vector<SweepPoint> points;
  for (double v : values) {
    RunConfig config = apply_axis(base, axis, v);
    for (std::uint64_t seed : seeds) {
      config.seed = seed;
      const RunReport report = runner(config);
      points.push_back({v, seed, report.best_test.value_or(report.zero_shot_test)});
    }
  }
  return points;
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (values.size() - 1));
}

std::vector<SweepSummary> summarize(std::span<const SweepPoint> points) {
  std::vector<SweepSummary> out;
  std::vector<double> order;
  for (const auto& p : points)
    if (std::find(order.begin(), order.end(), p.value) == order.end()) order.push_back(p.value);
  for (double v : order) {
    std::vector<double> e, a, h;
    for (const auto& p : points)
      if (p.value == v) {
        e.push_back(p.metrics.err_for);
        a.push_back(p.metrics.acc_mem);
        h.push_back(p.metrics.h);
      }
    auto mean = [](const std::vector<double>& x) {
      return std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    };
    SweepSummary s;
    s.value = v;
    s.runs = static_cast<int>(h.size());
    s.mean = {mean(e), mean(a), mean(h)};
    s.stddev = {sample_stddev(e), sample_stddev(a), sample_stddev(h)};
    out.push_back(s);
  }
  return out;
}

}  // namespace bbf
