#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bbf/engine.hpp"
#include "bbf/serialize.hpp"
#include "bbf/surrogate.hpp"

namespace bbf {

enum class OracleKind { Surrogate, Remote };

struct OracleSettings {
  OracleKind kind = OracleKind::Surrogate;
  std::string endpoint;        // remote; empty falls back to $BBFORGET_ENDPOINT
  SurrogateParams surrogate;   // ignored when surrogate_file is set
  std::string surrogate_file;  // written by gen-surrogate
  std::string features_file;   // replaces generated data when set
  int k = 16;
  int n_test = 100;
  std::optional<std::uint64_t> data_seed;  // defaults to the run seed
};

struct PartitionSettings {
  double forget_ratio = 0.4;               // first round(ratio * C) classes
  std::optional<std::vector<int>> forgotten;  // explicit list wins over the ratio
};

/// Everything one invocation needs. Parsed strictly: unknown keys and
/// ill-typed values raise InvalidConfig naming the key.
struct ExperimentConfig {
  /// ours, ours_wo_lcs, bbt, bbt_sep, gradient, zeroth_order, c_emb,
  /// ours_c_emb, ours_acc_prio (w_f = 0.25), or custom (optimizer/layout taken verbatim).
  std::string method = "ours";
  RunConfig run;  // partition and seed are filled in per run
  PartitionSettings partition;
  std::optional<int> declared_total;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  OracleSettings oracle;
  std::string out = "runs/default";
};

ExperimentConfig experiment_from_json(const json& j);
json to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment(const std::string& path);

/// Checks the declared budget against the scheme; the message spells out the
/// violated identity.
void check_declared_total(const ExperimentConfig& config);

/// The RunConfig actually executed for `seed` against an oracle with
/// `num_classes` classes: partition resolved, method preset applied.
RunConfig resolve_run(const ExperimentConfig& config, int num_classes, std::uint64_t seed);

/// Builds the projection. With a reference surrogate, sigma can come from its
/// class-token table and q from its reference prompt (rows cycled when m
/// differs); without one both must be given explicitly.
ProjectionSpec build_projection(const RunConfig& run, const SurrogateSpec* reference);

/// Oracle and reference weights for one data seed.
struct OracleBundle {
  std::unique_ptr<ScoringOracle> oracle;
  std::optional<SurrogateSpec> reference;  // present whenever weights are known locally
};

OracleBundle build_oracle(const OracleSettings& settings, std::uint64_t data_seed);

/// Loads the surrogate weights named by the settings (file or parameters).
SurrogateSpec load_surrogate(const OracleSettings& settings);

/// Runs one seed end to end.
struct SeedRun {
  std::uint64_t seed = 0;
  RunConfig run;
  RunReport report;
};
SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Runs every configured seed, keeping one oracle per data seed.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig config);
  SeedRun run(std::uint64_t seed);
  /// Runs an already resolved config (sweeps).
  RunReport run(const RunConfig& run);
  const OracleBundle& bundle(std::uint64_t data_seed);
  const ExperimentConfig& config() const { return config_; }

 private:
  ExperimentConfig config_;
  std::vector<std::pair<std::uint64_t, OracleBundle>> bundles_;
};

json report_to_json(const RunReport& report);
/// The document written as report.json: config echo, hash and per-seed reports.
json experiment_report(const ExperimentConfig& config, const std::vector<SeedRun>& runs);

std::string metrics_csv(const std::string& hash, const std::vector<SeedRun>& runs);
std::string trace_csv(const std::vector<SeedRun>& runs);
std::string sweep_csv(const std::vector<SweepPoint>& points);
/// Long format: axis, axis_value, seed, metric, value.
std::string sweep_long_csv(SweepAxis axis, const std::vector<SweepPoint>& points);
std::string sweep_summary_csv(const std::vector<SweepSummary>& summary);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace bbf
