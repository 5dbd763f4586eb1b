#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "bbf/error.hpp"
#include "bbf/experiment.hpp"
#include "bbf/remote.hpp"

namespace fs = std::filesystem;
using namespace bbf;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

bool is_config_error(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidScheme:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::OracleMismatch:
    case ErrorKind::InvalidK:
    case ErrorKind::EmptySplit:
    case ErrorKind::EmptyOthers:
    case ErrorKind::UnsupportedOracle:
    case ErrorKind::Io:
      return true;
    default:
      return false;
  }
}

struct OracleFlags {
  std::string oracle;
  std::string endpoint;
  int jobs = 0;
  std::string out;
  std::vector<std::uint64_t> seeds;
};

void add_oracle_flags(CLI::App& cmd, OracleFlags& f) {
  cmd.add_option("--oracle", f.oracle, "Scoring backend")->check(CLI::IsMember({"surrogate", "remote"}));
  cmd.add_option("--endpoint", f.endpoint, std::string("Remote endpoint (default $") + kEndpointEnv + ")");
}

void apply_flags(ExperimentConfig& c, const OracleFlags& f) {
  if (f.oracle == "surrogate") c.oracle.kind = OracleKind::Surrogate;
  if (f.oracle == "remote") c.oracle.kind = OracleKind::Remote;
  if (!f.endpoint.empty()) c.oracle.endpoint = f.endpoint;
  if (f.jobs > 0) c.run.jobs = f.jobs;
  if (!f.out.empty()) c.out = f.out;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  // Re-validate after overrides.
  c = experiment_from_json(to_json(c));
}

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return experiment_from_json(json::object());
  return load_experiment(path);
}

std::string cell(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%6.2f ± %5.2f", mean, sample_stddev(v));
  return buf;
}

void print_table(const std::string& method, const std::vector<SeedRun>& runs) {
  struct Row {
    std::string name;
    std::vector<double> h, e, a;
    void add(const Metrics& m) {
      h.push_back(m.h);
      e.push_back(m.err_for);
      a.push_back(m.acc_mem);
    }
  };
  Row zero{"zero-shot"}, best{method}, last{method + " (final)"};
  for (const auto& r : runs) {
    zero.add(r.report.zero_shot_test);
    if (r.report.best_test) best.add(*r.report.best_test);
    if (r.report.final_test) last.add(*r.report.final_test);
  }
  std::printf("%-24s %-15s  %-15s  %-15s\n", "method", "H", "Err_for", "Acc_mem");
  for (const Row* row : {&zero, &best, &last}) {
    if (row->h.empty()) continue;
    std::printf("%-24s %s  %s  %s\n", row->name.c_str(), cell(row->h).c_str(), cell(row->e).c_str(),
                cell(row->a).c_str());
  }
  std::printf("(test split, mean ± std over %zu seed%s)\n", runs.size(), runs.size() == 1 ? "" : "s");
}

int cmd_run(const std::string& config_path, const OracleFlags& flags) {
  ExperimentConfig config = load_config(config_path);
  apply_flags(config, flags);
  fs::create_directories(config.out);
  ExperimentRunner runner(config);
  std::vector<SeedRun> runs;
  json timing = json::object();
  for (std::uint64_t seed : config.seeds) {
    std::fprintf(stderr, "seed %llu ...\n", static_cast<unsigned long long>(seed));
    const auto& bundle = runner.bundle(config.oracle.data_seed.value_or(seed));
    SeedRun run;
    run.seed = seed;
    run.run = resolve_run(config, bundle.oracle->meta().C, seed);
    run.run.failure_dump = (fs::path(config.out) / ("failure_seed" + std::to_string(seed) + ".json")).string();
    run.report = runner.run(run.run);
    timing[std::to_string(seed)] = run.report.wall_clock_seconds;
    runs.push_back(std::move(run));
  }
  const json report = experiment_report(config, runs);
  write_json_file(fs::path(config.out) / "report.json", report);
  write_text_file(fs::path(config.out) / "metrics.csv",
                  metrics_csv(report.at("config_hash").get<std::string>(), runs));
  write_text_file(fs::path(config.out) / "trace.csv", trace_csv(runs));
  write_json_file(fs::path(config.out) / "timing.json", {{"wall_clock_seconds", timing}});
  print_table(config.method, runs);
  std::printf("wrote %s\n", (fs::path(config.out) / "report.json").c_str());
  return 0;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "--values: '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorKind::InvalidConfig, "--values is empty");
  return out;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name, const std::string& values_text,
              const OracleFlags& flags) {
  ExperimentConfig config = load_config(config_path);
  apply_flags(config, flags);
  const SweepAxis axis = parse_axis(axis_name);
  const auto values = parse_values(values_text);
  ExperimentRunner runner(config);
  const auto& bundle = runner.bundle(config.oracle.data_seed.value_or(config.seeds.front()));
  const RunConfig base = resolve_run(config, bundle.oracle->meta().C, config.seeds.front());
  for (double v : values) apply_axis(base, axis, v);  // reject bad values before any run

  fs::create_directories(config.out);
  const auto points = sweep(base, axis, values, config.seeds, [&](const RunConfig& run) {
    std::fprintf(stderr, "%s run, seed %llu ...\n", to_string(axis).c_str(),
                 static_cast<unsigned long long>(run.seed));
    return runner.run(run);
  });
  const auto summary = summarize(points);
  write_text_file(fs::path(config.out) / "sweep.csv", sweep_csv(points));
  write_text_file(fs::path(config.out) / "sweep_long.csv", sweep_long_csv(axis, points));
  write_text_file(fs::path(config.out) / "sweep_summary.csv", sweep_summary_csv(summary));
  std::printf("%-12s %-15s  %-15s  %-15s\n", to_string(axis).c_str(), "H", "Err_for", "Acc_mem");
  for (const auto& s : summary) {
    auto fmt = [](double mean, double sd) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%6.2f ± %5.2f", mean, sd);
      return std::string(buf);
    };
    std::printf("%-12g %s  %s  %s\n", s.value, fmt(s.mean.h, s.stddev.h).c_str(),
                fmt(s.mean.err_for, s.stddev.err_for).c_str(), fmt(s.mean.acc_mem, s.stddev.acc_mem).c_str());
  }
  std::printf("wrote %s\n", (fs::path(config.out) / "sweep.csv").c_str());
  return 0;
}

int cmd_eval(const std::string& report_path, const std::string& params_path, const std::string& config_path,
             std::uint64_t run_seed, bool seed_given, const std::string& which, const std::string& split_name,
             const OracleFlags& flags) {
  if (report_path.empty() == params_path.empty())
    throw Error(ErrorKind::InvalidConfig, "give exactly one of --report or --params");
  ExperimentConfig config;
  Eigen::VectorXd params;
  std::map<int, Eigen::VectorXd> overrides;
  bool have_params = false;
  std::uint64_t seed = run_seed;

  if (!report_path.empty()) {
    const json report = read_json_file(report_path);
    if (!report.contains("config") || !report.contains("runs"))
      throw Error(ErrorKind::InvalidConfig, report_path + " is not a run report");
    config = config_path.empty() ? experiment_from_json(report.at("config")) : load_experiment(config_path);
    const json* entry = nullptr;
    for (const auto& r : report.at("runs"))
      if (!seed_given || r.at("seed").get<std::uint64_t>() == run_seed) {
        entry = &r;
        break;
      }
    if (entry == nullptr)
      throw Error(ErrorKind::InvalidConfig, "no run with seed " + std::to_string(run_seed) + " in " + report_path);
    seed = entry->at("seed").get<std::uint64_t>();
    if (which == "best" || which == "final") {
      params = vector_from_json(entry->at(which).at("params"), which + ".params");
      have_params = true;
    } else if (which != "zero") {
      throw Error(ErrorKind::InvalidConfig, "--which must be best, final or zero");
    }
    for (const auto& [k, v] : entry->at("class_overrides").items())
      overrides[std::stoi(k)] = vector_from_json(v, "class_overrides");
  } else {
    config = load_config(config_path);
    const json p = read_json_file(params_path);
    params = vector_from_json(p.is_object() ? p.at("params") : p, "params");
    have_params = true;
  }
  apply_flags(config, flags);
  const Split split = parse_split(split_name);

  ExperimentRunner runner(config);
  const auto& bundle = runner.bundle(config.oracle.data_seed.value_or(seed));
  const RunConfig run = resolve_run(config, bundle.oracle->meta().C, seed);
  if (bundle.oracle->meta().D != run.scheme.D)
    throw Error(ErrorKind::OracleMismatch, "oracle has D=" + std::to_string(bundle.oracle->meta().D) +
                                               " but the scheme has D=" + std::to_string(run.scheme.D));
  if (!have_params) params = Eigen::VectorXd::Zero(run.scheme.total_params());
  if (params.size() != run.scheme.total_params())
    throw Error(ErrorKind::ShapeMismatch, "parameter vector has " + std::to_string(params.size()) +
                                              " entries, the scheme needs " +
                                              std::to_string(run.scheme.total_params()));
  const ProjectionSpec projection =
      build_projection(run, bundle.reference ? &*bundle.reference : nullptr);
  const PromptContexts contexts = project(projection, run.scheme, from_vector(run.scheme, params));
  const auto indices = all_indices(bundle.oracle->meta(), split);
  std::vector<Scored> scored;
  if (overrides.empty() || which == "zero") {
    scored = bundle.oracle->score(contexts, split, indices);
  } else {
    const auto* emb = dynamic_cast<const ClassEmbeddingOracle*>(bundle.oracle.get());
    if (emb == nullptr)
      throw Error(ErrorKind::UnsupportedOracle, "stored class overrides need an oracle exposing class embeddings");
    scored = emb->score_with_overrides(contexts, overrides, split, indices);
  }
  const Metrics m = metrics_from_scored(scored, run.partition);
  std::printf("%-8s %-8s %8s %8s %8s\n", "split", "params", "H", "Err_for", "Acc_mem");
  std::printf("%-8s %-8s %8.2f %8.2f %8.2f\n", std::string(to_string(split)).c_str(),
              params_path.empty() ? which.c_str() : "file", m.h, m.err_for, m.acc_mem);
  fs::path out = flags.out.empty() ? (report_path.empty() ? fs::path(".") : fs::path(report_path).parent_path())
                                   : fs::path(flags.out);
  if (out.empty()) out = ".";
  fs::create_directories(out);
  write_json_file(out / "eval.json",
                  {{"seed", seed}, {"split", std::string(to_string(split))}, {"metrics", to_json(m)}});
  return 0;
}

int cmd_gen_surrogate(const SurrogateParams& params, int k, int n_test, std::uint64_t data_seed,
                      const std::string& out) {
  params.validate();
  if (k < 1 || n_test < 1) throw Error(ErrorKind::InvalidConfig, "--k and --n-test must be >= 1");
  const SurrogateSpec spec = SurrogateSpec::generate(params);
  const FeatureStore store = surrogate_generate_data(spec, k, n_test, data_seed);
  fs::create_directories(out);
  write_json_file(fs::path(out) / "surrogate.json", to_json(spec));
  write_json_file(fs::path(out) / "features.json", to_json(store));
  std::printf("wrote %s and %s (zero-shot test accuracy %.2f%%)\n", (fs::path(out) / "surrogate.json").c_str(),
              (fs::path(out) / "features.json").c_str(), zero_shot_accuracy(spec, store));
  return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const std::string& config_path, std::uint64_t data_seed, int port) {
  ExperimentConfig config = load_config(config_path);
  config.oracle.kind = OracleKind::Surrogate;
  const OracleBundle bundle = build_oracle(config.oracle, config.oracle.data_seed.value_or(data_seed));
  LoopbackServer server(*bundle.oracle, port);
  std::printf("listening on %s\n", server.endpoint().c_str());
  std::fflush(stdout);
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box class forgetting with latent-context prompt tuning"};
  app.require_subcommand(1);

  std::string config_path;
  OracleFlags flags;
  std::uint64_t single_seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)");
    add_oracle_flags(*cmd, flags);
    cmd->add_option("--out", flags.out, "Output directory");
    cmd->add_option("--jobs", flags.jobs, "Parallel candidate scoring (1 = reproducible serial mode)")
        ->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Run a forgetting experiment over the configured seeds");
  add_common(run);
  run->add_option("--seeds", flags.seeds, "Seed list")->delimiter(',');
  auto* run_seed_opt = run->add_option("--seed", single_seed, "Single seed");

  std::string axis, values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one axis over values and seeds");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--seeds", flags.seeds, "Seed list")->delimiter(',');
  sweep_cmd->add_option("--axis", axis, "m, ds_ratio, r_for, class_choice, w_f or sigma_A")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();

  std::string report_path, params_path, which = "best", split_name = "test";
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Recompute metrics for stored parameters");
  add_common(eval);
  eval->add_option("--report", report_path, "report.json written by run");
  eval->add_option("--params", params_path, "Parameter file ({\"params\": [...]})");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed, "Which run of the report");
  eval->add_option("--which", which, "best, final or zero")->check(CLI::IsMember({"best", "final", "zero"}));
  eval->add_option("--split", split_name, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  SurrogateParams sp;
  int k = 16, n_test = 100;
  std::uint64_t data_seed = 0;
  std::string gen_out = "surrogate";
  auto* gen = app.add_subcommand("gen-surrogate", "Write surrogate weights and a feature file");
  gen->add_option("--D", sp.D, "Context dimension");
  gen->add_option("--H", sp.H, "Hidden width");
  gen->add_option("--F", sp.F, "Feature dimension");
  gen->add_option("--C", sp.C, "Number of classes");
  gen->add_option("--m", sp.m, "Reference prompt length");
  gen->add_option("--token-scale", sp.token_scale, "Token embedding std");
  gen->add_option("--logit-scale", sp.logit_scale, "Logit scale");
  gen->add_option("--noise-scale", sp.noise_scale, "Image feature noise");
  gen->add_option("--seed", sp.seed, "Weight seed");
  gen->add_option("--k", k, "Shots per class (train and val)");
  gen->add_option("--n-test", n_test, "Test samples per class");
  gen->add_option("--data-seed", data_seed, "Data seed");
  gen->add_option("--out", gen_out, "Output directory");

  int port = 0;
  std::uint64_t serve_seed = 0;
  auto* serve = app.add_subcommand("serve-loopback", "Serve the configured surrogate over the wire protocol");
  serve->add_option("--config", config_path, "Experiment config (JSON)");
  serve->add_option("--data-seed", serve_seed, "Data seed when the config leaves it open");
  serve->add_option("--port", port, "Port on 127.0.0.1 (0 picks one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  const char* stage = "config";
  try {
    if (*run) {
      if (*run_seed_opt) flags.seeds = {single_seed};
      stage = "run";
      return cmd_run(config_path, flags);
    }
    if (*sweep_cmd) {
      stage = "sweep";
      return cmd_sweep(config_path, axis, values, flags);
    }
    if (*eval) {
      stage = "eval";
      return cmd_eval(report_path, params_path, config_path, eval_seed, static_cast<bool>(*eval_seed_opt), which,
                      split_name, flags);
    }
    if (*gen) {
      stage = "gen-surrogate";
      return cmd_gen_surrogate(sp, k, n_test, data_seed, gen_out);
    }
    if (*serve) {
      stage = "serve-loopback";
      return cmd_serve(config_path, serve_seed, port);
    }
  } catch (const Error& e) {
    const bool config = is_config_error(e.kind());
    std::fprintf(stderr, "bbforget %s: %s error: %s\n", stage, config ? "config" : "runtime", e.what());
    return config ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bbforget %s: runtime error: %s\n", stage, e.what());
    return kRuntimeError;
  }
  return 0;
}
