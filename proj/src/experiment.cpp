#include "bbf/experiment.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "bbf/error.hpp"
#include "bbf/remote.hpp"

namespace bbf {

namespace {

[[noreturn]] void bad(const std::string& message) { throw Error(ErrorKind::InvalidConfig, message); }

// Strict view of one JSON object: every key must be read, or finish() names
// the leftovers.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) bad(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* child(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const std::string& key, int& out) {
    if (const json* v = child(key)) {
      if (!v->is_number_integer()) bad("key '" + key_path(key) + "' must be an integer");
      out = v->get<int>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = child(key)) {
      if (!v->is_number()) bad("key '" + key_path(key) + "' must be a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = child(key)) {
      if (!v->is_boolean()) bad("key '" + key_path(key) + "' must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = child(key)) {
      if (!v->is_string()) bad("key '" + key_path(key) + "' must be a string");
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = child(key)) out = as_seed(*v, key_path(key));
  }
  void read(const std::string& key, std::optional<std::uint64_t>& out) {
    if (const json* v = child(key)) {
      if (v->is_null()) out.reset();
      else out = as_seed(*v, key_path(key));
    }
  }
  void read(const std::string& key, std::vector<int>& out) {
    if (const json* v = child(key)) {
      if (!v->is_array()) bad("key '" + key_path(key) + "' must be a list of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) bad("key '" + key_path(key) + "' must be a list of integers");
        out.push_back(e.get<int>());
      }
    }
  }

  static std::uint64_t as_seed(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      bad("key '" + path + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) bad("unknown key '" + key_path(it.key()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "key '" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum>
Enum pick(const std::string& key, const std::string& value,
          std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    names += names.empty() ? name : std::string(", ") + name;
  }
  bad("key '" + key + "' must be one of " + names + " (got '" + value + "')");
}

const char* name_of(Optimizer o) {
  switch (o) {
    case Optimizer::BlockCma: return "block_cma";
    case Optimizer::BlockCmaDiagonal: return "block_cma_diagonal";
    case Optimizer::GradientDescent: return "gradient";
    case Optimizer::ZerothOrder: return "zeroth_order";
    case Optimizer::CEmbedding: return "c_emb";
    case Optimizer::CombinedCEmb: return "ours_c_emb";
  }
  return "?";
}

const std::vector<std::string> kMethods = {"ours",   "ours_wo_lcs",  "bbt",   "bbt_sep",   "gradient",
                                           "zeroth_order", "c_emb", "ours_c_emb", "ours_acc_prio", "custom"};

void parse_scheme(Reader& r, ExperimentConfig& c) {
  std::string mode = c.run.scheme.mode == SchemeMode::Bbt ? "bbt" : "lcs";
  r.read("mode", mode);
  ParamScheme& s = c.run.scheme;
  if (mode == "bbt") {
    s = ParamScheme::bbt(s.m, s.mode == SchemeMode::Bbt ? s.d : s.total_params() / s.m, s.D);
    r.read("d", s.d);
  } else if (mode == "lcs") {
    if (s.mode != SchemeMode::Lcs) s = ParamScheme::lcs(s.m, 0, s.d, s.D);
    r.read("d_s", s.d_s);
    r.read("d_u", s.d_u);
  } else {
    bad("key 'scheme.mode' must be lcs or bbt (got '" + mode + "')");
  }
  r.read("m", s.m);
  r.read("D", s.D);
  int total = 0;
  if (r.has("total")) {
    r.read("total", total);
    c.declared_total = total;
  }
  r.finish();
}

void parse_surrogate(Reader& r, SurrogateParams& p) {
  r.read("D", p.D);
  r.read("H", p.H);
  r.read("F", p.F);
  r.read("C", p.C);
  r.read("m", p.m);
  r.read("token_scale", p.token_scale);
  r.read("logit_scale", p.logit_scale);
  r.read("noise_scale", p.noise_scale);
  r.read("seed", p.seed);
  r.finish();
}

json surrogate_params_json(const SurrogateParams& p) {
  return {{"D", p.D},
          {"H", p.H},
          {"F", p.F},
          {"C", p.C},
          {"m", p.m},
          {"token_scale", p.token_scale},
          {"logit_scale", p.logit_scale},
          {"noise_scale", p.noise_scale},
          {"seed", p.seed}};
}

json metrics_or_null(const std::optional<Metrics>& m) { return m ? to_json(*m) : json(nullptr); }

std::uint64_t data_seed_for(const OracleSettings& s, std::uint64_t run_seed) {
  return s.data_seed.value_or(run_seed);
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.read("method", c.method);
  if (std::find(kMethods.begin(), kMethods.end(), c.method) == kMethods.end()) {
    std::string names;
    for (const auto& m : kMethods) names += (names.empty() ? "" : ", ") + m;
    bad("key 'method' must be one of " + names + " (got '" + c.method + "')");
  }
  if (const json* v = r.child("scheme")) {
    Reader s(*v, "scheme");
    parse_scheme(s, c);
  }
  if (const json* v = r.child("partition")) {
    Reader p(*v, "partition");
    p.read("forget_ratio", c.partition.forget_ratio);
    if (p.has("forgotten")) {
      std::vector<int> f;
      p.read("forgotten", f);
      c.partition.forgotten = f;
    }
    p.finish();
  }
  if (const json* v = r.child("loss")) {
    Reader l(*v, "loss");
    l.read("forget_weight", c.run.loss.forget_weight);
    l.read("clamp_epsilon", c.run.loss.clamp_epsilon);
    l.read("temperature", c.run.loss.temperature);
    l.finish();
  }
  if (const json* v = r.child("projection")) {
    Reader p(*v, "projection");
    auto& ps = c.run.projection;
    if (const json* sigma = p.child("sigma")) {
      if (sigma->is_string() && sigma->get<std::string>() == "embedding") {
        ps.sigma_mode = SigmaMode::Embedding;
      } else if (sigma->is_number()) {
        ps.sigma_mode = SigmaMode::Explicit;
        ps.sigma = sigma->get<double>();
      } else {
        bad("key 'projection.sigma' must be \"embedding\" or a positive number");
      }
    }
    std::string initial = "reference";
    p.read("initial", initial);
    ps.initial = pick<InitialContexts>("projection.initial", initial,
                                       {{"reference", InitialContexts::Explicit},
                                        {"random", InitialContexts::Random},
                                        {"zero", InitialContexts::Zero}});
    p.read("per_context", ps.per_context);
    if (p.has("seed")) {
      std::optional<std::uint64_t> seed;
      p.read("seed", seed);
      ps.seed = seed;
    }
    p.finish();
  }
  if (const json* v = r.child("cma")) {
    Reader m(*v, "cma");
    m.read("population_size", c.run.population_size);
    m.read("initial_step_size", c.run.initial_step_size);
    std::string sync = "lock_step";
    m.read("sync", sync);
    c.run.sync = pick<BlockSync>("cma.sync", sync,
                                 {{"lock_step", BlockSync::LockStep}, {"round_robin", BlockSync::RoundRobin}});
    m.finish();
  }
  if (const json* v = r.child("optimizer")) {
    if (c.method != "custom") bad("key 'optimizer' is only allowed with method \"custom\"");
    Reader o(*v, "optimizer");
    std::string kind = "block_cma", layout = "per_block";
    o.read("kind", kind);
    o.read("layout", layout);
    c.run.optimizer = pick<Optimizer>("optimizer.kind", kind,
                                      {{"block_cma", Optimizer::BlockCma},
                                       {"block_cma_diagonal", Optimizer::BlockCmaDiagonal},
                                       {"gradient", Optimizer::GradientDescent},
                                       {"zeroth_order", Optimizer::ZerothOrder},
                                       {"c_emb", Optimizer::CEmbedding},
                                       {"ours_c_emb", Optimizer::CombinedCEmb}});
    c.run.layout = pick<BlockLayout>("optimizer.layout", layout,
                                     {{"per_block", BlockLayout::PerBlock}, {"joint", BlockLayout::Joint}});
    o.finish();
  }
  if (const json* v = r.child("gradient")) {
    Reader g(*v, "gradient");
    g.read("step_size", c.run.gradient.step_size);
    g.read("decay", c.run.gradient.decay);
    g.finish();
  }
  if (const json* v = r.child("zeroth_order")) {
    Reader z(*v, "zeroth_order");
    z.read("perturbation", c.run.zeroth_order.perturbation);
    z.read("directions", c.run.zeroth_order.directions);
    z.read("step_size", c.run.zeroth_order.step_size);
    z.read("decay", c.run.zeroth_order.decay);
    z.finish();
  }
  if (const json* v = r.child("c_emb")) {
    Reader e(*v, "c_emb");
    e.read("step_size", c.run.c_emb.step_size);
    if (e.has("sampleless")) {
      std::vector<int> s;
      e.read("sampleless", s);
      c.run.c_emb.sampleless = s;
    }
    e.finish();
  }
  r.read("iterations", c.run.iterations);
  r.read("eval_interval", c.run.eval_interval);
  r.read("jobs", c.run.jobs);
  if (const json* v = r.child("seeds")) {
    if (!v->is_array()) bad("key 'seeds' must be a list of non-negative integers");
    c.seeds.clear();
    for (const auto& s : *v) c.seeds.push_back(Reader::as_seed(s, "seeds"));
  }
  if (const json* v = r.child("oracle")) {
    Reader o(*v, "oracle");
    std::string kind = "surrogate";
    o.read("kind", kind);
    c.oracle.kind = pick<OracleKind>("oracle.kind", kind,
                                     {{"surrogate", OracleKind::Surrogate}, {"remote", OracleKind::Remote}});
    o.read("endpoint", c.oracle.endpoint);
    if (const json* s = o.child("surrogate")) {
      Reader sr(*s, "oracle.surrogate");
      parse_surrogate(sr, c.oracle.surrogate);
    }
    o.read("surrogate_file", c.oracle.surrogate_file);
    o.read("features_file", c.oracle.features_file);
    o.read("k", c.oracle.k);
    o.read("n_test", c.oracle.n_test);
    o.read("data_seed", c.oracle.data_seed);
    o.finish();
  }
  r.read("out", c.out);
  r.finish();

  // Everything checkable without an oracle is checked now.
  check_declared_total(c);
  try {
    c.run.scheme.validate();
  } catch (const Error& e) {
    bad(std::string("scheme: ") + e.what());
  }
  if (c.seeds.empty()) bad("key 'seeds' must not be empty");
  if (c.oracle.k < 1) bad("key 'oracle.k' must be >= 1");
  if (c.oracle.n_test < 1) bad("key 'oracle.n_test' must be >= 1");
  if (c.partition.forget_ratio < 0.0 || c.partition.forget_ratio > 1.0)
    bad("key 'partition.forget_ratio' must lie in [0, 1]");
  if (c.oracle.surrogate_file.empty()) {
    try {
      c.oracle.surrogate.validate();
    } catch (const Error& e) {
      bad(std::string("oracle.surrogate: ") + e.what());
    }
  }
  // Presets and the remaining numeric ranges, against a nominal class count.
  const bool local = c.oracle.kind == OracleKind::Surrogate && c.oracle.surrogate_file.empty();
  const int classes = local ? c.oracle.surrogate.C : 0;
  if (classes >= 2) resolve_run(c, classes, c.seeds.front()).validate();
  else {
    RunConfig probe = c.run;
    probe.partition = ClassPartition(2, {0});
    probe.validate();
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  const auto& r = c.run;
  json scheme = to_json(r.scheme);
  if (c.declared_total) scheme["total"] = *c.declared_total;
  json partition = {{"forget_ratio", c.partition.forget_ratio}};
  if (c.partition.forgotten) partition["forgotten"] = *c.partition.forgotten;
  json projection = {
      {"sigma", r.projection.sigma_mode == SigmaMode::Embedding ? json("embedding") : json(r.projection.sigma)},
      {"initial", r.projection.initial == InitialContexts::Explicit ? "reference"
                  : r.projection.initial == InitialContexts::Random ? "random"
                                                                     : "zero"},
      {"per_context", r.projection.per_context}};
  if (r.projection.seed) projection["seed"] = *r.projection.seed;
  json c_emb = {{"step_size", r.c_emb.step_size}};
  if (r.c_emb.sampleless) c_emb["sampleless"] = *r.c_emb.sampleless;
  json oracle = {{"kind", c.oracle.kind == OracleKind::Surrogate ? "surrogate" : "remote"},
                 {"endpoint", c.oracle.endpoint},
                 {"surrogate", surrogate_params_json(c.oracle.surrogate)},
                 {"surrogate_file", c.oracle.surrogate_file},
                 {"features_file", c.oracle.features_file},
                 {"k", c.oracle.k},
                 {"n_test", c.oracle.n_test},
                 {"data_seed", c.oracle.data_seed ? json(*c.oracle.data_seed) : json(nullptr)}};
  json j = {{"method", c.method},
            {"scheme", scheme},
            {"partition", partition},
            {"loss",
             {{"forget_weight", r.loss.forget_weight},
              {"clamp_epsilon", r.loss.clamp_epsilon},
              {"temperature", r.loss.temperature}}},
            {"projection", projection},
            {"cma",
             {{"population_size", r.population_size},
              {"initial_step_size", r.initial_step_size},
              {"sync", r.sync == BlockSync::LockStep ? "lock_step" : "round_robin"}}},
            {"gradient", {{"step_size", r.gradient.step_size}, {"decay", r.gradient.decay}}},
            {"zeroth_order",
             {{"perturbation", r.zeroth_order.perturbation},
              {"directions", r.zeroth_order.directions},
              {"step_size", r.zeroth_order.step_size},
              {"decay", r.zeroth_order.decay}}},
            {"c_emb", c_emb},
            {"iterations", r.iterations},
            {"eval_interval", r.eval_interval},
            {"jobs", r.jobs},
            {"seeds", c.seeds},
            {"oracle", oracle},
            {"out", c.out}};
  if (c.method == "custom")
    j["optimizer"] = {{"kind", name_of(r.optimizer)},
                      {"layout", r.layout == BlockLayout::PerBlock ? "per_block" : "joint"}};
  return j;
}

ExperimentConfig load_experiment(const std::string& path) { return experiment_from_json(read_json_file(path)); }

void check_declared_total(const ExperimentConfig& c) {
  if (!c.declared_total) return;
  const auto& s = c.run.scheme;
  const int total = *c.declared_total;
  if (s.mode == SchemeMode::Lcs && s.d_s + s.m * s.d_u != total)
    bad("scheme budget violated: d_s + m*d_u = " + std::to_string(s.d_s) + " + " + std::to_string(s.m) + "*" +
        std::to_string(s.d_u) + " = " + std::to_string(s.d_s + s.m * s.d_u) + " != total " +
        std::to_string(total));
  if (s.mode == SchemeMode::Bbt && s.m * s.d != total)
    bad("scheme budget violated: m*d = " + std::to_string(s.m) + "*" + std::to_string(s.d) + " = " +
        std::to_string(s.m * s.d) + " != total " + std::to_string(total));
}

RunConfig resolve_run(const ExperimentConfig& c, int num_classes, std::uint64_t seed) {
  RunConfig run = c.run;
  run.seed = seed;
  if (c.partition.forgotten) {
    for (int f : *c.partition.forgotten)
      if (f < 0 || f >= num_classes)
        bad("key 'partition.forgotten' names class " + std::to_string(f) + " but the oracle has " +
            std::to_string(num_classes) + " classes");
    run.partition = ClassPartition(num_classes, *c.partition.forgotten);
  } else {
    run.partition = ClassPartition::first_fraction(num_classes, c.partition.forget_ratio);
  }
  const std::string& m = c.method;
  if (m == "ours") run = preset_ours(run);
  else if (m == "ours_wo_lcs") run = preset_ours_without_lcs(run);
  else if (m == "bbt") run = preset_bbt(run, false);
  else if (m == "bbt_sep") run = preset_bbt(run, true);
  else if (m == "gradient") run.optimizer = Optimizer::GradientDescent;
  else if (m == "zeroth_order") run.optimizer = Optimizer::ZerothOrder;
  else if (m == "c_emb") run.optimizer = Optimizer::CEmbedding;
  else if (m == "ours_acc_prio") {
    // Memorization-weighted variant; the weight is our choice.
    run = preset_ours(run);
    run.loss.forget_weight = 0.25;
  } else if (m == "ours_c_emb") {
    run = preset_ours(run);
    run.optimizer = Optimizer::CombinedCEmb;
  }
  run.validate();
  return run;
}

ProjectionSpec build_projection(const RunConfig& run, const SurrogateSpec* reference) {
  const auto& ps = run.projection;
  SigmaSource sigma;
  if (ps.sigma_mode == SigmaMode::Explicit) {
    sigma = SigmaSource::explicit_value(ps.sigma);
  } else {
    if (reference == nullptr)
      bad("projection.sigma \"embedding\" needs local surrogate weights; give an explicit sigma");
    sigma = SigmaSource::from_embeddings(reference->class_tokens);
  }
  ProjectionOptions options;
  options.per_context = ps.per_context;
  options.initial = ps.initial;
  if (ps.initial == InitialContexts::Explicit) {
    if (reference == nullptr)
      bad("projection.initial \"reference\" needs local surrogate weights; use \"random\" or \"zero\"");
    const auto& q = reference->reference_contexts;
    if (q.cols() != run.scheme.D)
      bad("scheme D=" + std::to_string(run.scheme.D) + " but the surrogate has D=" + std::to_string(q.cols()));
    options.explicit_contexts.resize(run.scheme.m, q.cols());
    for (int i = 0; i < run.scheme.m; ++i) options.explicit_contexts.row(i) = q.row(i % q.rows());
  }
  return make_projection(run.scheme, sigma, ps.seed.value_or(run.seed), options);
}

SurrogateSpec load_surrogate(const OracleSettings& s) {
  if (!s.surrogate_file.empty()) return surrogate_from_json(read_json_file(s.surrogate_file));
  return SurrogateSpec::generate(s.surrogate);
}

OracleBundle build_oracle(const OracleSettings& s, std::uint64_t data_seed) {
  OracleBundle bundle;
  const bool have_weights = !s.surrogate_file.empty() || s.kind == OracleKind::Surrogate;
  if (have_weights) bundle.reference = load_surrogate(s);
  if (s.kind == OracleKind::Remote) {
    std::string endpoint = s.endpoint;
    if (endpoint.empty())
      if (const char* env = std::getenv(kEndpointEnv)) endpoint = env;
    if (endpoint.empty())
      bad(std::string("remote oracle needs oracle.endpoint, --endpoint or $") + kEndpointEnv);
    bundle.oracle = std::make_unique<RemoteOracle>(endpoint);
    return bundle;
  }
  FeatureStore store = s.features_file.empty()
                           ? surrogate_generate_data(*bundle.reference, s.k, s.n_test, data_seed)
                           : features_from_json(read_json_file(s.features_file), s.k, data_seed);
  bundle.oracle = std::make_unique<SurrogateOracle>(*bundle.reference, std::move(store));
  return bundle;
}

ExperimentRunner::ExperimentRunner(ExperimentConfig config) : config_(std::move(config)) {}

const OracleBundle& ExperimentRunner::bundle(std::uint64_t data_seed) {
  for (const auto& [seed, b] : bundles_)
    if (seed == data_seed) return b;
  // Remote oracles serve fixed data: one connection covers every seed.
  if (config_.oracle.kind == OracleKind::Remote && !bundles_.empty()) return bundles_.front().second;
  bundles_.emplace_back(data_seed, build_oracle(config_.oracle, data_seed));
  return bundles_.back().second;
}

RunReport ExperimentRunner::run(const RunConfig& run) {
  const auto& b = bundle(data_seed_for(config_.oracle, run.seed));
  const ProjectionSpec projection = build_projection(run, b.reference ? &*b.reference : nullptr);
  return run_forgetting(run, *b.oracle, projection);
}

SeedRun ExperimentRunner::run(std::uint64_t seed) {
  const auto& b = bundle(data_seed_for(config_.oracle, seed));
  SeedRun out;
  out.seed = seed;
  out.run = resolve_run(config_, b.oracle->meta().C, seed);
  out.report = run(out.run);
  return out;
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentRunner runner(config);
  return runner.run(seed);
}

json report_to_json(const RunReport& r) {
  json iterations = json::array();
  for (const auto& it : r.iterations)
    iterations.push_back({{"iteration", it.iteration},
                          {"evaluations", it.evaluations},
                          {"best_loss", it.best_loss},
                          {"median_loss", it.median_loss},
                          {"sigmas", it.sigmas}});
  json evaluations = json::array();
  for (const auto& e : r.evaluations) evaluations.push_back({{"iteration", e.iteration}, {"val", to_json(e.val)}});
  json overrides = json::object();
  for (const auto& [c, z] : r.class_overrides) overrides[std::to_string(c)] = vector_to_json(z);
  return {{"zero_shot", {{"val", to_json(r.zero_shot_val)}, {"test", to_json(r.zero_shot_test)}}},
          {"best",
           {{"iteration", r.best_iteration},
            {"val_h", r.best_val_h},
            {"test", metrics_or_null(r.best_test)},
            {"params", vector_to_json(r.best_params)}}},
          {"final", {{"test", metrics_or_null(r.final_test)}, {"params", vector_to_json(r.final_params)}}},
          {"class_overrides", overrides},
          {"c_emb_best_cos", r.c_emb_best_cos},
          {"oracle_calls", r.oracle_calls},
          {"covariance_repairs", r.covariance_repairs},
          {"iterations", iterations},
          {"evaluations", evaluations}};
}

json experiment_report(const ExperimentConfig& config, const std::vector<SeedRun>& runs) {
  const json echo = to_json(config);
  json list = json::array();
  for (const auto& r : runs) {
    json entry = report_to_json(r.report);
    entry["seed"] = r.seed;
    entry["scheme"] = to_json(r.run.scheme);
    entry["forgotten"] = r.run.partition.forgotten();
    list.push_back(std::move(entry));
  }
  return {{"format", "bbforget-report"},
          {"version", 1},
          {"config", echo},
          {"config_hash", config_hash(echo)},
          {"runs", list}};
}

std::string format_double(double v) { return json(v).dump(); }

std::string metrics_csv(const std::string& hash, const std::vector<SeedRun>& runs) {
  std::ostringstream out;
  out << "seed,config_hash,selection,err_for,acc_mem,h\n";
  auto row = [&](std::uint64_t seed, const char* selection, const Metrics& m) {
    out << seed << ',' << hash << ',' << selection << ',' << format_double(m.err_for) << ','
        << format_double(m.acc_mem) << ',' << format_double(m.h) << '\n';
  };
  for (const auto& r : runs) {
    row(r.seed, "zero_shot", r.report.zero_shot_test);
    if (r.report.best_test) row(r.seed, "best", *r.report.best_test);
    if (r.report.final_test) row(r.seed, "final", *r.report.final_test);
  }
  return out.str();
}

std::string trace_csv(const std::vector<SeedRun>& runs) {
  std::ostringstream out;
  out << "seed,iteration,evaluations,best_loss,median_loss,val_err_for,val_acc_mem,val_h,sigmas\n";
  for (const auto& r : runs) {
    std::size_t e = 0;
    const auto& evals = r.report.evaluations;
    for (const auto& it : r.report.iterations) {
      out << r.seed << ',' << it.iteration << ',' << it.evaluations << ',' << format_double(it.best_loss) << ','
          << format_double(it.median_loss) << ',';
      while (e < evals.size() && evals[e].iteration < it.iteration) ++e;
      if (e < evals.size() && evals[e].iteration == it.iteration)
        out << format_double(evals[e].val.err_for) << ',' << format_double(evals[e].val.acc_mem) << ','
            << format_double(evals[e].val.h) << ',';
      else
        out << ",,,";
      for (std::size_t b = 0; b < it.sigmas.size(); ++b) out << (b ? ";" : "") << format_double(it.sigmas[b]);
      out << '\n';
    }
  }
  return out.str();
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "axis_value,seed,err_for,acc_mem,h\n";
  for (const auto& p : points)
    out << format_double(p.value) << ',' << p.seed << ',' << format_double(p.metrics.err_for) << ','
        << format_double(p.metrics.acc_mem) << ',' << format_double(p.metrics.h) << '\n';
  return out.str();
}

std::string sweep_long_csv(SweepAxis axis, const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "axis,axis_value,seed,metric,value\n";
  for (const auto& p : points) {
    const std::pair<const char*, double> rows[] = {
        {"err_for", p.metrics.err_for}, {"acc_mem", p.metrics.acc_mem}, {"h", p.metrics.h}};
    for (const auto& [name, v] : rows)
      out << to_string(axis) << ',' << format_double(p.value) << ',' << p.seed << ',' << name << ','
          << format_double(v) << '\n';
  }
  return out.str();
}

std::string sweep_summary_csv(const std::vector<SweepSummary>& summary) {
  std::ostringstream out;
  out << "axis_value,runs,err_for_mean,err_for_std,acc_mem_mean,acc_mem_std,h_mean,h_std\n";
  for (const auto& s : summary)
    out << format_double(s.value) << ',' << s.runs << ',' << format_double(s.mean.err_for) << ','
        << format_double(s.stddev.err_for) << ',' << format_double(s.mean.acc_mem) << ','
        << format_double(s.stddev.acc_mem) << ',' << format_double(s.mean.h) << ','
        << format_double(s.stddev.h) << '\n';
  return out.str();
}

}  // namespace bbf
