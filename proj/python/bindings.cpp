#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bbf/cma.hpp"
#include "bbf/error.hpp"
#include "bbf/experiment.hpp"
#include "bbf/objective.hpp"
#include "bbf/surrogate.hpp"

namespace py = pybind11;
using namespace bbf;

namespace {

// ask() hands out points; tell() takes the fitness values back in the same order.
class PyCma {
 public:
  PyCma(int dimension, int population_size, double sigma, std::optional<Eigen::VectorXd> mean,
        bool diagonal, std::uint64_t seed) {
    cma::CmaConfig c;
    c.dimension = dimension;
    c.population_size = population_size;
    c.initial_step_size = sigma;
    if (mean) c.initial_mean = *mean;
    c.covariance_mode = diagonal ? cma::CovarianceMode::Diagonal : cma::CovarianceMode::Full;
    c.seed = seed;
    state_ = cma::init(c);
  }

  Eigen::MatrixXd ask() {
    last_ = cma::ask(state_);
    Eigen::MatrixXd out(last_.size(), state_.dimension());
    for (std::size_t j = 0; j < last_.size(); ++j) out.row(j) = last_[j].point.transpose();
    return out;
  }

  void tell(const std::vector<double>& fitness) {
    if (fitness.size() != last_.size())
      throw Error(ErrorKind::MissingFitness, "expected " + std::to_string(last_.size()) +
                                                 " fitness values, got " + std::to_string(fitness.size()));
    for (std::size_t j = 0; j < last_.size(); ++j) last_[j].fitness = fitness[j];
    cma::tell(state_, last_);
  }

  const cma::CmaState& state() const { return state_; }

 private:
  cma::CmaState state_;
  std::vector<cma::Candidate> last_;
};

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["err_for"] = m.err_for;
  d["acc_mem"] = m.acc_mem;
  d["h"] = m.h;
  return d;
}

std::string run_experiment_json(const std::string& config_text, std::optional<std::vector<std::uint64_t>> seeds) {
  ExperimentConfig config = experiment_from_json(json::parse(config_text));
  if (seeds) config.seeds = *seeds;
  check_declared_total(config);
  std::vector<SeedRun> runs;
  {
    py::gil_scoped_release release;
    ExperimentRunner runner(config);
    for (auto seed : config.seeds) runs.push_back(runner.run(seed));
  }
  return experiment_report(config, runs).dump();
}

}  // namespace

PYBIND11_MODULE(_bbforget, mod) {
  mod.doc() = "Black-box prompt forgetting core";

  static py::exception<Error> error(mod, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  py::class_<PyCma>(mod, "Cma")
      .def(py::init<int, int, double, std::optional<Eigen::VectorXd>, bool, std::uint64_t>(),
           py::arg("dimension"), py::arg("population_size") = 20, py::arg("sigma") = 1.0,
           py::arg("mean") = std::nullopt, py::arg("diagonal") = false, py::arg("seed") = 0)
      .def("ask", &PyCma::ask)
      .def("tell", &PyCma::tell, py::arg("fitness"))
      .def_property_readonly("mean", [](const PyCma& c) { return c.state().mean; })
      .def_property_readonly("sigma", [](const PyCma& c) { return c.state().step_size; })
      .def_property_readonly("covariance", [](const PyCma& c) { return c.state().covariance_matrix(); })
      .def_property_readonly("iteration", [](const PyCma& c) { return c.state().iteration; })
      .def_property_readonly("repairs", [](const PyCma& c) { return c.state().repairs; });

  mod.def(
      "minimize",
      [](const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0, double sigma,
         int population_size, bool diagonal, std::uint64_t seed, long max_evaluations, double target) {
        cma::CmaConfig c;
        c.dimension = static_cast<int>(x0.size());
        c.population_size = population_size;
        c.initial_step_size = sigma;
        c.initial_mean = x0;
        c.covariance_mode = diagonal ? cma::CovarianceMode::Diagonal : cma::CovarianceMode::Full;
        c.seed = seed;
        c.max_iterations = std::numeric_limits<int>::max();
        cma::StopCriteria stop;
        stop.max_evaluations = max_evaluations;
        stop.target_fitness = target;
        const auto r = cma::run(c, f, stop);
        py::dict d;
        d["x"] = r.best_point;
        d["fun"] = r.best_fitness;
        d["evaluations"] = r.evaluations;
        d["iterations"] = r.final_state.iteration;
        return d;
      },
      py::arg("f"), py::arg("x0"), py::arg("sigma") = 1.0, py::arg("population_size") = 20,
      py::arg("diagonal") = false, py::arg("seed") = 0, py::arg("max_evaluations") = 10000,
      py::arg("target") = -std::numeric_limits<double>::infinity());

  mod.def("loss_memorize", [](const Eigen::VectorXd& p, int label) { return loss_memorize(p, label); },
          py::arg("p"), py::arg("label"));
  mod.def("loss_forget", [](const Eigen::VectorXd& p) { return loss_forget(p); }, py::arg("p"));
  mod.def(
      "loss_c_emb",
      [](const Eigen::VectorXd& z, const Eigen::VectorXd& z_c, const std::vector<Eigen::VectorXd>& others,
         double tau) { return loss_c_emb(z, z_c, others, tau); },
      py::arg("z"), py::arg("z_c"), py::arg("others"), py::arg("tau") = 0.07);
  mod.def("harmonic_mean", &harmonic_mean, py::arg("err_for"), py::arg("acc_mem"));
  mod.def(
      "compute_metrics",
      [](const std::vector<int>& predictions, const std::vector<int>& labels, int num_classes,
         const std::vector<int>& forgotten) {
        return metrics_dict(compute_metrics(predictions, labels, ClassPartition(num_classes, forgotten)));
      },
      py::arg("predictions"), py::arg("labels"), py::arg("num_classes"), py::arg("forgotten"));

  py::class_<SurrogateOracle>(mod, "Surrogate")
      .def(py::init([](std::uint64_t seed, int k, int n_test, std::uint64_t data_seed, double noise_scale) {
             SurrogateParams p;
             p.seed = seed;
             p.noise_scale = noise_scale;
             const auto spec = SurrogateSpec::generate(p);
             return SurrogateOracle(spec, surrogate_generate_data(spec, k, n_test, data_seed));
           }),
           py::arg("seed") = 0, py::arg("k") = 16, py::arg("n_test") = 100, py::arg("data_seed") = 0,
           py::arg("noise_scale") = SurrogateParams{}.noise_scale)
      .def_property_readonly("reference_contexts",
                             [](const SurrogateOracle& o) { return o.spec().reference_contexts; })
      .def_property_readonly("num_classes", [](const SurrogateOracle& o) { return o.meta().C; })
      .def(
          "score",
          [](const SurrogateOracle& o, const Eigen::MatrixXd& contexts, const std::string& split) {
            const Split s = parse_split(split);
            const auto scored = o.score(contexts, s, all_indices(o.meta(), s));
            Eigen::MatrixXd probs(scored.size(), o.meta().C);
            std::vector<int> labels;
            for (std::size_t i = 0; i < scored.size(); ++i) {
              probs.row(i) = scored[i].confidence.transpose();
              labels.push_back(scored[i].label);
            }
            return py::make_tuple(probs, labels);
          },
          py::arg("contexts"), py::arg("split") = "test");

  mod.def("run_experiment_json", &run_experiment_json, py::arg("config"), py::arg("seeds") = std::nullopt,
          "Runs a JSON experiment config and returns report.json as text.");
}
