#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bbf/cma.hpp"
#include "bbf/error.hpp"
#include "support.hpp"

using namespace bbf;
using namespace bbf::cma;

namespace {

double sphere(const Eigen::VectorXd& x) { return x.squaredNorm(); }

double rosenbrock(const Eigen::VectorXd& x) {
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
    f += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1.0 - x[i], 2);
  return f;
}

CmaConfig config(int d, int lambda = 20, std::uint64_t seed = 1) {
  CmaConfig c;
  c.dimension = d;
  c.population_size = lambda;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("cma") {

TEST_CASE("init gives identity covariance, zero paths and the requested step") {
  const auto s = init(config(10));
  CHECK(s.mean == Eigen::VectorXd::Zero(10));
  CHECK(s.covariance == Eigen::MatrixXd::Identity(10, 10));
  CHECK(s.step_size == 1.0);
  CHECK(s.path_sigma.isZero(0));
  CHECK(s.path_c.isZero(0));
  CHECK(s.iteration == 0);

  auto d = config(3);
  d.covariance_mode = CovarianceMode::Diagonal;
  CHECK(init(d).diagonal == Eigen::VectorXd::Ones(3));
}

TEST_CASE("smallest admissible problem and invalid configs") {
  CHECK_NOTHROW(init(config(1, 2)));
  CHECK(kind_of([] { init(config(0)); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { init(config(3, 1)); }) == ErrorKind::InvalidConfig);
  auto c = config(3);
  c.initial_step_size = 0.0;
  CHECK(kind_of([&] { init(c); }) == ErrorKind::InvalidConfig);
  c = config(3);
  c.initial_mean = Eigen::VectorXd::Zero(4);
  CHECK(kind_of([&] { init(c); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("strategy constants match the textbook formulas") {
  const int n = 10, lambda = 20;
  const auto p = StrategyParams::standard(n, lambda, CovarianceMode::Full);
  REQUIRE(p.mu == 10);
  double raw_sum = 0.0;
  std::vector<double> raw;
  for (int i = 1; i <= 10; ++i) {
    raw.push_back(std::log(10.5) - std::log(i));
    raw_sum += raw.back();
  }
  double sq = 0.0;
  for (int i = 0; i < 10; ++i) {
    CHECK(p.weights[i] == doctest::Approx(raw[i] / raw_sum).epsilon(1e-14));
    sq += (raw[i] / raw_sum) * (raw[i] / raw_sum);
  }
  const double mu_eff = 1.0 / sq;
  CHECK(p.mu_eff == doctest::Approx(mu_eff));
  CHECK(p.c_sigma == doctest::Approx((mu_eff + 2) / (n + mu_eff + 5)));
  CHECK(p.c_c == doctest::Approx((4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)));
  CHECK(p.c_1 == doctest::Approx(2 / ((n + 1.3) * (n + 1.3) + mu_eff)));
  CHECK(p.chi_n == doctest::Approx(std::sqrt(10.0) * (1 - 1 / 40.0 + 1 / 2100.0)));

  const auto sep = StrategyParams::standard(n, lambda, CovarianceMode::Diagonal);
  CHECK(sep.c_1 == doctest::Approx(p.c_1 * (n + 2) / 3.0));
  CHECK(sep.c_mu == doctest::Approx(p.c_mu * (n + 2) / 3.0));
}

TEST_CASE("ask samples N(0, I) at the origin") {
  auto s = init(config(4, 1000, 7));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sum_sq = Eigen::VectorXd::Zero(4);
  const int batches = 100;
  for (int b = 0; b < batches; ++b)
    for (const auto& c : ask(s)) {
      sum += c.point;
      sum_sq += c.point.cwiseAbs2();
    }
  const double n = batches * 1000.0;
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sum_sq / n - mean.cwiseAbs2();
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(mean[i]) < 0.02);
    CHECK(std::abs(var[i] - 1.0) < 0.05);
  }
}

TEST_CASE("diagonal sampling follows a frozen diag(4, 1)") {
  auto c = config(2, 1000, 3);
  c.covariance_mode = CovarianceMode::Diagonal;
  auto s = init(c);
  s.diagonal << 4.0, 1.0;
  Eigen::Vector2d sum_sq = Eigen::Vector2d::Zero();
  for (int b = 0; b < 100; ++b)
    for (const auto& cand : ask(s)) sum_sq += cand.point.cwiseAbs2();
  const Eigen::Vector2d var = sum_sq / 1e5;
  CHECK(var[0] == doctest::Approx(4.0).epsilon(0.05));
  CHECK(var[1] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("full sampling matches a frozen sigma^2 C") {
  auto s = init(config(2, 2000, 11));
  s.covariance << 2.0, 0.6, 0.6, 1.0;
  s.step_size = 0.5;
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  const int batches = 50;
  for (int b = 0; b < batches; ++b)
    for (const auto& c : ask(s)) acc += c.point * c.point.transpose();
  const Eigen::Matrix2d emp = acc / (batches * 2000.0);
  const Eigen::Matrix2d expected = 0.25 * s.covariance;
  CHECK((emp - expected).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("same seed gives bit-identical candidates") {
  auto a = init(config(5, 20, 42));
  auto b = init(config(5, 20, 42));
  const auto ca = ask(a), cb = ask(b);
  for (int i = 0; i < 20; ++i) CHECK(ca[i].point == cb[i].point);
}

TEST_CASE("tell checks the ask pairing and finiteness") {
  auto s = init(config(3, 4));
  CHECK(kind_of([&] { tell(s, {}); }) == ErrorKind::StaleCandidates);
  auto c = ask(s);
  CHECK(kind_of([&] { tell(s, c); }) == ErrorKind::MissingFitness);
  for (auto& x : c) x.fitness = 1.0;
  auto tampered = c;
  tampered[1].point[0] += 1e-9;
  CHECK(kind_of([&] { tell(s, tampered); }) == ErrorKind::StaleCandidates);
  auto short_list = c;
  short_list.pop_back();
  CHECK(kind_of([&] { tell(s, short_list); }) == ErrorKind::StaleCandidates);
  auto inf = c;
  inf[2].fitness = INFINITY;
  CHECK(kind_of([&] { tell(s, inf); }) == ErrorKind::MissingFitness);
  CHECK_NOTHROW(tell(s, c));
  CHECK(kind_of([&] { tell(s, c); }) == ErrorKind::StaleCandidates);
}

TEST_CASE("equal fitness recombines the first mu candidates in submission order") {
  auto s = init(config(3, 6, 5));
  auto c = ask(s);
  for (auto& x : c) x.fitness = 0.0;
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < s.params.mu; ++i) expected += s.params.weights[i] * c[i].point;
  tell(s, c);
  CHECK((s.mean - expected).norm() < 1e-14);
}

TEST_CASE("candidate order in the tell list does not matter") {
  auto a = init(config(4, 8, 9));
  auto b = init(config(4, 8, 9));
  auto ca = ask(a), cb = ask(b);
  for (int i = 0; i < 8; ++i) ca[i].fitness = cb[i].fitness = sphere(ca[i].point);
  std::reverse(cb.begin(), cb.end());
  tell(a, ca);
  tell(b, cb);
  CHECK(a.mean == b.mean);
  CHECK(a.covariance == b.covariance);
}

TEST_CASE("sphere from (3, ..., 3) reaches 1e-10 within 5000 evaluations") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = config(10, 20, seed);
    c.initial_mean = Eigen::VectorXd::Constant(10, 3.0);
    StopCriteria stop;
    stop.max_evaluations = 5000;
    stop.target_fitness = 1e-10;
    const auto r = run(c, sphere, stop);
    CAPTURE(seed);
    CHECK(r.best_fitness < 1e-10);
    CHECK(r.evaluations <= 5000);
  }
}

TEST_CASE("run converges on the sphere and records a trace") {
  auto c = config(10, 20, 4);
  c.max_iterations = 400;
  const auto r = run(c, sphere);
  CHECK(r.best_point.norm() < 1e-5);
  CHECK(r.trace.size() == 400);
  CHECK(r.trace.back().evaluations == 8000);
  for (const auto& row : r.trace) CHECK(row.best_fitness <= row.median_fitness);
}

TEST_CASE("run honours the stop criteria") {
  auto c = config(5, 10, 2);
  StopCriteria stop;
  stop.max_evaluations = 95;
  CHECK(run(c, sphere, stop).evaluations == 100);
  stop = {};
  stop.target_fitness = 1e-3;
  const auto r = run(c, sphere, stop);
  CHECK(r.best_fitness <= 1e-3);
  CHECK(r.final_state.iteration < c.max_iterations);
}

TEST_CASE("Rosenbrock-10 reaches 1e-6 within 60000 evaluations on at least 2 of 3 seeds") {
  int solved = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto c = config(10, 20, seed);
    c.max_iterations = 3000;
    StopCriteria stop;
    stop.max_evaluations = 60000;
    stop.target_fitness = 1e-6;
    if (run(c, rosenbrock, stop).best_fitness < 1e-6) ++solved;
  }
  CHECK(solved >= 2);
}

TEST_CASE("rank-based updates are invariant to exp(f)") {
  auto c = config(6, 12, 77);
  c.initial_mean = Eigen::VectorXd::Constant(6, 0.5);
  auto a = init(c), b = init(c);
  for (int it = 0; it < 50; ++it) {
    auto ca = ask(a), cb = ask(b);
    for (int i = 0; i < 12; ++i) {
      ca[i].fitness = rosenbrock(ca[i].point);
      cb[i].fitness = std::exp(rosenbrock(cb[i].point) / 1e3);
    }
    tell(a, ca);
    tell(b, cb);
    REQUIRE(a.mean == b.mean);
    REQUIRE(a.covariance == b.covariance);
    REQUIRE(a.step_size == b.step_size);
  }
}

TEST_CASE("diagonal mode keeps off-diagonals at exactly zero") {
  auto c = config(8, 20, 6);
  c.covariance_mode = CovarianceMode::Diagonal;
  auto s = init(c);
  for (int it = 0; it < 100; ++it) {
    auto cand = ask(s);
    for (auto& x : cand) x.fitness = rosenbrock(x.point);
    tell(s, cand);
    const Eigen::MatrixXd full = s.covariance_matrix();
    const Eigen::MatrixXd off = full - Eigen::MatrixXd(full.diagonal().asDiagonal());
    REQUIRE(off.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(s.diagonal.minCoeff() > 0.0);
  }
}

TEST_CASE("covariance repair is counted, second failure raises") {
  auto s = init(config(3, 6));
  s.covariance = Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal();  // singular, fixable
  CHECK_NOTHROW(ask(s));
  CHECK(s.repairs == 1);
  CHECK(s.min_eigenvalue > 0.0);

  auto broken = init(config(3, 6));
  broken.covariance = Eigen::Vector3d(1.0, 1.0, -1.0).asDiagonal();
  CHECK(kind_of([&] { ask(broken); }) == ErrorKind::NumericalFailure);
}

TEST_CASE("trace CSV carries the constants and min_eig only in full mode") {
  auto c = config(3, 6);
  c.max_iterations = 2;
  const auto r = run(c, sphere);
  std::ostringstream full;
  write_trace_csv(full, r.final_state.params, CovarianceMode::Full, r.trace);
  CHECK(full.str().rfind("# mode=full lambda=6 mu=3", 0) == 0);
  CHECK(full.str().find("sigma,min_eig\n") != std::string::npos);
  std::ostringstream diag;
  write_trace_csv(diag, r.final_state.params, CovarianceMode::Diagonal, r.trace);
  CHECK(diag.str().find("min_eig") == std::string::npos);
}

}  // TEST_SUITE
