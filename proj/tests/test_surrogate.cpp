#include <doctest.h>

#include <cmath>

#include "bbf/error.hpp"
#include "support.hpp"
#include "bbf/rng.hpp"
#include "bbf/serialize.hpp"
#include "bbf/surrogate.hpp"

using namespace bbf;

namespace {

SurrogateParams small_params(std::uint64_t seed) {
  SurrogateParams p;
  p.D = 6;
  p.H = 5;
  p.F = 4;
  p.C = 4;
  p.m = 2;
  p.logit_scale = 10.0;
  p.noise_scale = 0.3;
  p.seed = seed;
  return p;
}

Eigen::MatrixXd random_matrix(int r, int c, double s, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, s);
  return m;
}

double loss_at(const SurrogateOracle& o, const PromptContexts& P, const std::vector<int>& idx,
               const ClassPartition& part, const LossConfig& cfg) {
  const auto scored = o.score(P, Split::Train, idx);
  return loss_total(scored, part, cfg);
}

}  // namespace

TEST_SUITE("surrogate") {

TEST_CASE("text embeddings are unit vectors and share the prompt") {
  const auto spec = SurrogateSpec::generate(SurrogateParams{});
  Rng rng(1);
  const auto P = random_matrix(4, 64, 0.05, rng);
  const auto t = surrogate_text_embeddings(spec, P);
  for (int c = 0; c < 10; ++c) {
    CHECK(t.row(c).norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(surrogate_text_embed(spec, P, c) == t.row(c).transpose());
  }
  auto Q = P;
  Q(0, 3) += 0.1;
  const auto t2 = surrogate_text_embeddings(spec, Q);
  for (int c = 0; c < 10; ++c) CHECK((t2.row(c) - t.row(c)).norm() > 0.0);

  CHECK(kind_of([&] { surrogate_text_embed(spec, Eigen::MatrixXd::Zero(4, 63), 0); }) ==
        ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { surrogate_text_embed(spec, P, 10); }) == ErrorKind::IndexOutOfRange);
}

TEST_CASE("hand-computed 2x2 instance") {
  SurrogateSpec spec;
  spec.params.D = 2;
  spec.params.H = 2;
  spec.params.F = 2;
  spec.params.C = 2;
  spec.params.m = 1;
  spec.class_tokens.resize(2, 2);
  spec.class_tokens << 0.2, -0.4, 0.0, 0.6;
  spec.w1.resize(2, 2);
  spec.w1 << 1.0, 0.5, -0.3, 2.0;
  spec.w2.resize(2, 2);
  spec.w2 << 0.7, -1.0, 1.5, 0.2;
  Eigen::MatrixXd P(1, 2);
  P << 0.4, 0.2;

  // class 0: h = ((0.4, 0.2) + (0.2, -0.4)) / 2 = (0.3, -0.1)
  const double u0 = std::tanh(1.0 * 0.3 + 0.5 * -0.1), u1 = std::tanh(-0.3 * 0.3 + 2.0 * -0.1);
  const double v0 = std::tanh(0.7 * u0 - 1.0 * u1), v1 = std::tanh(1.5 * u0 + 0.2 * u1);
  const double n = std::hypot(v0, v1);
  const auto t = surrogate_text_embed(spec, P, 0);
  CHECK(t[0] == doctest::Approx(v0 / n).epsilon(1e-14));
  CHECK(t[1] == doctest::Approx(v1 / n).epsilon(1e-14));
}

TEST_CASE("scalar softmax") {
  const auto p = softmax(Eigen::Vector2d(9.0, 8.0));
  CHECK(p[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.268941).epsilon(1e-6));
  CHECK(softmax(Eigen::Vector3d(1000, 0, -1000)).allFinite());
}

TEST_CASE("scores are probabilities, self-similar features win, calls are pure") {
  const auto spec = SurrogateSpec::generate(SurrogateParams{});
  auto store = surrogate_generate_data(spec, 4, 5, 3);
  const auto text = surrogate_text_embeddings(spec, spec.reference_contexts);
  for (int c = 0; c < 10; ++c) store.split(Split::Test).features.row(c * 5) = text.row(c);
  const SurrogateOracle oracle(spec, store);
  const auto idx = all_indices(oracle.meta(), Split::Test);
  const auto a = oracle.score(spec.reference_contexts, Split::Test, idx);
  const auto b = oracle.score(spec.reference_contexts, Split::Test, idx);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].confidence.sum() - 1.0) < 1e-6);
    CHECK(a[i].confidence == b[i].confidence);
    CHECK(a[i].label == b[i].label);
  }
  for (int c = 0; c < 10; ++c) CHECK(argmax(a[c * 5].confidence) == c);
  const std::vector<int> bad{50};
  CHECK(kind_of([&] { oracle.score(spec.reference_contexts, Split::Test, bad); }) ==
        ErrorKind::IndexOutOfRange);
}

TEST_CASE("few-shot splits have the configured sizes and are deterministic") {
  const auto spec = SurrogateSpec::generate(SurrogateParams{});
  const auto a = surrogate_generate_data(spec, 16, 100, 0);
  const auto b = surrogate_generate_data(spec, 16, 100, 0);
  CHECK(a.split(Split::Train).labels.size() == 160);
  CHECK(a.split(Split::Val).labels.size() == 160);
  CHECK(a.split(Split::Test).labels.size() == 1000);
  for (int s = 0; s < 3; ++s) CHECK(a.splits[s].features == b.splits[s].features);
  CHECK(a.split(Split::Train).features != a.split(Split::Val).features);
  CHECK(kind_of([&] { surrogate_generate_data(spec, 0, 10, 0); }) == ErrorKind::InvalidK);
}

TEST_CASE("noise limits of zero-shot accuracy") {
  auto p = SurrogateParams{};
  p.noise_scale = 0.0;
  auto spec = SurrogateSpec::generate(p);
  CHECK(zero_shot_accuracy(spec, surrogate_generate_data(spec, 2, 50, 0)) == 100.0);

  spec.params.noise_scale = 1e3;
  const double acc = zero_shot_accuracy(spec, surrogate_generate_data(spec, 2, 1000, 0));
  CHECK(acc > 7.0);
  CHECK(acc < 13.0);
}

TEST_CASE("default noise puts zero-shot accuracy in the calibrated band") {
  const auto spec = SurrogateSpec::generate(SurrogateParams{});
  for (std::uint64_t seed : {0, 1, 2}) {
    const double acc = zero_shot_accuracy(spec, surrogate_generate_data(spec, 16, 100, seed));
    CAPTURE(seed);
    CHECK(acc >= 60.0);
    CHECK(acc <= 90.0);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = SurrogateSpec::generate(small_params(100 + trial));
    const SurrogateOracle oracle(spec, surrogate_generate_data(spec, 3, 2, trial));
    const ClassPartition part(4, {0, 1});
    LossConfig cfg;
    cfg.forget_weight = 0.5 + rng.uniform();
    const auto idx = all_indices(oracle.meta(), Split::Train);
    const Eigen::MatrixXd P = spec.reference_contexts + random_matrix(2, 6, 0.3, rng);
    const auto g = oracle.loss_gradient(P, Split::Train, idx, part, cfg);
    Eigen::MatrixXd fd(2, 6);
    const double h = 1e-4;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 6; ++j) {
        Eigen::MatrixXd plus = P, minus = P;
        plus(i, j) += h;
        minus(i, j) -= h;
        fd(i, j) = (loss_at(oracle, plus, idx, part, cfg) - loss_at(oracle, minus, idx, part, cfg)) / (2 * h);
      }
    CAPTURE(trial);
    CHECK((g - fd).norm() / fd.norm() < 1e-4);
  }
}

TEST_CASE("gradient is linear in the forget weight") {
  const auto spec = SurrogateSpec::generate(small_params(7));
  const SurrogateOracle oracle(spec, surrogate_generate_data(spec, 3, 2, 7));
  const ClassPartition part(4, {0, 1});
  const auto idx = all_indices(oracle.meta(), Split::Train);
  LossConfig cfg;
  auto grad_at = [&](double w) {
    cfg.forget_weight = w;
    return oracle.loss_gradient(spec.reference_contexts, Split::Train, idx, part, cfg);
  };
  const Eigen::MatrixXd g0 = grad_at(0.0), g1 = grad_at(1.0), g2 = grad_at(2.0);
  CHECK(((g2 - g0) - 2.0 * (g1 - g0)).norm() < 1e-12 * (1.0 + g2.norm()));
}

TEST_CASE("identity overrides leave scores unchanged") {
  const auto spec = SurrogateSpec::generate(SurrogateParams{});
  const SurrogateOracle oracle(spec, surrogate_generate_data(spec, 2, 3, 1));
  const auto idx = all_indices(oracle.meta(), Split::Val);
  const auto text = oracle.class_embeddings(spec.reference_contexts);
  std::map<int, Eigen::VectorXd> same{{2, 5.0 * text.row(2).transpose()}};
  const auto a = oracle.score(spec.reference_contexts, Split::Val, idx);
  const auto b = oracle.score_with_overrides(spec.reference_contexts, same, Split::Val, idx);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].confidence - b[i].confidence).cwiseAbs().maxCoeff() < 1e-12);
  std::map<int, Eigen::VectorXd> wrong{{2, Eigen::VectorXd::Ones(3)}};
  CHECK(kind_of([&] { oracle.score_with_overrides(spec.reference_contexts, wrong, Split::Val, idx); }) ==
        ErrorKind::DimensionMismatch);
}

TEST_CASE("surrogate and feature files round trip exactly") {
  const auto spec = SurrogateSpec::generate(small_params(3));
  const auto back = surrogate_from_json(json::parse(to_json(spec).dump()));
  CHECK(back.w1 == spec.w1);
  CHECK(back.w2 == spec.w2);
  CHECK(back.class_tokens == spec.class_tokens);
  CHECK(back.reference_contexts == spec.reference_contexts);
  CHECK(back.class_names == spec.class_names);

  const auto store = surrogate_generate_data(spec, 3, 4, 9);
  const auto loaded = features_from_json(json::parse(to_json(store).dump()), 3, 0);
  for (int s = 0; s < 3; ++s) {
    CHECK(loaded.splits[s].features == store.splits[s].features);
    CHECK(loaded.splits[s].labels == store.splits[s].labels);
  }
}

TEST_CASE("feature files without validation samples are split k-shot") {
  json doc = {{"F", 2}, {"classes", {"a", "b"}}, {"samples", json::array()}};
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 5; ++i)
      doc["samples"].push_back({{"class", c}, {"split", "train"}, {"feature", {1.0 * i, 1.0 * c}}});
    doc["samples"].push_back({{"class", c}, {"split", "test"}, {"feature", {0.5, 0.5}}});
  }
  const auto a = features_from_json(doc, 2, 4);
  const auto b = features_from_json(doc, 2, 4);
  CHECK(a.split(Split::Train).labels == std::vector<int>{0, 0, 1, 1});
  CHECK(a.split(Split::Val).labels == std::vector<int>{0, 0, 1, 1});
  CHECK(a.split(Split::Test).labels.size() == 2);
  CHECK(a.split(Split::Train).features == b.split(Split::Train).features);
  // Train and val rows of a class never repeat a pool entry.
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(a.split(Split::Train).features(2 * c + i, 0) != a.split(Split::Val).features(2 * c + j, 0));
  CHECK(kind_of([&] { features_from_json(doc, 3, 4); }) == ErrorKind::InvalidK);

  doc["samples"][0]["feature"] = {1.0};
  CHECK(kind_of([&] { features_from_json(doc, 2, 4); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("invalid surrogate parameters") {
  auto p = SurrogateParams{};
  p.C = 1;
  CHECK(kind_of([&] { SurrogateSpec::generate(p); }) == ErrorKind::InvalidConfig);
  p = SurrogateParams{};
  p.D = 0;
  CHECK(kind_of([&] { SurrogateSpec::generate(p); }) == ErrorKind::InvalidConfig);
}

}  // TEST_SUITE
