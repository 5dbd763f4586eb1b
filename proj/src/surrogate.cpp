#include "bbf/surrogate.hpp"

#include <cmath>
#include <string>

#include "bbf/error.hpp"
#include "bbf/rng.hpp"

namespace bbf {

namespace {

const char* const kCifar10Names[] = {"airplane", "automobile", "bird",  "cat",  "deer",
                                     "dog",      "frog",       "horse", "ship", "truck"};

Eigen::MatrixXd gaussian(Rng& rng, int rows, int cols, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal(0.0, stddev);
  return m;
}

void check_contexts(const SurrogateSpec& spec, const PromptContexts& contexts) {
  if (contexts.rows() < 1 || contexts.cols() != spec.params.D)
    throw Error(ErrorKind::ShapeMismatch, "contexts are " + std::to_string(contexts.rows()) + "x" +
                                              std::to_string(contexts.cols()) + ", expected mx" +
                                              std::to_string(spec.params.D));
}

// Forward pass for one class, keeping the intermediates the gradient needs.
struct TextForward {
  Eigen::VectorXd hidden;  // u = tanh(W1 h)
  Eigen::VectorXd out;     // v = tanh(W2 u)
  Eigen::VectorXd unit;    // t = v / |v|
  double norm = 0.0;
};

TextForward text_forward(const SurrogateSpec& spec, const Eigen::VectorXd& context_sum,
                         double count, int c) {
  TextForward f;
  const Eigen::VectorXd h = (context_sum + spec.class_tokens.row(c).transpose()) / count;
  f.hidden = (spec.w1 * h).array().tanh();
  f.out = (spec.w2 * f.hidden).array().tanh();
  f.norm = f.out.norm();
  if (!(f.norm > 0.0)) throw Error(ErrorKind::NumericalFailure, "degenerate class embedding");
  f.unit = f.out / f.norm;
  return f;
}

const SplitData& checked_split(const FeatureStore& store, Split split, std::span<const int> indices) {
  const SplitData& data = store.split(split);
  const int n = static_cast<int>(data.labels.size());
  for (int i : indices)
    if (i < 0 || i >= n)
      throw Error(ErrorKind::IndexOutOfRange, "sample index " + std::to_string(i) + " outside " +
                                                  std::string(to_string(split)) + " split of size " +
                                                  std::to_string(n));
  return data;
}

std::vector<Scored> score_against(const Eigen::MatrixXd& text, double logit_scale,
                                  const SplitData& data, std::span<const int> indices) {
  std::vector<Scored> out;
  out.reserve(indices.size());
  for (int i : indices) {
    const Eigen::VectorXd logits = logit_scale * (text * data.features.row(i).transpose());
    out.push_back({softmax(logits), data.labels[i]});
  }
  return out;
}

}  // namespace

void SurrogateParams::validate() const {
  if (D < 1 || H < 1 || F < 1 || m < 1)
    throw Error(ErrorKind::InvalidConfig, "surrogate dimensions must be positive");
  if (C < 2) throw Error(ErrorKind::InvalidConfig, "surrogate needs C >= 2 to partition classes");
  if (!(token_scale > 0.0) || !(logit_scale > 0.0) || !(noise_scale >= 0.0))
    throw Error(ErrorKind::InvalidConfig, "surrogate scales must be positive");
}

SurrogateSpec SurrogateSpec::generate(const SurrogateParams& params) {
  params.validate();
  SurrogateSpec spec;
  spec.params = params;
  for (int c = 0; c < params.C; ++c)
    spec.class_names.push_back(params.C == 10 ? kCifar10Names[c] : "class_" + std::to_string(c));
  Rng rng(params.seed);
  spec.class_tokens = gaussian(rng, params.C, params.D, params.token_scale);
  spec.w1 = gaussian(rng, params.H, params.D, 1.0 / std::sqrt(params.D));
  spec.w2 = gaussian(rng, params.F, params.H, 1.0 / std::sqrt(params.H));
  // The reference prompt plays the role of a generic initialisation phrase;
  // its tokens share the class-token statistics.
  spec.reference_contexts = gaussian(rng, params.m, params.D, params.token_scale);
  return spec;
}

Eigen::VectorXd surrogate_text_embed(const SurrogateSpec& spec, const PromptContexts& contexts, int c) {
  check_contexts(spec, contexts);
  if (c < 0 || c >= spec.params.C)
    throw Error(ErrorKind::IndexOutOfRange, "class " + std::to_string(c) + " out of range");
  const Eigen::VectorXd sum = contexts.colwise().sum().transpose();
  return text_forward(spec, sum, contexts.rows() + 1.0, c).unit;
}

Eigen::MatrixXd surrogate_text_embeddings(const SurrogateSpec& spec, const PromptContexts& contexts) {
  check_contexts(spec, contexts);
  const Eigen::VectorXd sum = contexts.colwise().sum().transpose();
  Eigen::MatrixXd t(spec.params.C, spec.params.F);
  for (int c = 0; c < spec.params.C; ++c)
    t.row(c) = text_forward(spec, sum, contexts.rows() + 1.0, c).unit.transpose();
  return t;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

FeatureStore surrogate_generate_data(const SurrogateSpec& spec, int k, int n_test, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::InvalidK, "k must be >= 1");
  if (n_test < 1) throw Error(ErrorKind::InvalidK, "n_test must be >= 1");
  const auto& p = spec.params;
  const Eigen::MatrixXd reference = surrogate_text_embeddings(spec, spec.reference_contexts);
  FeatureStore store;
  store.F = p.F;
  store.classes = spec.class_names;
  Rng rng(seed);
  const int counts[3] = {k, k, n_test};
  for (int s = 0; s < 3; ++s) {
    SplitData& data = store.splits[s];
    data.features.resize(static_cast<Eigen::Index>(counts[s]) * p.C, p.F);
    data.labels.clear();
    Eigen::Index row = 0;
    for (int c = 0; c < p.C; ++c) {
      for (int j = 0; j < counts[s]; ++j, ++row) {
        Eigen::VectorXd x = reference.row(c).transpose();
        for (int f = 0; f < p.F; ++f) x[f] += rng.normal(0.0, p.noise_scale);
        data.features.row(row) = x.normalized().transpose();
        data.labels.push_back(c);
      }
    }
  }
  return store;
}

std::vector<Scored> surrogate_score(const SurrogateSpec& spec, const FeatureStore& store,
                                    const PromptContexts& contexts, Split split,
                                    std::span<const int> indices) {
  const SplitData& data = checked_split(store, split, indices);
  return score_against(surrogate_text_embeddings(spec, contexts), spec.params.logit_scale, data, indices);
}

Eigen::MatrixXd surrogate_analytic_gradient(const SurrogateSpec& spec, const FeatureStore& store,
                                            const PromptContexts& contexts, Split split,
                                            std::span<const int> indices,
                                            const ClassPartition& partition,
                                            const LossConfig& loss) {
  check_contexts(spec, contexts);
  const SplitData& data = checked_split(store, split, indices);
  if (indices.empty()) throw Error(ErrorKind::EmptyBatch, "gradient over an empty batch");
  const auto& p = spec.params;
  const double count = contexts.rows() + 1.0;
  const Eigen::VectorXd sum = contexts.colwise().sum().transpose();

  std::vector<TextForward> fwd;
  Eigen::MatrixXd text(p.C, p.F);
  for (int c = 0; c < p.C; ++c) {
    fwd.push_back(text_forward(spec, sum, count, c));
    text.row(c) = fwd.back().unit.transpose();
  }

  int n_mem = 0, n_forget = 0;
  for (int i : indices) (partition.is_forgotten(data.labels[i]) ? n_forget : n_mem)++;

  // dL/dt_c accumulated over the batch.
  Eigen::MatrixXd grad_text = Eigen::MatrixXd::Zero(p.C, p.F);
  for (int i : indices) {
    const Eigen::VectorXd x = data.features.row(i).transpose();
    const Eigen::VectorXd prob = softmax(p.logit_scale * (text * x));
    const int label = data.labels[i];
    Eigen::VectorXd g_logits;
    if (partition.is_forgotten(label)) {
      g_logits = forget_logit_gradient(prob, loss.clamp_epsilon) * (loss.forget_weight / n_forget);
    } else {
      g_logits = memorize_logit_gradient(prob, label, loss.clamp_epsilon) / n_mem;
    }
    grad_text.noalias() += p.logit_scale * g_logits * x.transpose();
  }

  // Back through normalisation, both tanh layers and the mean pooling. Every
  // context row receives the same gradient.
  Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(p.D);
  for (int c = 0; c < p.C; ++c) {
    const auto& f = fwd[c];
    const Eigen::VectorXd gt = grad_text.row(c).transpose();
    const Eigen::VectorXd gv = (gt - f.unit * f.unit.dot(gt)) / f.norm;
    const Eigen::VectorXd ga2 = gv.array() * (1.0 - f.out.array().square());
    const Eigen::VectorXd gu = spec.w2.transpose() * ga2;
    const Eigen::VectorXd ga1 = gu.array() * (1.0 - f.hidden.array().square());
    grad_sum += spec.w1.transpose() * ga1;
  }
  grad_sum /= count;
  Eigen::MatrixXd grad(contexts.rows(), contexts.cols());
  grad.rowwise() = grad_sum.transpose();
  return grad;
}

SurrogateOracle::SurrogateOracle(SurrogateSpec spec, FeatureStore store)
    : spec_(std::move(spec)), store_(std::move(store)) {
  if (store_.F != spec_.params.F)
    throw Error(ErrorKind::OracleMismatch, "feature dimension " + std::to_string(store_.F) +
                                               " does not match surrogate F=" +
                                               std::to_string(spec_.params.F));
  if (store_.num_classes() != spec_.params.C)
    throw Error(ErrorKind::OracleMismatch, "feature store has " + std::to_string(store_.num_classes()) +
                                               " classes, surrogate has " + std::to_string(spec_.params.C));
  meta_.D = spec_.params.D;
  meta_.C = spec_.params.C;
  meta_.classes = spec_.class_names;
  meta_.m = spec_.params.m;
  meta_.train = static_cast<int>(store_.split(Split::Train).labels.size());
  meta_.val = static_cast<int>(store_.split(Split::Val).labels.size());
  meta_.test = static_cast<int>(store_.split(Split::Test).labels.size());
}

std::vector<Scored> SurrogateOracle::score(const PromptContexts& contexts, Split split,
                                           std::span<const int> indices) const {
  return surrogate_score(spec_, store_, contexts, split, indices);
}

Eigen::MatrixXd SurrogateOracle::loss_gradient(const PromptContexts& contexts, Split split,
                                               std::span<const int> indices,
                                               const ClassPartition& partition,
                                               const LossConfig& loss) const {
  return surrogate_analytic_gradient(spec_, store_, contexts, split, indices, partition, loss);
}

Eigen::MatrixXd SurrogateOracle::class_embeddings(const PromptContexts& contexts) const {
  return surrogate_text_embeddings(spec_, contexts);
}

std::vector<Scored> SurrogateOracle::score_with_overrides(
    const PromptContexts& contexts, const std::map<int, Eigen::VectorXd>& overrides, Split split,
    std::span<const int> indices) const {
  const SplitData& data = checked_split(store_, split, indices);
  Eigen::MatrixXd text = surrogate_text_embeddings(spec_, contexts);
  for (const auto& [c, z] : overrides) {
    if (c < 0 || c >= spec_.params.C)
      throw Error(ErrorKind::IndexOutOfRange, "override for unknown class " + std::to_string(c));
    if (z.size() != spec_.params.F)
      throw Error(ErrorKind::DimensionMismatch, "override embedding has wrong dimension");
    text.row(c) = z.normalized().transpose();
  }
  return score_against(text, spec_.params.logit_scale, data, indices);
}

double zero_shot_accuracy(const SurrogateSpec& spec, const FeatureStore& store) {
  const Eigen::MatrixXd text = surrogate_text_embeddings(spec, spec.reference_contexts);
  const SplitData& test = store.split(Split::Test);
  long correct = 0;
  for (Eigen::Index i = 0; i < test.features.rows(); ++i) {
    Eigen::Index best = 0;
    (text * test.features.row(i).transpose()).maxCoeff(&best);
    correct += best == test.labels[i];
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.labels.size());
}

double calibrate_noise_scale(SurrogateParams params, int k, int n_test, std::uint64_t data_seed,
                             double target_accuracy) {
  double lo = 0.0, hi = 1.0;
  SurrogateSpec spec = SurrogateSpec::generate(params);
  auto accuracy_at = [&](double s) {
    spec.params.noise_scale = s;
    return zero_shot_accuracy(spec, surrogate_generate_data(spec, k, n_test, data_seed));
  };
  while (accuracy_at(hi) > target_accuracy && hi < 1e3) hi *= 2.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (accuracy_at(mid) > target_accuracy ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error(ErrorKind::InvalidConfig, "unknown split '" + std::string(name) + "'");
}

int OracleMeta::split_size(Split split) const {
  switch (split) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return 0;
}

std::vector<int> all_indices(const OracleMeta& meta, Split split) {
  std::vector<int> idx(meta.split_size(split));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace bbf
