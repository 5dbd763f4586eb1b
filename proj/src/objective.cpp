#include "bbf/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bbf/error.hpp"

namespace bbf {

ClassPartition::ClassPartition(int num_classes, std::vector<int> forgotten)
    : is_forgotten_(num_classes > 0 ? num_classes : 0, false) {
  if (num_classes < 1) throw Error(ErrorKind::InvalidConfig, "partition needs at least one class");
  for (int c : forgotten) {
    if (c < 0 || c >= num_classes)
      throw Error(ErrorKind::LabelOutOfRange, "forgotten class " + std::to_string(c) +
                                                  " outside [0, " + std::to_string(num_classes) + ")");
    if (is_forgotten_[c])
      throw Error(ErrorKind::InvalidConfig, "class " + std::to_string(c) + " listed twice");
    is_forgotten_[c] = true;
  }
  for (int c = 0; c < num_classes; ++c) (is_forgotten_[c] ? forgotten_ : memorized_).push_back(c);
}

ClassPartition ClassPartition::first_fraction(int num_classes, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw Error(ErrorKind::InvalidConfig, "forget ratio must lie in [0, 1]");
  const int n = static_cast<int>(std::lround(ratio * num_classes));
  std::vector<int> forgotten(n);
  for (int i = 0; i < n; ++i) forgotten[i] = i;
  return ClassPartition(num_classes, std::move(forgotten));
}

bool ClassPartition::is_forgotten(int label) const {
  if (label < 0 || label >= num_classes())
    throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                std::to_string(num_classes()) + ")");
  return is_forgotten_[label];
}

void ClassPartition::require_both_sides() const {
  if (forgotten_.empty() || memorized_.empty())
    throw Error(ErrorKind::InvalidConfig,
                "partition needs at least one forgotten and one memorized class");
}

void LossConfig::validate() const {
  if (!(forget_weight >= 0.0)) throw Error(ErrorKind::InvalidConfig, "forget_weight must be >= 0");
  if (!(clamp_epsilon > 0.0)) throw Error(ErrorKind::InvalidConfig, "clamp_epsilon must be > 0");
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be > 0");
}

void check_confidence(const Confidence& p) {
  if (p.size() == 0) throw Error(ErrorKind::InvalidConfidence, "empty confidence vector");
  if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0)
    throw Error(ErrorKind::InvalidConfidence, "confidence entries must lie in [0, 1]");
  if (std::abs(p.sum() - 1.0) > 1e-6)
    throw Error(ErrorKind::InvalidConfidence, "confidences sum to " + std::to_string(p.sum()));
}

double loss_memorize(const Confidence& p, int label, double eps) {
  check_confidence(p);
  if (label < 0 || label >= p.size())
    throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                std::to_string(p.size()) + ")");
  return -std::log(std::max(p[label], eps));
}

double loss_forget(const Confidence& p, double eps) {
  check_confidence(p);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) sum += std::log(std::max(p[i], eps));
  return -sum / static_cast<double>(p.size());
}

Eigen::VectorXd memorize_logit_gradient(const Confidence& p, int label, double eps) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  if (p[label] < eps) return g;
  g = p;
  g[label] -= 1.0;
  return g;
}

Eigen::VectorXd forget_logit_gradient(const Confidence& p, double eps) {
  // d/dl_j of -(1/C) sum_{i: p_i >= eps} log p_i = -(1/C) (1[p_j >= eps] - n_active p_j)
  const double c = static_cast<double>(p.size());
  Eigen::VectorXd g(p.size());
  int active = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) active += p[i] >= eps;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    g[j] = -((p[j] >= eps ? 1.0 : 0.0) - active * p[j]) / c;
  return g;
}

double loss_total(std::span<const Scored> batch, const ClassPartition& partition,
                  const LossConfig& config) {
  if (batch.empty()) throw Error(ErrorKind::EmptyBatch, "loss over an empty batch");
  double mem = 0.0, forget = 0.0;
  int n_mem = 0, n_forget = 0;
  for (const auto& s : batch) {
    if (s.confidence.size() != partition.num_classes())
      throw Error(ErrorKind::LabelOutOfRange, "confidence length does not match class count");
    if (partition.is_forgotten(s.label)) {
      forget += loss_forget(s.confidence, config.clamp_epsilon);
      ++n_forget;
    } else {
      mem += loss_memorize(s.confidence, s.label, config.clamp_epsilon);
      ++n_mem;
    }
  }
  const double mem_term = n_mem ? mem / n_mem : 0.0;
  const double forget_term = n_forget ? forget / n_forget : 0.0;
  return mem_term + config.forget_weight * forget_term;
}

double loss_c_emb(const Eigen::VectorXd& z, const Eigen::VectorXd& z_c,
                  std::span<const Eigen::VectorXd> others, double tau) {
  if (others.empty()) throw Error(ErrorKind::EmptyOthers, "no memorized-class embeddings");
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be > 0");
  if (z.size() == 0 || z_c.size() != z.size())
    throw Error(ErrorKind::DimensionMismatch, "embedding dimensions differ");
  const Eigen::VectorXd zn = z.normalized();
  const double numerator = z_c.normalized().dot(zn) / tau;
  std::vector<double> logits;
  logits.reserve(others.size());
  for (const auto& o : others) {
    if (o.size() != z.size()) throw Error(ErrorKind::DimensionMismatch, "embedding dimensions differ");
    logits.push_back(o.normalized().dot(zn) / tau);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  return numerator - (top + std::log(sum));
}

double harmonic_mean(double a, double b) { return a + b == 0.0 ? 0.0 : 2.0 * a * b / (a + b); }

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        const ClassPartition& partition) {
  if (predictions.size() != labels.size())
    throw Error(ErrorKind::ShapeMismatch, "predictions and labels differ in length");
  long n_forget = 0, forget_correct = 0, n_mem = 0, mem_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool correct = predictions[i] == labels[i];
    if (partition.is_forgotten(labels[i])) {
      ++n_forget;
      forget_correct += correct;
    } else {
      ++n_mem;
      mem_correct += correct;
    }
  }
  if (n_forget == 0 || n_mem == 0)
    throw Error(ErrorKind::EmptySplit, "metrics need samples from both forgotten and memorized classes");
  Metrics m;
  m.err_for = 100.0 * (1.0 - static_cast<double>(forget_correct) / n_forget);
  m.acc_mem = 100.0 * static_cast<double>(mem_correct) / n_mem;
  m.h = harmonic_mean(m.err_for, m.acc_mem);
  return m;
}

int argmax(const Confidence& p) {
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<int>(best);
}

Metrics metrics_from_scored(std::span<const Scored> scored, const ClassPartition& partition) {
  std::vector<int> predictions, labels;
  predictions.reserve(scored.size());
  labels.reserve(scored.size());
  for (const auto& s : scored) {
    predictions.push_back(argmax(s.confidence));
    labels.push_back(s.label);
  }
  return compute_metrics(predictions, labels, partition);
}

}  // namespace bbf
