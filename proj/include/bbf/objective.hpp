#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace bbf {

/// Softmax output over C classes.
using Confidence = Eigen::VectorXd;

struct Scored {
  Confidence confidence;
  int label = 0;
};

/// Forgotten / memorized split of the label space.
class ClassPartition {
 public:
  ClassPartition() = default;
  /// Memorized classes are the complement of `forgotten` in [0, num_classes).
  ClassPartition(int num_classes, std::vector<int> forgotten);

  /// The first round(ratio * C) classes are forgotten.
  static ClassPartition first_fraction(int num_classes, double ratio);

  int num_classes() const { return static_cast<int>(is_forgotten_.size()); }
  const std::vector<int>& forgotten() const { return forgotten_; }
  const std::vector<int>& memorized() const { return memorized_; }
  bool is_forgotten(int label) const;

  /// Both sides non-empty; throws InvalidConfig otherwise.
  void require_both_sides() const;

  bool operator==(const ClassPartition&) const = default;

 private:
  std::vector<int> forgotten_;
  std::vector<int> memorized_;
  std::vector<bool> is_forgotten_;
};

struct LossConfig {
  double forget_weight = 1.0;
  double clamp_epsilon = 1e-12;
  double temperature = 0.07;

  void validate() const;
};

struct Metrics {
  double err_for = 0.0;
  double acc_mem = 0.0;
  double h = 0.0;
};

/// Throws InvalidConfidence unless p is a probability vector (sum within 1e-6).
void check_confidence(const Confidence& p);

/// -log(max(p[label], eps)).
double loss_memorize(const Confidence& p, int label, double eps = 1e-12);

/// -(1/C) sum_i log(max(p_i, eps)). Equals ln C exactly at the uniform vector
/// and is larger everywhere else.
double loss_forget(const Confidence& p, double eps = 1e-12);

/// d loss_memorize / d logits where p = softmax(logits); zero when the clamp is active.
Eigen::VectorXd memorize_logit_gradient(const Confidence& p, int label, double eps = 1e-12);
/// d loss_forget / d logits; vanishes exactly at the uniform vector.
Eigen::VectorXd forget_logit_gradient(const Confidence& p, double eps = 1e-12);

/// mean memorize loss over memorized-class samples
///   + forget_weight * mean forget loss over forgotten-class samples.
/// A side with no samples contributes 0.
double loss_total(std::span<const Scored> batch, const ClassPartition& partition,
                  const LossConfig& config);

/// Zero-shot class-embedding objective:
///   log( exp(<z_c, z>/tau) / sum_i exp(<z_i, z>/tau) ),
/// the sum running over the memorized-class embeddings only. All vectors are
/// L2-normalised first.
double loss_c_emb(const Eigen::VectorXd& z, const Eigen::VectorXd& z_c,
                  std::span<const Eigen::VectorXd> others, double tau);

double harmonic_mean(double a, double b);

/// Percentages. Predictions are argmax over all C classes.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        const ClassPartition& partition);

int argmax(const Confidence& p);

Metrics metrics_from_scored(std::span<const Scored> scored, const ClassPartition& partition);

}  // namespace bbf
