#pragma once

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bbf/objective.hpp"
#include "bbf/parametrization.hpp"

namespace bbf {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct OracleMeta {
  int version = 1;
  int D = 0;
  int C = 0;
  std::vector<std::string> classes;
  int m = 0;
  int train = 0;
  int val = 0;
  int test = 0;

  int split_size(Split split) const;
  bool operator==(const OracleMeta&) const = default;
};

/// The black-box boundary: prompt contexts in, per-class confidences out.
/// Implementations are pure (identical arguments give identical results) and
/// must tolerate concurrent score calls.
class ScoringOracle {
 public:
  virtual ~ScoringOracle() = default;
  virtual const OracleMeta& meta() const = 0;
  /// Indices address samples within `split`. Contexts may have any number of
  /// rows >= 1; columns must equal meta().D.
  virtual std::vector<Scored> score(const PromptContexts& contexts, Split split,
                                    std::span<const int> indices) const = 0;
};

/// Optional white-box capability, only available on the in-process surrogate.
class WhiteBoxOracle {
 public:
  virtual ~WhiteBoxOracle() = default;
  /// d loss_total / d contexts, same shape as `contexts`.
  virtual Eigen::MatrixXd loss_gradient(const PromptContexts& contexts, Split split,
                                        std::span<const int> indices,
                                        const ClassPartition& partition,
                                        const LossConfig& loss) const = 0;
};

/// Optional capability used by the class-embedding (zero-shot) forgetting mode.
class ClassEmbeddingOracle {
 public:
  virtual ~ClassEmbeddingOracle() = default;
  /// C x F matrix of unit class embeddings under `contexts`.
  virtual Eigen::MatrixXd class_embeddings(const PromptContexts& contexts) const = 0;
  /// Scores with the listed class embeddings replaced (after L2 normalisation).
  virtual std::vector<Scored> score_with_overrides(
      const PromptContexts& contexts, const std::map<int, Eigen::VectorXd>& overrides,
      Split split, std::span<const int> indices) const = 0;
};

/// All indices of a split, in order.
std::vector<int> all_indices(const OracleMeta& meta, Split split);

}  // namespace bbf
