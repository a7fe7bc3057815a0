#pragma once

#include "milcnn/tensor.hpp"

#include <Eigen/Core>

#include <vector>

namespace milcnn {

/// Binary category indicator of length C. A bag label may be multi-hot; the
/// softmax loss requires exactly one positive entry.
class LabelVector {
 public:
  LabelVector() = default;
  /// Throws std::invalid_argument unless every entry is 0 or 1.
  explicit LabelVector(Eigen::VectorXd entries);

  static LabelVector one_hot(Index category, Index num_classes);
  static LabelVector all_positive(Index num_classes);

  Index size() const { return entries_.size(); }
  const Eigen::VectorXd& entries() const { return entries_; }
  double operator[](Index i) const { return entries_[i]; }
  Index positives() const;
  bool single_label() const { return positives() == 1; }
  /// Index of the single positive entry; throws unless single_label().
  Index category() const;

  friend bool operator==(const LabelVector& a, const LabelVector& b) {
    return a.entries_ == b.entries_;
  }

 private:
  Eigen::VectorXd entries_;
};

/// m instance tensors of one shape sharing a single image-level label.
struct Bag {
  std::vector<Tensor> instances;
  LabelVector label;

  Index size() const { return static_cast<Index>(instances.size()); }
  /// Throws unless the bag is non-empty and all instances share a shape.
  void validate() const;
};

enum class MilMode { kNegativeOnly, kFullBag };
enum class Aggregation { kMean, kMax };

struct MilConfig {
  double lambda = 1e-3;  // rate constant of the instance probability
  MilMode mode = MilMode::kNegativeOnly;
  double prob_clamp_epsilon = 1e-12;
  Aggregation aggregation = Aggregation::kMean;

  void validate() const;
};

struct ScoreLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d h, length C
};

struct BagLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // d loss / d H, m x C
};

/// Index of the largest score; ties go to the lowest index.
Index predict_label(const Eigen::Ref<const Eigen::VectorXd>& h);

/// Indices of the k largest scores, best first (ties to the lower index).
std::vector<Index> top_k(const Eigen::Ref<const Eigen::VectorXd>& h, Index k);

/// Numerically stable softmax (max subtracted before exponentiation).
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& h);

/// -sum_i y_i log p_i with gradient -y_i + p_i * sum_j y_j. Requires a
/// single-label y.
ScoreLoss softmax_ce(const Eigen::Ref<const Eigen::VectorXd>& h, const LabelVector& y);

/// p(c=1 | x) = 1 - exp(-lambda * h) for h >= 0.
double instance_prob(double h, double lambda);

/// Probability that no instance is positive: prod_j (1 - p_j).
double bag_negative_prob(const Eigen::Ref<const Eigen::VectorXd>& probs);

/// Negative-only MIL loss over an m x C score matrix:
///   loss = lambda * sum_i (1 - y_i) * sum_j H(j, i)
///   grad(j, i) = lambda * (1 - y_i)
BagLoss mil_loss_negative_only(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                               const LabelVector& y, const MilConfig& cfg);

/// Bag loss with both terms:
///   -sum_i [ y_i log(1 - q_i) + (1 - y_i) log q_i ],  q_i = prod_j (1 - p_ji)
/// with both probabilities clamped below at eps. Clamped terms have zero
/// gradient.
BagLoss mil_loss_full_bag(const Eigen::Ref<const Eigen::MatrixXd>& scores, const LabelVector& y,
                          const MilConfig& cfg);

/// Dispatches on cfg.mode.
BagLoss mil_loss(const Eigen::Ref<const Eigen::MatrixXd>& scores, const LabelVector& y,
                 const MilConfig& cfg);

/// Per-class mean (or max) over the m regions of an m x C score matrix.
Eigen::VectorXd aggregate_bag_scores(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                                     Aggregation how = Aggregation::kMean);

}  // namespace milcnn
