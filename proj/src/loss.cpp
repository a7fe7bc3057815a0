#include "milcnn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace milcnn {

// ---------------------------------------------------------------------------
// Labels and bags

LabelVector::LabelVector(Eigen::VectorXd entries) : entries_(std::move(entries)) {
  for (Index i = 0; i < entries_.size(); ++i) {
    if (entries_[i] != 0.0 && entries_[i] != 1.0) {
      throw std::invalid_argument("label entries must be 0 or 1");
    }
  }
}

LabelVector LabelVector::one_hot(Index category, Index num_classes) {
  if (category < 0 || category >= num_classes) {
    throw std::invalid_argument("category " + std::to_string(category) + " out of range for " +
                                std::to_string(num_classes) + " classes");
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(num_classes);
  e[category] = 1.0;
  return LabelVector(std::move(e));
}

LabelVector LabelVector::all_positive(Index num_classes) {
  return LabelVector(Eigen::VectorXd::Ones(num_classes));
}

Index LabelVector::positives() const { return static_cast<Index>(entries_.sum()); }

Index LabelVector::category() const {
  if (!single_label()) throw std::invalid_argument("label is not single-category");
  Index idx = 0;
  entries_.maxCoeff(&idx);
  return idx;
}

void Bag::validate() const {
  if (instances.empty()) throw std::invalid_argument("bag must contain at least one instance");
  for (const auto& x : instances) {
    if (x.shape() != instances.front().shape()) {
      throw ShapeError("bag instances differ in shape: " + to_string(x.shape()) + " vs " +
                       to_string(instances.front().shape()));
    }
  }
}

void MilConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("mil.lambda must be positive");
  if (!(prob_clamp_epsilon > 0.0 && prob_clamp_epsilon <= 1e-3)) {
    throw ConfigError("mil.prob_clamp_epsilon must lie in (0, 1e-3]");
  }
}

// ---------------------------------------------------------------------------
// Prediction

Index predict_label(const Eigen::Ref<const Eigen::VectorXd>& h) {
  if (h.size() == 0) throw std::invalid_argument("predict_label on an empty score vector");
  Index best = 0;
  for (Index i = 1; i < h.size(); ++i)
    if (h[i] > h[best]) best = i;
  return best;
}

std::vector<Index> top_k(const Eigen::Ref<const Eigen::VectorXd>& h, Index k) {
  std::vector<Index> order(static_cast<std::size_t>(h.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return h[a] > h[b]; });
  order.resize(static_cast<std::size_t>(std::min<Index>(k, h.size())));
  return order;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& h) {
  Eigen::VectorXd e = (h.array() - h.maxCoeff()).exp().matrix();
  return e / e.sum();
}

ScoreLoss softmax_ce(const Eigen::Ref<const Eigen::VectorXd>& h, const LabelVector& y) {
  if (h.size() != y.size()) throw ShapeError("softmax_ce: score and label lengths differ");
  if (!y.single_label()) {
    throw std::invalid_argument("softmax_ce requires exactly one positive label entry");
  }
  const double shift = h.maxCoeff();
  const double log_z = shift + std::log((h.array() - shift).exp().sum());
  const Eigen::VectorXd p = softmax(h);
  ScoreLoss out;
  out.loss = -(y.entries().array() * (h.array() - log_z)).sum();
  out.grad = -y.entries() + p * y.entries().sum();
  return out;
}

// ---------------------------------------------------------------------------
// MIL

double instance_prob(double h, double lambda) {
  if (h < 0.0) {
    throw std::domain_error("instance_prob: negative score " + std::to_string(h) +
                            " (missing ReLU before the MIL loss?)");
  }
  return -std::expm1(-lambda * h);
}

double bag_negative_prob(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  return (1.0 - probs.array()).prod();
}

namespace {

void check_scores(const Eigen::Ref<const Eigen::MatrixXd>& scores, const LabelVector& y) {
  if (scores.rows() < 1) throw std::invalid_argument("MIL loss needs at least one region");
  if (scores.cols() != y.size()) throw ShapeError("MIL loss: score columns and label differ");
  if ((scores.array() < 0.0).any()) {
    throw std::domain_error("MIL loss: negative score (missing ReLU before the loss?)");
  }
}

}  // namespace

BagLoss mil_loss_negative_only(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                               const LabelVector& y, const MilConfig& cfg) {
  check_scores(scores, y);
  const Eigen::RowVectorXd negative = (1.0 - y.entries().array()).matrix().transpose();
  BagLoss out;
  out.loss = cfg.lambda * scores.colwise().sum().dot(negative);
  out.grad = (cfg.lambda * negative).replicate(scores.rows(), 1);
  return out;
}

BagLoss mil_loss_full_bag(const Eigen::Ref<const Eigen::MatrixXd>& scores, const LabelVector& y,
                          const MilConfig& cfg) {
  check_scores(scores, y);
  const double eps = cfg.prob_clamp_epsilon;
  const Index m = scores.rows(), c = scores.cols();
  BagLoss out;
  out.grad = Eigen::MatrixXd::Zero(m, c);
  for (Index i = 0; i < c; ++i) {
    // q = prod_j exp(-lambda h_ji); 1 - q via expm1 keeps precision near 0.
    const double s = cfg.lambda * scores.col(i).sum();
    const double q = std::exp(-s);
    if (y[i] == 1.0) {
      const double pos = -std::expm1(-s);
      if (pos < eps) {
        out.loss -= std::log(eps);
      } else {
        out.loss -= std::log(pos);
        out.grad.col(i).setConstant(-cfg.lambda * q / pos);
      }
    } else {
      if (q < eps) {
        out.loss -= std::log(eps);
      } else {
        out.loss += s;
        out.grad.col(i).setConstant(cfg.lambda);
      }
    }
  }
  return out;
}

BagLoss mil_loss(const Eigen::Ref<const Eigen::MatrixXd>& scores, const LabelVector& y,
                 const MilConfig& cfg) {
  return cfg.mode == MilMode::kNegativeOnly ? mil_loss_negative_only(scores, y, cfg)
                                            : mil_loss_full_bag(scores, y, cfg);
}

Eigen::VectorXd aggregate_bag_scores(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                                     Aggregation how) {
  if (scores.rows() < 1) throw std::invalid_argument("aggregate_bag_scores: empty bag");
  if (how == Aggregation::kMax) return scores.colwise().maxCoeff().transpose();
  return scores.colwise().mean().transpose();
}

}  // namespace milcnn
