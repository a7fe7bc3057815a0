#pragma once

#include "milcnn/layers.hpp"

#include <span>
#include <vector>

namespace milcnn {

struct SgdParams {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Momentum buffers, one per parameter tensor, zero-initialized.
struct OptimizerState {
  std::vector<Tensor> velocity;

  static OptimizerState zeros_like(std::span<const ParamRef> params);
  bool matches(std::span<const ParamRef> params) const;
};

/// Heavy-ball update on one tensor:
///   v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v
void sgd_step(Tensor& weight, const Tensor& grad, Tensor& velocity, const SgdParams& p);

/// Applies sgd_step to every parameter; weight decay only where
/// ParamRef::decay is set.
void sgd_step(std::span<const ParamRef> params, OptimizerState& state, const SgdParams& p);

struct LrDrop {
  int epoch = 0;
  double learning_rate = 0.0;
  friend bool operator==(const LrDrop&, const LrDrop&) = default;
};

/// Piecewise-constant schedule: `initial` until the first drop epoch, then the
/// rate of the last drop whose epoch is <= `epoch`.
double lr_at(int epoch, double initial, std::span<const LrDrop> schedule);

}  // namespace milcnn
