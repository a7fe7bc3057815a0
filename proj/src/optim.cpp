#include "milcnn/optim.hpp"

namespace milcnn {

OptimizerState OptimizerState::zeros_like(std::span<const ParamRef> params) {
  OptimizerState s;
  s.velocity.reserve(params.size());
  for (const auto& p : params) s.velocity.emplace_back(p.value->shape());
  return s;
}

bool OptimizerState::matches(std::span<const ParamRef> params) const {
  if (velocity.size() != params.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (velocity[i].shape() != params[i].value->shape()) return false;
  return true;
}

void sgd_step(Tensor& weight, const Tensor& grad, Tensor& velocity, const SgdParams& p) {
  if (weight.shape() != grad.shape() || weight.shape() != velocity.shape()) {
    throw ShapeError("sgd_step: weight " + to_string(weight.shape()) + ", grad " +
                     to_string(grad.shape()) + ", velocity " + to_string(velocity.shape()));
  }
  if (p.weight_decay != 0.0) {
    velocity.data() = p.momentum * velocity.data() -
                      p.learning_rate * (grad.data() + p.weight_decay * weight.data());
  } else {
    velocity.data() = p.momentum * velocity.data() - p.learning_rate * grad.data();
  }
  weight.data() += velocity.data();
}

void sgd_step(std::span<const ParamRef> params, OptimizerState& state, const SgdParams& p) {
  if (!state.matches(params)) throw ShapeError("optimizer state does not mirror the parameters");
  SgdParams no_decay = p;
  no_decay.weight_decay = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_step(*params[i].value, *params[i].grad, state.velocity[i],
             params[i].decay ? p : no_decay);
  }
}

double lr_at(int epoch, double initial, std::span<const LrDrop> schedule) {
  double lr = initial;
  for (const auto& drop : schedule) {
    if (epoch >= drop.epoch) lr = drop.learning_rate;
  }
  return lr;
}

}  // namespace milcnn
