#pragma once

#include "milcnn/kernels.hpp"
#include "milcnn/random.hpp"
#include "milcnn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace milcnn {

enum class Mode { kTrain, kEval };

/// A trainable tensor together with its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
  bool decay;  // subject to weight decay
};

/// Non-trainable persistent state (batch-norm running statistics).
struct BufferRef {
  std::string name;
  Tensor* value;
};

/// Base class for layers operating on batched tensors (N x ...).
///
/// `forward` caches whatever `backward` needs; `backward` accumulates
/// parameter gradients into the layer and returns the input gradient. A
/// backward call always refers to the most recent forward call.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string_view kind() const = 0;

  /// Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& input) const = 0;

  virtual Tensor forward(const Tensor& input, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;

  virtual void collect_params(std::vector<ParamRef>& /*out*/) {}
  virtual void collect_buffers(std::vector<BufferRef>& /*out*/) {}

  /// Appends the discrete state of non-smooth units (ReLU masks, max-pool
  /// winners) from the last forward pass. Two inputs with equal kink state
  /// lie in the same smooth piece of the layer.
  virtual void append_kink_state(std::vector<std::int64_t>& /*out*/) const {}

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();
  void zero_grad();

 private:
  std::string name_;
};

/// Kinds of every concrete layer defined below, in declaration order.
std::vector<std::string> registered_layer_kinds();

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, Index in_channels, Index out_channels, Index kernel, Index stride,
         Index padding, bool bias);

  std::string_view kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect_params(std::vector<ParamRef>& out) override;

  /// Zero-mean Gaussian with standard deviation sqrt(2 / fan_in).
  void init_he(Rng& rng);

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  Index in_channels() const { return weight_.dim(1); }
  Index out_channels() const { return weight_.dim(0); }
  Index kernel() const { return weight_.dim(2); }
  Index stride() const { return stride_; }
  Index padding() const { return padding_; }

 private:
  Index stride_, padding_;
  Tensor weight_, bias_;
  Tensor weight_grad_, bias_grad_;
  Tensor input_;
};

class BatchNorm2d final : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm2d(std::string name, Index channels, double epsilon = kEpsilon,
              double momentum = kMomentum);

  std::string_view kind() const override { return "batch_norm"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_buffers(std::vector<BufferRef>& out) override;

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }
  bool has_running_stats() const { return batches_seen_[0] > 0; }
  double epsilon() const { return epsilon_; }

 private:
  double epsilon_, momentum_;
  Tensor gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor running_mean_, running_var_;
  Tensor batches_seen_;  // [1]; zero until the first training batch
  Mode last_mode_ = Mode::kTrain;
  Tensor normalized_;              // x-hat from the last forward
  Eigen::VectorXd inv_std_;        // per channel
};

/// Fully-connected layer on flattened samples: y = x W^T + b.
class Linear final : public Layer {
 public:
  Linear(std::string name, Index in_features, Index out_features);

  std::string_view kind() const override { return "linear"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void init_he(Rng& rng);

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_, bias_, weight_grad_, bias_grad_;
  Tensor input_;
};

class ReLU final : public Layer {
 public:
  using Layer::Layer;
  std::string_view kind() const override { return "relu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  void append_kink_state(std::vector<std::int64_t>& out) const override;

 private:
  Tensor input_;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::string name, Index window, Index stride, Index padding);
  std::string_view kind() const override { return "max_pool"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  void append_kink_state(std::vector<std::int64_t>& out) const override;

 private:
  Index window_, stride_, padding_;
  Tensor input_;
};

class AvgPool2d final : public Layer {
 public:
  AvgPool2d(std::string name, Index window, Index stride, Index padding);
  std::string_view kind() const override { return "avg_pool"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;

 private:
  Index window_, stride_, padding_;
  Shape input_shape_;
};

/// out = ReLU(F(x) + shortcut(x)); an empty shortcut is the identity.
class ResidualBlock : public Layer {
 public:
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_buffers(std::vector<BufferRef>& out) override;
  void append_kink_state(std::vector<std::int64_t>& out) const override;

  bool has_projection() const { return !shortcut_.empty(); }
  std::vector<std::unique_ptr<Layer>>& residual_layers() { return residual_; }
  std::vector<std::unique_ptr<Layer>>& shortcut_layers() { return shortcut_; }
  void init_he(Rng& rng);

 protected:
  using Layer::Layer;
  void add_projection(Index in_channels, Index out_channels, Index stride);

  std::vector<std::unique_ptr<Layer>> residual_;
  std::vector<std::unique_ptr<Layer>> shortcut_;
  ReLU out_relu_{"out_relu"};
};

/// Two 3x3 convolutions. A stride-2 block (or a width change) gets a 1x1
/// projection shortcut with batch norm.
class BasicBlock final : public ResidualBlock {
 public:
  BasicBlock(std::string name, Index in_channels, Index out_channels, Index stride);
  std::string_view kind() const override { return "basic_block"; }
};

/// 1x1 reduce, 3x3 (carrying the stride), 1x1 expand; always a 1x1
/// projection shortcut with batch norm.
class BottleneckBlock final : public ResidualBlock {
 public:
  BottleneckBlock(std::string name, Index in_channels, Index mid_channels, Index out_channels,
                  Index stride);
  std::string_view kind() const override { return "bottleneck_block"; }
};

/// Runs `layers` in order / in reverse order.
Tensor forward_all(std::vector<std::unique_ptr<Layer>>& layers, const Tensor& input, Mode mode);
Tensor backward_all(std::vector<std::unique_ptr<Layer>>& layers, const Tensor& grad_output);

}  // namespace milcnn
