#include "milcnn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace milcnn {

namespace {

void require_rank4(const Tensor& t, std::string_view who) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(who) + " expects an N x C x H x W batch, got " +
                     to_string(t.shape()));
  }
}

void fill_normal(Tensor& t, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

Shape pooled_shape(const Shape& in, Index window, Index stride, Index padding) {
  if (in.size() != 3) throw ShapeError("pooling expects C x H x W samples, got " + to_string(in));
  return {in[0], pooled_extent(in[1], window, stride, padding),
          pooled_extent(in[2], window, stride, padding)};
}

void pack_mask(const Tensor& input, std::vector<std::int64_t>& out) {
  std::uint64_t word = 0;
  int bit = 0;
  for (Index i = 0; i < input.size(); ++i) {
    if (input[i] > 0.0) word |= (std::uint64_t{1} << bit);
    if (++bit == 64) {
      out.push_back(static_cast<std::int64_t>(word));
      word = 0;
      bit = 0;
    }
  }
  if (bit) out.push_back(static_cast<std::int64_t>(word));
}

}  // namespace

std::vector<ParamRef> Layer::params() {
  std::vector<ParamRef> out;
  collect_params(out);
  return out;
}

std::vector<BufferRef> Layer::buffers() {
  std::vector<BufferRef> out;
  collect_buffers(out);
  return out;
}

void Layer::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0);
}

std::vector<std::string> registered_layer_kinds() {
  return {"conv2d", "batch_norm", "linear", "relu", "max_pool", "avg_pool", "basic_block",
          "bottleneck_block"};
}

Tensor forward_all(std::vector<std::unique_ptr<Layer>>& layers, const Tensor& input, Mode mode) {
  Tensor x = input;
  for (auto& layer : layers) x = layer->forward(x, mode);
  return x;
}

Tensor backward_all(std::vector<std::unique_ptr<Layer>>& layers, const Tensor& grad_output) {
  Tensor g = grad_output;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
  return g;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, Index in_channels, Index out_channels, Index kernel, Index stride,
               Index padding, bool bias)
    : Layer(std::move(name)),
      stride_(stride),
      padding_(padding),
      weight_(Shape{out_channels, in_channels, kernel, kernel}),
      weight_grad_(weight_.shape()) {
  if (stride <= 0 || padding < 0) throw ShapeError("conv2d stride/padding out of range");
  if (bias) {
    bias_ = Tensor(Shape{out_channels});
    bias_grad_ = Tensor(Shape{out_channels});
  }
}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != in_channels()) {
    throw ShapeError(name() + ": expected " + std::to_string(in_channels()) +
                     " input channels, got sample shape " + to_string(input));
  }
  return {out_channels(), pooled_extent(input[1], kernel(), stride_, padding_),
          pooled_extent(input[2], kernel(), stride_, padding_)};
}

Tensor Conv2d::forward(const Tensor& input, Mode) {
  require_rank4(input, name());
  input_ = input;
  return conv2d(input, weight_, bias_, stride_, padding_);
}

Tensor Conv2d::backward(const Tensor& grad_output) {
  auto g = conv2d_backward(input_, weight_, grad_output, stride_, padding_);
  weight_grad_.data() += g.kernels.data();
  if (!bias_.empty()) bias_grad_.data() += g.bias.data();
  return std::move(g.input);
}

void Conv2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".weight", &weight_, &weight_grad_, true});
  if (!bias_.empty()) out.push_back({name() + ".bias", &bias_, &bias_grad_, false});
}

void Conv2d::init_he(Rng& rng) {
  const Index fan_in = in_channels() * kernel() * kernel();
  fill_normal(weight_, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
  if (!bias_.empty()) bias_.fill(0.0);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, Index channels, double epsilon, double momentum)
    : Layer(std::move(name)),
      epsilon_(epsilon),
      momentum_(momentum),
      gamma_(Shape{channels}, 1.0),
      beta_(Shape{channels}),
      gamma_grad_(Shape{channels}),
      beta_grad_(Shape{channels}),
      running_mean_(Shape{channels}),
      running_var_(Shape{channels}, 1.0),
      batches_seen_(Shape{1}) {
  if (!(epsilon > 0.0)) throw ConfigError("batch norm epsilon must be positive");
}

Tensor BatchNorm2d::forward(const Tensor& input, Mode mode) {
  require_rank4(input, name());
  const Index n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (c != gamma_.size()) throw ShapeError(name() + ": channel count mismatch");
  const Index count = n * plane;

  Eigen::VectorXd mean(c), var(c);
  if (mode == Mode::kTrain) {
    mean.setZero();
    var.setZero();
    for (Index s = 0; s < n; ++s)
      for (Index ch = 0; ch < c; ++ch)
        mean[ch] += input.data().segment((s * c + ch) * plane, plane).sum();
    mean /= static_cast<double>(count);
    for (Index s = 0; s < n; ++s)
      for (Index ch = 0; ch < c; ++ch)
        var[ch] += (input.data().segment((s * c + ch) * plane, plane).array() - mean[ch])
                       .square()
                       .sum();
    var /= static_cast<double>(count);

    const double unbias =
        count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    running_mean_.data() = momentum_ * running_mean_.data() + (1.0 - momentum_) * mean;
    running_var_.data() = momentum_ * running_var_.data() + (1.0 - momentum_) * unbias * var;
    batches_seen_[0] += 1.0;
  } else {
    if (!has_running_stats()) {
      throw std::logic_error(name() + ": eval mode before any running statistics exist");
    }
    mean = running_mean_.data();
    var = running_var_.data();
  }

  inv_std_ = (var.array() + epsilon_).rsqrt();
  last_mode_ = mode;
  normalized_ = Tensor(input.shape());
  Tensor out(input.shape());
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * plane;
      auto xhat = normalized_.data().segment(off, plane);
      xhat = (input.data().segment(off, plane).array() - mean[ch]) * inv_std_[ch];
      out.data().segment(off, plane) = (xhat.array() * gamma_[ch] + beta_[ch]).matrix();
    }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_output) {
  if (grad_output.shape() != normalized_.shape()) throw ShapeError(name() + ": backward shape");
  const Index n = grad_output.dim(0), c = grad_output.dim(1);
  const Index plane = grad_output.dim(2) * grad_output.dim(3);
  const double count = static_cast<double>(n * plane);

  Eigen::VectorXd sum_dy = Eigen::VectorXd::Zero(c), sum_dy_xhat = Eigen::VectorXd::Zero(c);
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * plane;
      const auto dy = grad_output.data().segment(off, plane);
      sum_dy[ch] += dy.sum();
      sum_dy_xhat[ch] += dy.dot(normalized_.data().segment(off, plane));
    }
  }
  gamma_grad_.data() += sum_dy_xhat;
  beta_grad_.data() += sum_dy;

  Tensor grad(grad_output.shape());
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * plane;
      const double scale = gamma_[ch] * inv_std_[ch];
      const auto dy = grad_output.data().segment(off, plane).array();
      if (last_mode_ == Mode::kTrain) {
        const auto xhat = normalized_.data().segment(off, plane).array();
        grad.data().segment(off, plane) =
            (scale * (dy - sum_dy[ch] / count - xhat * (sum_dy_xhat[ch] / count))).matrix();
      } else {
        grad.data().segment(off, plane) = (scale * dy).matrix();
      }
    }
  }
  return grad;
}

void BatchNorm2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".gamma", &gamma_, &gamma_grad_, false});
  out.push_back({name() + ".beta", &beta_, &beta_grad_, false});
}

void BatchNorm2d::collect_buffers(std::vector<BufferRef>& out) {
  out.push_back({name() + ".running_mean", &running_mean_});
  out.push_back({name() + ".running_var", &running_var_});
  out.push_back({name() + ".batches_seen", &batches_seen_});
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, Index in_features, Index out_features)
    : Layer(std::move(name)),
      weight_(Shape{out_features, in_features}),
      bias_(Shape{out_features}),
      weight_grad_(weight_.shape()),
      bias_grad_(bias_.shape()) {}

Shape Linear::output_shape(const Shape& input) const {
  if (element_count(input) != weight_.dim(1)) {
    throw ShapeError(name() + ": expected " + std::to_string(weight_.dim(1)) +
                     " features, got sample shape " + to_string(input));
  }
  return {weight_.dim(0)};
}

Tensor Linear::forward(const Tensor& input, Mode) {
  const Index n = input.dim(0), in = weight_.dim(1), out_features = weight_.dim(0);
  if (input.size() != n * in) throw ShapeError(name() + ": input " + to_string(input.shape()));
  input_ = input;
  Tensor out(Shape{n, out_features});
  auto y = out.matrix(n, out_features);
  y.noalias() = input.matrix(n, in) * weight_.matrix(out_features, in).transpose();
  y.rowwise() += bias_.data().transpose();
  return out;
}

Tensor Linear::backward(const Tensor& grad_output) {
  const Index n = input_.dim(0), in = weight_.dim(1), out_features = weight_.dim(0);
  const auto dy = grad_output.matrix(n, out_features);
  weight_grad_.matrix(out_features, in).noalias() += dy.transpose() * input_.matrix(n, in);
  bias_grad_.data() += dy.colwise().sum().transpose();
  Tensor grad(input_.shape());
  grad.matrix(n, in).noalias() = dy * weight_.matrix(out_features, in);
  return grad;
}

void Linear::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".weight", &weight_, &weight_grad_, true});
  out.push_back({name() + ".bias", &bias_, &bias_grad_, false});
}

void Linear::init_he(Rng& rng) {
  fill_normal(weight_, std::sqrt(2.0 / static_cast<double>(weight_.dim(1))), rng);
  bias_.fill(0.0);
}

// ---------------------------------------------------------------------------
// ReLU / pooling

Tensor ReLU::forward(const Tensor& input, Mode) {
  input_ = input;
  return relu(input);
}

Tensor ReLU::backward(const Tensor& grad_output) { return relu_backward(input_, grad_output); }

void ReLU::append_kink_state(std::vector<std::int64_t>& out) const { pack_mask(input_, out); }

MaxPool2d::MaxPool2d(std::string name, Index window, Index stride, Index padding)
    : Layer(std::move(name)), window_(window), stride_(stride), padding_(padding) {}

Shape MaxPool2d::output_shape(const Shape& input) const {
  return pooled_shape(input, window_, stride_, padding_);
}

Tensor MaxPool2d::forward(const Tensor& input, Mode) {
  require_rank4(input, name());
  input_ = input;
  return max_pool(input, window_, stride_, padding_);
}

Tensor MaxPool2d::backward(const Tensor& grad_output) {
  return max_pool_backward(input_, grad_output, window_, stride_, padding_);
}

void MaxPool2d::append_kink_state(std::vector<std::int64_t>& out) const {
  const Index oh = pooled_extent(input_.dim(2), window_, stride_, padding_);
  const Index ow = pooled_extent(input_.dim(3), window_, stride_, padding_);
  const auto arg = detail::max_pool_argmax(input_, window_, stride_, padding_, oh, ow);
  out.insert(out.end(), arg.begin(), arg.end());
}

AvgPool2d::AvgPool2d(std::string name, Index window, Index stride, Index padding)
    : Layer(std::move(name)), window_(window), stride_(stride), padding_(padding) {}

Shape AvgPool2d::output_shape(const Shape& input) const {
  return pooled_shape(input, window_, stride_, padding_);
}

Tensor AvgPool2d::forward(const Tensor& input, Mode) {
  require_rank4(input, name());
  input_shape_ = input.shape();
  return avg_pool(input, window_, stride_, padding_);
}

Tensor AvgPool2d::backward(const Tensor& grad_output) {
  return avg_pool_backward(grad_output, input_shape_, window_, stride_, padding_);
}

// ---------------------------------------------------------------------------
// Residual blocks

Shape ResidualBlock::output_shape(const Shape& input) const {
  Shape r = input;
  for (const auto& layer : residual_) r = layer->output_shape(r);
  Shape s = input;
  for (const auto& layer : shortcut_) s = layer->output_shape(s);
  if (r != s) {
    throw ShapeError(name() + ": residual branch " + to_string(r) + " and shortcut " +
                     to_string(s) + " disagree");
  }
  return r;
}

Tensor ResidualBlock::forward(const Tensor& input, Mode mode) {
  Tensor r = forward_all(residual_, input, mode);
  Tensor s = shortcut_.empty() ? input : forward_all(shortcut_, input, mode);
  if (r.shape() != s.shape()) {
    throw ShapeError(name() + ": residual branch " + to_string(r.shape()) + " and shortcut " +
                     to_string(s.shape()) + " disagree");
  }
  r.data() += s.data();
  return out_relu_.forward(r, mode);
}

Tensor ResidualBlock::backward(const Tensor& grad_output) {
  const Tensor g = out_relu_.backward(grad_output);
  Tensor dx = backward_all(residual_, g);
  if (shortcut_.empty()) {
    dx.data() += g.data();
  } else {
    dx.data() += backward_all(shortcut_, g).data();
  }
  return dx;
}

void ResidualBlock::collect_params(std::vector<ParamRef>& out) {
  for (auto& l : residual_) l->collect_params(out);
  for (auto& l : shortcut_) l->collect_params(out);
}

void ResidualBlock::collect_buffers(std::vector<BufferRef>& out) {
  for (auto& l : residual_) l->collect_buffers(out);
  for (auto& l : shortcut_) l->collect_buffers(out);
}

void ResidualBlock::append_kink_state(std::vector<std::int64_t>& out) const {
  for (const auto& l : residual_) l->append_kink_state(out);
  for (const auto& l : shortcut_) l->append_kink_state(out);
  out_relu_.append_kink_state(out);
}

void ResidualBlock::init_he(Rng& rng) {
  for (auto* branch : {&residual_, &shortcut_}) {
    for (auto& l : *branch) {
      if (auto* conv = dynamic_cast<Conv2d*>(l.get())) conv->init_he(rng);
    }
  }
}

void ResidualBlock::add_projection(Index in_channels, Index out_channels, Index stride) {
  shortcut_.push_back(
      std::make_unique<Conv2d>(name() + ".proj", in_channels, out_channels, 1, stride, 0, false));
  shortcut_.push_back(std::make_unique<BatchNorm2d>(name() + ".proj_bn", out_channels));
}

BasicBlock::BasicBlock(std::string name, Index in_channels, Index out_channels, Index stride)
    : ResidualBlock(std::move(name)) {
  const std::string& n = this->name();
  residual_.push_back(
      std::make_unique<Conv2d>(n + ".conv1", in_channels, out_channels, 3, stride, 1, false));
  residual_.push_back(std::make_unique<BatchNorm2d>(n + ".bn1", out_channels));
  residual_.push_back(std::make_unique<ReLU>(n + ".relu1"));
  residual_.push_back(
      std::make_unique<Conv2d>(n + ".conv2", out_channels, out_channels, 3, 1, 1, false));
  residual_.push_back(std::make_unique<BatchNorm2d>(n + ".bn2", out_channels));
  if (stride != 1 || in_channels != out_channels) add_projection(in_channels, out_channels, stride);
}

BottleneckBlock::BottleneckBlock(std::string name, Index in_channels, Index mid_channels,
                                 Index out_channels, Index stride)
    : ResidualBlock(std::move(name)) {
  const std::string& n = this->name();
  residual_.push_back(
      std::make_unique<Conv2d>(n + ".conv1", in_channels, mid_channels, 1, 1, 0, false));
  residual_.push_back(std::make_unique<BatchNorm2d>(n + ".bn1", mid_channels));
  residual_.push_back(std::make_unique<ReLU>(n + ".relu1"));
  residual_.push_back(
      std::make_unique<Conv2d>(n + ".conv2", mid_channels, mid_channels, 3, stride, 1, false));
  residual_.push_back(std::make_unique<BatchNorm2d>(n + ".bn2", mid_channels));
  residual_.push_back(std::make_unique<ReLU>(n + ".relu2"));
  residual_.push_back(
      std::make_unique<Conv2d>(n + ".conv3", mid_channels, out_channels, 1, 1, 0, false));
  residual_.push_back(std::make_unique<BatchNorm2d>(n + ".bn3", out_channels));
  add_projection(in_channels, out_channels, stride);
}

}  // namespace milcnn
