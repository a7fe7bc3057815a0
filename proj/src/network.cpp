#include "milcnn/network.hpp"

#include <algorithm>

namespace milcnn {

namespace {

std::string block_type_name(BlockType t) { return t == BlockType::kBasic ? "basic" : "bottleneck"; }

BlockType parse_block_type(const std::string& s) {
  if (s == "basic") return BlockType::kBasic;
  if (s == "bottleneck") return BlockType::kBottleneck;
  throw ConfigError("block_type must be \"basic\" or \"bottleneck\", got \"" + s + "\"");
}

Index stage_stride(std::size_t stage, Index repeat) { return (stage > 0 && repeat == 0) ? 2 : 1; }

Index conv_params(Index in, Index out, Index k) { return in * out * k * k; }

}  // namespace

// ---------------------------------------------------------------------------
// ArchSpec

void ArchSpec::validate() const {
  if (stage_widths.empty()) throw ConfigError("stage_widths must not be empty");
  if (stage_widths.size() != stage_repeats.size()) {
    throw ConfigError("stage_widths and stage_repeats differ in length");
  }
  for (Index w : stage_widths)
    if (w <= 0) throw ConfigError("stage widths must be positive");
  for (Index r : stage_repeats)
    if (r <= 0) throw ConfigError("stage repeats must be positive");
  if (input_shape.size() != 3) throw ConfigError("input_shape must be C x H x W");
  for (Index d : input_shape)
    if (d <= 0) throw ConfigError("input_shape entries must be positive");
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  if (stem.channels <= 0 || stem.kernel <= 0 || stem.stride <= 0 || stem.padding < 0) {
    throw ConfigError("invalid stem convolution");
  }
  if (stem.pool && (stem.pool->window <= 0 || stem.pool->stride <= 0 || stem.pool->padding < 0)) {
    throw ConfigError("invalid stem pool");
  }
  if (block_type == BlockType::kBottleneck) {
    if (bottleneck_expansion <= 0) throw ConfigError("bottleneck_expansion must be positive");
    for (Index w : stage_widths) {
      if (w % bottleneck_expansion != 0) {
        throw ConfigError("bottleneck width " + std::to_string(w) +
                          " not divisible by the expansion factor");
      }
    }
  }
}

ArchSpec ArchSpec::table1(Index num_classes) {
  ArchSpec s;
  s.block_type = BlockType::kBasic;
  s.stage_widths = {16, 32, 64};
  s.stage_repeats = {18, 18, 18};
  s.input_shape = {3, 32, 32};
  s.num_classes = num_classes;
  s.stem = StemSpec{16, 3, 1, 1, std::nullopt};
  return s;
}

ArchSpec ArchSpec::table3() {
  ArchSpec s;
  s.block_type = BlockType::kBottleneck;
  s.stage_widths = {256, 512, 1024, 2048};
  s.stage_repeats = {3, 4, 23, 3};
  s.input_shape = {3, 224, 224};
  s.num_classes = 1000;
  s.stem = StemSpec{64, 7, 2, 3, PoolSpec{3, 2, 1}};
  return s;
}

ArchSpec ArchSpec::minimal(Shape input_shape, Index num_classes) {
  ArchSpec s;
  s.block_type = BlockType::kBasic;
  s.stage_widths = {4, 8, 16};
  s.stage_repeats = {1, 1, 1};
  s.input_shape = std::move(input_shape);
  s.num_classes = num_classes;
  s.stem = StemSpec{4, 3, 1, 1, std::nullopt};
  return s;
}

void to_json(nlohmann::json& j, const ArchSpec& s) {
  nlohmann::json stem = {{"channels", s.stem.channels},
                         {"kernel", s.stem.kernel},
                         {"stride", s.stem.stride},
                         {"padding", s.stem.padding}};
  if (s.stem.pool) {
    stem["pool"] = {{"window", s.stem.pool->window},
                    {"stride", s.stem.pool->stride},
                    {"padding", s.stem.pool->padding}};
  }
  j = {{"block_type", block_type_name(s.block_type)},
       {"stage_widths", s.stage_widths},
       {"stage_repeats", s.stage_repeats},
       {"input_shape", s.input_shape},
       {"num_classes", s.num_classes},
       {"stem", stem},
       {"bottleneck_expansion", s.bottleneck_expansion}};
}

void from_json(const nlohmann::json& j, ArchSpec& s) {
  try {
    s = ArchSpec{};
    s.block_type = parse_block_type(j.at("block_type").get<std::string>());
    s.stage_widths = j.at("stage_widths").get<std::vector<Index>>();
    s.stage_repeats = j.at("stage_repeats").get<std::vector<Index>>();
    s.input_shape = j.at("input_shape").get<Shape>();
    s.num_classes = j.at("num_classes").get<Index>();
    if (j.contains("stem")) {
      const auto& st = j.at("stem");
      s.stem.channels = st.value("channels", s.stage_widths.empty() ? Index{16} : s.stage_widths[0]);
      s.stem.kernel = st.value("kernel", Index{3});
      s.stem.stride = st.value("stride", Index{1});
      s.stem.padding = st.value("padding", Index{1});
      if (st.contains("pool") && !st.at("pool").is_null()) {
        const auto& p = st.at("pool");
        s.stem.pool = PoolSpec{p.value("window", Index{3}), p.value("stride", Index{2}),
                               p.value("padding", Index{1})};
      }
    } else if (!s.stage_widths.empty()) {
      s.stem.channels = s.block_type == BlockType::kBasic ? s.stage_widths[0] : 64;
    }
    s.bottleneck_expansion = j.value("bottleneck_expansion", Index{4});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("arch spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Planning

NetworkPlan plan_network(const ArchSpec& spec) {
  spec.validate();
  NetworkPlan plan;
  try {
    Index c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
    const auto& st = spec.stem;
    h = pooled_extent(h, st.kernel, st.stride, st.padding);
    w = pooled_extent(w, st.kernel, st.stride, st.padding);
    plan.parameter_count += conv_params(c, st.channels, st.kernel) + 2 * st.channels;
    c = st.channels;
    plan.weighted_layers = 1;
    plan.stages.push_back({"conv1", {c, h, w}});
    if (st.pool) {
      h = pooled_extent(h, st.pool->window, st.pool->stride, st.pool->padding);
      w = pooled_extent(w, st.pool->window, st.pool->stride, st.pool->padding);
      plan.stages.push_back({"pool1", {c, h, w}});
    }

    for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
      const Index out = spec.stage_widths[s];
      for (Index r = 0; r < spec.stage_repeats[s]; ++r) {
        const Index stride = stage_stride(s, r);
        const Index nh = pooled_extent(h, 3, stride, 1), nw = pooled_extent(w, 3, stride, 1);
        bool projection = false;
        if (spec.block_type == BlockType::kBasic) {
          plan.parameter_count += conv_params(c, out, 3) + conv_params(out, out, 3) + 4 * out;
          plan.weighted_layers += 2;
          projection = stride != 1 || c != out;
        } else {
          const Index mid = out / spec.bottleneck_expansion;
          plan.parameter_count += conv_params(c, mid, 1) + conv_params(mid, mid, 3) +
                                  conv_params(mid, out, 1) + 4 * mid + 2 * out;
          plan.weighted_layers += 3;
          projection = true;
        }
        if (projection) {
          plan.parameter_count += conv_params(c, out, 1) + 2 * out;
          plan.projection_layers += 1;
        }
        c = out;
        h = nh;
        w = nw;
      }
      plan.stages.push_back({"ResNet" + std::to_string(s + 1), {c, h, w}});
    }

    if (h != w) throw ConfigError("final feature map is not square");
    plan.stages.push_back({"pool2", {c, 1, 1}});
    plan.stages.push_back({"fc", {spec.num_classes}});
    plan.fc_size = {c, spec.num_classes};
    plan.parameter_count += c * spec.num_classes + spec.num_classes;
    plan.weighted_layers += 1;
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("incompatible architecture dimensions: ") + e.what());
  }
  return plan;
}

void to_json(nlohmann::json& j, const NetworkPlan& plan) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : plan.stages) {
    std::string size;
    for (std::size_t i = s.shape.size() > 1 ? 1 : 0; i < s.shape.size(); ++i)
      size += (size.empty() ? "" : "x") + std::to_string(s.shape[i]);
    stages.push_back({{"name", s.name}, {"shape", s.shape}, {"output_size", size}});
  }
  j = {{"stages", stages},
       {"fc_size", plan.fc_size},
       {"weighted_layers", plan.weighted_layers},
       {"projection_layers", plan.projection_layers},
       {"parameter_count", plan.parameter_count}};
}

// ---------------------------------------------------------------------------
// Network

Network::Network(ArchSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), plan_(plan_network(spec_)), seed_(seed) {
  Rng rng = make_rng(seed, {stream::kInit});
  const auto& st = spec_.stem;

  auto stem = std::make_unique<Conv2d>("conv1", spec_.input_shape[0], st.channels, st.kernel,
                                       st.stride, st.padding, false);
  stem->init_he(rng);
  layers_.push_back(std::move(stem));
  layers_.push_back(std::make_unique<BatchNorm2d>("bn1", st.channels));
  layers_.push_back(std::make_unique<ReLU>("relu1"));
  if (st.pool) {
    layers_.push_back(
        std::make_unique<MaxPool2d>("pool1", st.pool->window, st.pool->stride, st.pool->padding));
  }

  Index c = st.channels;
  for (std::size_t s = 0; s < spec_.stage_widths.size(); ++s) {
    const Index out = spec_.stage_widths[s];
    for (Index r = 0; r < spec_.stage_repeats[s]; ++r) {
      const std::string name = "res" + std::to_string(s + 1) + "." + std::to_string(r + 1);
      const Index stride = stage_stride(s, r);
      std::unique_ptr<ResidualBlock> block;
      if (spec_.block_type == BlockType::kBasic) {
        block = std::make_unique<BasicBlock>(name, c, out, stride);
      } else {
        block = std::make_unique<BottleneckBlock>(name, c, out / spec_.bottleneck_expansion, out,
                                                  stride);
      }
      block->init_he(rng);
      layers_.push_back(std::move(block));
      c = out;
    }
  }

  const Shape& last = plan_.stages[plan_.stages.size() - 3].shape;
  layers_.push_back(std::make_unique<AvgPool2d>("pool2", last[1], last[1], 0));
  auto fc = std::make_unique<Linear>("fc", c, spec_.num_classes);
  fc->init_he(rng);
  layers_.push_back(std::move(fc));
}

Tensor Network::forward(const Tensor& batch, Mode mode) {
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) !=
                               spec_.input_shape) {
    throw ShapeError("network expects N x " + to_string(spec_.input_shape) + " input, got " +
                     to_string(batch.shape()));
  }
  logits_ = forward_all(layers_, batch, mode);
  return head_relu_enabled_ ? head_relu_->forward(logits_, mode) : logits_;
}

Tensor Network::backward(const Tensor& grad_h) {
  if (grad_h.shape() != logits_.shape()) throw ShapeError("network backward: gradient shape");
  const Tensor g = head_relu_enabled_ ? head_relu_->backward(grad_h) : grad_h;
  return backward_all(layers_, g);
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<BufferRef> Network::buffers() {
  std::vector<BufferRef> out;
  for (auto& l : layers_) l->collect_buffers(out);
  return out;
}

void Network::zero_grad() {
  for (auto& p : params()) p.grad->fill(0.0);
}

Index Network::parameter_count() {
  Index n = 0;
  for (auto& p : params()) n += p.value->size();
  return n;
}

std::vector<std::int64_t> Network::kink_state() const {
  std::vector<std::int64_t> out;
  for (const auto& l : layers_) l->append_kink_state(out);
  if (head_relu_enabled_) head_relu_->append_kink_state(out);
  return out;
}

Network Network::clone() const {
  Network copy(spec_, seed_);
  auto& self = const_cast<Network&>(*this);
  auto src_p = self.params();
  auto dst_p = copy.params();
  for (std::size_t i = 0; i < src_p.size(); ++i) *dst_p[i].value = *src_p[i].value;
  auto src_b = self.buffers();
  auto dst_b = copy.buffers();
  for (std::size_t i = 0; i < src_b.size(); ++i) *dst_b[i].value = *src_b[i].value;
  copy.head_relu_enabled_ = head_relu_enabled_;
  return copy;
}

}  // namespace milcnn
