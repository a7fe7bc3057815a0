#pragma once

#include "milcnn/layers.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace milcnn {

enum class BlockType { kBasic, kBottleneck };

struct PoolSpec {
  Index window = 3;
  Index stride = 2;
  Index padding = 1;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

struct StemSpec {
  Index channels = 16;
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
  std::optional<PoolSpec> pool;  // max pool after conv-BN-ReLU
  friend bool operator==(const StemSpec&, const StemSpec&) = default;
};

/// Parametric residual network: stem, stages of repeated blocks, global
/// average pool, one fully-connected layer.
///
/// For bottleneck blocks `stage_widths` are the expanded output widths and
/// the inner width is width / bottleneck_expansion. The first block of every
/// stage after the first downsamples with stride 2.
struct ArchSpec {
  BlockType block_type = BlockType::kBasic;
  std::vector<Index> stage_widths;
  std::vector<Index> stage_repeats;
  Shape input_shape{3, 32, 32};
  Index num_classes = 10;
  StemSpec stem;
  Index bottleneck_expansion = 4;

  /// Throws ConfigError when the description is inconsistent.
  void validate() const;

  /// CIFAR network: basic blocks, widths 16/32/64 x 18 repeats.
  static ArchSpec table1(Index num_classes = 10);
  /// ILSVRC network: bottleneck blocks 256/512/1024/2048 x 3/4/23/3.
  static ArchSpec table3();
  /// Desk-scale network: basic blocks, widths 4/8/16, one block per stage.
  static ArchSpec minimal(Shape input_shape = {3, 32, 32}, Index num_classes = 10);

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

void to_json(nlohmann::json& j, const ArchSpec& spec);
void from_json(const nlohmann::json& j, ArchSpec& spec);

struct StageShape {
  std::string name;
  Shape shape;  // per sample
};

/// Geometry of a network computed without allocating parameters.
struct NetworkPlan {
  std::vector<StageShape> stages;
  int weighted_layers = 0;    // stem conv + residual-branch convs + fc
  int projection_layers = 0;  // 1x1 shortcut convs, counted separately
  Shape fc_size;              // {in_features, out_features}
  Index parameter_count = 0;
};

/// Throws ConfigError when the stem/stage dimensions do not compose.
NetworkPlan plan_network(const ArchSpec& spec);

void to_json(nlohmann::json& j, const NetworkPlan& plan);

/// A residual network instantiated from an ArchSpec.
///
/// forward() maps an N x C x H x W batch to N x num_classes scores h. When
/// the head ReLU is enabled, h = max(0, logits); logits() always holds the
/// fully-connected output of the last forward pass.
class Network {
 public:
  Network(ArchSpec spec, std::uint64_t seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  const ArchSpec& spec() const { return spec_; }
  const NetworkPlan& plan() const { return plan_; }

  Tensor forward(const Tensor& batch, Mode mode);
  Tensor backward(const Tensor& grad_h);
  const Tensor& logits() const { return logits_; }

  void set_head_relu(bool enabled) { head_relu_enabled_ = enabled; }
  bool head_relu() const { return head_relu_enabled_; }

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();
  void zero_grad();
  Index parameter_count();

  std::vector<std::int64_t> kink_state() const;
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

  /// Deep copy of parameters, buffers and head state.
  Network clone() const;

 private:
  ArchSpec spec_;
  NetworkPlan plan_;
  std::uint64_t seed_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::unique_ptr<ReLU> head_relu_ = std::make_unique<ReLU>("head_relu");
  bool head_relu_enabled_ = false;
  Tensor logits_;
};

inline Network build_network(const ArchSpec& spec, std::uint64_t seed = 0) {
  return Network(spec, seed);
}

}  // namespace milcnn
