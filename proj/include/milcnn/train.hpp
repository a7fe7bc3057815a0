#pragma once

#include "milcnn/augment.hpp"
#include "milcnn/data.hpp"
#include "milcnn/loss.hpp"
#include "milcnn/network.hpp"
#include "milcnn/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace milcnn {

enum class LossMode { kSoftmaxCe, kMilNegativeOnly, kMilFullBag };

std::string_view to_string(LossMode mode);
/// Accepts "softmax_ce", "mil_negative_only", "mil_full_bag".
LossMode parse_loss_mode(std::string_view text);

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<LrDrop> lr_schedule{{80, 0.01}, {120, 0.001}};
  int epochs = 160;
  int batch_bags = 64;
  LossMode loss_mode = LossMode::kSoftmaxCe;
  int pretrain_epochs = 0;  // softmax epochs before a MIL loss takes over
  MilConfig mil;
  BagSpec bag;
  std::uint64_t seed = 0;

  bool bag_eval = false;      // evaluate on corner+center bags instead of the center view
  int checkpoint_every = 0;   // 0: final checkpoint only
  int reference_epochs = 160; // full-length schedule the run is scaled from

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool mil_epoch(int epoch) const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
/// Missing fields keep their defaults; malformed ones raise ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct EvalResult {
  Index count = 0;
  Index k = 5;
  double top1_error = 0.0;
  double topk_error = 0.0;
  std::vector<double> per_class_error;
};

void to_json(nlohmann::json& j, const EvalResult& r);

/// Predicts from the fully-connected output (before any head ReLU), either on
/// the center view or on the aggregated corner+center bag, in eval mode.
EvalResult evaluate(Network& net, std::span<const LabeledImage> images, const BagSpec& bag,
                    bool bag_eval, Index k = 5, Aggregation how = Aggregation::kMean,
                    int threads = 1);

struct StepResult {
  double loss = 0.0;   // batch loss (mean over samples or bags)
  Index correct = 0;
  Index count = 0;
};

/// One forward/backward/update on a batch of bags.
///
/// softmax_ce treats every instance as a sample carrying its bag's label and
/// averages over instances; the MIL modes stack all instances into one batch,
/// sum each bag's loss over its regions and average over bags.
StepResult train_step(Network& net, std::span<const Bag> bags, LossMode mode,
                      const MilConfig& mil, OptimizerState& state, const SgdParams& sgd);

/// Loss and gradient at the network output for one batch; exposed for the
/// gradient checker. `scores` is rows = instances in bag order.
struct BatchLoss {
  double loss = 0.0;
  Tensor grad;
  Index correct = 0;
  Index count = 0;
};
BatchLoss batch_loss(const Tensor& scores, const Tensor& logits, std::span<const Bag> bags,
                     LossMode mode, const MilConfig& mil);

/// Stacks the instances of `bags` into an N x C x H x W batch.
Tensor stack_instances(std::span<const Bag> bags);

struct EpochMetrics {
  int epoch = 0;
  std::string phase;  // "pretrain" | "mil"
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_top1;  // top-1 error; absent without a test split
  std::optional<double> test_top5;
  std::int64_t wall_ms = 0;
};

nlohmann::ordered_json to_json(const EpochMetrics& m);

struct TrainState {
  OptimizerState optimizer;
  int next_epoch = 0;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Called with the state to persist after every checkpoint_every-th epoch
  /// and after the last one.
  std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs epochs state.next_epoch .. cfg.epochs - 1, switching from softmax
/// to the MIL loss after cfg.pretrain_epochs. Images must carry labels < net output length.
/// Throws NumericalError when the loss stops being finite.
std::vector<EpochMetrics> train(Network& net, std::span<const LabeledImage> train_set,
                                std::span<const LabeledImage> test_set, const TrainConfig& cfg,
                                TrainState& state, const TrainHooks& hooks = {},
                                int threads = 1);

}  // namespace milcnn
