#pragma once

#include "milcnn/layers.hpp"
#include "milcnn/loss.hpp"
#include "milcnn/network.hpp"
#include "milcnn/train.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace milcnn {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kLayerTolerance = 1e-5;
inline constexpr double kNetworkTolerance = 1e-4;
inline constexpr double kRelativeFloor = 1e-12;
inline constexpr Index kMaxCheckedParams = 50'000;

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = kRelativeFloor);

using ScalarFn = std::function<double(const Tensor&)>;

/// Central differences (f(x + step e_i) - f(x - step e_i)) / (2 step) for
/// every coordinate. Throws NumericalError naming the coordinate if f is not
/// finite there.
Tensor finite_diff(const ScalarFn& f, const Tensor& x, double step = kGradStep);

struct GradEntry {
  std::string name;
  Index size = 0;
  Index checked = 0;
  Index skipped = 0;  // coordinates whose perturbation crossed a kink
  double max_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  bool pass = true;
};

struct GradReport {
  std::string subject;
  std::string loss;
  double step = kGradStep;
  double threshold = kNetworkTolerance;
  std::vector<GradEntry> entries;

  bool pass() const;
  double max_error() const;
  Index skipped() const;
};

void to_json(nlohmann::json& j, const GradEntry& e);
void to_json(nlohmann::json& j, const GradReport& r);

struct GradCheckOptions {
  double step = kGradStep;
  double threshold = kNetworkTolerance;
  Index max_params = kMaxCheckedParams;
  int threads = 1;
};

/// Checks a layer on f(x) = <w, layer(x)> for a fixed random w: input
/// gradient and every parameter gradient against finite differences.
GradReport check_layer(Layer& layer, const Tensor& input, Mode mode, std::uint64_t seed,
                       GradCheckOptions options = {.threshold = kLayerTolerance});

/// Checks the network trained with `mode` on the given bags: the batch loss
/// of batch_loss() as a function of every parameter tensor and of the input.
/// Batch norm runs in train mode on the fixed batch. Throws ConfigError when
/// the parameter count exceeds options.max_params.
GradReport check_network(Network& net, LossMode mode, std::span<const Bag> bags,
                         const MilConfig& mil, GradCheckOptions options = {});

/// Checks a loss in isolation on scores of the given shape (rows = instances
/// of one bag): analytic gradient versus finite differences.
GradReport check_loss(LossMode mode, const Eigen::MatrixXd& scores, const LabelVector& y,
                      const MilConfig& mil, double threshold = kLayerTolerance);

struct LayerCase {
  std::string kind;     // registered_layer_kinds() entry
  std::string variant;  // e.g. "train" / "eval"
  std::function<std::unique_ptr<Layer>(Rng&)> make;
  Shape input_shape;  // batch shape
  Mode mode = Mode::kTrain;
};

/// Gradient-check fixtures; covers every registered layer kind.
std::vector<LayerCase> layer_gradcheck_cases();

/// Runs one fixture end to end.
GradReport run_layer_case(const LayerCase& c, std::uint64_t seed = 0);

/// A small set of bags (random inputs, distinct labels) for network checks.
std::vector<Bag> gradcheck_bags(const ArchSpec& spec, LossMode mode, std::uint64_t seed,
                                Index bags = 2);

}  // namespace milcnn
