#include "milcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace milcnn {

using nlohmann::json;

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

Tensor finite_diff(const ScalarFn& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff: non-finite function value at coordinate " +
                           std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

bool GradReport::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradEntry& e) { return e.pass; });
}

double GradReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_error);
  return m;
}

Index GradReport::skipped() const {
  Index n = 0;
  for (const auto& e : entries) n += e.skipped;
  return n;
}

void to_json(json& j, const GradEntry& e) {
  j = {{"name", e.name},         {"size", e.size},
       {"checked", e.checked},   {"skipped_kinks", e.skipped},
       {"max_rel_error", e.max_error}, {"worst_index", e.worst_index},
       {"analytic", e.analytic}, {"numeric", e.numeric},
       {"pass", e.pass}};
}

void to_json(json& j, const GradReport& r) {
  j = {{"subject", r.subject},
       {"loss", r.loss},
       {"step", r.step},
       {"threshold", r.threshold},
       {"max_rel_error", r.max_error()},
       {"skipped_kinks", r.skipped()},
       {"pass", r.pass()},
       {"entries", r.entries}};
}

namespace {

using Kinks = std::vector<std::int64_t>;

// Central differences over coordinates [begin, end) of `target`, which the
// evaluation reads in place. A coordinate is skipped when either perturbed
// evaluation lands on a different kink state than the base point.
template <class Eval>
void probe_range(Tensor& target, Index begin, Index end, double step, const Kinks& base,
                 Eval&& eval, std::vector<double>& numeric, std::vector<char>& skipped) {
  Kinks kinks;
  for (Index i = begin; i < end; ++i) {
    const double orig = target[i];
    target[i] = orig + step;
    const double up = eval(kinks);
    const bool same_up = kinks == base;
    target[i] = orig - step;
    const double down = eval(kinks);
    const bool same_down = kinks == base;
    target[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("gradcheck: non-finite function value at coordinate " +
                           std::to_string(i));
    }
    skipped[static_cast<std::size_t>(i)] = (same_up && same_down) ? 0 : 1;
    numeric[static_cast<std::size_t>(i)] = (up - down) / (2.0 * step);
  }
}

GradEntry assemble(std::string name, const Tensor& analytic, const std::vector<double>& numeric,
                   const std::vector<char>& skipped, double threshold) {
  GradEntry e;
  e.name = std::move(name);
  e.size = analytic.size();
  for (Index i = 0; i < analytic.size(); ++i) {
    if (skipped[static_cast<std::size_t>(i)]) {
      ++e.skipped;
      continue;
    }
    ++e.checked;
    const double n = numeric[static_cast<std::size_t>(i)];
    const double err = relative_error(analytic[i], n);
    if (e.worst_index < 0 || err > e.max_error) {
      e.max_error = err;
      e.worst_index = i;
      e.analytic = analytic[i];
      e.numeric = n;
    }
  }
  e.pass = e.max_error <= threshold;
  return e;
}

Kinks layer_kinks(const Layer& layer) {
  Kinks k;
  layer.append_kink_state(k);
  return k;
}

}  // namespace

GradReport check_layer(Layer& layer, const Tensor& input, Mode mode, std::uint64_t seed,
                       GradCheckOptions options) {
  Rng rng = make_rng(seed, {stream::kGradcheck});
  Tensor x = input;
  const Tensor out = layer.forward(x, mode);
  Tensor w(out.shape());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < w.size(); ++i) w[i] = normal(rng);

  layer.zero_grad();
  layer.forward(x, mode);
  const Kinks base = layer_kinks(layer);
  const Tensor dx = layer.backward(w);
  auto params = layer.params();
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(*p.grad);

  auto eval = [&](Kinks& kinks) {
    const Tensor y = layer.forward(x, mode);
    kinks = layer_kinks(layer);
    return y.data().dot(w.data());
  };

  GradReport report;
  report.subject = layer.name() + " (" + std::string(layer.kind()) + ")";
  report.loss = "dot";
  report.step = options.step;
  report.threshold = options.threshold;
  auto run = [&](const std::string& name, Tensor& target, const Tensor& grad) {
    std::vector<double> numeric(static_cast<std::size_t>(target.size()));
    std::vector<char> skipped(numeric.size());
    probe_range(target, 0, target.size(), options.step, base, eval, numeric, skipped);
    report.entries.push_back(assemble(name, grad, numeric, skipped, options.threshold));
  };
  run("input", x, dx);
  for (std::size_t i = 0; i < params.size(); ++i) run(params[i].name, *params[i].value, analytic[i]);
  return report;
}

GradReport check_network(Network& net, LossMode mode, std::span<const Bag> bags,
                         const MilConfig& mil, GradCheckOptions options) {
  const Index count = net.parameter_count();
  if (count > options.max_params) {
    throw ConfigError("network has " + std::to_string(count) +
                      " parameters; gradient checking is limited to " +
                      std::to_string(options.max_params) + " (use a smaller ArchSpec)");
  }
  const bool head = mode != LossMode::kSoftmaxCe;
  net.set_head_relu(head);
  const Tensor batch = stack_instances(bags);

  net.zero_grad();
  const Tensor scores = net.forward(batch, Mode::kTrain);
  const Kinks base = net.kink_state();
  const BatchLoss l = batch_loss(scores, net.logits(), bags, mode, mil);
  const Tensor dx = net.backward(l.grad);
  auto params = net.params();
  std::vector<const Tensor*> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);
  analytic.push_back(&dx);

  struct Worker {
    Network* net;
    Tensor batch;
  };
  const int workers = std::max(1, options.threads);
  std::vector<Network> clones;
  for (int w = 1; w < workers; ++w) clones.push_back(net.clone());
  std::vector<Worker> pool{{&net, batch}};
  for (auto& c : clones) pool.push_back({&c, batch});

  GradReport report;
  report.subject = "network";
  report.loss = std::string(to_string(mode));
  report.step = options.step;
  report.threshold = options.threshold;

  const std::size_t targets = params.size() + 1;
  for (std::size_t t = 0; t < targets; ++t) {
    const Index size = analytic[t]->size();
    std::vector<double> numeric(static_cast<std::size_t>(size));
    std::vector<char> skipped(numeric.size());
    auto work = [&](Worker& wk, Index begin, Index end) {
      Tensor& target = t < params.size() ? *wk.net->params()[t].value : wk.batch;
      auto eval = [&](Kinks& kinks) {
        const Tensor s = wk.net->forward(wk.batch, Mode::kTrain);
        kinks = wk.net->kink_state();
        return batch_loss(s, wk.net->logits(), bags, mode, mil).loss;
      };
      probe_range(target, begin, end, options.step, base, eval, numeric, skipped);
    };
    const Index per = (size + workers - 1) / workers;
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(pool.size());
    for (std::size_t w = 1; w < pool.size(); ++w) {
      const Index b = std::min(size, static_cast<Index>(w) * per), e = std::min(size, b + per);
      threads.emplace_back([&, w, b, e] {
        try {
          work(pool[w], b, e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    try {
      work(pool[0], 0, std::min(size, per));
    } catch (...) {
      errors[0] = std::current_exception();
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    const std::string name = t < params.size() ? params[t].name : "input";
    report.entries.push_back(assemble(name, *analytic[t], numeric, skipped, options.threshold));
  }
  return report;
}

GradReport check_loss(LossMode mode, const Eigen::MatrixXd& scores, const LabelVector& y,
                      const MilConfig& mil, double threshold) {
  const Index m = scores.rows(), c = scores.cols();
  Tensor h(Shape{m, c});
  h.matrix(m, c) = scores;
  const std::vector<Bag> bags{Bag{std::vector<Tensor>(static_cast<std::size_t>(m)), y}};
  const BatchLoss l = batch_loss(h, h, bags, mode, mil);

  const ScalarFn f = [&](const Tensor& x) { return batch_loss(x, x, bags, mode, mil).loss; };
  const Tensor numeric = finite_diff(f, h);
  std::vector<double> n(numeric.ptr(), numeric.ptr() + numeric.size());
  GradReport report;
  report.subject = "loss";
  report.loss = std::string(to_string(mode));
  report.threshold = threshold;
  report.entries.push_back(
      assemble("scores", l.grad, n, std::vector<char>(n.size(), 0), threshold));
  return report;
}

// ---------------------------------------------------------------------------
// Fixtures

namespace {

void randomize(Tensor& t, Rng& rng, double scale = 1.0, double shift = 0.0) {
  std::normal_distribution<double> normal(shift, scale);
  for (Index i = 0; i < t.size(); ++i) t[i] = normal(rng);
}

void init_block(ResidualBlock& block, Rng& rng) {
  block.init_he(rng);
  for (auto& p : block.params()) {
    if (p.name.ends_with(".gamma")) randomize(*p.value, rng, 0.2, 1.0);
    if (p.name.ends_with(".beta")) randomize(*p.value, rng, 0.2);
  }
}

}  // namespace

std::vector<LayerCase> layer_gradcheck_cases() {
  std::vector<LayerCase> cases;
  cases.push_back({"conv2d", "3x3 stride 2 with bias",
                   [](Rng& rng) {
                     auto l = std::make_unique<Conv2d>("conv", 2, 3, 3, 2, 1, true);
                     l->init_he(rng);
                     randomize(l->bias(), rng, 0.1);
                     return std::unique_ptr<Layer>(std::move(l));
                   },
                   {2, 2, 5, 5}});
  cases.push_back({"conv2d", "1x1 pointwise",
                   [](Rng& rng) {
                     auto l = std::make_unique<Conv2d>("conv", 3, 2, 1, 1, 0, false);
                     l->init_he(rng);
                     return std::unique_ptr<Layer>(std::move(l));
                   },
                   {2, 3, 3, 3}});
  cases.push_back({"batch_norm", "train",
                   [](Rng& rng) {
                     auto l = std::make_unique<BatchNorm2d>("bn", 3);
                     randomize(l->gamma(), rng, 0.3, 1.0);
                     randomize(l->beta(), rng, 0.3);
                     return std::unique_ptr<Layer>(std::move(l));
                   },
                   {3, 3, 2, 2}});
  cases.push_back({"batch_norm", "eval",
                   [](Rng& rng) {
                     auto l = std::make_unique<BatchNorm2d>("bn", 3);
                     randomize(l->gamma(), rng, 0.3, 1.0);
                     randomize(l->beta(), rng, 0.3);
                     for (int k = 0; k < 3; ++k) {
                       Tensor warm(Shape{4, 3, 2, 2});
                       randomize(warm, rng, 2.0, 0.5);
                       l->forward(warm, Mode::kTrain);
                     }
                     return std::unique_ptr<Layer>(std::move(l));
                   },
                   {2, 3, 2, 2},
                   Mode::kEval});
  cases.push_back({"linear", "flattening",
                   [](Rng& rng) {
                     auto l = std::make_unique<Linear>("fc", 12, 4);
                     l->init_he(rng);
                     randomize(l->bias(), rng, 0.1);
                     return std::unique_ptr<Layer>(std::move(l));
                   },
                   {3, 3, 2, 2}});
  cases.push_back({"relu", "",
                   [](Rng&) { return std::unique_ptr<Layer>(std::make_unique<ReLU>("relu")); },
                   {2, 3, 4, 4}});
  cases.push_back({"max_pool", "3x3 stride 2 pad 1",
                   [](Rng&) {
                     return std::unique_ptr<Layer>(std::make_unique<MaxPool2d>("pool", 3, 2, 1));
                   },
                   {2, 2, 5, 5}});
  cases.push_back({"avg_pool", "2x2 stride 2",
                   [](Rng&) {
                     return std::unique_ptr<Layer>(std::make_unique<AvgPool2d>("pool", 2, 2, 0));
                   },
                   {2, 2, 4, 4}});
  cases.push_back({"avg_pool", "global",
                   [](Rng&) {
                     return std::unique_ptr<Layer>(std::make_unique<AvgPool2d>("pool", 4, 4, 0));
                   },
                   {2, 3, 4, 4}});
  cases.push_back({"basic_block", "identity shortcut",
                   [](Rng& rng) {
                     auto b = std::make_unique<BasicBlock>("block", 3, 3, 1);
                     init_block(*b, rng);
                     return std::unique_ptr<Layer>(std::move(b));
                   },
                   {2, 3, 4, 4}});
  cases.push_back({"basic_block", "projection stride 2",
                   [](Rng& rng) {
                     auto b = std::make_unique<BasicBlock>("block", 2, 4, 2);
                     init_block(*b, rng);
                     return std::unique_ptr<Layer>(std::move(b));
                   },
                   {2, 2, 6, 6}});
  cases.push_back({"bottleneck_block", "stride 1",
                   [](Rng& rng) {
                     auto b = std::make_unique<BottleneckBlock>("block", 4, 2, 8, 1);
                     init_block(*b, rng);
                     return std::unique_ptr<Layer>(std::move(b));
                   },
                   {2, 4, 4, 4}});
  cases.push_back({"bottleneck_block", "stride 2",
                   [](Rng& rng) {
                     auto b = std::make_unique<BottleneckBlock>("block", 4, 2, 8, 2);
                     init_block(*b, rng);
                     return std::unique_ptr<Layer>(std::move(b));
                   },
                   {2, 4, 6, 6}});
  return cases;
}

GradReport run_layer_case(const LayerCase& c, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::kGradcheck, 1});
  auto layer = c.make(rng);
  Tensor input(c.input_shape);
  randomize(input, rng);
  GradReport r = check_layer(*layer, input, c.mode, seed);
  r.subject = c.kind + (c.variant.empty() ? "" : " [" + c.variant + "]");
  return r;
}

std::vector<Bag> gradcheck_bags(const ArchSpec& spec, LossMode mode, std::uint64_t seed,
                                Index bags) {
  Rng rng = make_rng(seed, {stream::kGradcheck, 2});
  const Index per_bag = mode == LossMode::kSoftmaxCe ? 1 : 2;
  std::vector<Bag> out;
  for (Index b = 0; b < bags; ++b) {
    Bag bag;
    bag.label = LabelVector::one_hot(b % spec.num_classes, spec.num_classes);
    for (Index j = 0; j < per_bag; ++j) {
      Tensor x(spec.input_shape);
      randomize(x, rng);
      bag.instances.push_back(std::move(x));
    }
    out.push_back(std::move(bag));
  }
  return out;
}

}  // namespace milcnn
