#include "milcnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace milcnn {

using nlohmann::json;

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kSoftmaxCe: return "softmax_ce";
    case LossMode::kMilNegativeOnly: return "mil_negative_only";
    case LossMode::kMilFullBag: return "mil_full_bag";
  }
  return "?";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "softmax_ce") return LossMode::kSoftmaxCe;
  if (text == "mil_negative_only") return LossMode::kMilNegativeOnly;
  if (text == "mil_full_bag") return LossMode::kMilFullBag;
  throw ConfigError("unknown loss mode '" + std::string(text) +
                    "' (expected softmax_ce, mil_negative_only or mil_full_bag)");
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (lr_schedule[i].epoch < 0 || !(lr_schedule[i].learning_rate > 0.0)) {
      throw ConfigError("lr_schedule[" + std::to_string(i) + "] needs epoch >= 0 and lr > 0");
    }
    if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch) {
      throw ConfigError("lr_schedule epochs must be strictly increasing");
    }
  }
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_bags < 1) throw ConfigError("batch_bags must be positive");
  if (pretrain_epochs < 0 || pretrain_epochs > epochs) {
    throw ConfigError("pretrain_epochs must lie in [0, epochs]");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (reference_epochs < 1) throw ConfigError("reference_epochs must be positive");
  try {
    mil.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("mil: ") + e.what());
  }
  try {
    bag.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("bag: ") + e.what());
  }
}

bool TrainConfig::mil_epoch(int epoch) const {
  return loss_mode != LossMode::kSoftmaxCe && epoch >= pretrain_epochs;
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + prefix + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& prefix) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown field '" + prefix + key + "'");
    }
  }
}

}  // namespace

void to_json(json& j, const TrainConfig& c) {
  json schedule = json::array();
  for (const auto& d : c.lr_schedule) schedule.push_back({d.epoch, d.learning_rate});
  j = {{"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"lr_schedule", schedule},
       {"epochs", c.epochs},
       {"batch_bags", c.batch_bags},
       {"loss_mode", to_string(c.loss_mode)},
       {"pretrain_epochs", c.pretrain_epochs},
       {"mil",
        {{"lambda", c.mil.lambda},
         {"prob_clamp_epsilon", c.mil.prob_clamp_epsilon},
         {"aggregation", c.mil.aggregation == Aggregation::kMean ? "mean" : "max"}}},
       {"bag",
        {{"pad", c.bag.pad},
         {"crop_size", c.bag.crop_size},
         {"bag_size", c.bag.bag_size},
         {"flip_prob", c.bag.flip_prob},
         {"sampling",
          c.bag.sampling == Sampling::kUniformRandom ? "uniform_random" : "corners_center"},
         {"seed", c.bag.seed}}},
       {"seed", c.seed},
       {"bag_eval", c.bag_eval},
       {"checkpoint_every", c.checkpoint_every},
       {"reference_epochs", c.reference_epochs}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "momentum", c.momentum);
  read_field(j, "weight_decay", c.weight_decay);
  if (j.contains("lr_schedule")) {
    const auto& s = j.at("lr_schedule");
    if (!s.is_array()) throw ConfigError("field 'lr_schedule': expected an array of [epoch, lr]");
    c.lr_schedule.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& e = s[i];
      LrDrop d;
      try {
        if (e.is_array() && e.size() == 2) {
          d.epoch = e[0].get<int>();
          d.learning_rate = e[1].get<double>();
        } else {
          d.epoch = e.at("epoch").get<int>();
          d.learning_rate = e.at("lr").get<double>();
        }
      } catch (const json::exception&) {
        throw ConfigError("field 'lr_schedule[" + std::to_string(i) +
                          "]': expected [epoch, lr] or {\"epoch\", \"lr\"}");
      }
      c.lr_schedule.push_back(d);
    }
  }
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_bags", c.batch_bags);
  if (j.contains("loss_mode")) {
    std::string mode;
    read_field(j, "loss_mode", mode);
    try {
      c.loss_mode = parse_loss_mode(mode);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("field 'loss_mode': ") + e.what());
    }
  }
  read_field(j, "pretrain_epochs", c.pretrain_epochs);
  if (j.contains("mil")) {
    const auto& m = j.at("mil");
    if (!m.is_object()) throw ConfigError("field 'mil': expected an object");
    reject_unknown(m, {"lambda", "prob_clamp_epsilon", "aggregation"}, "mil.");
    read_field(m, "lambda", c.mil.lambda, "mil.");
    read_field(m, "prob_clamp_epsilon", c.mil.prob_clamp_epsilon, "mil.");
    if (m.contains("aggregation")) {
      std::string how;
      read_field(m, "aggregation", how, "mil.");
      if (how == "mean") c.mil.aggregation = Aggregation::kMean;
      else if (how == "max") c.mil.aggregation = Aggregation::kMax;
      else throw ConfigError("field 'mil.aggregation': expected mean or max");
    }
  }
  if (j.contains("bag")) {
    const auto& b = j.at("bag");
    if (!b.is_object()) throw ConfigError("field 'bag': expected an object");
    reject_unknown(b, {"pad", "crop_size", "bag_size", "flip_prob", "sampling", "seed"}, "bag.");
    read_field(b, "pad", c.bag.pad, "bag.");
    read_field(b, "crop_size", c.bag.crop_size, "bag.");
    read_field(b, "bag_size", c.bag.bag_size, "bag.");
    read_field(b, "flip_prob", c.bag.flip_prob, "bag.");
    read_field(b, "seed", c.bag.seed, "bag.");
    if (b.contains("sampling")) {
      std::string s;
      read_field(b, "sampling", s, "bag.");
      if (s == "uniform_random") c.bag.sampling = Sampling::kUniformRandom;
      else if (s == "corners_center") c.bag.sampling = Sampling::kCornersCenter;
      else throw ConfigError("field 'bag.sampling': expected uniform_random or corners_center");
    }
  }
  read_field(j, "seed", c.seed);
  read_field(j, "bag_eval", c.bag_eval);
  read_field(j, "checkpoint_every", c.checkpoint_every);
  read_field(j, "reference_epochs", c.reference_epochs);
  c.mil.mode = c.loss_mode == LossMode::kMilFullBag ? MilMode::kFullBag : MilMode::kNegativeOnly;
}

// ---------------------------------------------------------------------------
// Batches and losses

Tensor stack_instances(std::span<const Bag> bags) {
  Index n = 0;
  for (const auto& b : bags) n += b.size();
  if (n == 0) throw std::invalid_argument("stack_instances: no instances");
  const Shape& sample = bags.front().instances.front().shape();
  const Index per = element_count(sample);
  Shape shape{n};
  shape.insert(shape.end(), sample.begin(), sample.end());
  Tensor batch(shape);
  Index row = 0;
  for (const auto& b : bags) {
    for (const auto& x : b.instances) {
      if (x.shape() != sample) throw ShapeError("stack_instances: mixed instance shapes");
      batch.data().segment(row++ * per, per) = x.data();
    }
  }
  return batch;
}

BatchLoss batch_loss(const Tensor& scores, const Tensor& logits, std::span<const Bag> bags,
                     LossMode mode, const MilConfig& mil) {
  const Index n = scores.dim(0), c = scores.dim(1);
  const auto h = scores.matrix(n, c);
  const auto z = logits.matrix(n, c);
  BatchLoss out;
  out.grad = Tensor(scores.shape());
  auto g = out.grad.matrix(n, c);

  Index row = 0;
  if (mode == LossMode::kSoftmaxCe) {
    const double scale = 1.0 / static_cast<double>(n);
    for (const auto& bag : bags) {
      for (Index j = 0; j < bag.size(); ++j, ++row) {
        const Eigen::VectorXd hr = h.row(row).transpose();
        const ScoreLoss l = softmax_ce(hr, bag.label);
        out.loss += l.loss * scale;
        g.row(row) = (l.grad * scale).transpose();
        out.correct += bag.label[predict_label(hr)] > 0.5 ? 1 : 0;
        ++out.count;
      }
    }
    return out;
  }

  const double scale = 1.0 / static_cast<double>(bags.size());
  for (const auto& bag : bags) {
    const Index m = bag.size();
    const Eigen::MatrixXd hb = h.middleRows(row, m);
    const BagLoss l = mil_loss(hb, bag.label, mil);
    out.loss += l.loss * scale;
    g.middleRows(row, m) = l.grad * scale;
    const Eigen::MatrixXd zb = z.middleRows(row, m);
    out.correct += bag.label[predict_label(aggregate_bag_scores(zb, mil.aggregation))] > 0.5;
    ++out.count;
    row += m;
  }
  return out;
}

StepResult train_step(Network& net, std::span<const Bag> bags, LossMode mode,
                      const MilConfig& mil, OptimizerState& state, const SgdParams& sgd) {
  if (bags.empty()) return {};
  const Tensor batch = stack_instances(bags);
  net.zero_grad();
  const Tensor scores = net.forward(batch, Mode::kTrain);
  BatchLoss l = batch_loss(scores, net.logits(), bags, mode, mil);
  if (!std::isfinite(l.loss)) {
    throw NumericalError("non-finite training loss (" + std::to_string(l.loss) + ")");
  }
  net.backward(l.grad);
  auto params = net.params();
  if (state.velocity.empty()) state = OptimizerState::zeros_like(params);
  sgd_step(params, state, sgd);
  return {l.loss, l.correct, l.count};
}

// ---------------------------------------------------------------------------
// Evaluation

void to_json(json& j, const EvalResult& r) {
  j = {{"count", r.count},
       {"top1_error", r.top1_error},
       {"top" + std::to_string(r.k) + "_error", r.topk_error},
       {"per_class_error", r.per_class_error}};
}

namespace {

constexpr Index kEvalChunk = 50;

struct ChunkTally {
  Index top1_wrong = 0;
  Index topk_wrong = 0;
  std::vector<Index> class_wrong;
  std::vector<Index> class_count;
};

void eval_chunk(Network& net, std::span<const LabeledImage> images, const BagSpec& bag,
                bool bag_eval, Index k, Aggregation how, ChunkTally& t) {
  const Index classes = net.spec().num_classes;
  std::vector<Bag> bags;
  bags.reserve(images.size());
  for (const auto& img : images) {
    if (img.label < 0 || img.label >= classes) {
      throw std::invalid_argument("evaluate: label " + std::to_string(img.label) +
                                  " outside the network's " + std::to_string(classes) +
                                  " classes");
    }
    const LabelVector y = LabelVector::one_hot(img.label, classes);
    if (bag_eval) {
      bags.push_back(test_bag(img.pixels, y, bag));
    } else {
      bags.push_back(Bag{{center_view(img.pixels, bag)}, y});
    }
  }
  net.forward(stack_instances(bags), Mode::kEval);
  const Tensor& logits = net.logits();
  const auto z = logits.matrix(logits.dim(0), classes);
  Index row = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Index m = bags[i].size();
    const Eigen::MatrixXd zb = z.middleRows(row, m);
    row += m;
    const Eigen::VectorXd s = aggregate_bag_scores(zb, how);
    const Index label = images[i].label;
    const auto best = top_k(s, std::min(k, classes));
    const bool hit1 = best.front() == label;
    const bool hitk = std::find(best.begin(), best.end(), label) != best.end();
    t.top1_wrong += hit1 ? 0 : 1;
    t.topk_wrong += hitk ? 0 : 1;
    t.class_count[static_cast<std::size_t>(label)] += 1;
    t.class_wrong[static_cast<std::size_t>(label)] += hit1 ? 0 : 1;
  }
}

}  // namespace

EvalResult evaluate(Network& net, std::span<const LabeledImage> images, const BagSpec& bag,
                    bool bag_eval, Index k, Aggregation how, int threads) {
  const Index classes = net.spec().num_classes;
  EvalResult r;
  r.k = k;
  r.count = static_cast<Index>(images.size());
  r.per_class_error.assign(static_cast<std::size_t>(classes), 0.0);
  if (images.empty()) return r;

  const Index chunks = (r.count + kEvalChunk - 1) / kEvalChunk;
  std::vector<ChunkTally> tallies(static_cast<std::size_t>(chunks));
  for (auto& t : tallies) {
    t.class_wrong.assign(static_cast<std::size_t>(classes), 0);
    t.class_count.assign(static_cast<std::size_t>(classes), 0);
  }
  auto run = [&](Network& worker, Index first, Index stride) {
    for (Index c = first; c < chunks; c += stride) {
      const Index begin = c * kEvalChunk;
      const Index len = std::min(kEvalChunk, r.count - begin);
      eval_chunk(worker, images.subspan(static_cast<std::size_t>(begin),
                                        static_cast<std::size_t>(len)),
                 bag, bag_eval, k, how, tallies[static_cast<std::size_t>(c)]);
    }
  };

  const Index workers = std::clamp<Index>(threads, 1, chunks);
  if (workers == 1) {
    run(net, 0, 1);
  } else {
    std::vector<Network> clones;
    for (Index w = 1; w < workers; ++w) clones.push_back(net.clone());
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (Index w = 1; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(clones[static_cast<std::size_t>(w - 1)], w, workers);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    try {
      run(net, 0, workers);
    } catch (...) {
      errors[0] = std::current_exception();
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  Index top1 = 0, topk = 0;
  std::vector<Index> wrong(static_cast<std::size_t>(classes), 0), seen(wrong.size(), 0);
  for (const auto& t : tallies) {
    top1 += t.top1_wrong;
    topk += t.topk_wrong;
    for (std::size_t c = 0; c < wrong.size(); ++c) {
      wrong[c] += t.class_wrong[c];
      seen[c] += t.class_count[c];
    }
  }
  r.top1_error = static_cast<double>(top1) / static_cast<double>(r.count);
  r.topk_error = static_cast<double>(topk) / static_cast<double>(r.count);
  for (std::size_t c = 0; c < wrong.size(); ++c) {
    r.per_class_error[c] =
        seen[c] == 0 ? 0.0 : static_cast<double>(wrong[c]) / static_cast<double>(seen[c]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training driver

nlohmann::ordered_json to_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["phase"] = m.phase;
  j["lr"] = m.lr;
  j["train_loss"] = m.train_loss;
  j["train_acc"] = m.train_acc;
  j["test_top1"] = m.test_top1 ? nlohmann::ordered_json(*m.test_top1) : nullptr;
  j["test_top5"] = m.test_top5 ? nlohmann::ordered_json(*m.test_top5) : nullptr;
  j["wall_ms"] = m.wall_ms;
  return j;
}

std::vector<EpochMetrics> train(Network& net, std::span<const LabeledImage> train_set,
                                std::span<const LabeledImage> test_set, const TrainConfig& cfg,
                                TrainState& state, const TrainHooks& hooks, int threads) {
  cfg.validate();
  std::vector<EpochMetrics> log;
  if (state.next_epoch >= cfg.epochs) return log;
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const Index classes = net.spec().num_classes;
  for (const auto& img : train_set) {
    if (img.label < 0 || img.label >= classes) {
      throw std::invalid_argument("train: label " + std::to_string(img.label) +
                                  " outside the network's " + std::to_string(classes) +
                                  " classes");
    }
  }
  if (state.optimizer.velocity.empty()) state.optimizer = OptimizerState::zeros_like(net.params());

  BagSpec single = cfg.bag;
  single.bag_size = 1;
  single.sampling = Sampling::kUniformRandom;

  const auto n = train_set.size();
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const bool mil = cfg.mil_epoch(epoch);
    net.set_head_relu(mil);
    const LossMode mode = mil ? cfg.loss_mode : LossMode::kSoftmaxCe;
    const BagSpec& bag_spec = mil ? cfg.bag : single;
    // Fine-tuning starts from the pretrained weights with a fresh solver.
    if (mil && epoch == cfg.pretrain_epochs && epoch > 0) {
      state.optimizer = OptimizerState::zeros_like(net.params());
    }

    SgdParams sgd{lr_at(epoch, cfg.learning_rate, cfg.lr_schedule), cfg.momentum,
                  cfg.weight_decay};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(cfg.seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    Index correct = 0, seen = 0, batches = 0;
    const auto batch = static_cast<std::size_t>(cfg.batch_bags);
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      std::vector<Bag> bags;
      bags.reserve(end - begin);
      for (std::size_t p = begin; p < end; ++p) {
        const std::size_t idx = order[p];
        Rng rng = make_rng(cfg.seed, {stream::kAugment, cfg.bag.seed,
                                      static_cast<std::uint64_t>(epoch), idx});
        bags.push_back(make_bag(train_set[idx].pixels,
                                LabelVector::one_hot(train_set[idx].label, classes), bag_spec,
                                rng));
      }
      StepResult r;
      try {
        r = train_step(net, bags, mode, cfg.mil, state.optimizer, sgd);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batches));
      }
      loss_sum += r.loss;
      correct += r.correct;
      seen += r.count;
      ++batches;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.phase = mil ? "mil" : "pretrain";
    m.lr = sgd.learning_rate;
    m.train_loss = loss_sum / static_cast<double>(batches);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    if (!test_set.empty()) {
      const EvalResult e = evaluate(net, test_set, cfg.bag, cfg.bag_eval, 5,
                                    cfg.mil.aggregation, threads);
      m.test_top1 = e.top1_error;
      m.test_top5 = e.topk_error;
    }
    m.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    log.push_back(m);
    state.next_epoch = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(m);
    const bool last = epoch + 1 == cfg.epochs;
    const bool periodic = cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
    if (hooks.on_checkpoint && (last || periodic)) hooks.on_checkpoint(state);
  }
  return log;
}

}  // namespace milcnn
