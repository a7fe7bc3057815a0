// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 5 9      run a subset
//
// Metrics logs of the training criteria are written to ./acceptance_logs.

#include "cli.hpp"
#include "milcnn/checkpoint.hpp"
#include "milcnn/gradcheck.hpp"
#include "milcnn/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace milcnn;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct CliResult {
  int code;
  json out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  json j;
  if (code == cli::kExitOk || code == cli::kExitNumerical) j = json::parse(out.str());
  return {code, j, err.str()};
}

const fs::path kLogDir = "acceptance_logs";

void write_log(const std::string& name, const std::vector<std::string>& lines) {
  fs::create_directories(kLogDir);
  std::ofstream f(kLogDir / name);
  for (const auto& l : lines) f << l << '\n';
}

std::string log_line(const EpochMetrics& m) { return to_json(m).dump(); }

std::string without_wall_clock(const std::string& line) {
  auto j = nlohmann::ordered_json::parse(line);
  j.erase("wall_ms");
  return j.dump();
}

bool same_logs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (without_wall_clock(a[i]) != without_wall_clock(b[i])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// 1. gradient certification

Outcome gradient_certification() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "milcnn_acceptance";
  fs::create_directories(dir);
  const fs::path bottleneck = dir / "bottleneck.json";
  std::ofstream(bottleneck) << R"({"block_type": "bottleneck", "stage_widths": [8, 8, 16],
    "stage_repeats": [1, 1, 1], "stem": {"channels": 8, "kernel": 3, "stride": 1, "padding": 1},
    "input_shape": [3, 8, 8], "num_classes": 4})";

  bool pass = true;
  double layer_max = 0, loss_max = 0, net_max = 0;
  std::size_t layer_cases = 0;
  std::string failed;
  for (const std::string arch : {std::string("minimal"), bottleneck.string()}) {
    for (const char* loss : {"softmax_ce", "mil_negative_only", "mil_full_bag"}) {
      const CliResult r = cli({"gradcheck", "--arch", arch, "--loss", loss});
      if (r.code != cli::kExitOk) {
        pass = false;
        failed += std::string(" ") + loss + "@" + fs::path(arch).stem().string();
        if (r.out.is_null()) continue;
      }
      for (const auto& l : r.out.at("layers")) {
        layer_max = std::max(layer_max, l.at("max_rel_error").get<double>());
        ++layer_cases;
      }
      loss_max = std::max(loss_max, r.out.at("loss").at("max_rel_error").get<double>());
      net_max = std::max(net_max, r.out.at("network").at("max_rel_error").get<double>());
    }
  }
  const double secs = seconds_since(t0);
  pass = pass && layer_max <= kLayerTolerance && loss_max <= kLayerTolerance &&
         net_max <= kNetworkTolerance && secs < 120.0;
  return {pass, std::to_string(layer_cases) + " layer checks max " + fmt("%.2e", layer_max) +
                    ", losses max " + fmt("%.2e", loss_max) + ", networks (basic+bottleneck x 3 losses) max " +
                    fmt("%.2e", net_max) + ", " + fmt("%.1f", secs) + " s" +
                    (failed.empty() ? "" : ", failed:" + failed)};
}

// ---------------------------------------------------------------------------
// 2-4. loss identities on random draws

struct Draw {
  Eigen::MatrixXd h;
  LabelVector y;
  double lambda;
};

Draw random_draw(Rng& rng) {
  std::uniform_int_distribution<Index> rows(1, 8), cols(2, 12);
  std::uniform_real_distribution<double> score(0.0, 5.0), log_lambda(std::log(1e-4), 0.0);
  const Index m = rows(rng), c = cols(rng);
  Draw d;
  d.h.resize(m, c);
  // About one score in five is an exact ReLU zero.
  for (Index i = 0; i < d.h.size(); ++i) d.h.data()[i] = rng() % 5 == 0 ? 0.0 : score(rng);
  Eigen::VectorXd y(c);
  for (Index i = 0; i < c; ++i) y[i] = static_cast<double>(rng() & 1u);
  d.y = LabelVector(y);
  d.lambda = std::exp(log_lambda(rng));
  return d;
}

Outcome derivation_identity() {
  Rng rng = make_rng(2, {stream::kGradcheck});
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Draw d = random_draw(rng);
    MilConfig cfg;
    cfg.lambda = d.lambda;
    const double closed = mil_loss_negative_only(d.h, d.y, cfg).loss;
    double chain = 0.0;
    for (Index i = 0; i < d.h.cols(); ++i) {
      Eigen::VectorXd p(d.h.rows());
      for (Index j = 0; j < d.h.rows(); ++j) p[j] = instance_prob(d.h(j, i), d.lambda);
      chain -= (1.0 - d.y[i]) * std::log(bag_negative_prob(p));
    }
    worst = std::max(worst, std::abs(closed - chain));
  }
  return {worst <= 1e-10, "1000 draws, max |closed - chain| " + fmt("%.2e", worst)};
}

Outcome gradient_exactness() {
  Rng rng = make_rng(3, {stream::kGradcheck});
  bool exact = true;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Draw d = random_draw(rng);
    MilConfig cfg;
    cfg.lambda = d.lambda;
    const BagLoss l = mil_loss_negative_only(d.h, d.y, cfg);
    for (Index j = 0; j < d.h.rows(); ++j)
      for (Index i = 0; i < d.h.cols(); ++i) exact = exact && l.grad(j, i) == d.lambda * (1.0 - d.y[i]);
    // Forward differences keep every probe inside the ReLU range h >= 0. The
    // loss is linear in H, so the step adds no truncation error.
    const double step = 1e-2;
    const double f0 = l.loss;
    for (Index j = 0; j < d.h.rows(); ++j)
      for (Index i = 0; i < d.h.cols(); ++i) {
        Eigen::MatrixXd moved = d.h;
        moved(j, i) += step;
        const double fd = (mil_loss_negative_only(moved, d.y, cfg).loss - f0) / step;
        worst = std::max(worst, relative_error(l.grad(j, i), fd));
      }
  }
  return {exact && worst <= 1e-9, std::string("analytic gradient ") +
                                      (exact ? "exactly" : "NOT exactly") +
                                      " lambda(1-y) on 1000 draws, finite-difference max rel err " +
                                      fmt("%.2e", worst)};
}

Outcome softmax_identities() {
  Rng rng = make_rng(4, {stream::kGradcheck});
  std::uniform_int_distribution<Index> cols(2, 100);
  std::uniform_real_distribution<double> score(-20.0, 20.0);
  double sum_err = 0.0, grad_err = 0.0, grad_sum = 0.0, naive_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Index c = cols(rng);
    Eigen::VectorXd h(c);
    for (Index i = 0; i < c; ++i) h[i] = score(rng);
    const LabelVector y = LabelVector::one_hot(static_cast<Index>(rng() % c), c);
    const Eigen::VectorXd p = softmax(h);
    const Eigen::VectorXd naive = h.array().exp() / h.array().exp().sum();
    naive_err = std::max(naive_err, (p - naive).cwiseAbs().maxCoeff());
    sum_err = std::max(sum_err, std::abs(p.sum() - 1.0));
    const ScoreLoss l = softmax_ce(h, y);
    grad_err = std::max(grad_err, (l.grad - (p - y.entries())).cwiseAbs().maxCoeff());
    grad_sum = std::max(grad_sum, std::abs(l.grad.sum()));
  }
  const bool pass = sum_err <= 1e-12 && grad_err == 0.0 && grad_sum <= 1e-12 && naive_err <= 1e-12;
  return {pass, "1000 draws: |sum p - 1| " + fmt("%.1e", sum_err) + ", |grad - (p - y)| " +
                    fmt("%.1e", grad_err) + ", |sum grad| " + fmt("%.1e", grad_sum) +
                    ", vs direct exp/sum " + fmt("%.1e", naive_err)};
}

// ---------------------------------------------------------------------------
// 5. shape audit

using StageTable = std::vector<std::pair<std::string, std::vector<Index>>>;

// Channels from the configuration column, spatial size from the output column.
const StageTable kTable1 = {{"conv1", {16, 32, 32}},   {"ResNet1", {16, 32, 32}},
                            {"ResNet2", {32, 16, 16}}, {"ResNet3", {64, 8, 8}},
                            {"pool2", {64, 1, 1}},     {"fc", {10}}};
const StageTable kTable3 = {{"conv1", {64, 112, 112}},  {"pool1", {64, 56, 56}},
                            {"ResNet1", {256, 56, 56}}, {"ResNet2", {512, 28, 28}},
                            {"ResNet3", {1024, 14, 14}}, {"ResNet4", {2048, 7, 7}},
                            {"pool2", {2048, 1, 1}},    {"fc", {1000}}};

bool audit(const std::string& arch, const StageTable& want, std::vector<Index> fc, std::string& note) {
  const CliResult r = cli({"shapes", "--arch", arch});
  if (r.code != cli::kExitOk) {
    note += arch + " exited " + std::to_string(r.code) + "; ";
    return false;
  }
  StageTable got;
  for (const auto& s : r.out.at("stages"))
    got.push_back({s.at("name").get<std::string>(), s.at("shape").get<std::vector<Index>>()});
  const auto got_fc = r.out.at("fc_size").get<std::vector<Index>>();
  const bool ok = got == want && got_fc == fc;
  note += arch + " " + std::to_string(got.size()) + " stages + fc " + std::to_string(got_fc[0]) +
          "x" + std::to_string(got_fc[1]) + (ok ? " match" : " MISMATCH") + "; ";
  return ok;
}

Outcome shape_audit() {
  std::string note;
  const bool a = audit("table1", kTable1, {64, 10}, note);
  const bool b = audit("table3", kTable3, {2048, 1000}, note);
  note.resize(note.size() - 2);
  return {a && b, note};
}

// ---------------------------------------------------------------------------
// 6. overfit sanity

std::vector<LabeledImage> cifar_subset(std::size_t n, std::string& source) {
  if (const char* dir = std::getenv("MILCNN_CIFAR10_DIR")) {
    const fs::path batch = fs::path(dir) / "data_batch_1.bin";
    if (fs::exists(batch)) {
      auto images = parse_cifar(batch, {});
      images.resize(n);
      source = "CIFAR-10 data_batch_1";
      return images;
    }
  }
  SynthSpec s;
  s.canvas = 32;
  s.offset_range = 10;
  s.count = static_cast<Index>(n);
  s.test_count = 0;
  s.seed = 6;
  source = "synthetic fallback (archive absent)";
  return gen_synthetic(s).train;
}

struct OverfitRun {
  std::vector<std::string> log;
  double final_train_acc = 0.0;
  double eval_error = 1.0;
  double seconds = 0.0;
  std::string source;
};

OverfitRun overfit_run() {
  const auto t0 = Clock::now();
  OverfitRun run;
  auto images = cifar_subset(64, run.source);
  normalize(images, channel_statistics(images));

  ArchSpec arch = ArchSpec::minimal({3, 32, 32}, 10);
  arch.stage_widths = {16, 32, 64};
  arch.stage_repeats = {1, 1, 1};
  arch.stem.channels = 16;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.lr_schedule = {{100, 0.01}};
  cfg.epochs = 200;
  cfg.reference_epochs = 200;
  cfg.batch_bags = 16;
  cfg.bag.pad = 0;
  cfg.bag.bag_size = 1;
  cfg.bag.flip_prob = 0.0;
  cfg.seed = 6;

  Network net(arch, cfg.seed);
  TrainState state;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) { run.log.push_back(log_line(m)); };
  const auto metrics = train(net, images, {}, cfg, state, hooks);
  run.final_train_acc = metrics.back().train_acc;
  run.eval_error = evaluate(net, images, cfg.bag, false).top1_error;
  run.seconds = seconds_since(t0);
  return run;
}

Outcome overfit_outcome(const OverfitRun& r) {
  const bool pass = r.final_train_acc == 1.0 && r.eval_error == 0.0 && r.seconds < 900.0;
  return {pass, r.source + ", 64 images, 200 epochs: final epoch train acc " +
                    fmt("%.4f", r.final_train_acc) + ", eval-mode train error " +
                    fmt("%.4f", r.eval_error) + ", " + fmt("%.0f", r.seconds) + " s"};
}

// ---------------------------------------------------------------------------
// 7. directional MIL benefit

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<std::string> baseline_log, mil_log;
  double baseline_acc = 0.0, mil_acc = 0.0;
};

struct MilComparison {
  std::vector<SeedRun> seeds;
  double seconds = 0.0;
};

constexpr int kPretrainEpochs = 20;

TrainConfig comparison_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.lr_schedule = {{20, 0.01}, {30, 0.001}};  // 80/120 of 160, scaled to 40
  cfg.epochs = 40;
  cfg.reference_epochs = 160;
  cfg.batch_bags = 32;
  cfg.bag.pad = 0;
  cfg.bag.crop_size = 32;
  cfg.bag.bag_size = 5;
  cfg.bag.flip_prob = 0.0;
  cfg.seed = seed;
  return cfg;
}

SeedRun compare_seed(std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  SynthSpec spec;
  spec.clutter_density = 0.5;
  spec.seed = seed;
  SynthData data = gen_synthetic(spec);
  const Normalization norm = channel_statistics(data.train);
  normalize(data.train, norm);
  normalize(data.test, norm);
  const ArchSpec arch = ArchSpec::minimal({3, 32, 32}, spec.num_classes);

  // (a) per-crop softmax for all 40 epochs. Its state after the 20th epoch
  // is exactly the pretrained starting point of (b).
  TrainConfig base = comparison_config(seed);
  base.checkpoint_every = kPretrainEpochs;
  std::vector<std::uint8_t> pretrained;
  Network net(arch, seed);
  TrainState state;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) { run.baseline_log.push_back(log_line(m)); };
  hooks.on_checkpoint = [&](const TrainState& s) {
    if (s.next_epoch == kPretrainEpochs) pretrained = encode_checkpoint(snapshot(net, &s.optimizer));
  };
  const auto a = train(net, data.train, data.test, base, state, hooks);
  run.baseline_acc = 1.0 - *a.back().test_top1;

  // (b) same pretraining, then the negative-only MIL loss on 5-crop bags.
  TrainConfig mil = comparison_config(seed);
  mil.loss_mode = LossMode::kMilNegativeOnly;
  mil.pretrain_epochs = kPretrainEpochs;
  const Checkpoint ckpt = decode_checkpoint(pretrained);
  Network tuned = restore_network(ckpt);
  TrainState resumed{restore_optimizer(ckpt, tuned), kPretrainEpochs};
  run.mil_log.assign(run.baseline_log.begin(), run.baseline_log.begin() + kPretrainEpochs);
  TrainHooks mil_hooks;
  mil_hooks.on_epoch = [&](const EpochMetrics& m) { run.mil_log.push_back(log_line(m)); };
  const auto b = train(tuned, data.train, data.test, mil, resumed, mil_hooks);
  run.mil_acc = 1.0 - *b.back().test_top1;
  return run;
}

MilComparison mil_comparison() {
  const auto t0 = Clock::now();
  MilComparison c;
  for (std::uint64_t seed : {0, 1, 2}) {
    c.seeds.push_back(compare_seed(seed));
    const auto& r = c.seeds.back();
    std::cout << "  seed " << seed << ": baseline acc " << fmt("%.4f", r.baseline_acc) << ", MIL acc "
              << fmt("%.4f", r.mil_acc) << " (" << fmt("%.0f", seconds_since(t0)) << " s elapsed)"
              << std::endl;
  }
  c.seconds = seconds_since(t0);
  return c;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Outcome mil_outcome(const MilComparison& c) {
  std::vector<double> a, b;
  int wins = 0;
  std::string per_seed;
  for (const auto& r : c.seeds) {
    a.push_back(r.baseline_acc);
    b.push_back(r.mil_acc);
    wins += r.mil_acc > r.baseline_acc;
    per_seed += " " + fmt("%.3f", r.baseline_acc) + "/" + fmt("%.3f", r.mil_acc);
  }
  const double ma = median3(a), mb = median3(b);
  const bool pass = mb >= ma && wins >= 2 && c.seconds < 1800.0;
  return {pass, "test top-1 acc (a)/(b) per seed:" + per_seed + "; median " + fmt("%.3f", ma) + " vs " +
                    fmt("%.3f", mb) + ", (b) strictly higher in " + std::to_string(wins) + "/3, " +
                    fmt("%.0f", c.seconds) + " s"};
}

// ---------------------------------------------------------------------------
// 9. CIFAR parser

Outcome cifar_parser() {
  Rng rng = make_rng(9, {stream::kData});
  bool pass = true;
  std::string note;
  for (const CifarVariant variant : {CifarVariant::kCifar10, CifarVariant::kCifar100}) {
    RecordLayout layout;
    layout.variant = variant;
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(layout.record_bytes()) * 257);
    for (std::size_t r = 0; r < 257; ++r) {
      std::uint8_t* rec = bytes.data() + r * layout.record_bytes();
      for (Index i = 0; i < layout.record_bytes(); ++i) rec[i] = static_cast<std::uint8_t>(rng());
      rec[0] %= variant == CifarVariant::kCifar10 ? 10 : 20;
      if (variant == CifarVariant::kCifar100) rec[1] %= 100;
    }
    const fs::path path = fs::temp_directory_path() / "milcnn_acceptance_cifar.bin";
    { std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                  static_cast<std::streamsize>(bytes.size())); }
    const auto images = parse_cifar(path, layout);
    write_cifar(path, images, layout);
    std::ifstream in(path, std::ios::binary);
    const std::vector<std::uint8_t> back{std::istreambuf_iterator<char>(in), {}};
    const bool same = back == bytes && images.size() == 257;
    pass = pass && same;
    note += std::string(variant == CifarVariant::kCifar10 ? "CIFAR-10" : "CIFAR-100") +
            " 257-record file round-trip " + (same ? "byte-exact" : "DIFFERS") + "; ";
  }
  const char* dir = std::getenv("MILCNN_CIFAR10_DIR");
  if (dir && fs::exists(fs::path(dir) / "test_batch.bin")) {
    std::size_t train = 0;
    for (int i = 1; i <= 5; ++i)
      train += parse_cifar(fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin"), {}).size();
    const std::size_t test = parse_cifar(fs::path(dir) / "test_batch.bin", {}).size();
    pass = pass && train == 50'000 && test == 10'000;
    note += "real archive " + std::to_string(train) + " train / " + std::to_string(test) + " test";
  } else {
    note += "real archive absent (set MILCNN_CIFAR10_DIR), count check skipped";
  }
  return {pass, note};
}

// ---------------------------------------------------------------------------
// 10. degenerate-loss guard

Outcome degenerate_guard() {
  SynthSpec spec;
  spec.count = 256;
  spec.test_count = 0;
  spec.seed = 10;
  SynthData data = gen_synthetic(spec);
  normalize(data.train, channel_statistics(data.train));
  Network net(ArchSpec::minimal({3, 32, 32}, spec.num_classes), 10);
  net.set_head_relu(true);
  std::vector<Tensor> before;
  for (const auto& p : net.params()) before.push_back(*p.value);

  TrainConfig cfg = comparison_config(10);
  cfg.weight_decay = 0.0;  // decay is not a loss gradient
  MilConfig mil;
  OptimizerState state = OptimizerState::zeros_like(net.params());
  Rng rng = make_rng(10, {stream::kAugment});
  double grad_max = 0.0;
  Index steps = 0;
  for (std::size_t start = 0; start < data.train.size(); start += cfg.batch_bags) {
    std::vector<Bag> bags;
    for (std::size_t i = start; i < std::min(data.train.size(), start + cfg.batch_bags); ++i)
      bags.push_back(make_bag(data.train[i].pixels, LabelVector::all_positive(spec.num_classes), cfg.bag, rng));
    train_step(net, bags, LossMode::kMilNegativeOnly, mil, state,
               {cfg.learning_rate, cfg.momentum, cfg.weight_decay});
    for (const auto& p : net.params()) grad_max = std::max(grad_max, p.grad->data().cwiseAbs().maxCoeff());
    ++steps;
  }
  bool unchanged = true;
  const auto after = net.params();
  for (std::size_t i = 0; i < before.size(); ++i) unchanged = unchanged && *after[i].value == before[i];
  return {unchanged && grad_max == 0.0,
          std::to_string(steps) + " steps over " + std::to_string(data.train.size()) +
              " all-positive bags: max |grad| " + fmt("%.1e", grad_max) + ", weights " +
              (unchanged ? "bit-identical" : "CHANGED")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto want = [&](int n) { return only.empty() || only.count(n) > 0; };

  int failures = 0;
  const auto report = [&](int n, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  const auto guarded = [&](int n, const char* name, auto&& body) {
    try {
      report(n, name, body());
    } catch (const std::exception& e) {
      report(n, name, {false, std::string("exception: ") + e.what()});
    }
  };

  if (want(1)) guarded(1, "gradient certification", gradient_certification);
  if (want(2)) guarded(2, "negative-only loss derivation identity", derivation_identity);
  if (want(3)) guarded(3, "MIL gradient exactness", gradient_exactness);
  if (want(4)) guarded(4, "softmax identities", softmax_identities);
  if (want(5)) guarded(5, "shape audit", shape_audit);

  std::optional<OverfitRun> overfit;
  std::optional<MilComparison> comparison;
  if (want(6)) guarded(6, "overfit sanity", [&] {
    overfit = overfit_run();
    write_log("overfit_run1.jsonl", overfit->log);
    return overfit_outcome(*overfit);
  });
  if (want(7)) guarded(7, "directional MIL benefit", [&] {
    comparison = mil_comparison();
    for (const auto& r : comparison->seeds) {
      write_log("seed" + std::to_string(r.seed) + "_baseline_run1.jsonl", r.baseline_log);
      write_log("seed" + std::to_string(r.seed) + "_mil_run1.jsonl", r.mil_log);
    }
    return mil_outcome(*comparison);
  });
  if (want(8)) guarded(8, "determinism", [&] {
    if (!overfit) overfit = overfit_run();
    if (!comparison) comparison = mil_comparison();
    const OverfitRun o2 = overfit_run();
    const MilComparison c2 = mil_comparison();
    bool same = same_logs(overfit->log, o2.log);
    std::size_t lines = o2.log.size();
    for (std::size_t i = 0; i < c2.seeds.size(); ++i) {
      same = same && same_logs(comparison->seeds[i].baseline_log, c2.seeds[i].baseline_log) &&
             same_logs(comparison->seeds[i].mil_log, c2.seeds[i].mil_log);
      lines += c2.seeds[i].baseline_log.size() + c2.seeds[i].mil_log.size();
      write_log("seed" + std::to_string(c2.seeds[i].seed) + "_baseline_run2.jsonl", c2.seeds[i].baseline_log);
      write_log("seed" + std::to_string(c2.seeds[i].seed) + "_mil_run2.jsonl", c2.seeds[i].mil_log);
    }
    write_log("overfit_run2.jsonl", o2.log);
    return Outcome{same, "reran criteria 6-7: " + std::to_string(lines) + " metrics lines " +
                             (same ? "identical" : "DIFFER") + " apart from wall_ms"};
  });
  if (want(9)) guarded(9, "CIFAR parser", cifar_parser);
  if (want(10)) guarded(10, "degenerate-loss guard", degenerate_guard);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
