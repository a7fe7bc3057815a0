#include "cli.hpp"

#include "manifest.hpp"

#include "milcnn/checkpoint.hpp"
#include "milcnn/data.hpp"
#include "milcnn/gradcheck.hpp"
#include "milcnn/network.hpp"
#include "milcnn/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace milcnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ArchSpec resolve_arch(const json& value, const fs::path& base, Shape minimal_input) {
  if (value.is_string()) {
    const auto name = value.get<std::string>();
    if (name == "table1") return ArchSpec::table1();
    if (name == "table3") return ArchSpec::table3();
    if (name == "minimal") return ArchSpec::minimal(std::move(minimal_input));
    fs::path p = name;
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) {
      throw ConfigError("arch '" + name + "' is neither table1, table3, minimal nor a file");
    }
    return read_json_file(p).get<ArchSpec>();
  }
  if (value.is_object()) return value.get<ArchSpec>();
  throw ConfigError("field 'arch': expected a name, a path or an object");
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  RecordLayout layout;
  std::map<std::string, std::string> checksums;
};

std::vector<LabeledImage> load_records(const fs::path& path, const RecordLayout& layout,
                                       std::map<std::string, std::string>& checksums) {
  if (!fs::exists(path)) throw ConfigError("missing dataset file " + path.string());
  const auto bytes = read_bytes(path);
  checksums[path.filename().string()] = sha256_hex(bytes);
  return parse_cifar_bytes(bytes, layout);
}

json layout_json(const RecordLayout& l) {
  return {{"variant", l.variant == CifarVariant::kCifar100 ? "cifar100" : "cifar10"},
          {"channels", l.channels},
          {"side", l.side},
          {"num_classes", l.class_limit()}};
}

RecordLayout layout_from_json(const json& j) {
  RecordLayout l;
  l.variant = j.value("variant", std::string("cifar10")) == "cifar100" ? CifarVariant::kCifar100
                                                                        : CifarVariant::kCifar10;
  l.channels = j.value("channels", Index{3});
  l.side = j.value("side", Index{32});
  l.num_classes = j.value("num_classes", Index{0});
  return l;
}

SynthSpec synth_spec_from(const json& j) {
  try {
    SynthSpec s = j.get<SynthSpec>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
}

Dataset load_dataset(const json& data, const fs::path& base) {
  if (!data.is_object() || !data.contains("kind")) {
    throw ConfigError("field 'data': expected an object with a 'kind'");
  }
  const auto kind = data.at("kind").get<std::string>();
  auto path_of = [&](const char* key) {
    if (!data.contains(key)) throw ConfigError(std::string("field 'data.") + key + "' missing");
    fs::path p = data.at(key).get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw ConfigError("dataset path " + p.string() + " does not exist");
    return p;
  };

  Dataset d;
  if (kind == "synthetic") {
    const SynthSpec spec = synth_spec_from(data.value("spec", json::object()));
    SynthData s = gen_synthetic(spec);
    d.layout.side = spec.canvas;
    d.layout.num_classes = spec.num_classes;
    d.checksums["train.bin"] = sha256_hex(encode_cifar(s.train, d.layout));
    d.checksums["test.bin"] = sha256_hex(encode_cifar(s.test, d.layout));
    d.train = std::move(s.train);
    d.test = std::move(s.test);
  } else if (kind == "directory") {
    const fs::path dir = path_of("path");
    d.layout = layout_from_json(read_json_file(dir / "dataset.json").at("layout"));
    d.train = load_records(dir / "train.bin", d.layout, d.checksums);
    d.test = load_records(dir / "test.bin", d.layout, d.checksums);
  } else if (kind == "cifar10") {
    const fs::path dir = path_of("dir");
    for (int b = 1; b <= 5; ++b) {
      auto part = load_records(dir / ("data_batch_" + std::to_string(b) + ".bin"), d.layout,
                               d.checksums);
      std::move(part.begin(), part.end(), std::back_inserter(d.train));
    }
    d.test = load_records(dir / "test_batch.bin", d.layout, d.checksums);
  } else if (kind == "cifar100") {
    const fs::path dir = path_of("dir");
    d.layout.variant = CifarVariant::kCifar100;
    d.train = load_records(dir / "train.bin", d.layout, d.checksums);
    d.test = load_records(dir / "test.bin", d.layout, d.checksums);
  } else {
    throw ConfigError("field 'data.kind': unknown kind '" + kind +
                      "' (expected synthetic, directory, cifar10 or cifar100)");
  }
  auto limit = [&](const char* key, std::vector<LabeledImage>& v) {
    if (!data.contains(key)) return;
    const auto n = data.at(key).get<long long>();
    if (n < 0) throw ConfigError(std::string("field 'data.") + key + "' must be non-negative");
    if (static_cast<std::size_t>(n) < v.size()) v.resize(static_cast<std::size_t>(n));
  };
  limit("train_limit", d.train);
  limit("test_limit", d.test);
  if (d.train.empty()) throw ConfigError("training split is empty");
  return d;
}

// ---------------------------------------------------------------------------
// Shared helpers

struct Common {
  int threads = 1;
};

void add_threads(CLI::App* cmd, Common& c) {
  cmd->add_option("--threads", c.threads, "worker threads (default 1)")
      ->check(CLI::Range(1, 256));
}

void apply_overrides(json& config, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got " + s);
    const std::string key = s.substr(0, eq), text = s.substr(eq + 1);
    if (config.contains(key) && (config[key].is_object() || config[key].is_array())) {
      throw ConfigError("--set may only override top-level scalar fields ('" + key + "' is not)");
    }
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    if (value.is_object() || value.is_array()) {
      throw ConfigError("--set may only assign scalar values");
    }
    config[key] = value;
  }
}

void write_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
  const fs::path config_path = a.config;
  json config = read_json_file(config_path);
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  apply_overrides(config, a.sets);
  const fs::path base = config_path.parent_path();

  const TrainConfig cfg = config.get<TrainConfig>();
  cfg.validate();
  if (!config.contains("data")) throw ConfigError("field 'data' missing");
  if (!config.contains("arch")) throw ConfigError("field 'arch' missing");
  Dataset data = load_dataset(config.at("data"), base);
  const ArchSpec arch = resolve_arch(
      config.at("arch"), base, {data.layout.channels, cfg.bag.crop_size, cfg.bag.crop_size});
  plan_network(arch);
  if (arch.num_classes != data.layout.class_limit()) {
    throw ConfigError("arch.num_classes " + std::to_string(arch.num_classes) +
                      " does not match the dataset's " +
                      std::to_string(data.layout.class_limit()) + " classes");
  }
  if (arch.input_shape != Shape{data.layout.channels, cfg.bag.crop_size, cfg.bag.crop_size}) {
    throw ConfigError("arch.input_shape " + to_string(arch.input_shape) +
                      " must equal channels x crop_size x crop_size");
  }
  cfg.bag.validate(data.layout.side, data.layout.side);

  const Normalization norm = channel_statistics(data.train);
  normalize(data.train, norm);
  normalize(data.test, norm);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  RunManifest manifest;
  manifest.command = "train";
  manifest.config = config;
  manifest.config["arch"] = arch;
  manifest.seeds = {{"seed", cfg.seed}, {"bag_seed", cfg.bag.seed}};
  manifest.dataset_checksums = data.checksums;
  manifest.outputs = {{"manifest", (dir / "manifest.json").string()},
                      {"metrics", (dir / "metrics.jsonl").string()},
                      {"checkpoint", (dir / "checkpoint.bin").string()}};
  manifest.write(dir / "manifest.json");
  const std::string mid = manifest.id();

  Network net(arch, cfg.seed);
  TrainState state;
  if (!a.resume.empty()) {
    const Checkpoint ckpt = read_checkpoint(a.resume);
    net = restore_network(ckpt);
    if (!(net.spec() == arch)) throw ConfigError("--resume checkpoint was trained on another arch");
    state.optimizer = restore_optimizer(ckpt, net);
    state.next_epoch = ckpt.header.value("epoch", 0);
  }

  const fs::path metrics_path = dir / "metrics.jsonl";
  const bool append = !a.resume.empty() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  if (!append) {
    nlohmann::ordered_json header;
    header["manifest_id"] = mid;
    header["manifest"] = "manifest.json";
    header["fields"] = {"epoch", "phase", "lr", "train_loss", "train_acc", "test_top1",
                        "test_top5", "wall_ms"};
    header["test_metric"] = "error";
    header["epochs"] = cfg.epochs;
    header["reference_epochs"] = cfg.reference_epochs;
    header["epoch_scale"] = static_cast<double>(cfg.epochs) / cfg.reference_epochs;
    header["loss_mode"] = to_string(cfg.loss_mode);
    header["pretrain_epochs"] = cfg.pretrain_epochs;
    metrics << header.dump() << '\n' << std::flush;
  }

  auto save = [&](const TrainState& s, const fs::path& path) {
    json extra = {{"manifest_id", mid},
                  {"epoch", s.next_epoch},
                  {"normalization", norm},
                  {"train_config", cfg},
                  {"data_layout", layout_json(data.layout)}};
    write_checkpoint(path, snapshot(net, &s.optimizer, extra));
  };

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    metrics << to_json(m).dump() << '\n' << std::flush;
    err << "epoch " << m.epoch << " [" << m.phase << "] lr " << m.lr << " loss "
        << m.train_loss << " acc " << m.train_acc;
    if (m.test_top1) err << " test top1 err " << *m.test_top1;
    err << '\n';
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    if (s.next_epoch < cfg.epochs) {
      save(s, dir / ("checkpoint_e" + std::to_string(s.next_epoch) + ".bin"));
    }
  };

  std::vector<EpochMetrics> log;
  try {
    log = train(net, data.train, data.test, cfg, state, hooks, common.threads);
  } catch (const NumericalError& e) {
    err << "training diverged: " << e.what() << '\n';
    save(state, dir / "checkpoint_diverged.bin");
    return kExitNumerical;
  }
  save(state, dir / "checkpoint.bin");

  json summary = {{"manifest_id", mid},
                  {"out", dir.string()},
                  {"epochs_run", log.size()},
                  {"final", log.empty() ? json(nullptr) : json::parse(to_json(log.back()).dump())}};
  write_line(out, summary);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  bool bag_eval = false;
};

int cmd_eval(const EvalArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
  Checkpoint ckpt;
  try {
    ckpt = read_checkpoint(a.checkpoint);
  } catch (const FormatError& e) {
    throw ConfigError(std::string("corrupt checkpoint: ") + e.what());
  }
  Network net = restore_network(ckpt);
  const Index classes = net.spec().num_classes;

  TrainConfig cfg;
  if (ckpt.header.contains("train_config")) cfg = ckpt.header.at("train_config").get<TrainConfig>();
  RecordLayout layout;
  if (ckpt.header.contains("data_layout")) layout = layout_from_json(ckpt.header.at("data_layout"));

  const fs::path data = a.data;
  fs::path file = data;
  if (fs::is_directory(data)) {
    if (fs::exists(data / "dataset.json")) {
      layout = layout_from_json(read_json_file(data / "dataset.json").at("layout"));
      file = data / "test.bin";
    } else if (fs::exists(data / "test_batch.bin")) {
      layout = RecordLayout{};
      file = data / "test_batch.bin";
    } else {
      file = data / "test.bin";
    }
  }
  if (!fs::exists(file)) throw ConfigError("dataset file " + file.string() + " does not exist");
  if (layout.class_limit() != classes) {
    throw ConfigError("checkpoint predicts " + std::to_string(classes) +
                      " classes but the data has " + std::to_string(layout.class_limit()));
  }
  std::map<std::string, std::string> checksums;
  std::vector<LabeledImage> images = load_records(file, layout, checksums);
  if (ckpt.header.contains("normalization")) {
    normalize(images, ckpt.header.at("normalization").get<Normalization>());
  }
  if (net.spec().input_shape != Shape{layout.channels, cfg.bag.crop_size, cfg.bag.crop_size}) {
    throw ConfigError("checkpoint input shape does not match the data and crop size");
  }

  json result = {{"manifest_id", ckpt.header.value("manifest_id", std::string())},
                 {"checkpoint", a.checkpoint},
                 {"data", file.string()},
                 {"data_checksum", checksums.begin()->second},
                 {"count", images.size()}};
  const EvalResult center =
      evaluate(net, images, cfg.bag, false, 5, cfg.mil.aggregation, common.threads);
  result["center_view"] = center;
  err << "center view: top-1 error " << center.top1_error << ", top-5 error "
      << center.topk_error << '\n';
  if (a.bag_eval) {
    const EvalResult bag =
        evaluate(net, images, cfg.bag, true, 5, cfg.mil.aggregation, common.threads);
    result["bag"] = bag;
    err << "bag (corners + center): top-1 error " << bag.top1_error << ", top-5 error "
        << bag.topk_error << '\n';
  }
  write_line(out, result);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradArgs {
  std::string arch = "minimal";
  std::string loss = "softmax_ce";
  double lambda = MilConfig{}.lambda;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
  const LossMode mode = parse_loss_mode(a.loss);
  const ArchSpec arch = resolve_arch(json(a.arch), fs::current_path(), {3, 8, 8});
  MilConfig mil;
  mil.lambda = a.lambda;
  mil.mode = mode == LossMode::kMilFullBag ? MilMode::kFullBag : MilMode::kNegativeOnly;
  mil.validate();
  const Index params = plan_network(arch).parameter_count;
  if (params > kMaxCheckedParams) {
    throw ConfigError("arch has " + std::to_string(params) +
                      " parameters; gradcheck is limited to " +
                      std::to_string(kMaxCheckedParams) + " (use a smaller ArchSpec)");
  }

  RunManifest manifest;
  manifest.command = "gradcheck";
  manifest.config = {{"arch", arch}, {"loss", a.loss}, {"lambda", a.lambda}};
  manifest.seeds = {{"seed", a.seed}};

  json layers = json::array();
  bool pass = true;
  for (const auto& c : layer_gradcheck_cases()) {
    const GradReport r = run_layer_case(c, a.seed);
    pass = pass && r.pass();
    layers.push_back(r);
    err << std::left << std::setw(40) << r.subject << " max rel err " << r.max_error()
        << (r.pass() ? "  ok" : "  FAIL") << '\n';
  }

  Rng rng = make_rng(a.seed, {stream::kGradcheck, 3});
  std::uniform_real_distribution<double> score(0.1, 3.0);
  Eigen::MatrixXd h(mode == LossMode::kSoftmaxCe ? 1 : 3, arch.num_classes);
  for (Index i = 0; i < h.size(); ++i) h.data()[i] = score(rng);
  const GradReport loss_report =
      check_loss(mode, h, LabelVector::one_hot(1 % arch.num_classes, arch.num_classes), mil);
  pass = pass && loss_report.pass();
  err << std::left << std::setw(40) << ("loss " + a.loss) << " max rel err "
      << loss_report.max_error() << (loss_report.pass() ? "  ok" : "  FAIL") << '\n';

  Network net(arch, a.seed);
  const auto bags = gradcheck_bags(arch, mode, a.seed);
  GradCheckOptions opt;
  opt.threads = common.threads;
  const GradReport network = check_network(net, mode, bags, mil, opt);
  pass = pass && network.pass();
  err << std::left << std::setw(40) << ("network " + a.loss) << " max rel err "
      << network.max_error() << " (" << network.skipped() << " kink coordinates skipped)"
      << (network.pass() ? "  ok" : "  FAIL") << '\n';

  json report = {{"manifest", manifest.to_json()},
                 {"layers", layers},
                 {"loss", loss_report},
                 {"network", network},
                 {"pass", pass}};
  write_line(out, report);
  return pass ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------------------
// shapes

int cmd_shapes(const std::string& arch_name, std::ostream& out, std::ostream& err) {
  const ArchSpec arch = resolve_arch(json(arch_name), fs::current_path(), {3, 32, 32});
  const NetworkPlan plan = plan_network(arch);
  RunManifest manifest;
  manifest.command = "shapes";
  manifest.config = {{"arch", arch}};
  json j = plan;
  j["arch"] = arch;
  j["manifest_id"] = manifest.id();
  for (const auto& s : plan.stages) {
    err << std::left << std::setw(10) << s.name << to_string(s.shape) << '\n';
  }
  err << "fc " << plan.fc_size[0] << "x" << plan.fc_size[1] << ", " << plan.weighted_layers
      << " weighted layers + " << plan.projection_layers << " projections, "
      << plan.parameter_count << " parameters\n";
  write_line(out, j);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string spec;
  std::string out;
  Index crop_size = 0;  // 0: min(32, canvas)
  Index samples = 10'000;
};

int cmd_synth(SynthArgs a, std::ostream& out, std::ostream& err) {
  const json spec_json = read_json_file(a.spec);
  const SynthSpec spec = synth_spec_from(spec_json);
  if (a.crop_size == 0) a.crop_size = std::min<Index>(32, spec.canvas);
  if (a.crop_size <= 0 || a.crop_size > spec.canvas) {
    throw ConfigError("--crop-size must lie in [1, canvas]");
  }
  const SynthData data = gen_synthetic(spec);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  RecordLayout layout;
  layout.side = spec.canvas;
  layout.num_classes = spec.num_classes;
  write_cifar(dir / "train.bin", data.train, layout);
  write_cifar(dir / "test.bin", data.test, layout);

  RunManifest manifest;
  manifest.command = "synth";
  manifest.config = spec;
  manifest.seeds = {{"seed", spec.seed}};
  manifest.dataset_checksums = {{"train.bin", sha256_file(dir / "train.bin")},
                                {"test.bin", sha256_file(dir / "test.bin")}};
  manifest.outputs = {{"manifest", (dir / "manifest.json").string()},
                      {"train", (dir / "train.bin").string()},
                      {"test", (dir / "test.bin").string()},
                      {"dataset", (dir / "dataset.json").string()}};
  manifest.write(dir / "manifest.json");

  const double sampled = crop_miss_rate_sampled(data, spec, a.crop_size, a.samples, spec.seed);
  const double exact = crop_miss_rate_exact(spec, a.crop_size);
  json info = {{"manifest_id", manifest.id()},
               {"layout", layout_json(layout)},
               {"spec", spec},
               {"train_count", data.train.size()},
               {"test_count", data.test.size()}};
  std::ofstream(dir / "dataset.json") << info.dump(2) << '\n';

  json result = info;
  result["crop_miss_rate"] = {
      {"crop_size", a.crop_size}, {"samples", a.samples}, {"measured", sampled}, {"exact", exact}};
  err << "crop-miss rate (crop " << a.crop_size << "): measured " << sampled << ", exact "
      << exact << '\n';
  write_line(out, result);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiple-instance-learning residual network trainer"};
  app.require_subcommand(1);
  Common common;

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a network from a JSON config");
  train_cmd->add_option("--config", train_args.config, "run config (JSON)")->required();
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train_cmd->add_option("--set", train_args.sets, "override a top-level scalar: key=value");
  add_threads(train_cmd, common);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--data", eval_args.data, "dataset directory or CIFAR file")->required();
  eval_cmd->add_flag("--bag-eval", eval_args.bag_eval, "also evaluate corner+center bags");
  add_threads(eval_cmd, common);

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient certification");
  grad_cmd->add_option("--arch", grad_args.arch, "minimal or an ArchSpec JSON file");
  grad_cmd->add_option("--loss", grad_args.loss,
                       "softmax_ce | mil_negative_only | mil_full_bag");
  grad_cmd->add_option("--lambda", grad_args.lambda, "MIL rate constant");
  grad_cmd->add_option("--seed", grad_args.seed);
  add_threads(grad_cmd, common);

  std::string shapes_arch;
  auto* shapes_cmd = app.add_subcommand("shapes", "print the per-stage shape table");
  shapes_cmd->add_option("--arch", shapes_arch, "table1 | table3 | minimal | PATH")->required();

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic cluttered dataset");
  synth_cmd->add_option("--spec", synth_args.spec, "SynthSpec JSON")->required();
  synth_cmd->add_option("--out", synth_args.out, "output directory")->required();
  synth_cmd->add_option("--crop-size", synth_args.crop_size, "crop side for the miss rate (default min(32, canvas))");
  synth_cmd->add_option("--samples", synth_args.samples, "Monte-Carlo samples");

  std::vector<std::string> storage{"milcnn"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, err, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, common, out, err);
    if (*eval_cmd) return cmd_eval(eval_args, common, out, err);
    if (*grad_cmd) return cmd_gradcheck(grad_args, common, out, err);
    if (*shapes_cmd) return cmd_shapes(shapes_arch, out, err);
    if (*synth_cmd) return cmd_synth(synth_args, out, err);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace milcnn::cli
