#include "milcnn/data.hpp"

#include "milcnn/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace milcnn {

// ---------------------------------------------------------------------------
// CIFAR records

Index RecordLayout::class_limit() const {
  if (num_classes > 0) return num_classes;
  return variant == CifarVariant::kCifar100 ? 100 : 10;
}

std::vector<LabeledImage> parse_cifar_bytes(std::span<const std::uint8_t> bytes,
                                            const RecordLayout& layout) {
  const auto record = static_cast<std::size_t>(layout.record_bytes());
  const std::size_t whole = bytes.size() / record;
  if (bytes.size() % record != 0) {
    throw FormatError("truncated CIFAR record: file length " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(record),
                      whole * record);
  }
  const Index plane = layout.channels * layout.side * layout.side;
  std::vector<LabeledImage> images;
  images.reserve(whole);
  for (std::size_t r = 0; r < whole; ++r) {
    const std::uint8_t* rec = bytes.data() + r * record;
    LabeledImage img;
    const std::size_t label_at = r * record + static_cast<std::size_t>(layout.label_bytes() - 1);
    if (layout.variant == CifarVariant::kCifar100) {
      img.coarse_label = rec[0];
      if (img.coarse_label >= 20) {
        throw FormatError("coarse label " + std::to_string(img.coarse_label) +
                              " out of range in record " + std::to_string(r),
                          r * record);
      }
    }
    img.label = rec[layout.label_bytes() - 1];
    if (img.label >= layout.class_limit()) {
      throw FormatError("label " + std::to_string(img.label) + " out of range in record " +
                            std::to_string(r),
                        label_at);
    }
    img.pixels = Tensor(Shape{layout.channels, layout.side, layout.side});
    const std::uint8_t* px = rec + layout.label_bytes();
    for (Index i = 0; i < plane; ++i) img.pixels[i] = static_cast<double>(px[i]) / 255.0;
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<LabeledImage> parse_cifar(const std::filesystem::path& path,
                                      const RecordLayout& layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_cifar_bytes(bytes, layout);
}

std::vector<std::uint8_t> encode_cifar(std::span<const LabeledImage> images,
                                       const RecordLayout& layout) {
  const Index plane = layout.channels * layout.side * layout.side;
  std::vector<std::uint8_t> out;
  out.reserve(images.size() * static_cast<std::size_t>(layout.record_bytes()));
  for (const auto& img : images) {
    if (img.pixels.shape() != Shape{layout.channels, layout.side, layout.side}) {
      throw ShapeError("encode_cifar: image " + to_string(img.pixels.shape()) +
                       " does not match the record layout");
    }
    if (img.label < 0 || img.label >= layout.class_limit() || img.label > 255) {
      throw std::invalid_argument("encode_cifar: label out of range");
    }
    if (layout.variant == CifarVariant::kCifar100) {
      out.push_back(static_cast<std::uint8_t>(std::max<Index>(img.coarse_label, 0)));
    }
    out.push_back(static_cast<std::uint8_t>(img.label));
    for (Index i = 0; i < plane; ++i) {
      const double v = std::clamp(img.pixels[i], 0.0, 1.0);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  return out;
}

void write_cifar(const std::filesystem::path& path, std::span<const LabeledImage> images,
                 const RecordLayout& layout) {
  const auto bytes = encode_cifar(images, layout);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Normalization

void to_json(nlohmann::json& j, const Normalization& n) {
  j = {{"mean", n.mean}, {"stddev", n.stddev}};
}

void from_json(const nlohmann::json& j, Normalization& n) {
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("stddev").get<std::vector<double>>();
}

Normalization channel_statistics(std::span<const LabeledImage> images) {
  if (images.empty()) throw std::invalid_argument("channel_statistics on an empty set");
  const Index c = images.front().pixels.dim(0);
  const Index plane = images.front().pixels.size() / c;
  Normalization n;
  n.mean.assign(static_cast<std::size_t>(c), 0.0);
  n.stddev.assign(static_cast<std::size_t>(c), 0.0);
  const double count = static_cast<double>(plane) * static_cast<double>(images.size());
  for (Index ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (const auto& img : images) sum += img.pixels.data().segment(ch * plane, plane).sum();
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& img : images)
      sq += (img.pixels.data().segment(ch * plane, plane).array() - mean).square().sum();
    const double sd = std::sqrt(sq / count);
    n.mean[static_cast<std::size_t>(ch)] = mean;
    n.stddev[static_cast<std::size_t>(ch)] = sd > 1e-12 ? sd : 1.0;
  }
  return n;
}

void normalize(std::span<LabeledImage> images, const Normalization& norm) {
  for (auto& img : images) {
    const Index c = img.pixels.dim(0);
    if (static_cast<std::size_t>(c) != norm.mean.size()) {
      throw ShapeError("normalization channel count mismatch");
    }
    const Index plane = img.pixels.size() / c;
    for (Index ch = 0; ch < c; ++ch) {
      auto seg = img.pixels.data().segment(ch * plane, plane);
      seg = ((seg.array() - norm.mean[static_cast<std::size_t>(ch)]) /
             norm.stddev[static_cast<std::size_t>(ch)])
                .matrix();
    }
  }
}

Split split_and_normalize(std::vector<LabeledImage> images, double train_fraction,
                          std::uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("split_and_normalize on an empty set");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {stream::kShuffle});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * images.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, images.size());

  Split split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.test).push_back(std::move(images[order[i]]));
  }
  split.norm = channel_statistics(split.train);
  normalize(split.train, split.norm);
  normalize(split.test, split.norm);
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthSpec::validate() const {
  if (canvas <= 0 || glyph <= 0 || num_classes <= 0 || count < 0 || test_count < 0 ||
      offset_range < 0) {
    throw ConfigError("synthetic spec: sizes and counts must be positive");
  }
  if (!(clutter_density >= 0.0 && clutter_density <= 1.0)) {
    throw ConfigError("synthetic spec: clutter_density must lie in [0, 1]");
  }
  if (glyph + 2 * offset_range > canvas) {
    throw ConfigError("synthetic spec: glyph + 2 * offset_range exceeds the canvas");
  }
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = {{"canvas", s.canvas},         {"glyph", s.glyph},
       {"num_classes", s.num_classes}, {"clutter_density", s.clutter_density},
       {"offset_range", s.offset_range}, {"count", s.count},
       {"test_count", s.test_count},   {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  const SynthSpec d;
  s.canvas = j.value("canvas", d.canvas);
  s.glyph = j.value("glyph", d.glyph);
  s.num_classes = j.value("num_classes", d.num_classes);
  s.clutter_density = j.value("clutter_density", d.clutter_density);
  s.offset_range = j.value("offset_range", d.offset_range);
  s.count = j.value("count", d.count);
  s.test_count = j.value("test_count", d.test_count);
  s.seed = j.value("seed", d.seed);
}

Eigen::MatrixXd class_glyph(Index category, Index side) {
  Rng rng = make_rng(0x61795068ULL, {static_cast<std::uint64_t>(category)});
  std::bernoulli_distribution bit(0.5);
  Eigen::MatrixXd g(side, side);
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x) g(y, x) = bit(rng) ? 1.0 : 0.0;
  return g;
}

namespace {

LabeledImage render(const SynthSpec& spec, Index label, GlyphBox box,
                    const std::vector<Eigen::MatrixXd>& glyphs, Rng& rng) {
  const Index c = 3, side = spec.canvas;
  LabeledImage img;
  img.label = label;
  img.pixels = Tensor(Shape{c, side, side});
  // Clutter dots share the glyph's binary alphabet.
  std::bernoulli_distribution cluttered(spec.clutter_density);
  for (Index y = 0; y < side; ++y) {
    for (Index x = 0; x < side; ++x) {
      if (spec.clutter_density > 0.0 && cluttered(rng)) {
        for (Index ch = 0; ch < c; ++ch) img.pixels.at({ch, y, x}) = 1.0;
      }
    }
  }
  const auto& g = glyphs[static_cast<std::size_t>(label)];
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < spec.glyph; ++y)
      for (Index x = 0; x < spec.glyph; ++x) img.pixels.at({ch, box.top + y, box.left + x}) = g(y, x);
  return img;
}

// Distribution of the glyph's leading coordinate along one axis.
std::vector<std::pair<Index, double>> placement_distribution(const SynthSpec& spec) {
  const Index base = (spec.canvas - spec.glyph) / 2;
  const double w = 1.0 / (2.0 * static_cast<double>(spec.offset_range + 1));
  std::vector<std::pair<Index, double>> out;
  for (Index u = 0; u <= spec.offset_range; ++u) {
    out.emplace_back(base + u, w);
    out.emplace_back(base - u, w);
  }
  return out;
}

}  // namespace

SynthData gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::vector<Eigen::MatrixXd> glyphs;
  for (Index k = 0; k < spec.num_classes; ++k) glyphs.push_back(class_glyph(k, spec.glyph));
  const Index base = (spec.canvas - spec.glyph) / 2;

  SynthData data;
  Rng train_rng = make_rng(spec.seed, {stream::kData, 0});
  std::uniform_int_distribution<Index> magnitude(0, spec.offset_range);
  std::bernoulli_distribution negative(0.5);
  for (Index i = 0; i < spec.count; ++i) {
    const Index dy = magnitude(train_rng);
    const Index dx = magnitude(train_rng);
    GlyphBox box{negative(train_rng) ? base - dy : base + dy, 0};
    box.left = negative(train_rng) ? base - dx : base + dx;
    data.train.push_back(render(spec, i % spec.num_classes, box, glyphs, train_rng));
    data.train_boxes.push_back(box);
  }
  Rng test_rng = make_rng(spec.seed, {stream::kData, 1});
  for (Index i = 0; i < spec.test_count; ++i) {
    const GlyphBox box{base, base};
    data.test.push_back(render(spec, i % spec.num_classes, box, glyphs, test_rng));
    data.test_boxes.push_back(box);
  }
  return data;
}

double crop_miss_rate_exact(const SynthSpec& spec, Index crop_size) {
  spec.validate();
  const Index positions = spec.canvas - crop_size + 1;
  if (positions <= 0) throw ConfigError("crop larger than the canvas");
  double contain = 0.0;
  for (const auto& [pos, weight] : placement_distribution(spec)) {
    Index hits = 0;
    for (Index c = 0; c < positions; ++c)
      if (c <= pos && pos + spec.glyph <= c + crop_size) ++hits;
    contain += weight * static_cast<double>(hits) / static_cast<double>(positions);
  }
  // Axes are independent and identically distributed.
  return 1.0 - contain * contain;
}

double crop_miss_rate_sampled(const SynthData& data, const SynthSpec& spec, Index crop_size,
                              Index samples, std::uint64_t seed) {
  if (data.train_boxes.empty() || samples <= 0) return 0.0;
  BagSpec bag;
  bag.pad = 0;
  bag.crop_size = crop_size;
  bag.bag_size = 1;
  bag.flip_prob = 0.0;
  Rng rng = make_rng(seed, {stream::kAugment});
  std::uniform_int_distribution<std::size_t> pick(0, data.train_boxes.size() - 1);
  Index misses = 0;
  for (Index s = 0; s < samples; ++s) {
    const GlyphBox& box = data.train_boxes[pick(rng)];
    const CropOffset o = sample_crop_offsets(bag, spec.canvas, spec.canvas, rng).front();
    const bool inside = o.top <= box.top && box.top + spec.glyph <= o.top + crop_size &&
                        o.left <= box.left && box.left + spec.glyph <= o.left + crop_size;
    if (!inside) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(samples);
}

}  // namespace milcnn
