#pragma once

#include "milcnn/random.hpp"
#include "milcnn/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace milcnn {

struct LabeledImage {
  Tensor pixels;  // C x H x W
  Index label = 0;
  Index coarse_label = -1;  // CIFAR-100 only; kept so records re-encode exactly
};

enum class CifarVariant { kCifar10, kCifar100 };

/// CIFAR binary record: label byte(s) then the R, G and B planes, each
/// row-major. CIFAR-100 records carry the coarse label before the fine one.
struct RecordLayout {
  CifarVariant variant = CifarVariant::kCifar10;
  Index channels = 3;
  Index side = 32;
  Index num_classes = 0;  // 0: 10 for CIFAR-10, 100 for CIFAR-100

  Index label_bytes() const { return variant == CifarVariant::kCifar100 ? 2 : 1; }
  Index record_bytes() const { return label_bytes() + channels * side * side; }
  Index class_limit() const;
};

/// Decodes whole records; pixel bytes are scaled to [0, 1]. Throws
/// FormatError on a truncated buffer (offset = start of the partial record)
/// or an out-of-range label (offset = the label byte).
std::vector<LabeledImage> parse_cifar_bytes(std::span<const std::uint8_t> bytes,
                                            const RecordLayout& layout);
std::vector<LabeledImage> parse_cifar(const std::filesystem::path& path,
                                      const RecordLayout& layout);

/// Inverse of parse_cifar_bytes for images with pixels in [0, 1].
std::vector<std::uint8_t> encode_cifar(std::span<const LabeledImage> images,
                                       const RecordLayout& layout);
void write_cifar(const std::filesystem::path& path, std::span<const LabeledImage> images,
                 const RecordLayout& layout);

// ---------------------------------------------------------------------------
// Normalization

struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

void to_json(nlohmann::json& j, const Normalization& n);
void from_json(const nlohmann::json& j, Normalization& n);

/// Per-channel mean and population standard deviation over all pixels.
Normalization channel_statistics(std::span<const LabeledImage> images);
void normalize(std::span<LabeledImage> images, const Normalization& norm);

struct Split {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  Normalization norm;
};

/// Seeded shuffle, first round(train_fraction * n) images to train, then
/// standardization with train-set statistics applied to both parts.
Split split_and_normalize(std::vector<LabeledImage> images, double train_fraction,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic cluttered-target dataset

/// Images of random clutter with one class glyph. Training glyphs sit at
/// center + (+-dy, +-dx) with dx, dy uniform in [0, offset_range] and
/// independent signs, which pushes them toward a corner so random crops can
/// cut them; test glyphs are centered.
struct SynthSpec {
  Index canvas = 40;
  Index glyph = 12;
  Index num_classes = 10;
  double clutter_density = 0.3;
  Index offset_range = 14;
  Index count = 2000;
  Index test_count = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct GlyphBox {
  Index top = 0;
  Index left = 0;
};

struct SynthData {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  std::vector<GlyphBox> train_boxes;
  std::vector<GlyphBox> test_boxes;
};

/// Fixed binary pattern identifying `category` (side x side, values 0/1).
Eigen::MatrixXd class_glyph(Index category, Index side);

SynthData gen_synthetic(const SynthSpec& spec);

/// Fraction of crop positions that do not fully contain the glyph, by exact
/// enumeration of glyph placements and crop offsets (uniform crops, no pad).
double crop_miss_rate_exact(const SynthSpec& spec, Index crop_size);

/// Monte-Carlo estimate: `samples` draws of (training image, uniform crop).
double crop_miss_rate_sampled(const SynthData& data, const SynthSpec& spec, Index crop_size,
                              Index samples, std::uint64_t seed);

}  // namespace milcnn
