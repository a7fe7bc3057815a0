#pragma once

#include "milcnn/loss.hpp"
#include "milcnn/random.hpp"
#include "milcnn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace milcnn {

enum class Sampling { kUniformRandom, kCornersCenter };

/// How a bag of regions is cut from one image: zero-pad by `pad`, take
/// `bag_size` square crops of side `crop_size`, mirror each with `flip_prob`.
struct BagSpec {
  Index pad = 4;
  Index crop_size = 32;
  Index bag_size = 5;
  double flip_prob = 0.5;
  Sampling sampling = Sampling::kUniformRandom;
  std::uint64_t seed = 0;

  /// Throws ConfigError if the settings are inconsistent for an image of the given
  /// side lengths (or on its own when they are omitted).
  void validate(Index height = 0, Index width = 0) const;
};

struct CropOffset {
  Index top = 0;
  Index left = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

Tensor pad2d(const Tensor& image, Index pad);
/// Square window [top, top+size) x [left, left+size); throws std::out_of_range.
Tensor crop(const Tensor& image, Index top, Index left, Index size);
Tensor hflip(const Tensor& image);

/// Crop positions inside a padded image of the given extent. Uniform mode
/// draws i.i.d. offsets; corners-center returns the four corners then the
/// center and requires bag_size 5.
std::vector<CropOffset> sample_crop_offsets(const BagSpec& spec, Index padded_height,
                                            Index padded_width, Rng& rng);

/// Pads, crops and flips `image` into a bag carrying `label` unchanged.
Bag make_bag(const Tensor& image, const LabelVector& label, const BagSpec& spec, Rng& rng);

/// Single centered crop of the padded image, never flipped.
Tensor center_view(const Tensor& image, const BagSpec& spec);

/// Deterministic test-time bag: corners plus center, no flips.
Bag test_bag(const Tensor& image, const LabelVector& label, const BagSpec& spec);

}  // namespace milcnn
