#include "milcnn/augment.hpp"

#include <stdexcept>

namespace milcnn {

namespace {

void require_image(const Tensor& image, const char* who) {
  if (image.rank() != 3) {
    throw ShapeError(std::string(who) + " expects a C x H x W image, got " +
                     to_string(image.shape()));
  }
}

}  // namespace

void BagSpec::validate(Index height, Index width) const {
  if (pad < 0) throw ConfigError("bag.pad must be non-negative");
  if (crop_size <= 0) throw ConfigError("bag.crop_size must be positive");
  if (bag_size < 1) throw ConfigError("bag.bag_size must be at least 1");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("bag.flip_prob must be in [0,1]");
  if (sampling == Sampling::kCornersCenter && bag_size != 5) {
    throw ConfigError("corners_center sampling requires bag_size 5");
  }
  if (height > 0 && (crop_size > height + 2 * pad || crop_size > width + 2 * pad)) {
    throw ConfigError("bag.crop_size " + std::to_string(crop_size) + " exceeds padded image " +
                      std::to_string(height + 2 * pad) + "x" + std::to_string(width + 2 * pad));
  }
}

Tensor pad2d(const Tensor& image, Index pad) {
  require_image(image, "pad2d");
  if (pad < 0) throw std::invalid_argument("pad2d: negative padding");
  if (pad == 0) return image;
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const Index ph = h + 2 * pad, pw = w + 2 * pad;
  Tensor out(Shape{c, ph, pw});
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      out.data().segment((ch * ph + y + pad) * pw + pad, w) =
          image.data().segment((ch * h + y) * w, w);
  return out;
}

Tensor crop(const Tensor& image, Index top, Index left, Index size) {
  require_image(image, "crop");
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (size <= 0 || top < 0 || left < 0 || top + size > h || left + size > w) {
    throw std::out_of_range("crop window (" + std::to_string(top) + ", " + std::to_string(left) +
                            ", " + std::to_string(size) + ") outside " + to_string(image.shape()));
  }
  Tensor out(Shape{c, size, size});
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < size; ++y)
      out.data().segment((ch * size + y) * size, size) =
          image.data().segment((ch * h + top + y) * w + left, size);
  return out;
}

Tensor hflip(const Tensor& image) {
  require_image(image, "hflip");
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (Index row = 0; row < c * h; ++row)
    out.data().segment(row * w, w) = image.data().segment(row * w, w).reverse();
  return out;
}

std::vector<CropOffset> sample_crop_offsets(const BagSpec& spec, Index padded_height,
                                            Index padded_width, Rng& rng) {
  const Index max_top = padded_height - spec.crop_size;
  const Index max_left = padded_width - spec.crop_size;
  if (max_top < 0 || max_left < 0) throw ConfigError("crop larger than padded image");
  std::vector<CropOffset> out;
  if (spec.sampling == Sampling::kCornersCenter) {
    if (spec.bag_size != 5) throw ConfigError("corners_center sampling requires bag_size 5");
    out = {{0, 0}, {0, max_left}, {max_top, 0}, {max_top, max_left}, {max_top / 2, max_left / 2}};
    return out;
  }
  std::uniform_int_distribution<Index> top(0, max_top), left(0, max_left);
  out.reserve(static_cast<std::size_t>(spec.bag_size));
  for (Index j = 0; j < spec.bag_size; ++j) {
    const Index t = top(rng);
    out.push_back({t, left(rng)});
  }
  return out;
}

Bag make_bag(const Tensor& image, const LabelVector& label, const BagSpec& spec, Rng& rng) {
  require_image(image, "make_bag");
  spec.validate(image.dim(1), image.dim(2));
  const Tensor padded = pad2d(image, spec.pad);
  const auto offsets = sample_crop_offsets(spec, padded.dim(1), padded.dim(2), rng);
  std::bernoulli_distribution flip(spec.flip_prob);
  Bag bag;
  bag.label = label;
  bag.instances.reserve(offsets.size());
  for (const auto& o : offsets) {
    Tensor region = crop(padded, o.top, o.left, spec.crop_size);
    if (spec.flip_prob > 0.0 && flip(rng)) region = hflip(region);
    bag.instances.push_back(std::move(region));
  }
  return bag;
}

Tensor center_view(const Tensor& image, const BagSpec& spec) {
  require_image(image, "center_view");
  const Tensor padded = pad2d(image, spec.pad);
  const Index top = (padded.dim(1) - spec.crop_size) / 2;
  const Index left = (padded.dim(2) - spec.crop_size) / 2;
  return crop(padded, top, left, spec.crop_size);
}

Bag test_bag(const Tensor& image, const LabelVector& label, const BagSpec& spec) {
  BagSpec fixed = spec;
  fixed.sampling = Sampling::kCornersCenter;
  fixed.bag_size = 5;
  fixed.flip_prob = 0.0;
  Rng unused(0);
  return make_bag(image, label, fixed, unused);
}

}  // namespace milcnn
