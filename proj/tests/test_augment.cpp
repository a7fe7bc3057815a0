#include "milcnn/augment.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace milcnn {
namespace {

using testing::random_tensor;
using testing::uniform_index;

TEST(Pad2d, PaddedCifarImageIs40) {
  Rng rng(1);
  const Tensor img = random_tensor({3, 32, 32}, rng, 0.5, 1.0);
  const Tensor p = pad2d(img, 4);
  EXPECT_EQ(p.shape(), (Shape{3, 40, 40}));
  EXPECT_EQ(p.at({0, 0, 0}), 0.0);
  EXPECT_EQ(p.at({2, 39, 39}), 0.0);
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < 32; ++y)
      for (Index x = 0; x < 32; ++x) ASSERT_EQ(p.at({c, y + 4, x + 4}), img.at({c, y, x}));
}

TEST(Pad2d, ZeroIsIdentity) {
  Rng rng(2);
  const Tensor img = random_tensor({2, 5, 7}, rng);
  EXPECT_EQ(pad2d(img, 0), img);
}

TEST(Pad2d, BorderMassIsZero) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor img = random_tensor({uniform_index(rng, 1, 3), uniform_index(rng, 1, 9),
                                      uniform_index(rng, 1, 9)},
                                     rng);
    const Index pad = uniform_index(rng, 0, 4);
    const Tensor p = pad2d(img, pad);
    EXPECT_NEAR(p.data().sum(), img.data().sum(), 1e-12);
  }
}

TEST(Crop, FullWindowIsIdentity) {
  Rng rng(4);
  const Tensor img = random_tensor({3, 8, 8}, rng);
  EXPECT_EQ(crop(img, 0, 0, 8), img);
}

TEST(Crop, EveryValidOffsetOfPaddedImage) {
  Rng rng(5);
  const Tensor p = pad2d(random_tensor({3, 32, 32}, rng), 4);
  for (Index t = 0; t <= 8; ++t)
    for (Index l = 0; l <= 8; ++l) {
      const Tensor c = crop(p, t, l, 32);
      ASSERT_EQ(c.shape(), (Shape{3, 32, 32}));
      ASSERT_EQ(c.at({1, 5, 7}), p.at({1, t + 5, l + 7}));
    }
}

TEST(Crop, ConstantStaysConstant) {
  Tensor img({1, 6, 6}, 0.25);
  const Tensor c = crop(img, 1, 2, 4);
  EXPECT_EQ(c.data().minCoeff(), 0.25);
  EXPECT_EQ(c.data().maxCoeff(), 0.25);
}

TEST(Crop, OutOfBoundsThrows) {
  Tensor img({1, 6, 6});
  EXPECT_THROW(crop(img, 3, 0, 4), std::out_of_range);
  EXPECT_THROW(crop(img, 0, -1, 4), std::out_of_range);
  EXPECT_THROW(crop(img, 0, 0, 0), std::out_of_range);
}

TEST(Hflip, SmallExample) {
  Tensor img({1, 1, 2});
  img[0] = 1.0;
  img[1] = 2.0;
  const Tensor f = hflip(img);
  EXPECT_EQ(f[0], 2.0);
  EXPECT_EQ(f[1], 1.0);
}

TEST(Hflip, InvolutionAndColumnMirror) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Index c = uniform_index(rng, 1, 3), h = uniform_index(rng, 1, 6),
                w = uniform_index(rng, 1, 9);
    const Tensor img = random_tensor({c, h, w}, rng);
    const Tensor f = hflip(img);
    EXPECT_EQ(hflip(f), img);
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) ASSERT_EQ(f.at({ch, y, x}), img.at({ch, y, w - 1 - x}));
  }
}

TEST(MakeBag, FiveCifarCropsShareLabel) {
  Rng img_rng(7);
  const Tensor img = random_tensor({3, 32, 32}, img_rng);
  const LabelVector y = LabelVector::one_hot(3, 10);
  BagSpec spec;
  spec.pad = 4;
  spec.crop_size = 32;
  spec.bag_size = 5;
  Rng rng(8);
  const Bag bag = make_bag(img, y, spec, rng);
  ASSERT_EQ(bag.size(), 5);
  for (const auto& x : bag.instances) EXPECT_EQ(x.shape(), (Shape{3, 32, 32}));
  EXPECT_EQ(bag.label, y);
}

TEST(MakeBag, IdentityAugmentation) {
  Rng img_rng(9);
  const Tensor img = random_tensor({3, 12, 12}, img_rng);
  BagSpec spec;
  spec.pad = 0;
  spec.crop_size = 12;
  spec.bag_size = 1;
  spec.flip_prob = 0.0;
  Rng rng(10);
  const Bag bag = make_bag(img, LabelVector::one_hot(0, 2), spec, rng);
  ASSERT_EQ(bag.size(), 1);
  EXPECT_EQ(bag.instances[0], img);
}

TEST(MakeBag, SameSeedReplaysBitIdentically) {
  Rng img_rng(11);
  const Tensor img = random_tensor({3, 16, 16}, img_rng);
  BagSpec spec;
  spec.crop_size = 16;
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    Rng a = make_rng(seed, {stream::kAugment, 4});
    Rng b = make_rng(seed, {stream::kAugment, 4});
    const Bag x = make_bag(img, LabelVector::one_hot(1, 3), spec, a);
    const Bag z = make_bag(img, LabelVector::one_hot(1, 3), spec, b);
    ASSERT_EQ(x.size(), z.size());
    for (Index j = 0; j < x.size(); ++j) EXPECT_EQ(x.instances[j], z.instances[j]);
  }
}

TEST(MakeBag, CornersCenterNeedsFive) {
  BagSpec spec;
  spec.sampling = Sampling::kCornersCenter;
  spec.bag_size = 4;
  Rng rng(0);
  EXPECT_THROW(make_bag(Tensor({3, 32, 32}), LabelVector::one_hot(0, 2), spec, rng),
               ConfigError);
}

TEST(MakeBag, OversizedCropRejected) {
  BagSpec spec;
  spec.pad = 1;
  spec.crop_size = 11;
  Rng rng(0);
  EXPECT_THROW(make_bag(Tensor({1, 8, 8}), LabelVector::one_hot(0, 2), spec, rng), ConfigError);
}

TEST(MakeBag, CornersCenterDependsOnImageOnly) {
  Rng img_rng(12);
  const Tensor img = random_tensor({2, 10, 10}, img_rng);
  BagSpec spec;
  spec.pad = 2;
  spec.crop_size = 8;
  spec.sampling = Sampling::kCornersCenter;
  spec.flip_prob = 0.0;
  Rng a(1), b(12345);
  const Bag x = make_bag(img, LabelVector::one_hot(0, 2), spec, a);
  const Bag z = make_bag(img, LabelVector::one_hot(0, 2), spec, b);
  for (Index j = 0; j < 5; ++j) EXPECT_EQ(x.instances[j], z.instances[j]);
  const Tensor p = pad2d(img, 2);
  EXPECT_EQ(x.instances[0], crop(p, 0, 0, 8));
  EXPECT_EQ(x.instances[3], crop(p, 6, 6, 8));
  EXPECT_EQ(x.instances[4], crop(p, 3, 3, 8));
}

// Property: every instance is a window of the padded image (possibly mirrored)
// carrying the source label.
TEST(MakeBag, InstancesAreWindowsOfThePaddedImage) {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const Index side = uniform_index(rng, 4, 12);
    BagSpec spec;
    spec.pad = uniform_index(rng, 0, 3);
    spec.crop_size = uniform_index(rng, 1, side + 2 * spec.pad);
    spec.bag_size = uniform_index(rng, 1, 6);
    spec.flip_prob = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Tensor img = random_tensor({2, side, side}, rng, 0.1, 1.0);
    const LabelVector y = LabelVector::one_hot(uniform_index(rng, 0, 4), 5);
    const Bag bag = make_bag(img, y, spec, rng);
    ASSERT_EQ(bag.size(), spec.bag_size);
    EXPECT_EQ(bag.label, y);
    const Tensor p = pad2d(img, spec.pad);
    for (const auto& x : bag.instances) {
      ASSERT_EQ(x.shape(), (Shape{2, spec.crop_size, spec.crop_size}));
      bool found = false;
      for (Index t = 0; t + spec.crop_size <= p.dim(1) && !found; ++t)
        for (Index l = 0; l + spec.crop_size <= p.dim(2) && !found; ++l) {
          const Tensor w = crop(p, t, l, spec.crop_size);
          found = w == x || hflip(w) == x;
        }
      EXPECT_TRUE(found);
    }
  }
}

TEST(CenterView, TakesTheMiddleWindow) {
  Rng rng(14);
  const Tensor img = random_tensor({3, 32, 32}, rng);
  BagSpec spec;
  EXPECT_EQ(center_view(img, spec), img);
  spec.pad = 0;
  spec.crop_size = 30;
  EXPECT_EQ(center_view(img, spec), crop(img, 1, 1, 30));
}

TEST(TestBag, FixedFiveCropsNoFlip) {
  Rng rng(15);
  const Tensor img = random_tensor({3, 32, 32}, rng);
  BagSpec spec;
  spec.flip_prob = 1.0;
  const Bag bag = test_bag(img, LabelVector::one_hot(0, 10), spec);
  ASSERT_EQ(bag.size(), 5);
  EXPECT_EQ(bag.instances[4], img);
}

}  // namespace
}  // namespace milcnn
