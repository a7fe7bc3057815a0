#include "milcnn/checkpoint.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

namespace milcnn {
namespace {

using testing::random_tensor;

Network warmed_network(std::uint64_t seed) {
  Network net(ArchSpec::minimal({3, 8, 8}, 5), seed);
  Rng rng(seed);
  net.forward(random_tensor({4, 3, 8, 8}, rng), Mode::kTrain);
  net.set_head_relu(true);
  return net;
}

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  Rng rng(1);
  Checkpoint c;
  c.header = {{"epoch", 3}, {"note", "x"}};
  c.tensors.push_back({"a", random_tensor({2, 3}, rng)});
  c.tensors.push_back({"scalar", Tensor(Shape{}, 4.5)});
  c.tensors.push_back({"row", random_tensor({1, 4}, rng)});
  const auto bytes = encode_checkpoint(c);
  ASSERT_EQ(std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()), 0);
  const Checkpoint d = decode_checkpoint(bytes);
  EXPECT_EQ(d.header, c.header);
  ASSERT_EQ(d.tensors.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d.tensors[i].name, c.tensors[i].name);
    EXPECT_EQ(d.tensors[i].value, c.tensors[i].value);
  }
  EXPECT_EQ(encode_checkpoint(d), bytes);
  EXPECT_EQ(d.find("missing"), nullptr);
  EXPECT_EQ(*d.find("scalar"), c.tensors[1].value);
}

TEST(Checkpoint, BadMagicAtOffsetZero) {
  std::vector<std::uint8_t> bytes = encode_checkpoint({});
  bytes[2] ^= 0xff;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

// Every strict prefix of a valid file either fails with an offset inside the
// prefix or (at a tensor boundary) decodes to fewer tensors.
TEST(Checkpoint, TruncationReportsOffsetWithinFile) {
  Network net = warmed_network(2);
  const auto bytes = encode_checkpoint(snapshot(net));
  const Checkpoint full = decode_checkpoint(bytes);
  for (std::size_t len = 0; len < bytes.size(); len += 97) {
    const std::span<const std::uint8_t> prefix(bytes.data(), len);
    try {
      const Checkpoint part = decode_checkpoint(prefix);
      EXPECT_LT(part.tensors.size(), full.tensors.size());
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), len);
    }
  }
}

TEST(Checkpoint, ZeroDimensionRejected) {
  Checkpoint c;
  c.header = nlohmann::json::object();
  c.tensors.push_back({"t", Tensor(Shape{2})});
  auto bytes = encode_checkpoint(c);
  const std::size_t dim_at = kCheckpointMagic.size() + 8 + 2 + 4 + 1 + 4;
  ASSERT_EQ(bytes[dim_at], 2);
  bytes[dim_at] = 0;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), dim_at);
  }
}

TEST(Checkpoint, CorruptHeaderReportsHeaderOffset) {
  Checkpoint c;
  c.header = {{"k", 1}};
  auto bytes = encode_checkpoint(c);
  const std::size_t header_at = kCheckpointMagic.size() + 8;
  bytes[header_at] = '!';
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), header_at);
  }
}

TEST(Checkpoint, NetworkRoundTripIsExact) {
  Network net = warmed_network(3);
  OptimizerState opt = OptimizerState::zeros_like(net.params());
  Rng rng(3);
  for (auto& v : opt.velocity) v = random_tensor(v.shape(), rng);
  const auto path = std::filesystem::temp_directory_path() / "milcnn_ckpt_test.bin";
  write_checkpoint(path, snapshot(net, &opt, {{"epoch", 7}}));
  const Checkpoint back = read_checkpoint(path);
  EXPECT_EQ(back.header.at("epoch"), 7);
  EXPECT_TRUE(back.header.contains("arch"));

  Network copy = restore_network(back);
  EXPECT_EQ(copy.spec(), net.spec());
  EXPECT_TRUE(copy.head_relu());
  auto a = net.params(), b = copy.params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].value, *b[i].value) << a[i].name;
  auto ab = net.buffers(), bb = copy.buffers();
  for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_EQ(*ab[i].value, *bb[i].value) << ab[i].name;
  const OptimizerState opt2 = restore_optimizer(back, copy);
  for (std::size_t i = 0; i < opt.velocity.size(); ++i) EXPECT_EQ(opt.velocity[i], opt2.velocity[i]);

  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  EXPECT_EQ(net.forward(x, Mode::kEval), copy.forward(x, Mode::kEval));
}

TEST(Checkpoint, MissingOrMisshapenTensorRejected) {
  Network net = warmed_network(4);
  Checkpoint c = snapshot(net);
  Checkpoint missing = c;
  missing.tensors.erase(missing.tensors.begin());
  EXPECT_THROW(restore_network(missing), std::invalid_argument);
  Checkpoint misshapen = c;
  misshapen.tensors.back().value = Tensor(Shape{99});
  EXPECT_THROW(restore_network(misshapen), std::invalid_argument);
  EXPECT_THROW(restore_optimizer(c, net), std::invalid_argument);
}

TEST(Checkpoint, UnreadablePathThrows) {
  EXPECT_THROW(read_checkpoint("/nonexistent/dir/ckpt.bin"), std::invalid_argument);
}

}  // namespace
}  // namespace milcnn
