#pragma once

#include "milcnn/network.hpp"
#include "milcnn/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace milcnn {

/// Flat binary checkpoint:
///   magic "MILCNN-CKPT1\n"
///   u64 header length, header JSON bytes (holds "arch" plus run metadata)
///   tensors until end of file, each:
///     u32 name length, name bytes, u32 rank, rank x u64 dims,
///     element count x little-endian IEEE-754 double
inline constexpr std::string_view kCheckpointMagic = "MILCNN-CKPT1\n";

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;

  const Tensor* find(std::string_view name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError carrying the byte offset of the first bad field.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `net` under their layer names, optimizer
/// velocities as "opt.<param>", header {"arch", "head_relu"} merged with
/// `extra`.
Checkpoint snapshot(Network& net, const OptimizerState* optimizer = nullptr,
                    nlohmann::json extra = nlohmann::json::object());

/// Rebuilds the network described by the header and loads its tensors.
/// Throws std::invalid_argument when a tensor is missing or misshapen.
Network restore_network(const Checkpoint& ckpt);
OptimizerState restore_optimizer(const Checkpoint& ckpt, Network& net);

}  // namespace milcnn
