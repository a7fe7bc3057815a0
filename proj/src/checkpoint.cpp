#include "milcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace milcnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

  template <class T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, need(sizeof(T), what), sizeof(T));
    return value;
  }

  const std::uint8_t* need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  const std::string header = ckpt.header.dump();
  put<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (Index d : t.value.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.value.ptr());
    out.insert(out.end(), p, p + t.value.size() * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto* magic = in.need(kCheckpointMagic.size(), "magic");
  if (std::memcmp(magic, kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw FormatError("not a checkpoint (bad magic)", 0);
  }
  Checkpoint ckpt;
  const std::size_t len_at = in.pos();
  const auto header_len = in.get<std::uint64_t>("header length");
  if (header_len > bytes.size()) throw FormatError("header length exceeds file size", len_at);
  const std::size_t header_at = in.pos();
  const auto* header = in.need(header_len, "header");
  try {
    ckpt.header = nlohmann::json::parse(header, header + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what(), header_at);
  }

  while (!in.done()) {
    NamedTensor t;
    const auto name_len = in.get<std::uint32_t>("tensor name length");
    const auto* name = in.need(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::size_t rank_at = in.pos();
    const auto rank = in.get<std::uint32_t>("tensor rank");
    if (rank > 8) throw FormatError("tensor '" + t.name + "' has implausible rank", rank_at);
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::size_t dim_at = in.pos();
      const auto d = in.get<std::uint64_t>("tensor dims");
      if (d == 0) throw FormatError("tensor '" + t.name + "' has a zero dimension", dim_at);
      if (d > bytes.size() || count > bytes.size() / d) {
        throw FormatError("tensor '" + t.name + "' dimensions exceed file size", dim_at);
      }
      count *= d;
      shape.push_back(static_cast<Index>(d));
    }
    const auto* data = in.need(count * sizeof(double), "tensor data");
    t.value = Tensor(shape);
    std::memcpy(t.value.ptr(), data, count * sizeof(double));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot(Network& net, const OptimizerState* optimizer, nlohmann::json extra) {
  Checkpoint ckpt;
  ckpt.header = std::move(extra);
  ckpt.header["arch"] = net.spec();
  ckpt.header["head_relu"] = net.head_relu();
  const auto params = net.params();
  for (const auto& p : params) ckpt.tensors.push_back({p.name, *p.value});
  for (const auto& b : net.buffers()) ckpt.tensors.push_back({b.name, *b.value});
  if (optimizer != nullptr && optimizer->matches(params)) {
    for (std::size_t i = 0; i < params.size(); ++i)
      ckpt.tensors.push_back({"opt." + params[i].name, optimizer->velocity[i]});
  }
  return ckpt;
}

namespace {

void load_into(const Checkpoint& ckpt, const std::string& name, Tensor& target) {
  const Tensor* t = ckpt.find(name);
  if (t == nullptr) throw std::invalid_argument("checkpoint lacks tensor '" + name + "'");
  if (t->shape() != target.shape()) {
    throw std::invalid_argument("checkpoint tensor '" + name + "' has shape " +
                                to_string(t->shape()) + ", network expects " +
                                to_string(target.shape()));
  }
  target = *t;
}

}  // namespace

Network restore_network(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("arch")) throw std::invalid_argument("checkpoint header lacks arch");
  ArchSpec spec;
  try {
    spec = ckpt.header.at("arch").get<ArchSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint arch: ") + e.what());
  }
  Network net(spec, 0);
  for (auto& p : net.params()) load_into(ckpt, p.name, *p.value);
  for (auto& b : net.buffers()) load_into(ckpt, b.name, *b.value);
  net.set_head_relu(ckpt.header.value("head_relu", false));
  return net;
}

OptimizerState restore_optimizer(const Checkpoint& ckpt, Network& net) {
  const auto params = net.params();
  OptimizerState state = OptimizerState::zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i)
    load_into(ckpt, "opt." + params[i].name, state.velocity[i]);
  return state;
}

}  // namespace milcnn
