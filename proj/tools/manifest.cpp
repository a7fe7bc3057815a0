#include "manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace milcnn::cli {

const char* engine_version() { return MILCNN_VERSION; }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

std::string RunManifest::id() const {
  const nlohmann::json core = {{"command", command},
                               {"config", config},
                               {"seeds", seeds},
                               {"engine_version", engine_version()},
                               {"dataset_checksums", dataset_checksums}};
  const std::string text = core.dump();
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}).substr(0, 16);
}

nlohmann::json RunManifest::to_json() const {
  return {{"id", id()},
          {"command", command},
          {"engine_version", engine_version()},
          {"config", config},
          {"seeds", seeds},
          {"dataset_checksums", dataset_checksums},
          {"outputs", outputs}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace milcnn::cli
