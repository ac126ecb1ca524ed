#include "adprof/hashing.hpp"

#include <memory>
#include <stdexcept>

#include <openssl/evp.h>

namespace adprof {

std::array<std::uint8_t, 32> sha256(std::string_view data) {
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  return digest;
}

std::string sha256_hex(std::string_view data) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto digest = sha256(data);
  std::string out;
  out.reserve(64);
  for (const auto b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::string sha256_fields(std::initializer_list<std::string_view> fields) {
  std::string buffer;
  for (const auto f : fields) {
    buffer += std::to_string(f.size());
    buffer += ':';
    buffer += f;
  }
  return sha256_hex(buffer);
}

}  // namespace adprof
