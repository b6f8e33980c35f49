#include "riskexplain/fingerprint.hpp"

#include <openssl/evp.h>

#include <sstream>

#include "riskexplain/dataset.hpp"
#include "riskexplain/error.hpp"

namespace riskexplain {

std::array<std::uint8_t, 32> sha256(std::string_view bytes) {
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw Error(ErrorCode::kInternal, "SHA-256 computation failed");
  }
  return digest;
}

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  const auto digest = sha256(bytes);
  std::string out;
  out.reserve(64);
  for (auto b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::string dataset_fingerprint(const Dataset& dataset) {
  std::ostringstream os;
  write_csv(os, dataset);
  return sha256_hex(os.str());
}

}  // namespace riskexplain
