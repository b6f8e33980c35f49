#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace riskexplain {

std::array<std::uint8_t, 32> sha256(std::string_view bytes);
std::string sha256_hex(std::string_view bytes);

class Dataset;
std::string dataset_fingerprint(const Dataset& dataset);

}  // namespace riskexplain
