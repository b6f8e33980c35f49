#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "riskexplain/forest.hpp"

namespace riskexplain {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Container: 8-byte magic, u32 format version, u64 payload length,
// SHA-256 of the payload, then the little-endian payload (schema document,
// metadata, imputation values, base rates, trees).
std::string serialize_model(const RandomForest& model);
RandomForest deserialize_model(std::string_view bytes);

void save_model(const RandomForest& model, const std::filesystem::path& path);
RandomForest load_model(const std::filesystem::path& path);

// SHA-256 of the serialized container.
std::string model_fingerprint(const RandomForest& model);

}  // namespace riskexplain
