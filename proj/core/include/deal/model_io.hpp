#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deal/model.hpp"

namespace deal {

inline constexpr int kModelFormatVersion = 1;

/// Container layout: the 8-byte magic "DEALMDL\0", the manifest length as
/// a little-endian uint64, the JSON manifest, then one little-endian blob
/// holding every array at the offset the manifest records.
std::vector<std::uint8_t> serialize_model(const DealModel& model);
/// Throws FormatError naming the offending array on any inconsistency.
DealModel deserialize_model(const std::vector<std::uint8_t>& bytes);

/// The manifest text of a serialized model.
std::string model_manifest(const std::vector<std::uint8_t>& bytes);
/// Rebuilds a container with an edited manifest and the original blob.
std::vector<std::uint8_t> replace_manifest(const std::vector<std::uint8_t>& bytes,
                                           const std::string& manifest);

void save_model(const std::filesystem::path& path, const DealModel& model);
DealModel load_model(const std::filesystem::path& path);

}  // namespace deal
