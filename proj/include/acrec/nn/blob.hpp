#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acrec/nn/layers.hpp"

namespace acrec::nn {

struct BlobEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // in floats

  bool operator==(const BlobEntry&) const = default;
};

struct PackedParams {
  std::vector<BlobEntry> entries;
  std::vector<std::uint8_t> bytes;  // little-endian float32, contiguous
};

PackedParams pack(const ParamSet<float>& params);

/// Writes blob values into `params`. Every parameter must be present with a
/// matching shape; nothing is modified unless the whole blob validates.
void unpack(const std::vector<BlobEntry>& entries, const std::vector<std::uint8_t>& bytes,
            ParamSet<float>& params);

nlohmann::json to_json(const std::vector<BlobEntry>& entries);
std::vector<BlobEntry> entries_from_json(const nlohmann::json& j);

}  // namespace acrec::nn
