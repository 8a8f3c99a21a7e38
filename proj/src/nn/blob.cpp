#include "acrec/nn/blob.hpp"

#include <bit>
#include <cstring>

namespace acrec::nn {

namespace {

void put_f32(std::vector<std::uint8_t>& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

PackedParams pack(const ParamSet<float>& params) {
  PackedParams packed;
  std::size_t offset = 0;
  for (const auto& [name, t] : params.items()) {
    packed.entries.push_back({name, t.shape(), offset});
    for (float v : t.data()) put_f32(packed.bytes, v);
    offset += t.size();
  }
  return packed;
}

void unpack(const std::vector<BlobEntry>& entries, const std::vector<std::uint8_t>& bytes,
            ParamSet<float>& params) {
  if (bytes.size() % 4 != 0) throw CorruptionError("parameter blob length is not a multiple of 4");
  const std::size_t n_floats = bytes.size() / 4;
  if (entries.size() != params.size()) {
    throw CorruptionError("blob lists " + std::to_string(entries.size()) + " tensors, model has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto& [name, t] = params.items()[i];
    if (e.name != name || e.shape != t.shape()) {
      throw CorruptionError("blob tensor " + e.name + " does not match model tensor " + name +
                            t.shape_string());
    }
    if (e.offset + t.size() > n_floats) {
      throw CorruptionError("blob tensor " + e.name + " runs past the end of the blob");
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto t = params.items()[i].second;
    auto dst = t.data();
    const std::uint8_t* src = bytes.data() + entries[i].offset * 4;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = get_f32(src + 4 * k);
  }
}

nlohmann::json to_json(const std::vector<BlobEntry>& entries) {
  auto arr = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  }
  return arr;
}

std::vector<BlobEntry> entries_from_json(const nlohmann::json& j) {
  std::vector<BlobEntry> out;
  for (const auto& e : j) {
    out.push_back({e.at("name").get<std::string>(), e.at("shape").get<std::vector<int>>(),
                   e.at("offset").get<std::size_t>()});
  }
  return out;
}

}  // namespace acrec::nn
