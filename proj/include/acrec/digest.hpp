#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace acrec {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Hex SHA-256 of `text`, prefixed with "sha256:".
std::string digest_string(std::string_view text);

/// Git-style object digest: sha256("blob <size>\0" + content).
std::string blob_digest(std::span<const std::uint8_t> content);

}  // namespace acrec
