#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mews/common.hpp"

namespace mews {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::array<std::uint8_t, 32> sha256_raw(ByteView data);
ContentHash sha256(ByteView data);

std::uint32_t crc32(ByteView data) noexcept;

// Standard alphabet with padding. Decoding ignores ASCII whitespace and
// throws Error(BadRequest) on invalid input.
std::string base64_encode(ByteView data);
Bytes base64_decode(std::string_view text);

}  // namespace mews
