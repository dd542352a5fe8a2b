#pragma once

#include <cstdint>
#include <span>

#include "mews/digest.hpp"
#include "mews/raster.hpp"

namespace mews {

enum class ImageFormat { png, jpeg, unknown };

ImageFormat sniff_format(ByteView bytes) noexcept;

// Luma of an RGB triple: 0.299 R + 0.587 G + 0.114 B, rounded half-up.
constexpr std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

// Decodes PNG or JPEG to grayscale with no minimum-size check. Alpha is
// ignored. Throws Error(UnsupportedFormat | CorruptImage).
RasterImage decode_any_size(ByteView bytes);

Bytes encode_png(const RasterImage& img);
// Interleaved 8-bit RGB, row-major.
Bytes encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);
Bytes encode_jpeg(const RasterImage& img, int quality);

}  // namespace mews
