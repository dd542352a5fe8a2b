#pragma once

#include <cstdint>
#include <vector>

namespace mews {

// Row-major 8-bit grayscale image.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RasterImage() = default;
  RasterImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const noexcept {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) noexcept {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

}  // namespace mews
