#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ocsb {

/// 8-bit RGB image, rows top to bottom, pixels interleaved R, G, B.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  Image() = default;
  Image(int w, int h, uint8_t fill = 0);

  uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) * 3 +
                  static_cast<size_t>(c)];
  }
  uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)) * 3 +
                  static_cast<size_t>(c)];
  }
  bool empty() const { return width == 0 || height == 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Decodes PNG, JPEG, PPM and anything else the codec backend reads.
Image read_image(const std::filesystem::path& path);

/// Encoding follows the extension. PNG is lossless and byte-stable.
void write_image(const Image& img, const std::filesystem::path& path);

}  // namespace ocsb
