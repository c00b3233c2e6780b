#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace balgan {

// 8-bit single-channel image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

// PNG (any colour type, converted to luminance) or binary PGM (P5).
// Throws DataError naming the file when it cannot be decoded.
GrayImage read_gray_image(const std::filesystem::path& path);

void write_png_gray8(const std::filesystem::path& path, const GrayImage& image);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace balgan
