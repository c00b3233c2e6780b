#include "balgan/image_codec.hpp"

#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "balgan/errors.hpp"

namespace balgan {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return out;
}

// Skips whitespace and '#' comments, then reads one unsigned integer.
int pgm_token(const std::vector<std::uint8_t>& b, std::size_t& pos, const fs::path& path) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw DataError("malformed PGM header in '" + path.string() + "'");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1 << 20) throw DataError("PGM header value too large in '" + path.string() + "'");
  }
  return static_cast<int>(v);
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& b, const fs::path& path) {
  std::size_t pos = 2;
  GrayImage out;
  out.width = pgm_token(b, pos, path);
  out.height = pgm_token(b, pos, path);
  const int maxval = pgm_token(b, pos, path);
  if (out.width < 1 || out.height < 1 || maxval < 1 || maxval > 65535) {
    throw DataError("invalid PGM geometry in '" + path.string() + "'");
  }
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (b.size() < pos + n * bpp) throw DataError("truncated PGM raster in '" + path.string() + "'");
  out.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bpp == 1 ? b[pos + i] : (static_cast<unsigned>(b[pos + 2 * i]) << 8) | b[pos + 2 * i + 1];
    out.pixels[i] = static_cast<std::uint8_t>((v * 255u + static_cast<unsigned>(maxval) / 2) / static_cast<unsigned>(maxval));
  }
  return out;
}

}  // namespace

GrayImage read_gray_image(const fs::path& path) {
  const auto bytes = slurp(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  throw DataError("unsupported image format for '" + path.string() + "' (expected PNG or binary PGM)");
}

void write_png_gray8(const fs::path& path, const GrayImage& img) {
  if (img.width < 1 || img.height < 1 || img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw ContractError("write_png_gray8: inconsistent image geometry");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write PNG '" + path.string() + "': " + image.message);
  }
}

void write_pgm(const fs::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write PGM '" + path.string() + "'");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

}  // namespace balgan
