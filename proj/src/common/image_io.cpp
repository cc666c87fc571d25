#include "sloop/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sloop/error.hpp"

namespace sloop {

namespace {

constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

// Reads the next whitespace-separated PGM header token, skipping comments.
int pgm_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  auto is_space = [](std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (pos < bytes.size()) {
    if (is_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  long value = 0;
  std::size_t digits = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1 << 20) throw validation_error("pgm: header value too large");
    ++pos;
    ++digits;
  }
  if (digits == 0) throw validation_error("pgm: malformed header");
  return static_cast<int>(value);
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  GrayImage img;
  img.width = pgm_header_int(bytes, pos);
  img.height = pgm_header_int(bytes, pos);
  const int maxval = pgm_header_int(bytes, pos);
  if (img.width <= 0 || img.height <= 0) throw validation_error("pgm: empty image");
  if (maxval <= 0 || maxval > 255) throw validation_error("pgm: only 8-bit maxval supported");
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() < pos + n) throw validation_error("pgm: truncated raster");
  img.pixels.assign(bytes.begin() + pos, bytes.begin() + pos + n);
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>(std::min(255, (p * 255 + maxval / 2) / maxval));
    }
  }
  return img;
}

struct PngReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
  auto* reader = static_cast<PngReader*>(png_get_io_ptr(png));
  if (reader->pos + len > reader->bytes.size()) png_error(png, "truncated png");
  std::memcpy(out, reader->bytes.data() + reader->pos, len);
  reader->pos += len;
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::internal, "png: init failed");
  png_infop info = png_create_info_struct(png);
  GrayImage img;
  PngReader reader{bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw validation_error("png: decode failed");
  }
  png_set_read_fn(png, &reader, png_read_from_span);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth > 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw validation_error("png: only 8-bit grayscale is accepted");
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return ImageFormat::pgm;
  if (bytes.size() >= 8 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
    return ImageFormat::png;
  }
  return ImageFormat::unknown;
}

GrayImage decode_image(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::pgm: return decode_pgm(bytes);
    case ImageFormat::png: return decode_png(bytes);
    case ImageFormat::unknown: break;
  }
  throw validation_error("unsupported image format (expected P5 PGM or grayscale PNG)");
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage read_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  write_file(path, encode_pgm(image));
}

Grid to_grid(const GrayImage& image) {
  Grid g(image.height, image.width);
  auto v = g.values();
  for (std::size_t i = 0; i < image.pixels.size(); ++i) v[i] = image.pixels[i] / 255.0;
  return g;
}

GrayImage quantize(const Grid& grid) {
  GrayImage img{grid.width(), grid.height(), {}};
  img.pixels.resize(grid.size());
  const auto v = grid.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Fixed-point rounding so the last step is integer-only.
    const double c = std::clamp(v[i], 0.0, 1.0);
    const auto fixed = static_cast<std::int64_t>(c * 255.0 * 65536.0);
    img.pixels[i] = static_cast<std::uint8_t>((fixed + 32768) >> 16);
  }
  return img;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "short write " + path.string());
}

}  // namespace sloop
