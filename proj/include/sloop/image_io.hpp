#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sloop/grid.hpp"

namespace sloop {

// 8-bit grayscale raster as stored on disk.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

enum class ImageFormat { pgm, png, unknown };

ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

// Accepts binary PGM (P5, maxval <= 255) and 8-bit grayscale PNG.
GrayImage decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

GrayImage read_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

// Intensities in [0,1].
Grid to_grid(const GrayImage& image);

// Clamp to [0,1] and round to the nearest of 256 levels.
GrayImage quantize(const Grid& grid);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace sloop
