#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sloop/grid.hpp"

namespace sloop {

// "SLPF" raw-float grid dump: magic, u32 H, u32 W, f32 u-grid, f32 v-grid,
// all little-endian, grids row-major.
std::vector<std::uint8_t> encode_slpf(const Grid& u, const Grid& v);
void decode_slpf(const std::vector<std::uint8_t>& bytes, Grid& u, Grid& v);

void write_slpf(const std::filesystem::path& path, const Grid& u, const Grid& v);
void read_slpf(const std::filesystem::path& path, Grid& u, Grid& v);

}  // namespace sloop
