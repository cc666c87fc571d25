#include "sloop/field_io.hpp"

#include <bit>
#include <cstring>

#include "sloop/error.hpp"
#include "sloop/image_io.hpp"

namespace sloop {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

void put_grid(std::vector<std::uint8_t>& out, const Grid& g) {
  for (const double d : g.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(d)));
}

}  // namespace

std::vector<std::uint8_t> encode_slpf(const Grid& u, const Grid& v) {
  if (!u.same_shape(v)) throw validation_error("slpf: u and v shapes differ");
  std::vector<std::uint8_t> out{'S', 'L', 'P', 'F'};
  out.reserve(12 + 8 * u.size());
  put_u32(out, static_cast<std::uint32_t>(u.height()));
  put_u32(out, static_cast<std::uint32_t>(u.width()));
  put_grid(out, u);
  put_grid(out, v);
  return out;
}

void decode_slpf(const std::vector<std::uint8_t>& bytes, Grid& u, Grid& v) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "SLPF", 4) != 0) {
    throw validation_error("slpf: bad magic");
  }
  const auto h = get_u32(bytes, 4);
  const auto w = get_u32(bytes, 8);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (bytes.size() != 12 + 8 * n) throw validation_error("slpf: size mismatch");
  u = Grid(static_cast<int>(h), static_cast<int>(w));
  v = Grid(static_cast<int>(h), static_cast<int>(w));
  std::size_t pos = 12;
  for (auto* g : {&u, &v}) {
    for (double& d : g->values()) {
      d = std::bit_cast<float>(get_u32(bytes, pos));
      pos += 4;
    }
  }
}

void write_slpf(const std::filesystem::path& path, const Grid& u, const Grid& v) {
  write_file(path, encode_slpf(u, v));
}

void read_slpf(const std::filesystem::path& path, Grid& u, Grid& v) {
  decode_slpf(read_file(path), u, v);
}

}  // namespace sloop
