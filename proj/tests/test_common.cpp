#include <doctest.h>

#include <cmath>
#include <cstring>
#include <png.h>
#include <zlib.h>

#include "sloop/checksum.hpp"
#include "sloop/config.hpp"
#include "sloop/error.hpp"
#include "sloop/field_io.hpp"
#include "sloop/grid.hpp"
#include "sloop/image_io.hpp"
#include "sloop/rng.hpp"
#include "test_helpers.hpp"

using namespace sloop;

TEST_SUITE("common") {
  TEST_CASE("crc32 check value and agreement with zlib") {
    CHECK(crc32(std::string_view("123456789")) == 0xCBF43926u);
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
      std::vector<std::uint8_t> buf(rng.below(300));
      for (auto& b : buf) b = static_cast<std::uint8_t>(rng.below(256));
      const auto ref = ::crc32(0L, buf.data(), static_cast<uInt>(buf.size()));
      CHECK(crc32(std::span<const std::uint8_t>(buf)) == static_cast<std::uint32_t>(ref));
    }
  }

  TEST_CASE("sha256 known digests") {
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  }

  TEST_CASE("rng is reproducible and in range") {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(9);
    for (int i = 0; i < 1000; ++i) {
      const double u = c.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(c.below(7) < 7u);
    }
  }

  TEST_CASE("pgm round trip and png decode") {
    GrayImage img{5, 3, {}};
    for (int i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 17));
    const auto bytes = encode_pgm(img);
    CHECK(sniff_format(bytes) == ImageFormat::pgm);
    CHECK(decode_image(bytes) == img);
    std::vector<std::uint8_t> junk = {'x', 'y', 'z'};
    CHECK_THROWS_AS(decode_image(junk), Error);
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 4);
    CHECK_THROWS_AS(decode_image(truncated), Error);
  }

  TEST_CASE("8-bit grayscale png decodes to the same pixels") {
    GrayImage img{7, 4, {}};
    for (int i = 0; i < 28; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 9));
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = 7;
    pi.height = 4;
    pi.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    REQUIRE(png_image_write_to_memory(&pi, nullptr, &size, 0, img.pixels.data(), 0, nullptr));
    std::vector<std::uint8_t> buf(size);
    REQUIRE(png_image_write_to_memory(&pi, buf.data(), &size, 0, img.pixels.data(), 0, nullptr));
    buf.resize(size);
    CHECK(sniff_format(buf) == ImageFormat::png);
    CHECK(decode_image(buf) == img);
  }

  TEST_CASE("quantize clamps and rounds") {
    Grid g(1, 4);
    g(0, 0) = -0.5;
    g(0, 1) = 0.5;
    g(0, 2) = 1.5;
    g(0, 3) = 1.0 / 255.0;
    const auto q = quantize(g);
    CHECK(q.pixels == std::vector<std::uint8_t>{0, 128, 255, 1});
  }

  TEST_CASE("gaussian kernel sums to one; blur keeps constants") {
    for (double s : {0.5, 1.0, 2.5}) {
      double sum = 0;
      for (double k : gaussian_kernel(s)) sum += k;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    Grid g(9, 11, 0.3);
    const auto b = gaussian_blur(g, 1.5);
    for (double v : b.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
  }

  TEST_CASE("bilinear sample of a ramp is exact") {
    Grid g(6, 6);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) g(y, x) = 2.0 * x + 3.0 * y;
    CHECK(g.sample(2.25, 1.5) == doctest::Approx(2 * 1.5 + 3 * 2.25));
  }

  TEST_CASE("slpf layout is little-endian float32") {
    Grid u(2, 3), v(2, 3);
    for (int i = 0; i < 6; ++i) {
      u.values()[i] = 0.5 * i;
      v.values()[i] = -0.25 * i;
    }
    const auto bytes = encode_slpf(u, v);
    REQUIRE(bytes.size() == 12 + 2 * 6 * 4);
    CHECK(std::memcmp(bytes.data(), "SLPF", 4) == 0);
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 3);
    float f;
    std::memcpy(&f, bytes.data() + 12 + 4, 4);
    CHECK(f == 0.5f);
    Grid u2, v2;
    decode_slpf(bytes, u2, v2);
    CHECK(u2 == u);
    CHECK(v2 == v);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_slpf(bad, u2, v2), Error);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_slpf(bad, u2, v2), Error);
  }

  TEST_CASE("slpf file round trip") {
    test::TempDir dir("slpf");
    Grid u(4, 4, 1.25), v(4, 4, -2.0);
    write_slpf(dir.path() / "f.slpf", u, v);
    Grid u2, v2;
    read_slpf(dir.path() / "f.slpf", u2, v2);
    CHECK(u2 == u);
    CHECK(v2 == v);
  }

  TEST_CASE("config parser types scalars") {
    const auto j = parse_config("a: 1\nb: 2.5\nc: true\nd: '7'\ne: [x, 3]\n");
    CHECK(j["a"].is_number_integer());
    CHECK(j["b"].get<double>() == 2.5);
    CHECK(j["c"].get<bool>());
    CHECK(j["d"].is_string());
    CHECK(j["e"][0] == "x");
    CHECK_THROWS_AS(parse_config("a: [1, 2"), Error);
  }
}
