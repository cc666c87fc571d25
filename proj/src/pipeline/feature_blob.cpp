#include <bit>
#include <cstring>

#include "sloop/error.hpp"
#include "sloop/pipeline.hpp"

namespace sloop {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  // Guards counts read from the blob against its remaining length.
  std::uint32_t count(std::size_t min_item_bytes) {
    const auto n = u32();
    if (min_item_bytes && n > (in_.size() - pos_) / min_item_bytes) throw validation_error("feature set: bad count");
    return n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw validation_error("feature set: truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_feature_set(const ImageFeatures& f) {
  Writer w;
  w.out = {'S', 'L', 'F', 'S'};
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(f.features.dimension));
  w.u32(static_cast<std::uint32_t>(f.features.keypoints.size()));
  for (const auto& k : f.features.keypoints) {
    w.i32(k.anchor);
    w.f64(k.position.x);
    w.f64(k.position.y);
    w.u32(static_cast<std::uint32_t>(k.descriptor.size()));
    for (double d : k.descriptor) w.f64(d);
  }
  w.u32(static_cast<std::uint32_t>(f.patches.size()));
  for (const auto& p : f.patches) {
    w.i32(p.anchor);
    w.i32(p.scale);
    w.u32(static_cast<std::uint32_t>(p.pixels.height()));
    w.u32(static_cast<std::uint32_t>(p.pixels.width()));
    for (double d : p.pixels.values()) w.f64(d);
  }
  w.u32(static_cast<std::uint32_t>(f.skipped.size()));
  for (int s : f.skipped) w.i32(s);
  return std::move(w.out);
}

ImageFeatures decode_feature_set(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "SLFS", 4) != 0) throw validation_error("feature set: bad magic");
  Reader r(bytes.subspan(4));
  if (r.u32() != kVersion) throw validation_error("feature set: unsupported version");
  ImageFeatures f;
  f.features.dimension = static_cast<int>(r.u32());
  const auto nk = r.count(24);
  for (std::uint32_t i = 0; i < nk; ++i) {
    Keypoint k;
    k.anchor = r.i32();
    k.position.x = r.f64();
    k.position.y = r.f64();
    const auto nd = r.count(8);
    k.descriptor.resize(nd);
    for (auto& d : k.descriptor) d = r.f64();
    f.features.keypoints.push_back(std::move(k));
  }
  const auto np = r.count(16);
  for (std::uint32_t i = 0; i < np; ++i) {
    Patch p;
    p.anchor = r.i32();
    p.scale = r.i32();
    const auto h = r.u32();
    const auto w = r.u32();
    if (h > 4096 || w > 4096) throw validation_error("feature set: patch too large");
    p.pixels = Grid(static_cast<int>(h), static_cast<int>(w));
    for (auto& d : p.pixels.values()) d = r.f64();
    f.patches.push_back(std::move(p));
  }
  const auto ns = r.count(4);
  for (std::uint32_t i = 0; i < ns; ++i) f.skipped.push_back(r.i32());
  if (!r.done()) throw validation_error("feature set: trailing bytes");
  return f;
}

}  // namespace sloop
