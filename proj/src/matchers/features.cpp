#include "sloop/features.hpp"

#include <algorithm>
#include <cmath>

#include "sloop/error.hpp"
#include "sloop/log.hpp"

namespace sloop {

namespace {

constexpr int kJet = 6;

struct DerivativeKernels {
  int radius = 0;
  std::vector<double> g0, g1, g2;
};

// Sampled 1-D Gaussian and its first two derivatives. g0 is normalised to
// unit sum; the derivative kernels use the same normaliser.
DerivativeKernels make_kernels(double sigma) {
  DerivativeKernels k;
  k.radius = static_cast<int>(std::ceil(constants::kKernelRadius * sigma));
  const int n = 2 * k.radius + 1;
  k.g0.resize(n);
  k.g1.resize(n);
  k.g2.resize(n);
  double sum = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) sum += std::exp(-0.5 * i * i / (sigma * sigma));
  const double s2 = sigma * sigma;
  for (int i = -k.radius; i <= k.radius; ++i) {
    const double g = std::exp(-0.5 * i * i / s2) / sum;
    k.g0[i + k.radius] = g;
    k.g1[i + k.radius] = -i / s2 * g;
    k.g2[i + k.radius] = (i * i / (s2 * s2) - 1.0 / s2) * g;
  }
  // Truncation leaves g2 with a small DC response; remove it.
  double dc = 0.0;
  for (const double v : k.g2) dc += v;
  for (int i = 0; i < n; ++i) k.g2[i] -= dc * k.g0[i];
  return k;
}

const DerivativeKernels& kernels_for(double sigma) {
  static const std::array<DerivativeKernels, constants::kDescriptorScales.size()> cache = [] {
    std::array<DerivativeKernels, constants::kDescriptorScales.size()> c;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = make_kernels(constants::kDescriptorScales[i]);
    return c;
  }();
  for (std::size_t i = 0; i < cache.size(); ++i) {
    if (constants::kDescriptorScales[i] == sigma) return cache[i];
  }
  thread_local DerivativeKernels custom;
  custom = make_kernels(sigma);
  return custom;
}

int grid_step(double sigma) { return static_cast<int>(std::lround(constants::kGridSpacing * sigma)); }

}  // namespace

int descriptor_dimension() {
  return static_cast<int>(constants::kDescriptorScales.size()) * constants::kGridSide *
         constants::kGridSide * kJet;
}

int descriptor_support_radius() {
  int r = 0;
  for (const double s : constants::kDescriptorScales) {
    const int half = constants::kGridSide / 2;
    r = std::max(r, half * grid_step(s) + static_cast<int>(std::ceil(constants::kKernelRadius * s)));
  }
  return r;
}

std::array<double, 6> gaussian_jet(const Grid& image, int x, int y, double sigma) {
  const auto& k = kernels_for(sigma);
  const int r = k.radius;
  // Row pass: for each row offset j, the three x-filtered values at column x.
  double L = 0, Lx = 0, Ly = 0, Lxx = 0, Lxy = 0, Lyy = 0;
  for (int j = -r; j <= r; ++j) {
    const int yy = y - j;
    double r0 = 0, r1 = 0, r2 = 0;
    for (int i = -r; i <= r; ++i) {
      const double p = image(yy, x - i);
      r0 += k.g0[i + r] * p;
      r1 += k.g1[i + r] * p;
      r2 += k.g2[i + r] * p;
    }
    const double c0 = k.g0[j + r], c1 = k.g1[j + r], c2 = k.g2[j + r];
    L += c0 * r0;
    Lx += c0 * r1;
    Lxx += c0 * r2;
    Ly += c1 * r0;
    Lxy += c1 * r1;
    Lyy += c2 * r0;
  }
  const double s = sigma, s2 = sigma * sigma;
  return {L, s * Lx, s * Ly, s2 * Lxx, s2 * Lxy, s2 * Lyy};
}

FeatureSet extract_features(const Grid& image, const std::vector<Point2>& fiducials,
                            std::vector<int>* skipped) {
  if (fiducials.empty()) throw validation_error("extract_features: no fiducials");
  const int support = descriptor_support_radius();
  const int half = constants::kGridSide / 2;
  FeatureSet fs;
  fs.dimension = descriptor_dimension();
  for (std::size_t f = 0; f < fiducials.size(); ++f) {
    const int cx = static_cast<int>(std::lround(fiducials[f].x));
    const int cy = static_cast<int>(std::lround(fiducials[f].y));
    if (cx - support < 0 || cy - support < 0 || cx + support >= image.width() ||
        cy + support >= image.height()) {
      log_warn("fiducial " + std::to_string(f) + " at (" + std::to_string(fiducials[f].x) + ", " +
               std::to_string(fiducials[f].y) + ") too close to border, skipped");
      if (skipped) skipped->push_back(static_cast<int>(f));
      continue;
    }
    Keypoint kp;
    kp.anchor = static_cast<int>(f);
    kp.position = fiducials[f];
    kp.descriptor.reserve(fs.dimension);
    for (const double sigma : constants::kDescriptorScales) {
      const int step = grid_step(sigma);
      const std::size_t block_start = kp.descriptor.size();
      for (int gy = -half; gy <= half; ++gy) {
        for (int gx = -half; gx <= half; ++gx) {
          const auto jet = gaussian_jet(image, cx + gx * step, cy + gy * step, sigma);
          kp.descriptor.insert(kp.descriptor.end(), jet.begin(), jet.end());
        }
      }
      // Order-0 responses are taken relative to their lattice mean, which
      // makes a constant image produce an all-zero block.
      const std::size_t count = constants::kGridSide * constants::kGridSide;
      double m = 0.0;
      for (std::size_t i = 0; i < count; ++i) m += kp.descriptor[block_start + i * kJet];
      m /= static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) kp.descriptor[block_start + i * kJet] -= m;
      double norm2 = 0.0;
      for (std::size_t i = block_start; i < kp.descriptor.size(); ++i) norm2 += kp.descriptor[i] * kp.descriptor[i];
      const double norm = std::sqrt(norm2);
      // Numerically flat blocks are treated as exactly zero.
      if (norm > 1e-9) {
        for (std::size_t i = block_start; i < kp.descriptor.size(); ++i) kp.descriptor[i] /= norm;
      } else {
        std::fill(kp.descriptor.begin() + static_cast<std::ptrdiff_t>(block_start), kp.descriptor.end(), 0.0);
      }
    }
    fs.keypoints.push_back(std::move(kp));
  }
  if (fs.keypoints.empty()) throw validation_error("extract_features: no usable fiducials");
  return fs;
}

ImageFeatures extract_image_features(const Grid& image, const std::vector<Point2>& fiducials,
                                     const FeatureParams& params) {
  ImageFeatures out;
  out.features = extract_features(image, fiducials, &out.skipped);
  for (const auto& kp : out.features.keypoints) {
    Patch p;
    p.anchor = kp.anchor;
    p.scale = params.patch_half_width;
    p.pixels = extract_patch(image, kp.position.x, kp.position.y, params.patch_half_width);
    out.patches.push_back(std::move(p));
  }
  return out;
}

ImageFeatures select_anchors(const ImageFeatures& features, const std::vector<int>& anchors) {
  ImageFeatures out;
  out.features.dimension = features.features.dimension;
  for (const int a : anchors) {
    for (std::size_t i = 0; i < features.features.keypoints.size(); ++i) {
      if (features.features.keypoints[i].anchor == a) {
        out.features.keypoints.push_back(features.features.keypoints[i]);
        if (i < features.patches.size()) out.patches.push_back(features.patches[i]);
      }
    }
  }
  return out;
}

}  // namespace sloop
