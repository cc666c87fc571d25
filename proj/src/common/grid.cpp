#include "sloop/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sloop/error.hpp"

namespace sloop {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::authentication: return "authentication";
    case ErrorCode::authorization: return "authorization";
    case ErrorCode::unavailable: return "unavailable";
    case ErrorCode::io: return "io";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

double Grid::at_clamped(int y, int x) const {
  y = std::clamp(y, 0, height_ - 1);
  x = std::clamp(x, 0, width_ - 1);
  return (*this)(y, x);
}

double mean(const Grid& g) {
  if (g.empty()) return 0.0;
  const auto v = g.values();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Grid convolve_separable(const Grid& g, std::span<const double> kernel_x,
                        std::span<const double> kernel_y) {
  const int h = g.height();
  const int w = g.width();
  const int rx = static_cast<int>(kernel_x.size() / 2);
  const int ry = static_cast<int>(kernel_y.size() / 2);
  // Pad with replicated borders once, then run both passes branch-free.
  std::vector<double> row(w + 2 * rx);
  Grid tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = -rx; x < w + rx; ++x) row[x + rx] = g(y, std::clamp(x, 0, w - 1));
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const double* src = row.data() + x + 2 * rx;
      for (int k = 0; k <= 2 * rx; ++k) acc += kernel_x[k] * src[-k];
      tmp(y, x) = acc;
    }
  }
  Grid out(h, w);
  std::vector<const double*> rows(h + 2 * ry);
  for (int y = -ry; y < h + ry; ++y) rows[y + ry] = &tmp(std::clamp(y, 0, h - 1), 0);
  for (int y = 0; y < h; ++y) {
    double* dst = &out(y, 0);
    for (int k = 0; k <= 2 * ry; ++k) {
      const double c = kernel_y[k];
      const double* src = rows[y + 2 * ry - k];
      for (int x = 0; x < w; ++x) dst[x] += c * src[x];
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

Grid gaussian_blur(const Grid& g, double sigma) {
  const auto k = gaussian_kernel(sigma);
  return convolve_separable(g, k, k);
}

Grid downsample(const Grid& g) {
  const Grid blurred = gaussian_blur(g, 1.0);
  const int h = (g.height() + 1) / 2;
  const int w = (g.width() + 1) / 2;
  Grid out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out(y, x) = blurred(2 * y, 2 * x);
  }
  return out;
}

Grid resize(const Grid& g, int height, int width) {
  if (g.height() == height && g.width() == width) return g;
  Grid out(height, width);
  const double sy = height > 1 ? static_cast<double>(g.height() - 1) / (height - 1) : 0.0;
  const double sx = width > 1 ? static_cast<double>(g.width() - 1) / (width - 1) : 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out(y, x) = g.sample(y * sy, x * sx);
  }
  return out;
}

Grid extract_patch(const Grid& image, double cx, double cy, int half_width) {
  const int side = 2 * half_width + 1;
  Grid out(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      out(y, x) = image.sample(cy + y - half_width, cx + x - half_width);
    }
  }
  return out;
}

}  // namespace sloop
