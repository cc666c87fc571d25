#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sloop {

// Row-major H x W grid of doubles. Used for images, patches and
// displacement components.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, double fill = 0.0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Clamped-border access.
  double at_clamped(int y, int x) const;

  // Bilinear interpolation with clamped borders.
  double sample(double y, double x) const {
    const double ymax = height_ - 1, xmax = width_ - 1;
    y = y < 0.0 ? 0.0 : (y > ymax ? ymax : y);
    x = x < 0.0 ? 0.0 : (x > xmax ? xmax : x);
    const int y0 = static_cast<int>(y);
    const int x0 = static_cast<int>(x);
    const int y1 = y0 + 1 < height_ ? y0 + 1 : y0;
    const int x1 = x0 + 1 < width_ ? x0 + 1 : x0;
    const double fy = y - y0;
    const double fx = x - x0;
    const double* r0 = data_.data() + static_cast<std::size_t>(y0) * width_;
    const double* r1 = data_.data() + static_cast<std::size_t>(y1) * width_;
    const double top = r0[x0] + (r0[x1] - r0[x0]) * fx;
    const double bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
    return top + (bottom - top) * fy;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

double mean(const Grid& g);

// Separable convolution with a 1-D kernel (odd length, centred), clamped borders.
Grid convolve_separable(const Grid& g, std::span<const double> kernel_x,
                        std::span<const double> kernel_y);

std::vector<double> gaussian_kernel(double sigma);

Grid gaussian_blur(const Grid& g, double sigma);

// 2x decimation after a sigma=1 blur.
Grid downsample(const Grid& g);

// Bilinear resize to an explicit shape.
Grid resize(const Grid& g, int height, int width);

// Square window centred on (cx, cy) with the given half-width, bilinear.
Grid extract_patch(const Grid& image, double cx, double cy, int half_width);

}  // namespace sloop
