#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sloop/constants.hpp"
#include "sloop/grid.hpp"

namespace sloop {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Keypoint {
  int anchor = 0;  // fiducial index
  Point2 position;
  std::vector<double> descriptor;
};

// Per-fiducial multiscale Gaussian-derivative jets.
struct FeatureSet {
  std::vector<Keypoint> keypoints;
  int dimension = 0;
};

struct Patch {
  Grid pixels;
  int anchor = 0;
  int scale = 0;  // extraction half-width in px
};

struct FeatureParams {
  int patch_half_width = constants::kPatchHalfWidth;
};

// Result of extraction: the descriptors plus the patches the deformation
// matchers need. Fiducials too close to the border are listed in `skipped`.
struct ImageFeatures {
  FeatureSet features;
  std::vector<Patch> patches;
  std::vector<int> skipped;
};

int descriptor_dimension();

// Support radius (px) a fiducial needs around it for the largest scale.
int descriptor_support_radius();

// Derivative responses L, Lx, Ly, Lxx, Lxy, Lyy at integer pixel (x, y) and
// scale sigma, scale-normalised by sigma^order. Convolution convention:
// L_x = sum_k I(p - k) g'(k). The caller guarantees kernel support in-bounds.
std::array<double, 6> gaussian_jet(const Grid& image, int x, int y, double sigma);

FeatureSet extract_features(const Grid& image, const std::vector<Point2>& fiducials,
                            std::vector<int>* skipped = nullptr);

ImageFeatures extract_image_features(const Grid& image, const std::vector<Point2>& fiducials,
                                     const FeatureParams& params = {});

// Restrict to the given fiducial anchors (keeps order of `anchors`).
ImageFeatures select_anchors(const ImageFeatures& features, const std::vector<int>& anchors);

}  // namespace sloop
