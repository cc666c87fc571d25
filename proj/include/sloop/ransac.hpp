#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "sloop/constants.hpp"
#include "sloop/features.hpp"

namespace sloop {

// Row-major 2x3 affine: [a b tx; c d ty].
using Affine = std::array<double, 6>;

inline constexpr Affine kIdentityAffine = {1, 0, 0, 0, 1, 0};

Point2 apply(const Affine& m, const Point2& p);

struct RansacParams {
  int iters = constants::kRansacIters;
  double inlier_tol_px = constants::kRansacInlierTolPx;
  int min_inliers = constants::kRansacMinInliers;
  int outer_rounds = constants::kRansacOuterRounds;
  std::uint64_t seed = 0;
};

struct Correspondence {
  int a = 0;  // index into features_a.keypoints
  int b = 0;
};

struct RansacResult {
  std::optional<Affine> transform;  // empty when fewer than 3 correspondences
  int inlier_count = 0;
  double score = 0.0;  // inlier_count / min(n_a, n_b)
  std::vector<Correspondence> inliers;
  int rounds = 0;
};

// Least-squares affine through >= 3 point pairs; nullopt when degenerate.
std::optional<Affine> fit_affine(std::span<const Point2> from, std::span<const Point2> to);

// Iterated correspondence: alternate descriptor matching (gated by the
// current transform once one exists) with a RANSAC affine re-fit until the
// inlier set stops changing.
RansacResult ransac_match(const FeatureSet& a, const FeatureSet& b, const RansacParams& params = {});

}  // namespace sloop
