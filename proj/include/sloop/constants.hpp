#pragma once

#include <array>
#include <cstdint>

// Every tunable of the matching core lives here so the reconstructed
// functional forms can be audited in one place. Workflow documents may
// override the ones exposed through MatcherParams.
namespace sloop::constants {

// Gaussian-derivative descriptors: orders 0..2 at these scales.
inline constexpr std::array<double, 3> kDescriptorScales = {1.0, 2.0, 4.0};
// Jets are sampled on a kGridSide x kGridSide lattice with spacing kGridSpacing * sigma.
inline constexpr int kGridSide = 3;
inline constexpr double kGridSpacing = 3.0;
// Kernel support is ceil(kKernelRadius * sigma).
inline constexpr double kKernelRadius = 3.0;

inline constexpr int kPatchHalfWidth = 24;

// Variational alignment.
inline constexpr int kAlignLevels = 3;
inline constexpr int kAlignIters = 12;
inline constexpr double kAlignLambda = 0.5;
inline constexpr double kAlignUpdateSigma = 1.5;   // fluid-like smoothing of each increment
inline constexpr double kAlignMaxStep = 0.49;      // < 0.5 px per composition step
inline constexpr double kAlignMinGain = 1e-3;      // stop a level when relative gain drops below

// deformation score = exp(-alpha * div_score - beta * residual)
inline constexpr double kDeformAlpha = 4.0;
inline constexpr double kDeformBeta = 1.0;

// Iterated correspondence + RANSAC.
inline constexpr int kRansacIters = 200;
inline constexpr double kRansacInlierTolPx = 3.0;
inline constexpr int kRansacMinInliers = 3;
inline constexpr int kRansacOuterRounds = 5;

// Primed CNN.
inline constexpr int kCnnInputSide = 32;
inline constexpr int kCnnChannels = 8;

// Bagging: each bag draws ceil(kBagFraction * n) fiducials.
inline constexpr double kBagFraction = 2.0 / 3.0;

}  // namespace sloop::constants
