#pragma once

#include "sloop/constants.hpp"
#include "sloop/grid.hpp"

namespace sloop {

// Dense displacement field. Warping convention: warp(a, f)(p) = a(p - f(p)),
// so a field of (2, 0) moves content 2 px to the right.
struct DeformationField {
  Grid u;
  Grid v;
  double residual = 0.0;  // nbe(warp(a, field), b)
  double initial_residual = 0.0;
  bool converged = true;
  double max_step = 0.0;  // largest per-pixel increment applied (px)
};

struct AlignParams {
  int levels = constants::kAlignLevels;
  int iters = constants::kAlignIters;
  double lambda = constants::kAlignLambda;
};

Grid warp(const Grid& image, const Grid& u, const Grid& v);

// Coarse-to-fine variational alignment of a onto b with clipped,
// composed increments. Never returns a field whose residual exceeds
// nbe(a, b).
DeformationField diffeo_align(const Grid& a, const Grid& b, const AlignParams& params = {});

struct Divergence {
  Grid div_map;
  double div_score = 0.0;  // mean |div| over interior pixels
};

// du/dx + dv/dy, central differences inside, one-sided at the borders.
Divergence divergence(const Grid& u, const Grid& v);
Divergence divergence(const DeformationField& field);

}  // namespace sloop
