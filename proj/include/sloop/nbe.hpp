#pragma once

#include "sloop/grid.hpp"

namespace sloop {

struct NbeResult {
  double value = 0.0;  // in [0, 4]
  Grid error_map;      // per-pixel |a' - b'|
};

// Zero-mean, unit-variance copy; constant input gives all zeros.
Grid standardize(const Grid& g);

// Normalized brightness error of two equally shaped patches.
NbeResult nbe(const Grid& a, const Grid& b);

double nbe_value(const Grid& a, const Grid& b);

}  // namespace sloop
