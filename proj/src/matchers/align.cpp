#include "sloop/align.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sloop/error.hpp"
#include "sloop/nbe.hpp"

namespace sloop {

namespace {

// Fine-grid field from a field one pyramid level coarser.
void upsample_field(const Grid& cu, const Grid& cv, int h, int w, Grid& u, Grid& v) {
  u = Grid(h, w);
  v = Grid(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      u(y, x) = 2.0 * cu.sample(0.5 * y, 0.5 * x);
      v(y, x) = 2.0 * cv.sample(0.5 * y, 0.5 * x);
    }
  }
}

struct LevelState {
  Grid u, v;
  Grid warped;  // a warped by (u, v)
  double residual = 0.0;
  double max_step = 0.0;
};

// nbe(warped, b) for an already standardized b, without temporaries.
double residual_against(const Grid& warped, const Grid& b_std) {
  const auto w = warped.values();
  const auto b = b_std.values();
  const double n = static_cast<double>(w.size());
  double m = 0.0;
  for (const double v : w) m += v;
  m /= n;
  double var = 0.0;
  for (const double v : w) var += (v - m) * (v - m);
  var /= n;
  const double inv = var <= 1e-24 ? 0.0 : 1.0 / std::sqrt(var);
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = (w[i] - m) * inv - b[i];
    sum += d * d;
  }
  return sum / n;
}

// One incremental update: demons-style force, fluid smoothing, per-pixel
// clip to < 0.5 px, composition. Returns false when no descent step exists.
bool refine_once(const Grid& a, const Grid& b, const AlignParams& params,
                 const std::vector<double>& update_kernel, LevelState& state) {
  const int h = a.height(), w = a.width();
  const Grid& aw = state.warped;
  Grid du(h, w), dv(h, w);
  for (int y = 0; y < h; ++y) {
    const int ym = y > 0 ? y - 1 : 0, yp = y + 1 < h ? y + 1 : h - 1;
    for (int x = 0; x < w; ++x) {
      const int xm = x > 0 ? x - 1 : 0, xp = x + 1 < w ? x + 1 : w - 1;
      const double gx = 0.5 * (aw(y, xp) - aw(y, xm));
      const double gy = 0.5 * (aw(yp, x) - aw(ym, x));
      const double diff = aw(y, x) - b(y, x);
      const double denom = gx * gx + gy * gy + params.lambda;
      du(y, x) = diff * gx / denom;
      dv(y, x) = diff * gy / denom;
    }
  }
  du = convolve_separable(du, update_kernel, update_kernel);
  dv = convolve_separable(dv, update_kernel, update_kernel);
  double max_step = 0.0;
  for (std::size_t i = 0; i < du.size(); ++i) {
    double& sx = du.values()[i];
    double& sy = dv.values()[i];
    const double mag = std::hypot(sx, sy);
    if (mag > constants::kAlignMaxStep) {
      sx *= constants::kAlignMaxStep / mag;
      sy *= constants::kAlignMaxStep / mag;
    }
    max_step = std::max(max_step, std::min(mag, constants::kAlignMaxStep));
  }

  for (double scale : {1.0, 0.5, 0.25}) {
    // new(p) = d(p) + old(p - d(p))
    Grid nu(h, w), nv(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double sx = scale * du(y, x);
        const double sy = scale * dv(y, x);
        nu(y, x) = sx + state.u.sample(y - sy, x - sx);
        nv(y, x) = sy + state.v.sample(y - sy, x - sx);
      }
    }
    Grid trial = warp(a, nu, nv);
    const double r = residual_against(trial, b);
    if (r < state.residual) {
      state.u = std::move(nu);
      state.v = std::move(nv);
      state.warped = std::move(trial);
      state.residual = r;
      state.max_step = std::max(state.max_step, scale * max_step);
      return true;
    }
  }
  return false;
}

}  // namespace

Grid warp(const Grid& image, const Grid& u, const Grid& v) {
  if (!image.same_shape(u) || !image.same_shape(v)) throw validation_error("warp: field shape mismatch");
  Grid out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) out(y, x) = image.sample(y - v(y, x), x - u(y, x));
  }
  return out;
}

DeformationField diffeo_align(const Grid& a, const Grid& b, const AlignParams& params) {
  if (!a.same_shape(b)) throw validation_error("diffeo_align: patch dimensions differ");
  if (params.levels < 1 || params.iters < 1 || params.lambda <= 0.0) {
    throw validation_error("diffeo_align: parameters must be positive");
  }
  const Grid sa = standardize(a);
  const Grid sb = standardize(b);

  std::vector<Grid> pa{sa}, pb{sb};
  for (int l = 1; l < params.levels; ++l) {
    if (pa.back().height() < 8 || pa.back().width() < 8) break;
    pa.push_back(downsample(pa.back()));
    pb.push_back(standardize(downsample(pb.back())));
  }

  const auto update_kernel = gaussian_kernel(constants::kAlignUpdateSigma);

  DeformationField result;
  result.initial_residual = nbe_value(a, b);

  LevelState state;
  double max_step = 0.0;
  for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
    const Grid& la = pa[l];
    const Grid& lb = pb[l];
    if (state.u.empty()) {
      state.u = Grid(la.height(), la.width());
      state.v = Grid(la.height(), la.width());
    } else {
      Grid u, v;
      upsample_field(state.u, state.v, la.height(), la.width(), u, v);
      state.u = std::move(u);
      state.v = std::move(v);
    }
    state.warped = warp(la, state.u, state.v);
    state.residual = residual_against(state.warped, lb);
    if (l == 0 && state.residual > result.initial_residual) {
      state.u = Grid(la.height(), la.width());
      state.v = Grid(la.height(), la.width());
      state.warped = la;
      state.residual = result.initial_residual;
    }
    state.max_step = 0.0;
    for (int it = 0; it < params.iters; ++it) {
      const double before = state.residual;
      if (!refine_once(la, lb, params, update_kernel, state)) break;
      if (before - state.residual < constants::kAlignMinGain * before) break;
    }
    max_step = std::max(max_step, state.max_step);
  }

  result.u = std::move(state.u);
  result.v = std::move(state.v);
  result.residual = nbe_value(warp(a, result.u, result.v), b);
  if (result.residual > result.initial_residual) {
    // Guard: fall back to the identity field.
    result.u = Grid(a.height(), a.width());
    result.v = Grid(a.height(), a.width());
    result.residual = result.initial_residual;
  }
  result.max_step = max_step;
  result.converged = result.residual < result.initial_residual || result.initial_residual <= 1e-12;
  return result;
}

Divergence divergence(const Grid& u, const Grid& v) {
  if (!u.same_shape(v)) throw validation_error("divergence: u and v shapes differ");
  const int h = u.height(), w = u.width();
  if (h < 3 || w < 3) throw validation_error("divergence: field too small (needs interior pixels)");
  Divergence d;
  d.div_map = Grid(h, w);
  auto ddx = [&](int y, int x) {
    if (x == 0) return u(y, 1) - u(y, 0);
    if (x == w - 1) return u(y, w - 1) - u(y, w - 2);
    return 0.5 * (u(y, x + 1) - u(y, x - 1));
  };
  auto ddy = [&](int y, int x) {
    if (y == 0) return v(1, x) - v(0, x);
    if (y == h - 1) return v(h - 1, x) - v(h - 2, x);
    return 0.5 * (v(y + 1, x) - v(y - 1, x));
  };
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      d.div_map(y, x) = ddx(y, x) + ddy(y, x);
      if (y > 0 && y < h - 1 && x > 0 && x < w - 1) sum += std::abs(d.div_map(y, x));
    }
  }
  d.div_score = sum / static_cast<double>((h - 2) * (w - 2));
  return d;
}

Divergence divergence(const DeformationField& field) { return divergence(field.u, field.v); }

}  // namespace sloop
