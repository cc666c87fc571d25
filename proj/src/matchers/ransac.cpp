#include "sloop/ransac.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "sloop/rng.hpp"

namespace sloop {

namespace {

double descriptor_distance2(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

// One candidate per b: when several a's pick the same b, the closest
// descriptor wins. Output sorted by a.
std::vector<Correspondence> match_descriptors(const FeatureSet& fa, const FeatureSet& fb,
                                              const std::optional<Affine>& gate, double gate_px) {
  const auto& ka = fa.keypoints;
  const auto& kb = fb.keypoints;
  std::vector<int> best_for_b(kb.size(), -1);
  std::vector<double> best_dist_b(kb.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < ka.size(); ++i) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    const Point2 predicted = gate ? apply(*gate, ka[i].position) : Point2{};
    for (std::size_t j = 0; j < kb.size(); ++j) {
      if (gate) {
        const double dx = kb[j].position.x - predicted.x;
        const double dy = kb[j].position.y - predicted.y;
        if (dx * dx + dy * dy > gate_px * gate_px) continue;
      }
      const double d = descriptor_distance2(ka[i].descriptor, kb[j].descriptor);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && best_d < best_dist_b[best]) {
      best_dist_b[best] = best_d;
      best_for_b[best] = static_cast<int>(i);
    }
  }
  std::vector<Correspondence> out;
  for (std::size_t j = 0; j < kb.size(); ++j) {
    if (best_for_b[j] >= 0) out.push_back({best_for_b[j], static_cast<int>(j)});
  }
  std::sort(out.begin(), out.end(), [](const Correspondence& x, const Correspondence& y) { return x.a < y.a; });
  return out;
}

std::vector<Correspondence> inliers_of(const Affine& m, const FeatureSet& fa, const FeatureSet& fb,
                                       const std::vector<Correspondence>& corr, double tol) {
  std::vector<Correspondence> in;
  for (const auto& c : corr) {
    const Point2 p = apply(m, fa.keypoints[c.a].position);
    const Point2& q = fb.keypoints[c.b].position;
    if (std::hypot(p.x - q.x, p.y - q.y) <= tol) in.push_back(c);
  }
  return in;
}

std::optional<Affine> refit(const FeatureSet& fa, const FeatureSet& fb, const std::vector<Correspondence>& set) {
  std::vector<Point2> from, to;
  for (const auto& c : set) {
    from.push_back(fa.keypoints[c.a].position);
    to.push_back(fb.keypoints[c.b].position);
  }
  return fit_affine(from, to);
}

struct Consensus {
  std::optional<Affine> model;
  std::vector<Correspondence> inliers;
};

Consensus ransac_affine(const FeatureSet& fa, const FeatureSet& fb, const std::vector<Correspondence>& corr,
                        const RansacParams& params, Rng& rng) {
  Consensus best;
  const std::size_t n = corr.size();
  if (n < 3) return best;
  for (int it = 0; it < params.iters; ++it) {
    const auto pick = rng.sample_indices(n, 3);
    std::vector<Correspondence> sample{corr[pick[0]], corr[pick[1]], corr[pick[2]]};
    const auto m = refit(fa, fb, sample);
    if (!m) continue;
    auto in = inliers_of(*m, fa, fb, corr, params.inlier_tol_px);
    if (in.size() > best.inliers.size()) {
      best.model = m;
      best.inliers = std::move(in);
    }
  }
  if (best.model && best.inliers.size() >= 3) {
    // Least-squares polish; keep it only if consensus does not shrink.
    if (auto m = refit(fa, fb, best.inliers)) {
      auto in = inliers_of(*m, fa, fb, corr, params.inlier_tol_px);
      if (in.size() >= best.inliers.size()) {
        best.model = m;
        best.inliers = std::move(in);
      }
    }
  }
  return best;
}

bool same_set(const std::vector<Correspondence>& x, const std::vector<Correspondence>& y) {
  return std::equal(x.begin(), x.end(), y.begin(), y.end(),
                    [](const Correspondence& p, const Correspondence& q) { return p.a == q.a && p.b == q.b; });
}

}  // namespace

Point2 apply(const Affine& m, const Point2& p) {
  return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
}

std::optional<Affine> fit_affine(std::span<const Point2> from, std::span<const Point2> to) {
  const std::size_t n = from.size();
  if (n < 3 || to.size() != n) return std::nullopt;
  Eigen::MatrixXd A(n, 3);
  Eigen::MatrixXd B(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = from[i].x;
    A(i, 1) = from[i].y;
    A(i, 2) = 1.0;
    B(i, 0) = to[i].x;
    B(i, 1) = to[i].y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-9);
  if (qr.rank() < 3) return std::nullopt;
  const Eigen::MatrixXd X = qr.solve(B);
  return Affine{X(0, 0), X(1, 0), X(2, 0), X(0, 1), X(1, 1), X(2, 1)};
}

RansacResult ransac_match(const FeatureSet& a, const FeatureSet& b, const RansacParams& params) {
  RansacResult result;
  const std::size_t min_n = std::min(a.keypoints.size(), b.keypoints.size());
  if (min_n == 0) return result;
  Rng rng(params.seed);

  std::optional<Affine> gate;
  std::vector<Correspondence> current;
  // Gated matching searches a wider window than the inlier test.
  const double gate_px = 2.0 * params.inlier_tol_px;
  for (int round = 0; round < params.outer_rounds; ++round) {
    const auto corr = match_descriptors(a, b, gate, gate_px);
    if (corr.size() < 3) break;
    auto consensus = ransac_affine(a, b, corr, params, rng);
    result.rounds = round + 1;
    if (!consensus.model) break;
    const bool fixed = same_set(consensus.inliers, current);
    // A later round only replaces the estimate when it does not lose support.
    if (!current.empty() && consensus.inliers.size() < current.size()) break;
    current = std::move(consensus.inliers);
    gate = consensus.model;
    result.transform = consensus.model;
    if (fixed) break;
  }
  result.inliers = current;
  result.inlier_count = static_cast<int>(current.size());
  if (result.inlier_count < 3) {
    result.transform.reset();
    result.inlier_count = 0;
    result.inliers.clear();
  } else if (result.inlier_count < params.min_inliers) {
    result.transform.reset();
  }
  result.score = static_cast<double>(result.inlier_count) / static_cast<double>(min_n);
  return result;
}

}  // namespace sloop
