#include "sloop/pair_score.hpp"

#include <algorithm>
#include <cmath>

#include "sloop/error.hpp"
#include "sloop/nbe.hpp"

namespace sloop {

const char* to_string(Method m) {
  switch (m) {
    case Method::descriptor_cosine: return "descriptor_cosine";
    case Method::ransac: return "ransac";
    case Method::deformation: return "deformation";
    case Method::primed_cnn: return "primed_cnn";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  for (Method m : {Method::descriptor_cosine, Method::ransac, Method::deformation, Method::primed_cnn}) {
    if (name == to_string(m)) return m;
  }
  throw validation_error("unknown matcher method '" + name + "'");
}

bool is_expensive(Method m) { return m == Method::deformation || m == Method::primed_cnn; }

namespace {

const Keypoint* find_keypoint(const FeatureSet& fs, int anchor) {
  for (const auto& kp : fs.keypoints) {
    if (kp.anchor == anchor) return &kp;
  }
  return nullptr;
}

const Patch* find_patch(const ImageFeatures& f, int anchor) {
  for (const auto& p : f.patches) {
    if (p.anchor == anchor) return &p;
  }
  return nullptr;
}

void require_features(const ImageFeatures& f) {
  if (f.features.keypoints.empty()) {
    throw validation_error("matcher: image has no features (workflow step out of order)");
  }
}

}  // namespace

std::vector<int> common_anchors(const ImageFeatures& a, const ImageFeatures& b) {
  std::vector<int> out;
  for (const auto& kp : a.features.keypoints) {
    if (find_keypoint(b.features, kp.anchor)) out.push_back(kp.anchor);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double descriptor_cosine(const ImageFeatures& a, const ImageFeatures& b) {
  require_features(a);
  require_features(b);
  const auto anchors = common_anchors(a, b);
  if (anchors.empty()) return 0.0;
  double total = 0.0;
  for (const int anchor : anchors) {
    const auto& da = find_keypoint(a.features, anchor)->descriptor;
    const auto& db = find_keypoint(b.features, anchor)->descriptor;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < da.size() && i < db.size(); ++i) {
      dot += da[i] * db[i];
      na += da[i] * da[i];
      nb += db[i] * db[i];
    }
    double c;
    if (na == 0.0 && nb == 0.0) {
      c = 1.0;
    } else if (na == 0.0 || nb == 0.0) {
      c = 0.0;
    } else {
      c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    }
    total += 0.5 * (1.0 + c);
  }
  return total / static_cast<double>(anchors.size());
}

PairDeformation align_pair(const ImageFeatures& a, const ImageFeatures& b, const AlignParams& params) {
  require_features(a);
  require_features(b);
  PairDeformation out;
  for (const int anchor : common_anchors(a, b)) {
    const Patch* pa = find_patch(a, anchor);
    const Patch* pb = find_patch(b, anchor);
    if (!pa || !pb) throw validation_error("matcher: patches missing (workflow step out of order)");
    FiducialDeformation fd;
    fd.anchor = anchor;
    fd.field = diffeo_align(pa->pixels, pb->pixels, params);
    fd.divergence = divergence(fd.field);
    fd.error_map = nbe(warp(pa->pixels, fd.field.u, fd.field.v), pb->pixels).error_map;
    out.mean_div_score += fd.divergence.div_score;
    out.mean_residual += fd.field.residual;
    out.per_fiducial.push_back(std::move(fd));
  }
  if (!out.per_fiducial.empty()) {
    out.mean_div_score /= static_cast<double>(out.per_fiducial.size());
    out.mean_residual /= static_cast<double>(out.per_fiducial.size());
  }
  return out;
}

double deformation_score(const PairDeformation& d, double alpha, double beta) {
  if (d.per_fiducial.empty()) return 0.0;
  return std::exp(-alpha * d.mean_div_score - beta * d.mean_residual);
}

double primed_cnn_score(const PrimedCnnModel& model, const PairDeformation& d) {
  if (d.per_fiducial.empty()) return 0.0;
  double total = 0.0;
  for (const auto& fd : d.per_fiducial) {
    total += primed_cnn_forward(model, make_cnn_input(fd.divergence.div_map, fd.error_map));
  }
  return total / static_cast<double>(d.per_fiducial.size());
}

double pair_score_classical(const ImageFeatures& a, const ImageFeatures& b, Method method,
                            const MatcherParams& params) {
  switch (method) {
    case Method::descriptor_cosine: return descriptor_cosine(a, b);
    case Method::ransac: {
      require_features(a);
      require_features(b);
      return ransac_match(a.features, b.features, params.ransac).score;
    }
    case Method::deformation:
      return deformation_score(align_pair(a, b, params.align), params.alpha, params.beta);
    case Method::primed_cnn: break;
  }
  throw validation_error("pair_score_classical: primed_cnn requires a model");
}

}  // namespace sloop
