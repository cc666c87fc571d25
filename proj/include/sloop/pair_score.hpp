#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sloop/align.hpp"
#include "sloop/cnn.hpp"
#include "sloop/constants.hpp"
#include "sloop/features.hpp"
#include "sloop/ransac.hpp"

namespace sloop {

enum class Method { descriptor_cosine, ransac, deformation, primed_cnn };

const char* to_string(Method m);
Method method_from_string(const std::string& name);

// Cheap methods are pose/photometry invariant; the others need alignment.
bool is_expensive(Method m);

struct MatchScore {
  std::string query_id;
  std::string candidate_id;
  Method method = Method::descriptor_cosine;
  double raw = 0.0;
  double normalized = 0.0;
};

struct MatcherParams {
  AlignParams align;
  RansacParams ransac;
  double alpha = constants::kDeformAlpha;
  double beta = constants::kDeformBeta;
};

// Per-fiducial alignment results shared by the deformation and CNN matchers.
struct FiducialDeformation {
  int anchor = 0;
  DeformationField field;
  Divergence divergence;
  Grid error_map;  // post-alignment |a' - b'|
};

struct PairDeformation {
  std::vector<FiducialDeformation> per_fiducial;
  double mean_div_score = 0.0;
  double mean_residual = 0.0;
};

// Anchors present in both feature sets, ascending.
std::vector<int> common_anchors(const ImageFeatures& a, const ImageFeatures& b);

double descriptor_cosine(const ImageFeatures& a, const ImageFeatures& b);

PairDeformation align_pair(const ImageFeatures& a, const ImageFeatures& b, const AlignParams& params);

double deformation_score(const PairDeformation& d, double alpha, double beta);

// Mean CNN probability over fiducials.
double primed_cnn_score(const PrimedCnnModel& model, const PairDeformation& d);

// Raw score in [0,1] for one of the classical methods. primed_cnn needs a
// model and goes through primed_cnn_score.
double pair_score_classical(const ImageFeatures& a, const ImageFeatures& b, Method method,
                            const MatcherParams& params = {});

}  // namespace sloop
