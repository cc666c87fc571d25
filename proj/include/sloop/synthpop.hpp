#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/features.hpp"
#include "sloop/image_io.hpp"

namespace sloop {

struct SyntheticSpec {
  int n_individuals = 64;
  int sightings_per_individual = 4;
  std::uint64_t seed = 7;

  int width = 176;
  int height = 128;

  // Identity pattern: K Gaussian blobs scattered over the body.
  int blob_count = 40;
  double blob_sigma_min = 2.0;
  double blob_sigma_max = 4.5;
  double blob_amplitude_min = 0.2;
  double blob_amplitude_max = 0.4;

  // Per-sighting perturbations.
  double max_rotation_deg = 6.0;
  double scale_min = 0.96;
  double scale_max = 1.04;
  double max_translation_px = 3.0;
  double warp_amplitude_px = 1.5;
  // Short-wavelength nonrigid component (skin folds, posture).
  double ripple_amplitude_px = 0.0;
  double ripple_wavelength_px = 24.0;
  double gain_min = 0.85;
  double gain_max = 1.15;
  double bias_min = -0.08;
  double bias_max = 0.08;
  // Per-sighting sensor noise sd, drawn uniformly from this range.
  double noise_sigma_min = 0.02;
  double noise_sigma_max = 0.02;
  // Specular highlights: Poisson count per sighting, saturating discs.
  double glare_mean_count = 0.0;
  double glare_radius_min_px = 4.0;
  double glare_radius_max_px = 9.0;
  // Landmark placement error (Gaussian sd, px) on the reported fiducials.
  double fiducial_jitter_px = 4.0;

  // Throws validation_error on degenerate or inverted ranges.
  void validate() const;

  // All perturbations switched off.
  SyntheticSpec without_perturbations() const;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

struct Sighting {
  std::string image_id;
  int individual = 0;
  int sighting = 0;
  GrayImage image;
  std::vector<Point2> fiducials;
};

struct Population {
  SyntheticSpec spec;
  std::vector<Sighting> sightings;

  const Sighting& find(const std::string& image_id) const;
};

std::string sighting_id(int individual, int sighting);

// Landmarks on the common body template, in template pixel coordinates.
std::vector<Point2> template_landmarks(const SyntheticSpec& spec);

// Deterministic in the spec: every image derives its own seed, so the
// generation order does not matter.
Population generate_population(const SyntheticSpec& spec);

Sighting generate_sighting(const SyntheticSpec& spec, int individual, int sighting);

// dataset_dir/individual_{i}/sighting_{j}.pgm plus manifest.json.
void write_population(const Population& pop, const std::filesystem::path& dir);
Population read_population(const std::filesystem::path& dir);

// SHA-256 over the manifest and every image file, in sorted path order.
std::string directory_digest(const std::filesystem::path& dir);

}  // namespace sloop
