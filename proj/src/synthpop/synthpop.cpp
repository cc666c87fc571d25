#include "sloop/synthpop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sloop/checksum.hpp"
#include "sloop/error.hpp"
#include "sloop/rng.hpp"

namespace sloop {

namespace {

struct Blob {
  double x, y, sigma, amplitude;
};

struct BodyTemplate {
  double cx, cy, ax, ay;
};

BodyTemplate body_of(const SyntheticSpec& s) {
  return {s.width / 2.0, s.height / 2.0, 0.40 * s.width, 0.31 * s.height};
}

constexpr double kBodyLevel = 0.5;
constexpr double kBackgroundLevel = 0.15;

std::vector<Blob> individual_pattern(const SyntheticSpec& s, int individual) {
  Rng rng(derive_seed(s.seed, 1, static_cast<std::uint64_t>(individual)));
  const auto body = body_of(s);
  std::vector<Blob> blobs;
  blobs.reserve(s.blob_count);
  while (static_cast<int>(blobs.size()) < s.blob_count) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    if (x * x + y * y > 0.92) continue;
    Blob b;
    b.x = body.cx + x * body.ax;
    b.y = body.cy + y * body.ay;
    b.sigma = rng.uniform(s.blob_sigma_min, s.blob_sigma_max);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    b.amplitude = sign * rng.uniform(s.blob_amplitude_min, s.blob_amplitude_max);
    blobs.push_back(b);
  }
  return blobs;
}

// Soft elliptical body mask in [0,1].
double body_mask(const BodyTemplate& b, double x, double y) {
  const double dx = (x - b.cx) / b.ax;
  const double dy = (y - b.cy) / b.ay;
  const double r = std::sqrt(dx * dx + dy * dy);
  // ~2 px transition at the rim.
  const double t = std::clamp((1.0 - r) * std::min(b.ax, b.ay) / 2.0 + 0.5, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double pattern_value(const BodyTemplate& body, const std::vector<Blob>& blobs, double x, double y) {
  const double m = body_mask(body, x, y);
  if (m <= 0.0) return kBackgroundLevel;
  double v = kBodyLevel;
  for (const auto& b : blobs) {
    const double dx = x - b.x, dy = y - b.y;
    const double r2 = dx * dx + dy * dy;
    const double lim = 16.0 * b.sigma * b.sigma;
    if (r2 < lim) v += b.amplitude * std::exp(-0.5 * r2 / (b.sigma * b.sigma));
  }
  v = std::clamp(v, 0.0, 1.0);
  return kBackgroundLevel + m * (v - kBackgroundLevel);
}

struct SightingTransform {
  // Template -> image: p = c + s R (q - c) + t.
  double cos_t = 1, sin_t = 0, scale = 1, tx = 0, ty = 0;
  // Smooth warp in template coordinates: two sinusoids per axis.
  std::array<double, 4> fx{}, fy{}, phase{};
  double amplitude = 0;
  // Ripple: one plane wave per axis.
  std::array<double, 2> rdir{}, rphase{};
  double ripple = 0;
  double gain = 1, bias = 0;
  double noise = 0;
  struct Glare {
    double x, y, r;
  };
  std::vector<Glare> glare;

  Point2 warp_offset(const SyntheticSpec& s, double x, double y) const {
    Point2 out{0.0, 0.0};
    if (amplitude != 0.0) {
      auto wave = [&](int k) {
        return std::sin(2.0 * std::numbers::pi * (fx[k] * x / s.width + fy[k] * y / s.height) + phase[k]);
      };
      out = {amplitude * 0.5 * (wave(0) + wave(1)), amplitude * 0.5 * (wave(2) + wave(3))};
    }
    if (ripple != 0.0) {
      auto wave = [&](int k) {
        const double d = x * std::cos(rdir[k]) + y * std::sin(rdir[k]);
        return std::sin(2.0 * std::numbers::pi * d / s.ripple_wavelength_px + rphase[k]);
      };
      out.x += ripple * wave(0);
      out.y += ripple * wave(1);
    }
    return out;
  }
};

SightingTransform draw_transform(const SyntheticSpec& s, Rng& rng) {
  SightingTransform t;
  const double theta = rng.uniform(-s.max_rotation_deg, s.max_rotation_deg) * std::numbers::pi / 180.0;
  t.cos_t = std::cos(theta);
  t.sin_t = std::sin(theta);
  t.scale = rng.uniform(s.scale_min, s.scale_max);
  t.tx = rng.uniform(-s.max_translation_px, s.max_translation_px);
  t.ty = rng.uniform(-s.max_translation_px, s.max_translation_px);
  for (int k = 0; k < 4; ++k) {
    t.fx[k] = rng.uniform(0.5, 2.0);
    t.fy[k] = rng.uniform(0.5, 2.0);
    t.phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  t.amplitude = s.warp_amplitude_px;
  for (int k = 0; k < 2; ++k) {
    t.rdir[k] = rng.uniform(0.0, std::numbers::pi);
    t.rphase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  t.ripple = s.ripple_amplitude_px;
  t.gain = rng.uniform(s.gain_min, s.gain_max);
  t.bias = rng.uniform(s.bias_min, s.bias_max);
  t.noise = rng.uniform(s.noise_sigma_min, s.noise_sigma_max);
  if (s.glare_mean_count > 0.0) {
    // Poisson by inversion.
    const double limit = std::exp(-s.glare_mean_count);
    int count = 0;
    for (double prod = rng.uniform(); prod > limit; prod *= rng.uniform()) ++count;
    for (int g = 0; g < count; ++g) {
      t.glare.push_back({rng.uniform(0.0, s.width), rng.uniform(0.0, s.height),
                         rng.uniform(s.glare_radius_min_px, s.glare_radius_max_px)});
    }
  }
  return t;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo <= hi)) throw validation_error(std::string("synthetic spec: inverted range for ") + what);
  };
  if (n_individuals < 1) throw validation_error("synthetic spec: need at least one individual");
  if (sightings_per_individual < 1) throw validation_error("synthetic spec: need at least one sighting");
  if (width < 64 || height < 64) throw validation_error("synthetic spec: image too small");
  if (blob_count < 0) throw validation_error("synthetic spec: negative blob count");
  if (ripple_wavelength_px <= 0) throw validation_error("synthetic spec: ripple wavelength must be positive");
  range(blob_sigma_min, blob_sigma_max, "blob sigma");
  if (blob_sigma_min <= 0) throw validation_error("synthetic spec: blob sigma must be positive");
  range(blob_amplitude_min, blob_amplitude_max, "blob amplitude");
  range(scale_min, scale_max, "scale");
  if (scale_min <= 0) throw validation_error("synthetic spec: scale must be positive");
  range(gain_min, gain_max, "gain");
  range(noise_sigma_min, noise_sigma_max, "noise sigma");
  range(glare_radius_min_px, glare_radius_max_px, "glare radius");
  range(bias_min, bias_max, "bias");
  if (max_rotation_deg < 0 || max_translation_px < 0 || warp_amplitude_px < 0 || noise_sigma_min < 0 ||
      ripple_amplitude_px < 0 ||
      fiducial_jitter_px < 0 || glare_mean_count < 0) {
    throw validation_error("synthetic spec: negative perturbation magnitude");
  }
}

SyntheticSpec SyntheticSpec::without_perturbations() const {
  SyntheticSpec s = *this;
  s.max_rotation_deg = 0;
  s.scale_min = s.scale_max = 1;
  s.max_translation_px = 0;
  s.warp_amplitude_px = 0;
  s.ripple_amplitude_px = 0;
  s.gain_min = s.gain_max = 1;
  s.bias_min = s.bias_max = 0;
  s.noise_sigma_min = s.noise_sigma_max = 0;
  s.fiducial_jitter_px = 0;
  s.glare_mean_count = 0;
  return s;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {
      {"n_individuals", s.n_individuals},
      {"sightings_per_individual", s.sightings_per_individual},
      {"seed", s.seed},
      {"width", s.width},
      {"height", s.height},
      {"blob_count", s.blob_count},
      {"blob_sigma", {s.blob_sigma_min, s.blob_sigma_max}},
      {"blob_amplitude", {s.blob_amplitude_min, s.blob_amplitude_max}},
      {"max_rotation_deg", s.max_rotation_deg},
      {"scale", {s.scale_min, s.scale_max}},
      {"max_translation_px", s.max_translation_px},
      {"warp_amplitude_px", s.warp_amplitude_px},
      {"ripple_amplitude_px", s.ripple_amplitude_px},
      {"ripple_wavelength_px", s.ripple_wavelength_px},
      {"gain", {s.gain_min, s.gain_max}},
      {"bias", {s.bias_min, s.bias_max}},
      {"noise_sigma", {s.noise_sigma_min, s.noise_sigma_max}},
      {"fiducial_jitter_px", s.fiducial_jitter_px},
      {"glare_mean_count", s.glare_mean_count},
      {"glare_radius_px", {s.glare_radius_min_px, s.glare_radius_max_px}},
  };
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  auto pair = [&](const char* key, double& lo, double& hi) {
    if (j.contains(key)) {
      lo = j.at(key).at(0).get<double>();
      hi = j.at(key).at(1).get<double>();
    }
  };
  s.n_individuals = j.value("n_individuals", s.n_individuals);
  s.sightings_per_individual = j.value("sightings_per_individual", s.sightings_per_individual);
  s.seed = j.value("seed", s.seed);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.blob_count = j.value("blob_count", s.blob_count);
  pair("blob_sigma", s.blob_sigma_min, s.blob_sigma_max);
  pair("blob_amplitude", s.blob_amplitude_min, s.blob_amplitude_max);
  s.max_rotation_deg = j.value("max_rotation_deg", s.max_rotation_deg);
  pair("scale", s.scale_min, s.scale_max);
  s.max_translation_px = j.value("max_translation_px", s.max_translation_px);
  s.warp_amplitude_px = j.value("warp_amplitude_px", s.warp_amplitude_px);
  s.ripple_amplitude_px = j.value("ripple_amplitude_px", s.ripple_amplitude_px);
  s.ripple_wavelength_px = j.value("ripple_wavelength_px", s.ripple_wavelength_px);
  pair("gain", s.gain_min, s.gain_max);
  pair("bias", s.bias_min, s.bias_max);
  if (j.contains("noise_sigma") && j.at("noise_sigma").is_number()) {
    s.noise_sigma_min = s.noise_sigma_max = j.at("noise_sigma").get<double>();
  } else {
    pair("noise_sigma", s.noise_sigma_min, s.noise_sigma_max);
  }
  s.fiducial_jitter_px = j.value("fiducial_jitter_px", s.fiducial_jitter_px);
  s.glare_mean_count = j.value("glare_mean_count", s.glare_mean_count);
  pair("glare_radius_px", s.glare_radius_min_px, s.glare_radius_max_px);
  s.validate();
  return s;
}

const Sighting& Population::find(const std::string& image_id) const {
  for (const auto& s : sightings) {
    if (s.image_id == image_id) return s;
  }
  throw not_found("no sighting " + image_id);
}

std::string sighting_id(int individual, int sighting) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ind%04d_s%02d", individual, sighting);
  return buf;
}

std::vector<Point2> template_landmarks(const SyntheticSpec& s) {
  const auto b = body_of(s);
  const double dx = 0.55 * b.ax;
  const double dy = 0.45 * b.ay;
  return {
      {b.cx - dx, b.cy},
      {b.cx, b.cy - dy},
      {b.cx, b.cy + dy},
      {b.cx + dx, b.cy},
      {b.cx, b.cy},
  };
}

Sighting generate_sighting(const SyntheticSpec& spec, int individual, int sighting) {
  const auto body = body_of(spec);
  const auto blobs = individual_pattern(spec, individual);
  Rng rng(derive_seed(spec.seed, 2, static_cast<std::uint64_t>(individual) * 4096 + sighting));
  const SightingTransform t = draw_transform(spec, rng);

  Sighting out;
  out.image_id = sighting_id(individual, sighting);
  out.individual = individual;
  out.sighting = sighting;

  Grid img(spec.height, spec.width);
  const double inv_s = 1.0 / t.scale;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      // Image -> template: q = c + R^T (p - c - t) / s, then the nonrigid offset.
      const double px = x - body.cx - t.tx;
      const double py = y - body.cy - t.ty;
      const double qx = body.cx + inv_s * (t.cos_t * px + t.sin_t * py);
      const double qy = body.cy + inv_s * (-t.sin_t * px + t.cos_t * py);
      const Point2 w = t.warp_offset(spec, qx, qy);
      const double v = pattern_value(body, blobs, qx + w.x, qy + w.y);
      img(y, x) = t.gain * v + t.bias;
    }
  }
  for (const auto& g : t.glare) {
    const int x0 = std::max(0, static_cast<int>(g.x - 2 * g.r)), x1 = std::min(spec.width - 1, static_cast<int>(g.x + 2 * g.r));
    const int y0 = std::max(0, static_cast<int>(g.y - 2 * g.r)), y1 = std::min(spec.height - 1, static_cast<int>(g.y + 2 * g.r));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x - g.x, y - g.y) / g.r;
        const double m = std::clamp(1.5 - d, 0.0, 1.0);  // flat core, soft rim
        img(y, x) += m * (0.98 - img(y, x));
      }
    }
  }
  if (t.noise > 0.0) {
    for (double& v : img.values()) v += rng.normal(0.0, t.noise);
  }
  out.image = quantize(img);

  for (const auto& l : template_landmarks(spec)) {
    // Approximate inverse of the nonrigid offset, then the affine.
    const Point2 w = t.warp_offset(spec, l.x, l.y);
    const double qx = l.x - w.x - body.cx;
    const double qy = l.y - w.y - body.cy;
    Point2 f{body.cx + t.scale * (t.cos_t * qx - t.sin_t * qy) + t.tx,
             body.cy + t.scale * (t.sin_t * qx + t.cos_t * qy) + t.ty};
    if (spec.fiducial_jitter_px > 0.0) {
      f.x += rng.normal(0.0, spec.fiducial_jitter_px);
      f.y += rng.normal(0.0, spec.fiducial_jitter_px);
    }
    out.fiducials.push_back(f);
  }
  return out;
}

Population generate_population(const SyntheticSpec& spec) {
  spec.validate();
  Population pop;
  pop.spec = spec;
  for (int i = 0; i < spec.n_individuals; ++i) {
    for (int j = 0; j < spec.sightings_per_individual; ++j) pop.sightings.push_back(generate_sighting(spec, i, j));
  }
  return pop;
}

void write_population(const Population& pop, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["spec"] = to_json(pop.spec);
  manifest["images"] = nlohmann::json::array();
  for (const auto& s : pop.sightings) {
    const auto rel = std::filesystem::path("individual_" + std::to_string(s.individual)) /
                     ("sighting_" + std::to_string(s.sighting) + ".pgm");
    write_pgm(dir / rel, s.image);
    nlohmann::json fids = nlohmann::json::array();
    for (const auto& f : s.fiducials) fids.push_back({f.x, f.y});
    manifest["images"].push_back({{"image_id", s.image_id},
                                  {"individual", s.individual},
                                  {"sighting", s.sighting},
                                  {"path", rel.generic_string()},
                                  {"fiducials", fids}});
  }
  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Population read_population(const std::filesystem::path& dir) {
  const auto bytes = read_file(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
  Population pop;
  pop.spec = spec_from_json(manifest.at("spec"));
  for (const auto& e : manifest.at("images")) {
    Sighting s;
    s.image_id = e.at("image_id").get<std::string>();
    s.individual = e.at("individual").get<int>();
    s.sighting = e.at("sighting").get<int>();
    s.image = read_image(dir / e.at("path").get<std::string>());
    for (const auto& f : e.at("fiducials")) s.fiducials.push_back({f.at(0).get<double>(), f.at(1).get<double>()});
    pop.sightings.push_back(std::move(s));
  }
  return pop;
}

std::string directory_digest(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::string blob;
  for (const auto& f : files) {
    const auto bytes = read_file(dir / f);
    blob += f.generic_string() + '\n' + sha256_hex(bytes) + '\n';
  }
  return sha256_hex(blob);
}

}  // namespace sloop
