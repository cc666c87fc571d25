#include <doctest.h>

#include "sloop/error.hpp"
#include "sloop/features.hpp"
#include "sloop/nbe.hpp"
#include "sloop/synthpop.hpp"
#include "test_helpers.hpp"

using namespace sloop;

namespace {

SyntheticSpec small_spec(int n = 6, int s = 2) {
  SyntheticSpec spec;
  spec.n_individuals = n;
  spec.sightings_per_individual = s;
  spec.seed = 31;
  return spec;
}

double mean_patch_nbe(const ImageFeatures& a, const ImageFeatures& b) {
  double total = 0;
  int n = 0;
  for (const auto& pa : a.patches) {
    for (const auto& pb : b.patches) {
      if (pa.anchor != pb.anchor) continue;
      total += nbe_value(pa.pixels, pb.pixels);
      ++n;
    }
  }
  return total / n;
}

}  // namespace

TEST_SUITE("synthpop") {
  TEST_CASE("same spec twice gives identical images") {
    const auto a = generate_population(small_spec());
    const auto b = generate_population(small_spec());
    REQUIRE(a.sightings.size() == 12);
    for (std::size_t i = 0; i < a.sightings.size(); ++i) {
      CHECK(a.sightings[i].image == b.sightings[i].image);
      CHECK(a.sightings[i].fiducials == b.sightings[i].fiducials);
    }
  }

  TEST_CASE("generation order does not matter") {
    const auto spec = small_spec();
    const auto pop = generate_population(spec);
    const auto one = generate_sighting(spec, 4, 1);
    CHECK(one.image == pop.find(sighting_id(4, 1)).image);
  }

  TEST_CASE("without perturbations the sightings of an individual are identical") {
    const auto spec = small_spec(3, 2).without_perturbations();
    const auto pop = generate_population(spec);
    for (int i = 0; i < 3; ++i) {
      CHECK(pop.find(sighting_id(i, 0)).image == pop.find(sighting_id(i, 1)).image);
    }
    CHECK_FALSE(pop.find(sighting_id(0, 0)).image == pop.find(sighting_id(1, 0)).image);
  }

  TEST_CASE("degenerate specs are rejected") {
    auto spec = small_spec();
    spec.n_individuals = 0;
    CHECK_THROWS_AS(generate_population(spec), Error);
    spec = small_spec();
    spec.scale_min = 1.2;
    spec.scale_max = 0.9;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec = small_spec();
    spec.noise_sigma_min = 0.1;
    spec.noise_sigma_max = 0.05;
    CHECK_THROWS_AS(spec.validate(), Error);
  }

  TEST_CASE("spec json round trip") {
    auto spec = small_spec();
    spec.glare_mean_count = 2.5;
    spec.ripple_amplitude_px = 1.0;
    const auto back = spec_from_json(to_json(spec));
    CHECK(to_json(back) == to_json(spec));
    auto j = to_json(spec);
    j["noise_sigma"] = 0.05;
    j.erase("noise_sigma_min");
    j.erase("noise_sigma_max");
    const auto scalar = spec_from_json(j);
    CHECK(scalar.noise_sigma_min == 0.05);
    CHECK(scalar.noise_sigma_max == 0.05);
  }

  TEST_CASE("fiducials stay inside the frame") {
    const auto pop = generate_population(small_spec(8, 3));
    for (const auto& s : pop.sightings) {
      for (const auto& f : s.fiducials) {
        CHECK(f.x >= 0);
        CHECK(f.y >= 0);
        CHECK(f.x < s.image.width);
        CHECK(f.y < s.image.height);
      }
    }
  }

  TEST_CASE("same-individual patches are closer than different-individual patches") {
    const auto pop = generate_population(small_spec(8, 2));
    std::vector<ImageFeatures> f;
    for (const auto& s : pop.sightings) f.push_back(extract_image_features(to_grid(s.image), s.fiducials));
    double same = 0, diff = 0;
    int ns = 0, nd = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (std::size_t j = i + 1; j < f.size(); ++j) {
        const double v = mean_patch_nbe(f[i], f[j]);
        if (pop.sightings[i].individual == pop.sightings[j].individual) {
          same += v;
          ++ns;
        } else {
          diff += v;
          ++nd;
        }
      }
    }
    CHECK(same / ns < diff / nd);
  }

  TEST_CASE("written dataset reads back and hashes stably") {
    test::TempDir a("pop-a"), b("pop-b");
    const auto pop = generate_population(small_spec(3, 2));
    write_population(pop, a.path());
    write_population(generate_population(small_spec(3, 2)), b.path());
    CHECK(std::filesystem::exists(a.path() / "individual_0" / "sighting_1.pgm"));
    CHECK(directory_digest(a.path()) == directory_digest(b.path()));
    const auto back = read_population(a.path());
    REQUIRE(back.sightings.size() == pop.sightings.size());
    for (std::size_t i = 0; i < pop.sightings.size(); ++i) {
      CHECK(back.sightings[i].image == pop.sightings[i].image);
      CHECK(back.sightings[i].individual == pop.sightings[i].individual);
    }
  }
}
