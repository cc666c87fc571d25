#include <doctest.h>

#include <cmath>

#include "sloop/align.hpp"
#include "sloop/cnn.hpp"
#include "sloop/error.hpp"
#include "sloop/features.hpp"
#include "sloop/nbe.hpp"
#include "sloop/pair_score.hpp"
#include "sloop/ransac.hpp"
#include "sloop/rng.hpp"
#include "sloop/synthpop.hpp"

using namespace sloop;

namespace {

Grid random_image(int h, int w, std::uint64_t seed, double blur = 2.0) {
  Rng rng(seed);
  Grid g(h, w);
  for (double& v : g.values()) v = rng.uniform();
  return gaussian_blur(g, blur);
}

// Direct 2-D sum with an independently built kernel; normalised the same way
// (sampled Gaussian over [-r, r] with unit sum, second derivative with its
// DC response removed).
std::array<double, 6> brute_jet(const Grid& img, int x, int y, double s) {
  const int r = static_cast<int>(std::ceil(3.0 * s));
  double z = 0;
  for (int i = -r; i <= r; ++i) z += std::exp(-0.5 * i * i / (s * s));
  auto g = [&](int i) { return std::exp(-0.5 * i * i / (s * s)) / z; };
  double dc = 0;
  for (int i = -r; i <= r; ++i) dc += (i * i / std::pow(s, 4) - 1 / (s * s)) * g(i);
  auto dd = [&](int i) { return (i * i / std::pow(s, 4) - 1 / (s * s)) * g(i) - dc * g(i); };
  std::array<double, 6> out{};
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) {
      const double gx = g(i), gy = g(j);
      const double dx = -i / (s * s), dy = -j / (s * s);
      const double p = img(y - j, x - i);
      out[0] += p * gx * gy;
      out[1] += p * dx * gx * gy * s;
      out[2] += p * dy * gx * gy * s;
      out[3] += p * dd(i) * gy * s * s;
      out[4] += p * dx * dy * gx * gy * s * s;
      out[5] += p * gx * dd(j) * s * s;
    }
  }
  return out;
}

FeatureSet planted_features(const std::vector<Point2>& pts, const std::vector<std::vector<double>>& desc) {
  FeatureSet fs;
  fs.dimension = static_cast<int>(desc[0].size());
  for (std::size_t i = 0; i < pts.size(); ++i) fs.keypoints.push_back({static_cast<int>(i), pts[i], desc[i]});
  return fs;
}

}  // namespace

TEST_SUITE("matchers") {
  TEST_CASE("gaussian jet equals direct 2-D convolution") {
    const auto img = random_image(60, 60, 3, 1.0);
    for (double s : {1.0, 2.0, 4.0}) {
      const auto a = gaussian_jet(img, 30, 29, s);
      const auto b = brute_jet(img, 30, 29, s);
      for (int k = 0; k < 6; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-9).scale(1.0));
    }
  }

  TEST_CASE("jet of a ramp has scale-normalised slope") {
    Grid g(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) g(y, x) = 0.01 * x;
    const auto j = gaussian_jet(g, 32, 32, 2.0);
    CHECK(j[1] == doctest::Approx(0.01 * 2.0).epsilon(0.02));
    CHECK(std::abs(j[2]) < 1e-12);
    CHECK(std::abs(j[3]) < 1e-9);
  }

  TEST_CASE("features are deterministic, unit-norm per scale and skip border fiducials") {
    const auto img = random_image(100, 100, 5);
    std::vector<Point2> fid = {{50, 50}, {2, 2}, {40, 60}};
    std::vector<int> skipped;
    const auto a = extract_features(img, fid, &skipped);
    const auto b = extract_features(img, fid);
    CHECK(skipped == std::vector<int>{1});
    REQUIRE(a.keypoints.size() == 2);
    CHECK(a.keypoints[0].descriptor == b.keypoints[0].descriptor);
    CHECK(static_cast<int>(a.keypoints[0].descriptor.size()) == descriptor_dimension());
    const std::size_t block = a.keypoints[0].descriptor.size() / constants::kDescriptorScales.size();
    for (std::size_t s = 0; s < constants::kDescriptorScales.size(); ++s) {
      double n2 = 0;
      for (std::size_t i = s * block; i < (s + 1) * block; ++i) n2 += std::pow(a.keypoints[0].descriptor[i], 2);
      CHECK(n2 == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(extract_features(img, {}), Error);
    CHECK_THROWS_AS(extract_features(img, {{1, 1}}), Error);
  }

  TEST_CASE("constant image gives an all-zero descriptor") {
    Grid g(80, 80, 0.4);
    const auto fs = extract_features(g, {{40, 40}});
    for (double v : fs.keypoints[0].descriptor) CHECK(std::abs(v) < 1e-12);
  }

  TEST_CASE("nbe is zero for affine-related patches and bounded") {
    const auto a = random_image(20, 20, 8);
    Grid b = a;
    for (double& v : b.values()) v = 0.5 * v + 0.2;
    CHECK(nbe_value(a, b) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    Grid c = a;
    for (double& v : c.values()) v = -v;
    CHECK(nbe_value(a, c) == doctest::Approx(4.0));
    const auto d = random_image(20, 20, 9);
    const double x = nbe_value(a, d);
    CHECK(x >= 0.0);
    CHECK(x <= 4.0);
    CHECK_THROWS_AS(nbe(a, Grid(3, 3)), Error);
  }

  TEST_CASE("divergence of a linear field") {
    Grid u(33, 33), v(33, 33);
    for (int y = 0; y < 33; ++y)
      for (int x = 0; x < 33; ++x) {
        u(y, x) = 0.1 * x;
        v(y, x) = 0.05 * y;
      }
    const auto d = divergence(u, v);
    CHECK(std::abs(d.div_score - 0.15) < 1e-10);
    for (double m : d.div_map.values()) CHECK(std::abs(m - 0.15) < 1e-10);
  }

  TEST_CASE("aligning a patch to itself is the identity") {
    const auto a = random_image(33, 33, 12);
    const auto f = diffeo_align(a, a);
    CHECK(divergence(f).div_score < 1e-3);
    CHECK(f.residual <= 1e-9);
  }

  TEST_CASE("warp by a constant field translates content") {
    const auto a = random_image(30, 30, 14);
    Grid u(30, 30, 2.0), v(30, 30, 0.0);
    const auto w = warp(a, u, v);
    CHECK(w(15, 17) == doctest::Approx(a(15, 15)));
  }

  TEST_CASE("alignment never makes the residual worse and reduces it for a small shift") {
    const auto big = random_image(60, 60, 15, 2.5);
    const auto a = extract_patch(big, 30, 30, 16);
    const auto b = extract_patch(big, 31.2, 29.4, 16);
    const auto f = diffeo_align(a, b);
    CHECK(f.residual <= nbe_value(a, b) + 1e-12);
    CHECK(f.residual < 0.7 * nbe_value(a, b));
    CHECK(f.max_step < 0.5);
  }

  TEST_CASE("affine fit recovers an exact transform") {
    const Affine A = {1.1, 0.2, 3.0, -0.1, 0.9, -2.0};
    std::vector<Point2> from = {{0, 0}, {10, 0}, {0, 10}, {7, 3}}, to;
    for (const auto& p : from) to.push_back(sloop::apply(A, p));
    const auto fit = fit_affine(from, to);
    REQUIRE(fit);
    for (int i = 0; i < 6; ++i) CHECK((*fit)[i] == doctest::Approx(A[i]).epsilon(1e-9));
    std::vector<Point2> collinear = {{0, 0}, {1, 1}, {2, 2}};
    CHECK_FALSE(fit_affine(collinear, collinear));
  }

  TEST_CASE("identical feature sets give the identity affine and full score") {
    const auto pop = generate_population([] {
      SyntheticSpec s;
      s.n_individuals = 1;
      s.sightings_per_individual = 1;
      return s;
    }());
    const auto& s = pop.sightings[0];
    const auto f = extract_image_features(to_grid(s.image), s.fiducials);
    const auto r = ransac_match(f.features, f.features);
    REQUIRE(r.transform);
    for (int i = 0; i < 6; ++i) CHECK(std::abs((*r.transform)[i] - kIdentityAffine[i]) < 1e-6);
    CHECK(r.score == 1.0);
    CHECK(pair_score_classical(f, f, Method::descriptor_cosine) == doctest::Approx(1.0));
    CHECK(pair_score_classical(f, f, Method::ransac) == 1.0);
    CHECK(pair_score_classical(f, f, Method::deformation) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(pair_score_classical(f, f, Method::primed_cnn), Error);
  }

  TEST_CASE("ransac recovers a planted affine among outliers") {
    int recovered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed + 100);
      const Affine A = {std::cos(0.2) * 1.05, -std::sin(0.2), rng.uniform(-5, 5), std::sin(0.2), std::cos(0.2) * 0.95,
                        rng.uniform(-5, 5)};
      std::vector<Point2> pa, pb;
      std::vector<std::vector<double>> desc;
      for (int i = 0; i < 25; ++i) {
        pa.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
        const bool outlier = i % 5 == 0;
        pb.push_back(outlier ? Point2{rng.uniform(0, 100), rng.uniform(0, 100)} : sloop::apply(A, pa.back()));
        std::vector<double> d(8);
        for (auto& x : d) x = rng.normal();
        desc.push_back(d);
      }
      RansacParams p;
      p.seed = seed;
      const auto r = ransac_match(planted_features(pa, desc), planted_features(pb, desc), p);
      if (!r.transform) continue;
      double err = 0;
      for (int i = 0; i < 25; ++i) {
        if (i % 5 == 0) continue;
        const auto q = sloop::apply(*r.transform, pa[i]);
        err = std::max(err, std::hypot(q.x - pb[i].x, q.y - pb[i].y));
      }
      recovered += err <= 0.5;
    }
    CHECK(recovered >= 19);
  }

  TEST_CASE("cnn gradient matches central differences away from ReLU kinks") {
    Rng rng(21);
    for (int t = 0; t < 3; ++t) {
      const auto model = PrimedCnnModel::random(40 + t);
      CnnInput in;
      for (double& v : in.data) v = rng.normal();
      std::vector<double> grad;
      primed_cnn_loss_and_grad(model, in, t % 2, grad);
      const auto pattern = primed_cnn_relu_pattern(model, in);
      auto flat = model.flatten();
      std::size_t compared = 0;
      double worst = 0;
      for (std::size_t i = 0; i < flat.size(); ++i) {
        auto plus = flat, minus = flat;
        plus[i] += 1e-3;
        minus[i] -= 1e-3;
        PrimedCnnModel mp = model, mm = model;
        mp.unflatten(plus);
        mm.unflatten(minus);
        if (primed_cnn_relu_pattern(mp, in) != pattern || primed_cnn_relu_pattern(mm, in) != pattern) continue;
        std::vector<double> unused;
        const double g = (primed_cnn_loss_and_grad(mp, in, t % 2, unused) -
                          primed_cnn_loss_and_grad(mm, in, t % 2, unused)) / 2e-3;
        worst = std::max(worst, std::abs(g - grad[i]) / std::max({std::abs(g), std::abs(grad[i]), 1e-12}));
        ++compared;
      }
      CHECK(compared > flat.size() / 2);
      CHECK(worst <= 1e-4);
    }
  }

  TEST_CASE("cnn training lowers the loss and is deterministic") {
    std::vector<CnnExample> ex;
    Rng rng(4);
    for (int i = 0; i < 64; ++i) {
      CnnExample e;
      e.label = i % 2;
      for (double& v : e.input.data) v = rng.normal(e.label ? 0.0 : 0.8, 0.3);
      ex.push_back(e);
    }
    CnnHyper h;
    h.epochs = 10;
    h.seed = 3;
    CnnTrainReport rep;
    const auto m1 = primed_cnn_train(ex, h, &rep);
    const auto m2 = primed_cnn_train(ex, h);
    CHECK(m1 == m2);
    REQUIRE(rep.epoch_loss.size() == 10);
    CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());
    CHECK(deserialize_model(serialize_model(m1)) == m1);
    CHECK_THROWS_AS(deserialize_model("garbage"), Error);
  }
}
