#include <doctest.h>

#include <fstream>
#include <sstream>

#include "sloop/dei/http_server.hpp"
#include "sloop/error.hpp"
#include "sloop/experiment.hpp"
#include "sloop/pipeline.hpp"
#include "sloop/synthpop.hpp"
#include "test_helpers.hpp"

using namespace sloop;

namespace {

SyntheticSpec small_spec(int individuals = 6, int sightings = 3) {
  SyntheticSpec s;
  s.n_individuals = individuals;
  s.sightings_per_individual = sightings;
  s.seed = 11;
  return s;
}

CascadeConfig cheap_cascade() {
  CascadeConfig c;
  c.stages = {{{Method::descriptor_cosine}, 0.5}, {{Method::ransac, Method::deformation}, 1.0}};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_experiment(const std::filesystem::path& out, int iterations) {
  ExperimentConfig c;
  c.spec = small_spec();
  c.cascade = cheap_cascade();
  c.iterations = iterations;
  c.budget = 0.1;
  c.out = out;
  c.gold_pairs = 4;
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("feature blobs round trip and reject damage") {
    const auto pop = generate_population(small_spec(1, 1));
    const auto& s = pop.sightings.at(0);
    const auto f = extract_image_features(to_grid(s.image), s.fiducials);
    const auto bytes = encode_feature_set(f);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SLFS");
    const auto back = decode_feature_set(bytes);
    CHECK(encode_feature_set(back) == bytes);
    REQUIRE(back.features.keypoints.size() == f.features.keypoints.size());
    CHECK(back.features.keypoints[0].descriptor == f.features.keypoints[0].descriptor);
    CHECK(back.patches.size() == f.patches.size());
    CHECK(back.skipped == f.skipped);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(decode_feature_set(truncated), Error);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_feature_set(bad_magic), Error);
    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK_THROWS_AS(decode_feature_set(bad_version), Error);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_feature_set(trailing), Error);
  }

  TEST_CASE("rerank from recorded raw scores equals a fresh ranking") {
    const auto pop = generate_population(small_spec(5, 2));
    auto settings = match_settings_from_workflow(builtin_workflow("default"));
    settings.cascade = cheap_cascade();
    settings.weights = EnsembleWeights::uniform(settings.cascade.methods());
    MatchEngine engine(settings);
    std::vector<std::string> ids;
    for (const auto& s : pop.sightings) {
      engine.add_features(s.image_id, extract_image_features(to_grid(s.image), s.fiducials, settings.features));
      ids.push_back(s.image_id);
    }
    const std::vector<std::string> pool(ids.begin() + 1, ids.end());
    CascadeStats stats;
    CascadeDebug debug;
    const auto first = engine.rank(ids[0], pool, settings.weights, &stats, &debug);
    CHECK(stats.expensive_calls == 5);  // ceil(0.5 * 9) deformation calls
    EnsembleWeights shifted;
    shifted.w = {{Method::descriptor_cosine, 0.1}, {Method::ransac, 0.2}, {Method::deformation, 0.7}};
    const auto j = to_json(debug, stats);
    const auto a = rerank_from_debug(ids[0], j, settings.cascade, shifted);
    const auto before = engine.alignments();
    const auto b = engine.rank(ids[0], pool, shifted);
    CHECK(engine.alignments() == before);  // cache hit
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t k = 0; k < a.items.size(); ++k) {
      CHECK(a.items[k].candidate_id == b.items[k].candidate_id);
      CHECK(a.items[k].score == doctest::Approx(b.items[k].score).epsilon(1e-12));
    }
    CHECK(engine.raw(Method::deformation, ids[0], ids[1]) == engine.raw(Method::deformation, ids[1], ids[0]));
  }

  TEST_CASE("annotator spec parsing") {
    CHECK(annotators_from_string("oracle").mode == AnnotatorMode::oracle);
    CHECK(annotators_from_string("oracle:5").count == 5);
    const auto s = annotators_from_string("simulated:0.8:4");
    CHECK(s.mode == AnnotatorMode::simulated);
    CHECK(s.accuracy == doctest::Approx(0.8));
    CHECK(s.count == 4);
    CHECK(annotators_from_string("live").mode == AnnotatorMode::live);
    CHECK_THROWS_AS(annotators_from_string("psychic"), Error);
    CHECK_THROWS_AS(annotators_from_string("simulated:1.5"), Error);
  }

  TEST_CASE("zero iterations gives only the baseline row") {
    test::TempDir dir("exp0");
    const auto r = run_experiment(tiny_experiment(dir.path(), 0));
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].iteration == 0);
    CHECK(r.rows[0].pairs_verified == 0);
    CHECK(r.rows[0].auc > 0.5);
    CHECK(r.all_indexed());
    CHECK(r.images == 18);
  }

  TEST_CASE("experiments are deterministic and index everything") {
    test::TempDir a("expA"), b("expB");
    const auto ra = run_experiment(tiny_experiment(a.path(), 2));
    write_experiment_outputs(ra, a.path());
    const auto rb = run_experiment(tiny_experiment(b.path(), 2));
    write_experiment_outputs(rb, b.path());
    CHECK(slurp(a.path() / "metrics.csv") == slurp(b.path() / "metrics.csv"));
    CHECK(slurp(a.path() / "cmc.csv") == slurp(b.path() / "cmc.csv"));
    REQUIRE(ra.rows.size() == 3);
    CHECK(ra.all_indexed());
    for (std::size_t i = 1; i < ra.rows.size(); ++i) {
      CHECK(ra.rows[i].auc >= ra.rows[i - 1].auc);
      CHECK(ra.rows[i].pairs_verified == 2);  // ceil(0.1 * 18)
      CHECK(ra.rows[i].conflicts == 0);
    }
    // Oracle cohorts are pure.
    for (const auto& c : ra.partition.cohorts) {
      for (const auto& m : c.members) CHECK(ra.truth.at(m) == ra.truth.at(c.members.front()));
    }
    CHECK(slurp(a.path() / "metrics.csv").rfind(kMetricsCsvHeader, 0) == 0);
  }

  TEST_CASE("an experiment against a DEI over http") {
    test::TempDir dir("exphttp");
    dei::DeiConfig dc;
    dc.data_dir = dir.path() / "remote";
    dc.sync = false;
    auto wf = builtin_workflow("synthetic");
    wf.params["cascade"] = to_json(cheap_cascade());
    wf.params["weights"] = to_json(EnsembleWeights::uniform(cheap_cascade().methods()));
    dc.workflows = {wf};
    dc.principals = {{"ipe", "ipe-secret", {"preprocess", "extract", "match", "index", "upload"}},
                     {"coordinator", "coordinator-secret", {"verify", "upload", "match"}}};
    dei::DeiService svc(dc);
    dei::DeiHttpServer server(svc);
    const int port = server.start("127.0.0.1", 0);
    auto cfg = tiny_experiment(dir.path() / "out", 1);
    cfg.dei_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.workers = 2;
    const auto r = run_experiment(cfg);
    CHECK(r.all_indexed());
    CHECK(r.rows.size() == 2);
    CHECK(svc.list_images("synthetic", "indexed").size() == 18);
    CHECK(svc.get_doc("metrics_rows").has_value());
    server.stop();
  }
}
