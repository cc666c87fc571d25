#include "sloop/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "sloop/dei/service.hpp"
#include "sloop/error.hpp"
#include "sloop/log.hpp"

namespace sloop {

AnnotatorSpec annotators_from_string(const std::string& text) {
  AnnotatorSpec a;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(':', start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  auto number = [&](const std::string& s, const char* what) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw validation_error("annotators: bad " + std::string(what) + " '" + s + "'");
    }
  };
  if (parts[0] == "oracle" && parts.size() <= 2) {
    a.mode = AnnotatorMode::oracle;
    if (parts.size() == 2) a.count = static_cast<int>(number(parts[1], "count"));
  } else if (parts[0] == "simulated" && parts.size() >= 2 && parts.size() <= 3) {
    a.mode = AnnotatorMode::simulated;
    a.accuracy = number(parts[1], "accuracy");
    if (parts.size() == 3) a.count = static_cast<int>(number(parts[2], "count"));
    if (!(a.accuracy >= 0.0 && a.accuracy <= 1.0)) throw validation_error("annotators: accuracy must lie in [0, 1]");
  } else if (parts[0] == "live" && parts.size() == 1) {
    a.mode = AnnotatorMode::live;
    a.count = 0;
  } else {
    throw validation_error("annotators: expected oracle[:N], simulated:ACC[:N] or live, got '" + text + "'");
  }
  if (a.mode != AnnotatorMode::live && a.count < 1) throw validation_error("annotators: count must be >= 1");
  return a;
}

namespace {

MetricsRow measure(int iteration, const std::vector<RankedList>& rankings, const Truth& truth) {
  MetricsRow row;
  row.iteration = iteration;
  row.auc = ranking_auc(rankings, truth);
  row.recall_at_1 = recall_at_k(rankings, truth, 1).recall;
  row.recall_at_5 = recall_at_k(rankings, truth, 5).recall;
  return row;
}

std::optional<std::map<Method, double>> normalized_scores(const nlohmann::json& debug, const std::string& candidate,
                                                          const std::vector<Method>& methods) {
  if (!debug.contains("normalized") || !debug["normalized"].contains(candidate)) return std::nullopt;
  const auto& e = debug["normalized"][candidate];
  std::map<Method, double> out;
  for (const auto m : methods) {
    if (!e.contains(to_string(m))) return std::nullopt;
    out[m] = e[to_string(m)].get<double>();
  }
  return out;
}

class Driver {
 public:
  explicit Driver(const ExperimentConfig& cfg) : cfg_(cfg) {}

  ExperimentResult run();

 private:
  void start_dei(const MatchSettings& settings);
  std::unique_ptr<dei::DeiApi> connect(const std::string& principal, const std::vector<std::string>& caps);
  void run_workers();
  void answer(const std::vector<std::string>& task_ids);

  const ExperimentConfig& cfg_;
  std::unique_ptr<dei::DeiService> service_;
  std::unique_ptr<dei::DeiApi> coord_;
  std::shared_ptr<MatchEngine> engine_;
  std::vector<std::unique_ptr<Annotator>> annotators_;
  IdentityOracle truth_;
  std::int64_t expensive_calls_ = 0;
};

// A cascade override brings its own methods; weights that do not cover
// exactly those methods fall back to uniform.
void override_cascade(WorkflowDef& def, const CascadeConfig& cascade) {
  def.params["cascade"] = to_json(cascade);
  const auto methods = cascade.methods();
  bool covered = def.params.contains("weights") && def.params["weights"].size() == methods.size();
  for (const auto m : methods) covered = covered && def.params["weights"].contains(to_string(m));
  if (!covered) def.params["weights"] = to_json(EnsembleWeights::uniform(methods));
}

const std::vector<std::string> kIpeCaps = {"preprocess", "extract", "match", "index", "upload"};
const std::vector<std::string> kCoordCaps = {"verify", "upload", "match"};

void Driver::start_dei(const MatchSettings& settings) {
  if (!cfg_.dei_url.empty()) return;
  dei::DeiConfig dc;
  dc.data_dir = cfg_.out / "dei";
  std::filesystem::remove_all(dc.data_dir);
  dc.principals = {{"ipe", "ipe-secret", kIpeCaps}, {"coordinator", "coordinator-secret", kCoordCaps}};
  dc.workflows = {builtin_workflow(cfg_.workflow)};
  if (cfg_.cascade) override_cascade(dc.workflows[0], *cfg_.cascade);
  dc.sync = cfg_.sync;
  dc.feedback = settings.feedback;
  service_ = std::make_unique<dei::DeiService>(dc);
}

std::unique_ptr<dei::DeiApi> Driver::connect(const std::string& principal, const std::vector<std::string>& caps) {
  auto api = service_ ? dei::make_local_api(*service_) : dei::make_http_api(cfg_.dei_url);
  api->login(principal, principal + "-secret", caps);
  return api;
}

void Driver::run_workers() {
  const int n = std::max(1, cfg_.workers);
  std::vector<std::unique_ptr<dei::DeiApi>> apis;
  std::vector<std::unique_ptr<IpeWorker>> workers;
  for (int i = 0; i < n; ++i) {
    apis.push_back(connect("ipe", kIpeCaps));
    workers.push_back(std::make_unique<IpeWorker>(*apis.back()));
    workers.back()->set_engine(cfg_.workflow, engine_);
  }
  // The match barrier can leave a worker idle while others still extract,
  // so keep going until a full pass over all workers finds nothing.
  while (true) {
    std::size_t handled = 0;
    if (n == 1) {
      handled = workers[0]->run_until_idle();
    } else {
      std::vector<std::thread> threads;
      std::vector<std::size_t> counts(n, 0);
      std::vector<std::exception_ptr> errors(n);
      for (int i = 0; i < n; ++i) {
        threads.emplace_back([&, i] {
          try {
            counts[i] = workers[i]->run_until_idle();
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      for (auto c : counts) handled += c;
    }
    if (handled == 0) break;
  }
  for (const auto& w : workers) expensive_calls_ += w->stats().expensive_calls;
}

void Driver::answer(const std::vector<std::string>& task_ids) {
  auto unresolved = [&] {
    std::set<std::string> open(task_ids.begin(), task_ids.end());
    for (const auto& t : coord_->list_tasks()) {
      if (t.state == TaskState::resolved || t.state == TaskState::expired) open.erase(t.task_id);
    }
    return open.size();
  };
  if (cfg_.annotators.mode == AnnotatorMode::live) {
    while (unresolved() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.live_poll_ms));
    return;
  }
  for (int round = 0; round < 1000 && unresolved() > 0; ++round) {
    bool progress = false;
    for (auto& a : annotators_) {
      for (const auto& t : coord_->get_tasks(a->id(), 10)) {
        const auto label = a->judge(t);
        if (!label) continue;
        progress |= coord_->respond(t.task_id, a->id(), *label).accepted;
      }
    }
    if (!progress) {
      log_warn(std::to_string(unresolved()) + " verification tasks left unresolved: no annotator can answer them");
      return;
    }
  }
}

ExperimentResult Driver::run() {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg_.iterations < 0) throw validation_error("iterations must be >= 0");
  ExperimentResult result;
  std::filesystem::create_directories(cfg_.out);

  SyntheticSpec spec = cfg_.spec;
  spec.seed = cfg_.seed;
  const Population pop = cfg_.dataset ? read_population(*cfg_.dataset) : generate_population(spec);

  auto def = builtin_workflow(cfg_.workflow);
  if (cfg_.cascade) override_cascade(def, *cfg_.cascade);
  auto settings = match_settings_from_workflow(def);
  if (cfg_.budget) {
    if (!(*cfg_.budget > 0.0 && *cfg_.budget <= 1.0)) throw validation_error("budget must lie in (0, 1]");
    settings.feedback.budget_fraction = *cfg_.budget;
  }
  start_dei(settings);
  coord_ = connect("coordinator", kCoordCaps);

  std::optional<PrimedCnnModel> model = cfg_.model;
  engine_ = cfg_.engine;
  if (!engine_) {
    if (settings.needs_cnn() && !model) model = train_primed_cnn(pop.spec, settings);
    engine_ = std::make_shared<MatchEngine>(settings, model);
  } else {
    engine_->set_cascade(settings.cascade);
  }
  if (settings.needs_cnn() && model) {
    const auto text = serialize_model(*model);
    const auto ref = coord_->put_blob(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    coord_->put_doc(model_doc_name(cfg_.workflow), {{"blob", ref}});
  }
  coord_->put_weights(cfg_.workflow, settings.weights);

  // Ingest.
  for (const auto& s : pop.sightings) {
    dei::ImageMetadata meta;
    meta.capture_date = "2020-01-01";
    meta.location = "synthetic";
    meta.view = "dorsal";
    const auto id = coord_->put_image(encode_pgm(s.image), cfg_.workflow, meta, s.fiducials);
    truth_[id] = s.individual;
  }
  result.truth = truth_;
  result.images = pop.sightings.size();
  std::vector<std::string> ids;
  for (const auto& [id, _] : truth_) ids.push_back(id);

  run_workers();
  for (const auto& id : ids) {
    if (coord_->get_image(id).state != "matched") throw Error(ErrorCode::internal, "image " + id + " did not reach matched");
  }

  std::map<std::string, nlohmann::json> debug;
  std::vector<RankedList> rankings;
  for (const auto& id : ids) {
    rankings.push_back(coord_->get_rankings(id, 0));
    debug[id] = coord_->get_ranking_debug(id);
  }
  auto record = [&](MetricsRow row) {
    row.expensive_calls = expensive_calls_;
    result.rows.push_back(row);
    result.cmc.push_back(cmc_curve(rankings, truth_));
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : result.rows) rows.push_back(to_json(r));
    coord_->put_doc("metrics_rows", rows);
  };
  record(measure(0, rankings, truth_));

  if (cfg_.annotators.mode != AnnotatorMode::live) {
    for (int i = 0; i < cfg_.annotators.count; ++i) {
      const auto name = (cfg_.annotators.mode == AnnotatorMode::oracle ? "oracle-" : "sim-") + std::to_string(i + 1);
      if (cfg_.annotators.mode == AnnotatorMode::oracle) {
        annotators_.push_back(std::make_unique<OracleAnnotator>(name, &truth_));
      } else {
        annotators_.push_back(std::make_unique<SimulatedAnnotator>(name, &truth_, cfg_.annotators.accuracy,
                                                                   cfg_.seed * 1000 + static_cast<std::uint64_t>(i)));
      }
    }
  }
  if (cfg_.gold_pairs > 0) {
    for (const auto& [pair, label] : make_gold_pairs(truth_, cfg_.gold_pairs, cfg_.seed)) coord_->add_gold(pair, label);
  }

  std::set<ImagePair> verified;
  std::vector<ImagePair> same, different;
  std::vector<VerifiedPair> evidence;
  std::map<std::string, std::vector<std::string>> tasks_by_image;
  EnsembleWeights weights = settings.weights;
  CohortPartition partition = merge_cohorts(ids, {}, {});
  const auto methods = settings.cascade.methods();

  for (int it = 1; it <= cfg_.iterations; ++it) {
    const auto pairs =
        select_verification_pairs(rankings, ids.size(), settings.feedback.budget_fraction, verified);
    const auto task_ids = coord_->create_tasks(pairs, it);
    answer(task_ids);

    std::int64_t resolved = 0;
    std::map<std::string, VerificationTask> by_id;
    for (const auto& t : coord_->list_tasks()) by_id[t.task_id] = t;
    for (const auto& tid : task_ids) {
      const auto& t = by_id.at(tid);
      tasks_by_image[t.pair.first].push_back(tid);
      tasks_by_image[t.pair.second].push_back(tid);
      if (t.state != TaskState::resolved || !t.consensus) continue;
      ++resolved;
      verified.insert(t.pair);
      const bool is_same = *t.consensus == Label::same;
      (is_same ? same : different).push_back(t.pair);
      auto scores = normalized_scores(debug[t.pair.first], t.pair.second, methods);
      if (!scores) scores = normalized_scores(debug[t.pair.second], t.pair.first, methods);
      if (scores) evidence.push_back({is_same, *scores});
    }

    partition = merge_cohorts(ids, same, different);
    coord_->put_cohorts(partition);
    const auto update = update_weights(weights, evidence, settings.eta);
    weights = update.weights;
    coord_->put_weights(cfg_.workflow, weights);

    std::vector<RankedList> reranked;
    for (const auto& id : ids) reranked.push_back(rerank_from_debug(id, debug[id], settings.cascade, weights));
    rankings = apply_cohorts(reranked, partition);
    for (const auto& r : rankings) coord_->put_scores(r, debug[r.query_id]);

    auto row = measure(it, rankings, truth_);
    row.pairs_verified = resolved;
    row.conflicts = static_cast<std::int64_t>(partition.conflicts.size());
    record(row);
    log_info("iteration " + std::to_string(it) + ": auc " + std::to_string(row.auc) + ", verified " +
             std::to_string(resolved));
  }

  for (const auto& id : ids) {
    nlohmann::json tasks = tasks_by_image.count(id) ? nlohmann::json(tasks_by_image[id]) : nlohmann::json::array();
    coord_->commit_transition(id, "matched", "pending_verification", {{"tasks", tasks}});
  }
  run_workers();
  for (const auto& id : ids) result.indexed += coord_->get_image(id).state == "indexed" ? 1 : 0;

  result.rankings = rankings;
  result.partition = partition;
  result.weights = weights;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) { return Driver(config).run(); }

void write_experiment_outputs(const ExperimentResult& result, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  {
    std::ofstream f(out / "metrics.csv", std::ios::binary);
    f << to_csv(result.rows);
    if (!f) throw Error(ErrorCode::io, "cannot write metrics.csv");
  }
  std::ofstream f(out / "cmc.csv", std::ios::binary);
  f << "iteration,k,recall\n";
  char buf[64];
  for (std::size_t r = 0; r < result.cmc.size(); ++r) {
    for (std::size_t k = 0; k < result.cmc[r].size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.6f", result.cmc[r][k]);
      f << result.rows[r].iteration << ',' << (k + 1) << ',' << buf << '\n';
    }
  }
  if (!f) throw Error(ErrorCode::io, "cannot write cmc.csv");
}

}  // namespace sloop
