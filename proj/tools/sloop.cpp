#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "sloop/config.hpp"
#include "sloop/dei/http_server.hpp"
#include "sloop/dei/nameservice.hpp"
#include "sloop/dei/service.hpp"
#include "sloop/error.hpp"
#include "sloop/experiment.hpp"
#include "sloop/log.hpp"

using namespace sloop;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw validation_error("listen address must be host:port, got " + addr);
  try {
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
  } catch (const std::exception&) {
    throw validation_error("bad port in " + addr);
  }
}

struct DeiServeOptions {
  std::string config;
  std::string listen;
  std::string data_dir;
  std::string nameservice;
};

int dei_serve(const DeiServeOptions& o) {
  nlohmann::json cfg = o.config.empty() ? nlohmann::json::object() : load_config(o.config);
  dei::DeiConfig dc;
  dc.data_dir = !o.data_dir.empty() ? o.data_dir : env_or("DEI_DATA_DIR", cfg.value("data_dir", std::string("dei-data")));
  const auto listen = !o.listen.empty() ? o.listen : env_or("DEI_LISTEN_ADDR", cfg.value("listen", std::string("127.0.0.1:8080")));
  const auto ns_url = !o.nameservice.empty() ? o.nameservice : env_or("DEI_NAMESERVICE_URL", cfg.value("nameservice", std::string()));
  if (!cfg.contains("principals")) throw validation_error("dei serve: config needs a principals list");
  dc.principals = dei::principals_from_json(cfg["principals"]);
  std::vector<std::string> names = cfg.value("workflows", std::vector<std::string>{"default", "synthetic"});
  for (const auto& n : names) dc.workflows.push_back(builtin_workflow(n));
  dc.lease_ttl_ms = cfg.value("lease_ttl_ms", dc.lease_ttl_ms);
  dc.sync = cfg.value("sync", dc.sync);
  dc.snapshot_every = cfg.value("snapshot_every", dc.snapshot_every);
  if (cfg.contains("feedback")) dc.feedback = feedback_config_from_json(cfg["feedback"]);

  dei::DeiService service(dc);
  dei::DeiHttpServer server(service);
  const auto [host, port] = split_addr(listen);
  const int bound = server.start(host, port);
  std::cerr << "dei: serving /api/v1 on " << host << ":" << bound << " (data " << dc.data_dir.string() << ")\n";

  std::unique_ptr<dei::NameServiceClient> ns;
  const std::string name = cfg.value("name", std::string("dei"));
  if (!ns_url.empty()) {
    ns = std::make_unique<dei::NameServiceClient>(ns_url);
    dei::DeiDescriptor d{name, "http://" + host + ":" + std::to_string(bound), names, 0};
    const auto r = ns->register_dei(d);
    if (r.status == dei::RegistrationStatus::degraded) {
      std::cerr << "dei: name service unreachable after " << r.attempts << " attempts; running degraded: "
                << r.last_error << "\n";
    } else {
      std::cerr << "dei: registered with " << ns_url << "\n";
    }
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  int tick = 0;
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    if (ns && ++tick % 150 == 0) {
      try {
        ns->heartbeat(name);
      } catch (const Error& e) {
        log_warn(std::string("heartbeat failed: ") + e.what());
      }
    }
  }
  server.stop();
  service.snapshot();
  return 0;
}

struct IpeOptions {
  std::string dei_url;
  std::string principal = "ipe";
  std::string secret = "ipe-secret";
  bool until_idle = false;
  int poll_ms = 2000;
  std::size_t batch = 8;
};

int ipe_run(IpeOptions o) {
  if (o.dei_url.empty()) o.dei_url = env_or("DEI_URL", "http://127.0.0.1:8080");
  auto api = dei::make_http_api(o.dei_url);
  api->login(o.principal, o.secret, {"preprocess", "extract", "match", "index"});
  IpeWorker worker(*api, o.batch);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) {
    const auto n = worker.run_once();
    if (n == 0) {
      if (o.until_idle) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(o.poll_ms));
    }
  }
  for (const auto& [step, count] : worker.stats().steps) std::cerr << "ipe: " << step << " " << count << "\n";
  return 0;
}

int nameservice_serve(std::string listen) {
  if (listen.empty()) listen = env_or("NAMESERVICE_LISTEN_ADDR", "127.0.0.1:8070");
  dei::NameServiceServer server;
  const auto [host, port] = split_addr(listen);
  const int bound = server.start(host, port);
  std::cerr << "nameservice: listening on " << host << ":" << bound << "\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  return 0;
}

struct SynthOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> individuals;
  std::optional<int> sightings;
};

SyntheticSpec spec_with_overrides(const nlohmann::json& j, std::optional<std::uint64_t> seed,
                                  std::optional<int> individuals, std::optional<int> sightings) {
  SyntheticSpec spec = j.is_object() ? spec_from_json(j) : SyntheticSpec{};
  if (seed) spec.seed = *seed;
  if (individuals) spec.n_individuals = *individuals;
  if (sightings) spec.sightings_per_individual = *sightings;
  spec.validate();
  return spec;
}

int synth_generate(const SynthOptions& o) {
  const nlohmann::json cfg = o.config.empty() ? nlohmann::json::object() : load_config(o.config);
  const auto spec = spec_with_overrides(cfg.value("spec", cfg), o.seed, o.individuals, o.sightings);
  const auto pop = generate_population(spec);
  write_population(pop, o.out);
  std::cout << pop.sightings.size() << " images written to " << o.out << "\n"
            << "sha256 " << directory_digest(o.out) << "\n";
  return 0;
}

struct ExperimentOptions {
  std::string config;
  std::string dei_url;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<double> budget;
  std::string annotators;
  std::string out = "experiment-out";
  std::string dataset;
  int workers = 1;
};

int experiment_run(const ExperimentOptions& o) {
  const nlohmann::json cfg = o.config.empty() ? nlohmann::json::object() : load_config(o.config);
  ExperimentConfig ec;
  ec.seed = o.seed.value_or(cfg.value("seed", ec.seed));
  ec.spec = spec_with_overrides(cfg.value("spec", nlohmann::json::object()), ec.seed, std::nullopt, std::nullopt);
  ec.workflow = cfg.value("workflow", ec.workflow);
  ec.iterations = o.iterations.value_or(cfg.value("iterations", ec.iterations));
  if (o.budget) {
    ec.budget = o.budget;
  } else if (cfg.contains("budget")) {
    ec.budget = cfg["budget"].get<double>();
  }
  ec.annotators = annotators_from_string(!o.annotators.empty() ? o.annotators : cfg.value("annotators", std::string("oracle:3")));
  ec.gold_pairs = cfg.value("gold_pairs", ec.gold_pairs);
  if (cfg.contains("cascade")) ec.cascade = cascade_from_json(cfg["cascade"]);
  if (!o.dataset.empty()) ec.dataset = o.dataset;
  ec.dei_url = o.dei_url;
  ec.workers = o.workers;
  ec.out = o.out;

  const auto result = run_experiment(ec);
  write_experiment_outputs(result, ec.out);
  std::cout << kMetricsCsvHeader << "\n" << to_csv(result.rows).substr(std::string(kMetricsCsvHeader).size() + 1);
  std::cout << "indexed " << result.indexed << "/" << result.images << " in " << result.seconds << " s\n";
  if (!result.all_indexed()) {
    std::cerr << "experiment: not every image reached indexed\n";
    return 1;
  }
  return 0;
}

int metrics_report(const std::string& dei_url, const std::string& csv, const std::string& format) {
  if (!csv.empty()) {
    std::ifstream in(csv);
    if (!in) throw Error(ErrorCode::io, "cannot open " + csv);
    std::cout << in.rdbuf();
    return 0;
  }
  auto api = dei::make_http_api(dei_url.empty() ? env_or("DEI_URL", "http://127.0.0.1:8080") : dei_url);
  const auto rows = api->get_doc("metrics_rows").value_or(nlohmann::json::array());
  if (format == "json") {
    std::cout << rows.dump(2) << "\n";
  } else {
    std::vector<MetricsRow> parsed;
    for (const auto& r : rows) parsed.push_back(metrics_row_from_json(r));
    std::cout << to_csv(parsed);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* lvl = std::getenv("SLOOP_LOG_LEVEL")) set_log_level(log_level_from_string(lvl));
  CLI::App app{"Sloop animal identification: DEI server, IPE workers, experiments"};
  app.require_subcommand(1);

  auto* dei_cmd = app.add_subcommand("dei", "Data Exchange and Interaction server");
  dei_cmd->require_subcommand(1);
  DeiServeOptions dso;
  auto* serve = dei_cmd->add_subcommand("serve", "Run the DEI REST server");
  serve->add_option("--config", dso.config, "YAML/JSON server config");
  serve->add_option("--listen", dso.listen, "host:port (env DEI_LISTEN_ADDR)");
  serve->add_option("--data-dir", dso.data_dir, "Store directory (env DEI_DATA_DIR)");
  serve->add_option("--nameservice", dso.nameservice, "Name service URL (env DEI_NAMESERVICE_URL)");

  auto* ipe_cmd = app.add_subcommand("ipe", "Image Processing Engine");
  ipe_cmd->require_subcommand(1);
  IpeOptions io;
  auto* ipe_run_cmd = ipe_cmd->add_subcommand("run", "Poll a DEI for work and process it");
  ipe_run_cmd->add_option("--dei-url", io.dei_url, "DEI base URL");
  ipe_run_cmd->add_option("--principal", io.principal);
  ipe_run_cmd->add_option("--secret", io.secret);
  ipe_run_cmd->add_option("--batch", io.batch, "Work items per poll");
  ipe_run_cmd->add_option("--poll-ms", io.poll_ms, "Sleep between empty polls");
  ipe_run_cmd->add_flag("--until-idle", io.until_idle, "Exit once a poll returns no work");

  auto* ns_cmd = app.add_subcommand("nameservice", "DEI registry");
  ns_cmd->require_subcommand(1);
  std::string ns_listen;
  auto* ns_serve = ns_cmd->add_subcommand("serve", "Run the name service");
  ns_serve->add_option("--listen", ns_listen, "host:port");

  auto* synth_cmd = app.add_subcommand("synth", "Synthetic populations");
  synth_cmd->require_subcommand(1);
  SynthOptions so;
  auto* gen = synth_cmd->add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--config", so.config, "Spec file (YAML/JSON)");
  gen->add_option("--out", so.out, "Output directory")->required();
  gen->add_option("--seed", so.seed);
  gen->add_option("--individuals", so.individuals);
  gen->add_option("--sightings", so.sightings);

  auto* exp_cmd = app.add_subcommand("experiment", "End-to-end experiments");
  exp_cmd->require_subcommand(1);
  ExperimentOptions eo;
  auto* exp_run = exp_cmd->add_subcommand("run", "Generate, ingest, index and run feedback iterations");
  exp_run->add_option("--config", eo.config, "Experiment file (YAML/JSON)");
  exp_run->add_option("--dei-url", eo.dei_url, "Use a running DEI instead of an in-process one");
  exp_run->add_option("--seed", eo.seed);
  exp_run->add_option("--iterations", eo.iterations)->check(CLI::NonNegativeNumber);
  exp_run->add_option("--budget", eo.budget, "Fraction of the pool verified per iteration");
  exp_run->add_option("--annotators", eo.annotators, "oracle[:N], simulated:ACC[:N] or live");
  exp_run->add_option("--out", eo.out, "Output directory");
  exp_run->add_option("--dataset", eo.dataset, "Existing dataset directory");
  exp_run->add_option("--workers", eo.workers, "In-process IPE workers")->check(CLI::PositiveNumber);

  auto* met_cmd = app.add_subcommand("metrics", "Metrics");
  met_cmd->require_subcommand(1);
  std::string met_url, met_csv, met_format = "csv";
  auto* report = met_cmd->add_subcommand("report", "Print metrics from a DEI or a metrics.csv");
  report->add_option("--dei-url", met_url);
  report->add_option("--csv", met_csv);
  report->add_option("--format", met_format)->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);
  try {
    if (serve->parsed()) return dei_serve(dso);
    if (ipe_run_cmd->parsed()) return ipe_run(io);
    if (ns_serve->parsed()) return nameservice_serve(ns_listen);
    if (gen->parsed()) return synth_generate(so);
    if (exp_run->parsed()) return experiment_run(eo);
    if (report->parsed()) return metrics_report(met_url, met_csv, met_format);
  } catch (const Error& e) {
    std::cerr << "sloop: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "sloop: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
