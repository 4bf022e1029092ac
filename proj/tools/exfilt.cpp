// Command-line front end: staged subcommands over persisted artifacts so a
// trained target can be reused across budget sweeps and defense grids.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "exfilt/dataset.hpp"
#include "exfilt/defenses.hpp"
#include "exfilt/errors.hpp"
#include "exfilt/experiment.hpp"
#include "exfilt/extraction.hpp"
#include "exfilt/metrics.hpp"
#include "exfilt/mia.hpp"
#include "exfilt/mlp.hpp"
#include "exfilt/oracle.hpp"
#include "exfilt/oracle_http.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace exfilt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;
constexpr int kExitRuntime = 4;

struct GlobalOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output;
  bool quiet = false;
};

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--config", g.config_path, "Experiment config (JSON)")->required();
  cmd->add_option("--set", g.overrides,
                  "Override a config field by dot path, e.g. --set extraction.flip_prob=0.2");
  cmd->add_option("--seed", g.seed, "Override master_seed");
  cmd->add_option("--output", g.output, "Override output_dir (or EXFILT_OUTPUT_DIR)");
  cmd->add_flag("--quiet", g.quiet, "Suppress progress output");
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);  // bare strings need no quotes
  }
}

ExperimentConfig load_config(const GlobalOpts& g) {
  std::ifstream in(g.config_path);
  if (!in) throw ConfigError("cannot open config file " + g.config_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + g.config_path + ": " + e.what());
  }
  for (const std::string& kv : g.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key.path=value, got '" + kv + "'");
    std::string pointer = "/" + kv.substr(0, eq);
    for (char& c : pointer)
      if (c == '.') c = '/';
    j[json::json_pointer(pointer)] = parse_override_value(kv.substr(eq + 1));
  }
  if (g.seed) j["master_seed"] = *g.seed;
  if (!g.output.empty()) {
    j["output_dir"] = g.output;
  } else if (const char* env = std::getenv("EXFILT_OUTPUT_DIR");
             env != nullptr && !j.contains("output_dir")) {
    j["output_dir"] = env;
  }
  return ExperimentConfig::from_json(j);
}

struct Printer {
  bool quiet;
  template <typename... Args>
  void line(Args&&... args) const {
    if (quiet) return;
    (std::cout << ... << args) << '\n';
  }
};

int cmd_synth_data(const GlobalOpts& g) {
  const ExperimentConfig cfg = load_config(g);
  const Printer p{g.quiet};
  fs::create_directories(cfg.output_dir);
  const TabularDataset data = materialize_dataset(cfg);
  const std::string path = cfg.output_dir + "/dataset.csv";
  write_csv(data, path);
  SplitSpec spec = cfg.split;
  spec.seed = derive_seed(cfg.master_seed, "split");
  write_dataset_manifest(cfg.output_dir + "/dataset_manifest.json", data.schema,
                         cfg.dataset.synthetic ? "synthetic" : cfg.dataset.csv_path, spec);
  p.line("wrote ", data.size(), " rows to ", path);
  return kExitOk;
}

int cmd_train_target(const GlobalOpts& g) {
  const ExperimentConfig cfg = load_config(g);
  const Printer p{g.quiet};
  fs::create_directories(cfg.output_dir);
  const TabularDataset data = materialize_dataset(cfg);
  const SplitResult parts = materialize_split(cfg, data);

  TrainConfig tcfg = cfg.target;
  tcfg.seed = derive_seed(cfg.master_seed, "target");
  const bool defended = cfg.defense.kind != DefenseKind::kNone;

  const MlpClassifier base = train(parts.train, tcfg);
  MlpClassifier deployed = base;
  if (defended) {
    save_model(base, undefended_model_path(cfg.output_dir));
    deployed = train_defended(parts.train, tcfg, cfg.defense);
  }
  save_model(deployed, target_model_path(cfg.output_dir));

  TabularDataset train_eval = parts.train;
  p.line("target trained (defense: ", cfg.defense.label(), ")");
  p.line("train accuracy: ", accuracy(deployed, train_eval));
  p.line("test accuracy:  ", accuracy(deployed, parts.neutral));
  update_manifest(cfg.output_dir,
                  json{{"config_fingerprint", cfg.fingerprint()},
                       {"seed_target", tcfg.seed},
                       {"target_model_hash",
                        file_fingerprint(target_model_path(cfg.output_dir))}});
  return kExitOk;
}

int cmd_extract(const GlobalOpts& g, std::int64_t budget, const std::string& oracle_url) {
  const ExperimentConfig cfg = load_config(g);
  const Printer p{g.quiet};
  fs::create_directories(cfg.output_dir);
  const TabularDataset data = materialize_dataset(cfg);
  const SplitResult parts = materialize_split(cfg, data);

  if (budget < static_cast<std::int64_t>(parts.aux.size()))
    throw ConfigError("extract: budget " + std::to_string(budget) +
                      " cannot cover the bootstrap labels (|aux| = " +
                      std::to_string(parts.aux.size()) + ")");

  ExtractionConfig ext_cfg = cfg.extraction;
  ext_cfg.seed = derive_seed(cfg.master_seed ^ static_cast<std::uint64_t>(budget), "extract");
  TrainConfig surr_cfg = cfg.surrogate;
  surr_cfg.seed = derive_seed(cfg.master_seed ^ static_cast<std::uint64_t>(budget), "surrogate");

  ExtractionState state;
  if (!oracle_url.empty()) {
    HttpOracleClient oracle(oracle_url);
    state = extract(parts.aux, oracle, ext_cfg, surr_cfg);
  } else {
    const std::string target_path = target_model_path(cfg.output_dir);
    if (!fs::exists(target_path))
      throw IoError("missing artifact " + target_path + "; run 'exfilt train-target' first");
    const MlpClassifier target = load_model(target_path);
    BudgetedOracle oracle(oracle_target(target), data.schema, budget,
                          /*reject_invalid=*/true);
    const std::vector<int> probe_labels = target.predict(parts.neutral.samples);
    FidelityProbe probe{&parts.neutral.samples, &probe_labels};
    state = extract(parts.aux, oracle, ext_cfg, surr_cfg, probe);
  }

  save_model(state.surrogate, surrogate_model_path(cfg.output_dir, budget));
  save_fingerprints(surrogate_seen_path(cfg.output_dir, budget), state.seen);
  write_history_jsonl(state.history, history_path(cfg.output_dir, budget));
  p.line("extraction done: ", state.rounds, " rounds, ", state.queries_spent,
         " queries spent, |pool| = ", state.labeled_pool.size());
  update_manifest(cfg.output_dir,
                  json{{"surrogate_" + std::to_string(budget),
                        json{{"spend", state.queries_spent},
                             {"rounds", state.rounds},
                             {"seed_extract", ext_cfg.seed}}}});
  return kExitOk;
}

int cmd_mia(const GlobalOpts& g, const std::string& model_path,
            std::optional<double> manual_tau, const std::string& method) {
  const ExperimentConfig cfg = load_config(g);
  const Printer p{g.quiet};
  fs::create_directories(cfg.output_dir);
  if (!fs::exists(model_path))
    throw IoError("missing model file " + model_path +
                  "; run 'exfilt extract' (or train-target) first");
  const MlpClassifier model = load_model(model_path);
  const TabularDataset data = materialize_dataset(cfg);
  const SplitResult parts = materialize_split(cfg, data);

  BoundaryEstimatorConfig est = cfg.mia.estimator;
  if (!method.empty()) est.method = boundary_method_from_string(method);
  est.seed = derive_seed(cfg.master_seed, "mia");

  MiaThreshold thr;
  if (manual_tau) {
    thr.tau = *manual_tau;
    thr.source = MiaThreshold::Source::kManual;
  } else {
    thr = calibrate_threshold(model, data.schema, cfg.mia.n_cal, est,
                              derive_seed(cfg.master_seed, "calibrate"), &parts.aux);
  }

  const MiaResult result = infer_membership(model, parts.membership_eval, thr, est);
  const std::string stem = fs::path(model_path).stem().string();
  write_mia_csv(cfg.output_dir + "/mia_" + stem + ".csv", parts.membership_eval, result);
  write_threshold_sidecar(cfg.output_dir + "/threshold_" + stem + ".json", thr, est);

  std::vector<int> truths;
  for (std::uint8_t f : *parts.membership_eval.membership) truths.push_back(f);
  const RocResult roc = roc_auc(result.distances, truths);
  write_roc_csv(cfg.output_dir + "/roc_" + stem + ".csv", roc);
  p.line("tau = ", thr.tau, thr.source == MiaThreshold::Source::kManual ? " (manual)"
                                                                        : " (calibrated)");
  p.line("attack accuracy: ", attack_accuracy(result.predicted, truths));
  p.line("attack AUC:      ", roc.auc);
  return kExitOk;
}

int cmd_report(const GlobalOpts& g, bool run_missing) {
  const ExperimentConfig cfg = load_config(g);
  const Printer p{g.quiet};
  const FullReport report = run_full_report(cfg, /*reuse_artifacts=*/true, run_missing);
  for (const AttackReport& r : report.main.reports)
    p.line("budget ", r.budget, ": fidelity=", r.fidelity_s_mprime, " auc_s=", r.auc_s,
           " auc_target=", r.auc_target);
  p.line("wrote ", cfg.output_dir, "/table2.csv");
  if (!report.defenses.empty()) p.line("wrote ", cfg.output_dir, "/table3.csv");
  return kExitOk;
}

int cmd_serve(const GlobalOpts& g, const std::string& host, int port, std::int64_t budget,
              bool allow_invalid) {
  const ExperimentConfig cfg = load_config(g);
  const Printer p{g.quiet};
  const std::string target_path = target_model_path(cfg.output_dir);
  if (!fs::exists(target_path))
    throw IoError("missing artifact " + target_path + "; run 'exfilt train-target' first");
  const MlpClassifier target = load_model(target_path);
  const TabularDataset data = materialize_dataset(cfg);
  BudgetedOracle oracle(oracle_target(target), data.schema, budget, !allow_invalid);
  OracleServer server(oracle, host, port);
  p.line("oracle listening on ", host, ":", server.port(),
         " (budget: ", budget == kUnlimitedBudget ? std::string("unlimited")
                                                  : std::to_string(budget),
         ")");
  server.wait();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exfilt: black-box surrogate extraction and label-only membership inference"};
  app.require_subcommand(1);

  GlobalOpts g_synth, g_train, g_extract, g_mia, g_report, g_serve;

  CLI::App* synth = app.add_subcommand("synth-data", "Generate the synthetic dataset CSV");
  add_global_opts(synth, g_synth);

  CLI::App* train_cmd =
      app.add_subcommand("train-target", "Train (and persist) the target model");
  add_global_opts(train_cmd, g_train);

  CLI::App* extract_cmd =
      app.add_subcommand("extract", "Extract a surrogate under a query budget");
  add_global_opts(extract_cmd, g_extract);
  std::int64_t budget = 0;
  std::string oracle_url;
  extract_cmd->add_option("--budget", budget, "Oracle query budget")->required();
  extract_cmd->add_option("--oracle-url", oracle_url,
                          "Query a remote oracle endpoint instead of the local target");

  CLI::App* mia_cmd =
      app.add_subcommand("mia", "Membership inference on an extracted model");
  add_global_opts(mia_cmd, g_mia);
  std::string model_path, method;
  std::optional<double> manual_tau;
  mia_cmd->add_option("--model", model_path, "Model file (mlp-v1)")->required();
  mia_cmd->add_option("--tau", manual_tau, "Manual distance threshold (skips calibration)");
  mia_cmd->add_option("--method", method,
                      "Boundary estimator: exhaustive | whitebox_margin | labelonly_hsj");

  CLI::App* report_cmd =
      app.add_subcommand("report", "Assemble metric tables and ROC curves");
  add_global_opts(report_cmd, g_report);
  bool run_missing = false;
  report_cmd->add_flag("--run-missing", run_missing,
                       "Run absent pipeline stages instead of failing");

  CLI::App* serve_cmd = app.add_subcommand("serve", "Serve the target as an HTTP oracle");
  add_global_opts(serve_cmd, g_serve);
  std::string host = "127.0.0.1";
  int port = 8080;
  std::int64_t serve_budget = kUnlimitedBudget;
  bool allow_invalid = false;
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 chooses a free port)");
  serve_cmd->add_option("--budget", serve_budget, "Query budget (-1 = unlimited)");
  serve_cmd->add_flag("--allow-invalid", allow_invalid,
                      "Accept samples outside the schema domain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth_data(g_synth);
    if (train_cmd->parsed()) return cmd_train_target(g_train);
    if (extract_cmd->parsed()) return cmd_extract(g_extract, budget, oracle_url);
    if (mia_cmd->parsed()) return cmd_mia(g_mia, model_path, manual_tau, method);
    if (report_cmd->parsed()) return cmd_report(g_report, run_missing);
    if (serve_cmd->parsed())
      return cmd_serve(g_serve, host, port, serve_budget, allow_invalid);
  } catch (const BudgetExhaustedError& e) {
    std::cerr << "error (budget): " << e.what() << '\n';
    return kExitBudget;
  } catch (const ConfigError& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
