#include "exfilt/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "exfilt/errors.hpp"
#include "exfilt/oracle.hpp"

namespace exfilt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
  c.hidden = j.value("hidden", c.hidden);
  c.warm_start = j.value("warm_start", c.warm_start);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"dropout_p", c.dropout_p},
              {"l2_lambda", c.l2_lambda},
              {"hidden", c.hidden},
              {"warm_start", c.warm_start}};
}

DefenseSpec defense_from_json(const json& j) {
  DefenseSpec d;
  d.kind = defense_kind_from_string(j.value("kind", std::string("none")));
  switch (d.kind) {
    case DefenseKind::kNone:
      break;
    case DefenseKind::kDropout:
      d.dropout_p = j.at("p").get<double>();
      break;
    case DefenseKind::kL2:
      d.l2_lambda = j.at("lambda").get<double>();
      break;
    case DefenseKind::kDpSgd:
      d.dp_target_epsilon = j.at("epsilon").get<double>();
      d.dp_delta = j.value("delta", 1e-5);
      d.dp_clip_norm = j.value("clip_norm", 1.0);
      break;
  }
  d.validate();
  return d;
}

json defense_to_json(const DefenseSpec& d) {
  json j{{"kind", to_string(d.kind)}};
  switch (d.kind) {
    case DefenseKind::kNone:
      break;
    case DefenseKind::kDropout:
      j["p"] = d.dropout_p;
      break;
    case DefenseKind::kL2:
      j["lambda"] = d.l2_lambda;
      break;
    case DefenseKind::kDpSgd:
      j["epsilon"] = d.dp_target_epsilon;
      j["delta"] = d.dp_delta;
      j["clip_norm"] = d.dp_clip_norm;
      break;
  }
  return j;
}

DatasetSchema schema_from_json(const json& j) {
  DatasetSchema schema;
  const std::size_t n_features = j.at("features").get<std::size_t>();
  schema.n_classes = j.at("classes").get<int>();
  if (j.contains("domains")) {
    for (const auto& d : j.at("domains")) {
      if (d.is_string()) {
        const std::string kind = d.get<std::string>();
        if (kind == "binary")
          schema.features.push_back(FeatureDomain::binary());
        else
          throw ConfigError("config: shorthand domain must be 'binary'");
      } else {
        const std::string kind = d.at("kind").get<std::string>();
        if (kind == "binary")
          schema.features.push_back(FeatureDomain::binary());
        else if (kind == "categorical")
          schema.features.push_back(FeatureDomain::categorical(d.at("max").get<int>()));
        else if (kind == "continuous")
          schema.features.push_back(
              FeatureDomain::continuous(d.at("lo").get<double>(), d.at("hi").get<double>()));
        else
          throw ConfigError("config: unknown feature domain '" + kind + "'");
      }
    }
    if (schema.features.size() != n_features)
      throw ConfigError("config: 'domains' length does not match 'features'");
  } else {
    schema.features.assign(n_features, FeatureDomain::binary());
  }
  schema.validate();
  return schema;
}

std::string defense_slug(const DefenseSpec& d) {
  std::string s = d.label();
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  dataset.schema.validate();
  if (dataset.synthetic && dataset.rows == 0)
    throw ConfigError("config: synthetic dataset needs a positive row count");
  if (!dataset.synthetic && dataset.csv_path.empty())
    throw ConfigError("config: csv dataset needs a path");
  if (budgets.empty()) throw ConfigError("config: at least one budget required");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (budgets[i] <= budgets[i - 1])
      throw ConfigError("config: budgets must be strictly increasing");
  if (budgets.front() < static_cast<std::int64_t>(split.aux_size))
    throw ConfigError("config: smallest budget cannot cover the bootstrap labels (|aux| = " +
                      std::to_string(split.aux_size) + ")");
  target.validate();
  surrogate.validate();
  defense.validate();
  for (const DefenseSpec& d : defense_grid) d.validate();
  extraction.validate(dataset.schema.n_classes);
  mia.estimator.validate();
  if (mia.n_cal == 0) throw ConfigError("config: mia.n_cal must be at least 1");
  if (output_dir.empty()) throw ConfigError("config: output_dir must be set");
}

json ExperimentConfig::to_json() const {
  json ds;
  json schema_json{{"features", dataset.schema.feature_count()},
                   {"classes", dataset.schema.n_classes}};
  if (!dataset.schema.all_binary()) {
    json domains = json::array();
    for (const FeatureDomain& d : dataset.schema.features) {
      switch (d.kind) {
        case DomainKind::kBinary:
          domains.push_back("binary");
          break;
        case DomainKind::kCategorical:
          domains.push_back(json{{"kind", "categorical"}, {"max", static_cast<int>(d.hi)}});
          break;
        case DomainKind::kContinuous:
          domains.push_back(json{{"kind", "continuous"}, {"lo", d.lo}, {"hi", d.hi}});
          break;
      }
    }
    schema_json["domains"] = std::move(domains);
  }
  if (dataset.synthetic) {
    schema_json["rows"] = dataset.rows;
    schema_json["class_sep"] = dataset.class_sep;
    ds["synthetic"] = std::move(schema_json);
  } else {
    schema_json["path"] = dataset.csv_path;
    ds["csv"] = std::move(schema_json);
  }

  json j;
  j["dataset"] = std::move(ds);
  j["split"] = {{"train", split.train_size},
                {"aux", split.aux_size},
                {"neutral", split.neutral_size},
                {"mem_members", split.mem_members},
                {"mem_nonmembers", split.mem_nonmembers}};
  j["target"] = train_config_to_json(target);
  j["surrogate"] = train_config_to_json(surrogate);
  j["defense"] = defense_to_json(defense);
  if (!defense_grid.empty()) {
    json grid = json::array();
    for (const DefenseSpec& d : defense_grid) grid.push_back(defense_to_json(d));
    j["defense_grid"] = std::move(grid);
  }
  j["extraction"] = {{"augment_factor", extraction.augment_factor},
                     {"flip_prob", extraction.flip_prob},
                     {"candidate_count", extraction.candidate_count},
                     {"cluster_keep_frac", extraction.cluster_keep_frac},
                     {"loss_keep_frac", extraction.loss_keep_frac},
                     {"cluster_count", extraction.cluster_count},
                     {"anchor_count", extraction.anchor_count},
                     {"max_rounds", extraction.max_rounds},
                     {"dup_retry_limit", extraction.dup_retry_limit}};
  if (extraction.fidelity_target) j["extraction"]["fidelity_target"] = *extraction.fidelity_target;
  if (!extraction.continuous_noise.empty())
    j["extraction"]["continuous_noise"] = extraction.continuous_noise;
  j["mia"] = {{"method", to_string(mia.estimator.method)},
              {"max_model_evals", mia.estimator.max_model_evals},
              {"init_trials", mia.estimator.init_trials},
              {"binsearch_tol", mia.estimator.binsearch_tol},
              {"grad_samples", mia.estimator.grad_samples},
              {"integer_constrained", mia.estimator.integer_constrained},
              {"n_cal", mia.n_cal}};
  if (mia.manual_tau) j["mia"]["manual_tau"] = *mia.manual_tau;
  j["budgets"] = budgets;
  j["defense_budget"] = defense_budget;
  j["output_dir"] = output_dir;
  j["master_seed"] = master_seed;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  const json& ds = j.at("dataset");
  if (ds.contains("synthetic")) {
    const json& s = ds.at("synthetic");
    c.dataset.synthetic = true;
    c.dataset.schema = schema_from_json(s);
    c.dataset.rows = s.at("rows").get<std::size_t>();
    c.dataset.class_sep = s.value("class_sep", 0.5);
  } else if (ds.contains("csv")) {
    const json& s = ds.at("csv");
    c.dataset.synthetic = false;
    c.dataset.schema = schema_from_json(s);
    c.dataset.csv_path = s.at("path").get<std::string>();
  } else {
    throw ConfigError("config: dataset must be 'synthetic' or 'csv'");
  }

  if (j.contains("split")) {
    const json& s = j.at("split");
    c.split.train_size = s.value("train", 0);
    c.split.aux_size = s.value("aux", 0);
    c.split.neutral_size = s.value("neutral", 0);
    c.split.mem_members = s.value("mem_members", 0);
    c.split.mem_nonmembers = s.value("mem_nonmembers", 0);
  }

  c.target = train_config_from_json(j.value("target", json::object()), TrainConfig{});
  c.surrogate = train_config_from_json(j.value("surrogate", json::object()), c.target);
  if (j.contains("defense")) c.defense = defense_from_json(j.at("defense"));
  if (j.contains("defense_grid"))
    for (const auto& d : j.at("defense_grid")) c.defense_grid.push_back(defense_from_json(d));

  if (j.contains("extraction")) {
    const json& e = j.at("extraction");
    c.extraction.augment_factor = e.value("augment_factor", c.extraction.augment_factor);
    c.extraction.flip_prob = e.value("flip_prob", c.extraction.flip_prob);
    c.extraction.candidate_count = e.value("candidate_count", c.extraction.candidate_count);
    c.extraction.cluster_keep_frac =
        e.value("cluster_keep_frac", c.extraction.cluster_keep_frac);
    c.extraction.loss_keep_frac = e.value("loss_keep_frac", c.extraction.loss_keep_frac);
    c.extraction.cluster_count = e.value("cluster_count", c.extraction.cluster_count);
    c.extraction.anchor_count = e.value("anchor_count", c.extraction.anchor_count);
    c.extraction.max_rounds = e.value("max_rounds", c.extraction.max_rounds);
    c.extraction.dup_retry_limit = e.value("dup_retry_limit", c.extraction.dup_retry_limit);
    if (e.contains("fidelity_target") && !e.at("fidelity_target").is_null())
      c.extraction.fidelity_target = e.at("fidelity_target").get<double>();
    if (e.contains("continuous_noise"))
      c.extraction.continuous_noise = e.at("continuous_noise").get<std::vector<double>>();
  }

  if (j.contains("mia")) {
    const json& m = j.at("mia");
    c.mia.estimator.method =
        boundary_method_from_string(m.value("method", std::string("labelonly_hsj")));
    c.mia.estimator.max_model_evals =
        m.value("max_model_evals", c.mia.estimator.max_model_evals);
    c.mia.estimator.init_trials = m.value("init_trials", c.mia.estimator.init_trials);
    c.mia.estimator.binsearch_tol = m.value("binsearch_tol", c.mia.estimator.binsearch_tol);
    c.mia.estimator.grad_samples = m.value("grad_samples", c.mia.estimator.grad_samples);
    c.mia.estimator.integer_constrained =
        m.value("integer_constrained", c.mia.estimator.integer_constrained);
    c.mia.n_cal = m.value("n_cal", c.mia.n_cal);
    if (m.contains("manual_tau") && !m.at("manual_tau").is_null())
      c.mia.manual_tau = m.at("manual_tau").get<double>();
  }

  c.budgets = j.value("budgets", std::vector<std::int64_t>{});
  c.defense_budget = j.value("defense_budget", 0);
  c.output_dir = j.value("output_dir", std::string("out"));
  c.master_seed = j.value("master_seed", 1);
  c.validate();
  return c;
}

std::uint64_t ExperimentConfig::fingerprint() const {
  const std::string dump = to_json().dump();
  return fingerprint_bytes(dump.data(), dump.size());
}

json AttackReport::to_json() const {
  return json{{"budget", budget},
              {"query_spend", query_spend},
              {"rounds", rounds},
              {"fidelity_s_m", fidelity_s_m},
              {"fidelity_s_mprime", fidelity_s_mprime},
              {"fidelity_m_mprime", fidelity_m_mprime},
              {"test_acc_s", test_acc_s},
              {"test_acc_m", test_acc_m},
              {"test_acc_mprime", test_acc_mprime},
              {"attack_acc_s", attack_acc_s},
              {"attack_acc_target", attack_acc_target},
              {"auc_s", auc_s},
              {"auc_target", auc_target},
              {"tau_s", tau_s},
              {"tau_target", tau_target}};
}

TabularDataset materialize_dataset(const ExperimentConfig& config) {
  if (config.dataset.synthetic)
    return synth_generate(config.dataset.schema, config.dataset.rows,
                          config.dataset.class_sep, derive_seed(config.master_seed, "data"));
  TabularDataset data = load_csv(config.dataset.csv_path, config.dataset.schema);
  data.validate();
  return data;
}

SplitResult materialize_split(const ExperimentConfig& config, const TabularDataset& data) {
  SplitSpec spec = config.split;
  spec.seed = derive_seed(config.master_seed, "split");
  return split(data, spec);
}

std::string target_model_path(const std::string& dir) { return dir + "/target.mlp"; }
std::string undefended_model_path(const std::string& dir) {
  return dir + "/target_undefended.mlp";
}
std::string surrogate_model_path(const std::string& dir, std::int64_t budget) {
  return dir + "/surrogate_" + std::to_string(budget) + ".mlp";
}
std::string surrogate_seen_path(const std::string& dir, std::int64_t budget) {
  return dir + "/surrogate_" + std::to_string(budget) + "_seen.bin";
}
std::string history_path(const std::string& dir, std::int64_t budget) {
  return dir + "/history_" + std::to_string(budget) + ".jsonl";
}

void save_fingerprints(const std::string& path, const std::unordered_set<std::uint64_t>& seen) {
  std::vector<std::uint64_t> sorted(seen.begin(), seen.end());
  std::sort(sorted.begin(), sorted.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("artifacts: cannot write " + path);
  out.write(reinterpret_cast<const char*>(sorted.data()),
            static_cast<std::streamsize>(sorted.size() * sizeof(std::uint64_t)));
}

std::unordered_set<std::uint64_t> load_fingerprints(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("artifacts: cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint64_t> values(bytes / sizeof(std::uint64_t));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  return {values.begin(), values.end()};
}

std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("artifacts: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

void update_manifest(const std::string& dir, const json& entries) {
  const std::string path = dir + "/manifest.json";
  json manifest = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      in >> manifest;
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  for (auto it = entries.begin(); it != entries.end(); ++it) manifest[it.key()] = it.value();
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot write " + path);
  out << manifest.dump(2) << '\n';
}

namespace {

struct SurrogateArtifact {
  MlpClassifier model;
  std::unordered_set<std::uint64_t> seen;
  std::int64_t spend = 0;
  int rounds = 0;
};

std::int64_t read_spend_from_history(const std::string& path, int* rounds) {
  std::ifstream in(path);
  if (!in) return 0;
  std::int64_t spend = 0;
  int r = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      spend = j.value("spent_after", spend);
      r = j.value("round", r);
    } catch (const json::exception&) {
      break;
    }
  }
  if (rounds != nullptr) *rounds = r;
  return spend;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, bool reuse_artifacts,
                                bool run_missing) {
  config.validate();
  const std::string& dir = config.output_dir;
  fs::create_directories(dir);
  const std::uint64_t master = config.master_seed;

  const TabularDataset data = materialize_dataset(config);
  const SplitResult parts = materialize_split(config, data);
  const DatasetSchema& schema = data.schema;

  TrainConfig target_cfg = config.target;
  target_cfg.seed = derive_seed(master, "target");

  auto stage_model = [&](const std::string& path, const char* stage,
                         auto&& make) -> MlpClassifier {
    if (reuse_artifacts && fs::exists(path)) return load_model(path);
    if (reuse_artifacts && !run_missing)
      throw IoError("missing artifact " + path + "; run the '" + std::string(stage) +
                    "' stage first");
    MlpClassifier m = make();
    save_model(m, path);
    return m;
  };

  const bool defended = config.defense.kind != DefenseKind::kNone;
  MlpClassifier undefended = stage_model(
      defended ? undefended_model_path(dir) : target_model_path(dir), "train-target",
      [&] { return train(parts.train, target_cfg); });
  MlpClassifier deployed =
      defended ? stage_model(target_model_path(dir), "train-target",
                             [&] { return train_defended(parts.train, target_cfg,
                                                         config.defense); })
               : undefended;

  // Evaluation-only target labels for the extraction fidelity probe.
  const std::vector<int> probe_labels = deployed.predict(parts.neutral.samples);

  BoundaryEstimatorConfig estimator = config.mia.estimator;
  estimator.seed = derive_seed(master, "mia");

  std::vector<int> truths;
  truths.reserve(parts.membership_eval.size());
  for (std::uint8_t f : *parts.membership_eval.membership) truths.push_back(f);

  // Reference attack against the deployed target through an evaluation-only
  // path; the budgeted attack oracle is never involved.
  MiaThreshold target_thr;
  if (config.mia.manual_tau) {
    target_thr.tau = *config.mia.manual_tau;
    target_thr.source = MiaThreshold::Source::kManual;
  } else {
    target_thr = calibrate_threshold(deployed, schema, config.mia.n_cal, estimator,
                                     derive_seed(master, "calibrate-target"), &parts.aux);
  }
  const MiaResult target_mia =
      infer_membership(deployed, parts.membership_eval, target_thr, estimator);
  const RocResult target_roc = roc_auc(target_mia.distances, truths);
  const double target_attack_acc = attack_accuracy(target_mia.predicted, truths);
  write_mia_csv(dir + "/mia_target.csv", parts.membership_eval, target_mia);
  write_threshold_sidecar(dir + "/threshold_target.json", target_thr, estimator);
  write_roc_csv(dir + "/roc_target.csv", target_roc);

  ExperimentResult result;
  result.config_fingerprint = config.fingerprint();

  json manifest_stages;
  manifest_stages["config_fingerprint"] = result.config_fingerprint;
  manifest_stages["master_seed"] = master;
  manifest_stages["seed_target"] = target_cfg.seed;
  manifest_stages["seed_split"] = derive_seed(master, "split");
  manifest_stages["seed_data"] = derive_seed(master, "data");
  manifest_stages["seed_mia"] = estimator.seed;

  for (const std::int64_t budget : config.budgets) {
    const std::string model_path = surrogate_model_path(dir, budget);
    const std::string seen_path = surrogate_seen_path(dir, budget);
    SurrogateArtifact art;
    if (reuse_artifacts && fs::exists(model_path) && fs::exists(seen_path)) {
      art.model = load_model(model_path);
      art.seen = load_fingerprints(seen_path);
      art.spend = read_spend_from_history(history_path(dir, budget), &art.rounds);
    } else if (reuse_artifacts && !run_missing) {
      throw IoError("missing artifact " + model_path +
                    "; run the 'extract' stage for budget " + std::to_string(budget));
    } else {
      BudgetedOracle oracle(oracle_target(deployed), schema, budget,
                            /*reject_invalid=*/true);
      ExtractionConfig ext_cfg = config.extraction;
      ext_cfg.seed = derive_seed(master ^ static_cast<std::uint64_t>(budget), "extract");
      TrainConfig surr_cfg = config.surrogate;
      surr_cfg.seed = derive_seed(master ^ static_cast<std::uint64_t>(budget), "surrogate");
      FidelityProbe probe{&parts.neutral.samples, &probe_labels};
      ExtractionState state = extract(parts.aux, oracle, ext_cfg, surr_cfg, probe);
      art.model = state.surrogate;
      art.seen = std::move(state.seen);
      art.spend = state.queries_spent;
      art.rounds = state.rounds;
      save_model(art.model, model_path);
      save_fingerprints(seen_path, art.seen);
      write_history_jsonl(state.history, history_path(dir, budget));
    }

    MiaThreshold thr;
    if (config.mia.manual_tau) {
      thr.tau = *config.mia.manual_tau;
      thr.source = MiaThreshold::Source::kManual;
    } else {
      thr = calibrate_threshold(
          art.model, schema, config.mia.n_cal, estimator,
          derive_seed(master ^ static_cast<std::uint64_t>(budget), "calibrate-surrogate"),
          &parts.aux, &art.seen);
    }
    const MiaResult mia = infer_membership(art.model, parts.membership_eval, thr, estimator);
    const RocResult roc = roc_auc(mia.distances, truths);

    AttackReport report;
    report.budget = budget;
    report.query_spend = art.spend;
    report.rounds = art.rounds;
    report.fidelity_s_m = fidelity(art.model, undefended, parts.neutral);
    report.fidelity_s_mprime =
        defended ? fidelity(art.model, deployed, parts.neutral) : report.fidelity_s_m;
    report.fidelity_m_mprime = defended ? fidelity(undefended, deployed, parts.neutral) : 1.0;
    report.test_acc_s = accuracy(art.model, parts.neutral);
    report.test_acc_m = accuracy(undefended, parts.neutral);
    report.test_acc_mprime = accuracy(deployed, parts.neutral);
    report.attack_acc_s = attack_accuracy(mia.predicted, truths);
    report.attack_acc_target = target_attack_acc;
    report.auc_s = roc.auc;
    report.auc_target = target_roc.auc;
    report.tau_s = thr.tau;
    report.tau_target = target_thr.tau;
    report.roc_s = roc;
    report.roc_target = target_roc;

    const std::string suffix = std::to_string(budget);
    write_mia_csv(dir + "/mia_surrogate_" + suffix + ".csv", parts.membership_eval, mia);
    write_threshold_sidecar(dir + "/threshold_surrogate_" + suffix + ".json", thr, estimator);
    write_roc_csv(dir + "/roc_surrogate_" + suffix + ".csv", roc);

    manifest_stages["surrogate_" + suffix] =
        json{{"model_hash", file_fingerprint(model_path)},
             {"spend", art.spend},
             {"rounds", art.rounds},
             {"seed_extract",
              derive_seed(master ^ static_cast<std::uint64_t>(budget), "extract")}};

    result.reports.push_back(std::move(report));
  }

  write_budget_table(dir + "/table2.csv", result.reports);

  json report_json;
  report_json["config"] = config.to_json();
  report_json["config_fingerprint"] = result.config_fingerprint;
  json rows = json::array();
  for (const AttackReport& r : result.reports) rows.push_back(r.to_json());
  report_json["budgets"] = std::move(rows);
  std::ofstream report_out(dir + "/report.json");
  if (!report_out) throw IoError("report: cannot write " + dir + "/report.json");
  report_out << report_json.dump(2) << '\n';

  manifest_stages["target_model_hash"] = file_fingerprint(target_model_path(dir));
  update_manifest(dir, manifest_stages);
  return result;
}

void write_budget_table(const std::string& path, const std::vector<AttackReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot write " + path);
  out << "budget,query_spend,rounds,fidelity_s_target,test_acc_s,attack_acc_s,auc_s,"
         "test_acc_target,attack_acc_target,auc_target\n";
  for (const AttackReport& r : reports) {
    out << r.budget << ',' << r.query_spend << ',' << r.rounds << ',' << r.fidelity_s_mprime
        << ',' << r.test_acc_s << ',' << r.attack_acc_s << ',' << r.auc_s << ','
        << r.test_acc_mprime << ',' << r.attack_acc_target << ',' << r.auc_target << '\n';
  }
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot write " + path);
  out << "fpr,tpr,tau\n";
  for (const RocPoint& p : roc.points)
    out << p.fpr << ',' << p.tpr << ',' << p.tau << '\n';
}

namespace {

std::string defense_setting(const DefenseSpec& d) {
  char buf[32];
  switch (d.kind) {
    case DefenseKind::kNone:
      return "-";
    case DefenseKind::kDropout:
      std::snprintf(buf, sizeof(buf), "p=%g", d.dropout_p);
      return buf;
    case DefenseKind::kL2:
      std::snprintf(buf, sizeof(buf), "lambda=%g", d.l2_lambda);
      return buf;
    case DefenseKind::kDpSgd:
      std::snprintf(buf, sizeof(buf), "eps=%g", d.dp_target_epsilon);
      return buf;
  }
  return "?";
}

}  // namespace

FullReport run_full_report(const ExperimentConfig& config, bool reuse_artifacts,
                           bool run_missing) {
  FullReport out;
  out.main = run_experiment(config, reuse_artifacts, run_missing);
  if (config.defense_grid.empty()) return out;
  if (config.defense.kind != DefenseKind::kNone)
    throw ConfigError("report: a defense grid requires the main defense to be 'none'");

  const std::int64_t budget_d =
      config.defense_budget > 0 ? config.defense_budget : config.budgets.back();

  // Undefended reference row.
  DefenseRow base;
  base.kind = "none";
  base.setting = "-";
  base.defended = false;
  const AttackReport* main_at_budget = nullptr;
  for (const AttackReport& r : out.main.reports)
    if (r.budget == budget_d) main_at_budget = &r;
  if (main_at_budget != nullptr) {
    base.report = *main_at_budget;
  } else {
    ExperimentConfig sub = config;
    sub.defense_grid.clear();
    sub.budgets = {budget_d};
    sub.defense_budget = 0;
    sub.output_dir = config.output_dir + "/defenses/none";
    base.report = run_experiment(sub, reuse_artifacts, run_missing).reports.front();
  }
  out.defenses.push_back(std::move(base));

  for (const DefenseSpec& d : config.defense_grid) {
    ExperimentConfig sub = config;
    sub.defense = d;
    sub.defense_grid.clear();
    sub.budgets = {budget_d};
    sub.defense_budget = 0;
    sub.output_dir = config.output_dir + "/defenses/" + defense_slug(d);
    DefenseRow row;
    row.kind = to_string(d.kind);
    row.setting = defense_setting(d);
    row.defended = true;
    row.report = run_experiment(sub, reuse_artifacts, run_missing).reports.front();
    out.defenses.push_back(std::move(row));
  }
  write_defense_table(config.output_dir + "/table3.csv", out.defenses);
  return out;
}

void write_defense_table(const std::string& path, const std::vector<DefenseRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot write " + path);
  out << "defense,setting,fidelity_m_mprime,test_acc_mprime,attack_acc_mprime,auc_mprime,"
         "fidelity_s_m,fidelity_s_mprime,test_acc_s,attack_acc_s,auc_s\n";
  for (const DefenseRow& row : rows) {
    const AttackReport& r = row.report;
    out << row.kind << ',' << row.setting << ',';
    if (row.defended)
      out << r.fidelity_m_mprime;
    out << ',' << r.test_acc_mprime << ',' << r.attack_acc_target << ',' << r.auc_target
        << ',' << r.fidelity_s_m << ',' << r.fidelity_s_mprime << ',' << r.test_acc_s << ','
        << r.attack_acc_s << ',' << r.auc_s << '\n';
  }
}

}  // namespace exfilt
