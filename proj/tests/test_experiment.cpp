#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "exfilt/errors.hpp"
#include "exfilt/experiment.hpp"

using namespace exfilt;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& dir) {
  ExperimentConfig cfg;
  cfg.dataset.synthetic = true;
  cfg.dataset.schema = DatasetSchema::binary(20, 3);
  cfg.dataset.rows = 400;
  cfg.dataset.class_sep = 0.3;
  cfg.split.train_size = 120;
  cfg.split.aux_size = 30;
  cfg.split.neutral_size = 80;
  cfg.split.mem_members = 40;
  cfg.split.mem_nonmembers = 40;
  cfg.target.epochs = 30;
  cfg.target.batch_size = 32;
  cfg.target.hidden = 16;
  cfg.surrogate = cfg.target;
  cfg.surrogate.epochs = 10;
  cfg.extraction.augment_factor = 4;
  cfg.extraction.flip_prob = 0.15;
  cfg.extraction.candidate_count = 60;
  cfg.extraction.cluster_keep_frac = 0.5;
  cfg.extraction.loss_keep_frac = 0.5;   // 15 queries per round
  cfg.mia.estimator.method = BoundaryMethod::kLabelOnlyHsj;
  cfg.mia.estimator.max_model_evals = 300;
  cfg.mia.estimator.init_trials = 20;
  cfg.mia.estimator.grad_samples = 12;
  cfg.mia.n_cal = 12;
  cfg.budgets = {60};
  cfg.output_dir = dir;
  cfg.master_seed = 99;
  return cfg;
}

std::string fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("config JSON round-trips with a stable fingerprint") {
  const ExperimentConfig cfg = tiny_config("cfg_dir");
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.fingerprint() == cfg.fingerprint());
  CHECK(back.budgets == cfg.budgets);
  CHECK(back.split.train_size == cfg.split.train_size);
  CHECK(back.extraction.candidate_count == cfg.extraction.candidate_count);
  CHECK(back.mia.n_cal == cfg.mia.n_cal);
}

TEST_CASE("config validation rejects bad budgets and infeasible aux coverage") {
  ExperimentConfig cfg = tiny_config("cfg_dir2");
  cfg.budgets = {100, 100};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.budgets = {10};  // below |aux| = 30
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("bootstrap-only experiment populates every report field") {
  const std::string dir = fresh_dir("exfilt_exp_zero");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.budgets = {30};  // exactly the bootstrap labels; zero extraction rounds

  const ExperimentResult result = run_experiment(cfg);
  REQUIRE(result.reports.size() == 1);
  const AttackReport& r = result.reports.front();
  CHECK(r.budget == 30);
  CHECK(r.query_spend == 30);
  CHECK(r.rounds == 0);
  for (double v : {r.fidelity_s_m, r.test_acc_s, r.test_acc_m, r.attack_acc_s,
                   r.attack_acc_target, r.auc_s, r.auc_target, r.tau_s, r.tau_target})
    CHECK(std::isfinite(v));
  CHECK(r.fidelity_s_m >= 0.0);
  CHECK(r.fidelity_s_m <= 1.0);
  CHECK(r.auc_s >= 0.0);
  CHECK(r.auc_s <= 1.0);

  for (const char* name :
       {"/table2.csv", "/report.json", "/manifest.json", "/roc_target.csv",
        "/roc_surrogate_30.csv", "/mia_target.csv", "/mia_surrogate_30.csv",
        "/history_30.jsonl", "/target.mlp", "/surrogate_30.mlp"})
    CHECK(fs::exists(dir + name));
  fs::remove_all(dir);
}

TEST_CASE("identical configs reproduce identical reports") {
  const std::string dir = fresh_dir("exfilt_exp_repro");
  const ExperimentConfig cfg = tiny_config(dir);
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(cfg);  // fresh recompute, same dir
  REQUIRE(a.reports.size() == b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(a.reports[i].to_json() == b.reports[i].to_json());
  }
  CHECK(a.config_fingerprint == b.config_fingerprint);
  fs::remove_all(dir);
}

TEST_CASE("artifact reuse is idempotent and missing stages are named") {
  const std::string dir = fresh_dir("exfilt_exp_reuse");
  const ExperimentConfig cfg = tiny_config(dir);

  // Without artifacts and with run_missing off, the error names the stage.
  CHECK_THROWS_WITH_AS(run_experiment(cfg, /*reuse=*/true, /*run_missing=*/false),
                       doctest::Contains("train-target"), IoError);

  const ExperimentResult fresh = run_experiment(cfg);
  const ExperimentResult reused = run_experiment(cfg, /*reuse=*/true, /*run_missing=*/false);
  REQUIRE(reused.reports.size() == fresh.reports.size());
  CHECK(reused.reports[0].to_json() == fresh.reports[0].to_json());
  fs::remove_all(dir);
}

TEST_CASE("defense grid emits a table3 with the undefended reference row") {
  const std::string dir = fresh_dir("exfilt_exp_grid");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.target.epochs = 15;
  cfg.surrogate.epochs = 6;
  DefenseSpec dropout;
  dropout.kind = DefenseKind::kDropout;
  dropout.dropout_p = 0.4;
  cfg.defense_grid = {dropout};

  const FullReport report = run_full_report(cfg);
  REQUIRE(report.defenses.size() == 2);
  CHECK(report.defenses[0].kind == "none");
  CHECK_FALSE(report.defenses[0].defended);
  CHECK(report.defenses[1].kind == "dropout");
  CHECK(report.defenses[1].defended);
  CHECK(report.defenses[1].report.fidelity_m_mprime < 1.0 + 1e-12);
  CHECK(fs::exists(dir + "/table3.csv"));
  CHECK(fs::exists(dir + "/defenses/dropout_p_0.4_/target.mlp"));

  std::ifstream in(dir + "/table3.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.find("auc_s") != std::string::npos);
  fs::remove_all(dir);
}
