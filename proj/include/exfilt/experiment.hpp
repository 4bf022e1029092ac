#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exfilt/dataset.hpp"
#include "exfilt/defenses.hpp"
#include "exfilt/extraction.hpp"
#include "exfilt/metrics.hpp"
#include "exfilt/mia.hpp"
#include "exfilt/mlp.hpp"

namespace exfilt {

struct DatasetSpec {
  bool synthetic = true;
  DatasetSchema schema;
  std::size_t rows = 0;        // synthetic only
  double class_sep = 0.5;      // synthetic only
  std::string csv_path;        // csv only
};

struct MiaStageConfig {
  BoundaryEstimatorConfig estimator;
  std::size_t n_cal = 100;
  std::optional<double> manual_tau;
};

// Everything needed to reproduce a full attack experiment bit-exactly.
// master_seed deterministically derives every stage seed.
struct ExperimentConfig {
  DatasetSpec dataset;
  SplitSpec split;
  TrainConfig target;
  TrainConfig surrogate;
  DefenseSpec defense;
  std::vector<DefenseSpec> defense_grid;
  ExtractionConfig extraction;
  MiaStageConfig mia;
  std::vector<std::int64_t> budgets;
  std::int64_t defense_budget = 0;  // 0 = last entry of budgets
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  std::uint64_t fingerprint() const;
};

// Attack outcome for one query budget.
struct AttackReport {
  std::int64_t budget = 0;
  std::int64_t query_spend = 0;
  int rounds = 0;
  double fidelity_s_m = 0.0;        // surrogate vs undefended target
  double fidelity_s_mprime = 0.0;   // surrogate vs deployed (defended) target
  double fidelity_m_mprime = 1.0;
  double test_acc_s = 0.0;
  double test_acc_m = 0.0;
  double test_acc_mprime = 0.0;
  double attack_acc_s = 0.0;
  double attack_acc_target = 0.0;
  double auc_s = 0.0;
  double auc_target = 0.0;
  double tau_s = 0.0;
  double tau_target = 0.0;
  RocResult roc_s;
  RocResult roc_target;

  nlohmann::json to_json() const;
};

struct ExperimentResult {
  std::vector<AttackReport> reports;  // one per budget
  std::uint64_t config_fingerprint = 0;
};

// Runs target training, extraction per budget, and membership inference on
// both the surrogate and the deployed target (the latter through an
// evaluation-only path that never touches the attack budget). Artifacts are
// persisted under config.output_dir; with reuse_artifacts they are loaded
// when present, and with run_missing absent stages are computed. When both
// are false every stage runs fresh.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                bool reuse_artifacts = false, bool run_missing = true);

// Deterministic dataset + split from the config's master seed.
TabularDataset materialize_dataset(const ExperimentConfig& config);
SplitResult materialize_split(const ExperimentConfig& config, const TabularDataset& data);

// Report files consumed by downstream plotting: per-budget metric rows, the
// defense grid, and per-model ROC curves.
void write_budget_table(const std::string& path, const std::vector<AttackReport>& reports);
void write_roc_csv(const std::string& path, const RocResult& roc);

struct DefenseRow {
  std::string kind;
  std::string setting;
  bool defended = false;
  AttackReport report;
};

void write_defense_table(const std::string& path, const std::vector<DefenseRow>& rows);

struct FullReport {
  ExperimentResult main;
  std::vector<DefenseRow> defenses;  // empty when the config has no defense grid
};

// Budget sweep plus, when the config carries a defense grid, one pipeline per
// defense at defense_budget. Emits table2.csv / table3.csv / roc CSVs under
// output_dir; defended pipelines use per-defense subdirectories.
FullReport run_full_report(const ExperimentConfig& config, bool reuse_artifacts = false,
                           bool run_missing = true);

// Artifact naming shared by the CLI subcommands.
std::string target_model_path(const std::string& dir);
std::string undefended_model_path(const std::string& dir);
std::string surrogate_model_path(const std::string& dir, std::int64_t budget);
std::string surrogate_seen_path(const std::string& dir, std::int64_t budget);
std::string history_path(const std::string& dir, std::int64_t budget);

void save_fingerprints(const std::string& path, const std::unordered_set<std::uint64_t>& seen);
std::unordered_set<std::uint64_t> load_fingerprints(const std::string& path);

// Merge key/value entries into <dir>/manifest.json, creating it on demand.
void update_manifest(const std::string& dir, const nlohmann::json& entries);

std::uint64_t file_fingerprint(const std::string& path);

}  // namespace exfilt
