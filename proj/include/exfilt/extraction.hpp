#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "exfilt/dataset.hpp"
#include "exfilt/mlp.hpp"
#include "exfilt/oracle.hpp"

namespace exfilt {

// Knobs for the iterative extraction loop. candidate_count is the entropy
// selection size; each round queries ceil(cluster_keep_frac * loss_keep_frac *
// candidate_count) samples.
struct ExtractionConfig {
  int augment_factor = 4;
  double flip_prob = 0.1;                 // binary features: Bernoulli flip rate
  std::vector<double> continuous_noise;   // per-feature sigma; empty = estimate from pool
  std::size_t candidate_count = 1000;
  double cluster_keep_frac = 0.5;
  double loss_keep_frac = 0.5;
  int cluster_count = 0;     // 0 = one cluster per class
  std::size_t anchor_count = 0;  // 0 = same as the per-round query count
  std::optional<double> fidelity_target;
  int max_rounds = 0;        // 0 = run until the budget is exhausted
  std::uint64_t seed = 0;
  int dup_retry_limit = 16;

  std::size_t cluster_select_size() const;  // ceil(g1 * B)
  std::size_t query_select_size() const;    // ceil(g1 * g2 * B)
  void validate(int n_classes) const;
};

struct RoundRecord {
  int round = 0;
  std::size_t pool_size = 0;
  std::size_t pool_dropped = 0;   // rows discarded after duplicate retries
  std::size_t entropy_selected = 0;
  std::size_t cluster_selected = 0;
  std::size_t queried = 0;
  std::int64_t spent_after = 0;
  std::optional<double> probe_fidelity;
  bool cluster_fallback = false;    // not enough rows to cluster
  bool anchors_degenerate = false;  // all stored-label losses were zero
};

struct ExtractionState {
  MlpClassifier surrogate;
  TabularDataset labeled_pool;   // attacker-side samples with oracle labels
  int rounds = 0;
  std::int64_t queries_spent = 0;
  std::unordered_set<std::uint64_t> seen;
  std::vector<RoundRecord> history;
};

// Optional fidelity probe: target labels on a held-out set, evaluated outside
// the query budget.
struct FidelityProbe {
  const Matrix* samples = nullptr;
  const std::vector<int>* target_labels = nullptr;
};

ExtractionState bootstrap(const TabularDataset& aux, LabelOracle& oracle,
                          const TrainConfig& train_config);

// Perturbed copies of the bootstrap set, deduplicated against everything the
// attacker has already labeled. May return fewer than augment_factor * |aux|
// rows; the shortfall is reported through RoundRecord::pool_dropped.
Matrix build_query_pool(const ExtractionState& state, const TabularDataset& aux,
                        const ExtractionConfig& config, int round,
                        std::size_t* dropped = nullptr);

// Row indices of the `take` highest predictive-entropy rows (natural log),
// ties to the lower index.
std::vector<std::size_t> entropy_select(const Matrix& pool, const MlpClassifier& surrogate,
                                        std::size_t take);

// Refine by k-means over input-space entropy gradients, then round-robin over
// clusters taking nearest-to-center points first. Falls back to entropy order
// when there are fewer candidates than clusters.
std::vector<std::size_t> gradient_cluster_select(const Matrix& pool,
                                                 const std::vector<std::size_t>& candidates,
                                                 const MlpClassifier& surrogate,
                                                 std::size_t take, int k_clusters,
                                                 std::uint64_t seed, bool* fell_back = nullptr);

// Keep the rows closest (summed squared distance) to the highest-loss stored
// samples; losses use stored oracle labels, never new queries.
std::vector<std::size_t> loss_proximity_select(const Matrix& pool,
                                               const std::vector<std::size_t>& candidates,
                                               const ExtractionState& state,
                                               std::size_t take, std::size_t anchor_count,
                                               bool* degenerate = nullptr);

ExtractionState extract(const TabularDataset& aux, LabelOracle& oracle,
                        const ExtractionConfig& config, const TrainConfig& train_config,
                        const FidelityProbe& probe = {});

double predictive_entropy(std::span<const double> probs);

// d(entropy)/d(input) for each row, computed analytically through the network.
Matrix entropy_input_gradients(const MlpClassifier& model, const Matrix& rows);

void write_history_jsonl(const std::vector<RoundRecord>& history, const std::string& path);

}  // namespace exfilt
