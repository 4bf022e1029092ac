#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exfilt/matrix.hpp"
#include "exfilt/schema.hpp"

namespace exfilt {

// Immutable-after-construction sample matrix with labels and (optionally)
// ground-truth membership flags for attack evaluation.
struct TabularDataset {
  Matrix samples;
  std::vector<int> labels;
  std::optional<std::vector<std::uint8_t>> membership;
  DatasetSchema schema;

  std::size_t size() const { return samples.rows(); }
  void validate() const;
  TabularDataset take(const std::vector<std::size_t>& idx) const;
};

struct SplitSpec {
  std::size_t train_size = 0;     // |D_M|
  std::size_t aux_size = 0;       // |D_A|
  std::size_t neutral_size = 0;   // |D_N|
  std::size_t mem_members = 0;
  std::size_t mem_nonmembers = 0;
  std::uint64_t seed = 0;
};

struct SplitResult {
  TabularDataset train;            // model-owner training data
  TabularDataset aux;              // attacker bootstrap pool, disjoint from train
  TabularDataset neutral;          // fidelity / test evaluation set
  TabularDataset membership_eval;  // flagged member/non-member mix
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> aux_indices;
  std::vector<std::size_t> neutral_indices;
  std::vector<std::size_t> member_indices;      // subset of train_indices
  std::vector<std::size_t> nonmember_indices;   // disjoint from train_indices
};

SplitResult split(const TabularDataset& data, const SplitSpec& spec);

// Balanced synthetic classification task over binary features: one random
// prototype per class, rows copy their prototype with independent bit flips
// of probability (1 - class_sep) / 2.
TabularDataset synth_generate(const DatasetSchema& schema, std::size_t n_rows,
                              double class_sep, std::uint64_t seed);

// CSV with header "f0,...,f{n-1},label[,member]". Round-trips doubles exactly.
TabularDataset load_csv(const std::string& path, const DatasetSchema& schema);
void write_csv(const TabularDataset& data, const std::string& path);

// Spread of the per-row active-feature fraction; usable as a flip-probability
// heuristic when nothing better is known for a binary dataset.
double estimate_flip_prob(const TabularDataset& data);

// Re-runnable experiment provenance for a split (JSON).
void write_dataset_manifest(const std::string& path, const DatasetSchema& schema,
                            const std::string& source, const SplitSpec& spec);

}  // namespace exfilt
