#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exfilt/dataset.hpp"
#include "exfilt/matrix.hpp"
#include "exfilt/rng.hpp"

namespace exfilt {

// Differentially private training knobs (per-sample clipping + Gaussian noise).
struct DpConfig {
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;     // resolved from target_epsilon when 0
  double delta = 1e-5;
  std::optional<double> target_epsilon;

  void validate() const;
};

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  double weight_decay = 1e-7;        // AdamW decoupled decay
  int batch_size = 100;
  double dropout_p = 0.0;            // hidden layer only, training only
  double l2_lambda = 0.0;            // explicit gradient penalty on weights
  std::optional<DpConfig> dp;
  std::uint64_t seed = 0;
  int hidden = 128;
  bool warm_start = false;           // reuse existing parameters in retrain()

  void validate() const;
};

// Single-hidden-layer tanh classifier: n_j -> hidden -> n_c with softmax
// outputs. Ties in predict() resolve to the lowest class index.
struct MlpClassifier {
  Matrix w1;               // hidden x n_j
  std::vector<double> b1;  // hidden
  Matrix w2;               // n_c x hidden
  std::vector<double> b2;  // n_c

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t class_count() const { return w2.rows(); }

  static MlpClassifier init(std::size_t n_j, int n_c, int hidden, Rng& rng);

  Matrix predict_proba(const Matrix& batch) const;
  std::vector<int> predict(const Matrix& batch) const;
  int predict_one(std::span<const double> x) const;
  std::vector<double> logits_one(std::span<const double> x) const;

  bool all_finite() const;
  bool operator==(const MlpClassifier& o) const = default;
};

// Activations recorded by forward() for the matching backward() call.
struct ForwardCache {
  Matrix input;         // batch x n_j
  Matrix hidden;        // tanh outputs before dropout, batch x hidden
  Matrix hidden_kept;   // after dropout mask/scale (== hidden when p = 0)
  Matrix probs;         // batch x n_c
  double dropout_p = 0.0;
  std::vector<std::uint8_t> mask;  // batch*hidden, 1 = kept (empty when p = 0)
};

struct Gradients {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;

  static Gradients zeros_like(const MlpClassifier& m);
  double squared_norm() const;
  void scale(double s);
  void add_scaled(const Gradients& other, double s);
};

// Adam moment estimates plus the global step counter (bias correction starts
// at step 1).
struct AdamState {
  Gradients m;
  Gradients v;
  std::int64_t step = 0;

  static AdamState zeros_like(const MlpClassifier& m);
};

Matrix forward(const MlpClassifier& model, const Matrix& batch, double dropout_p,
               Rng* rng, ForwardCache* cache);

// Gradients of mean softmax cross-entropy over the batch.
Gradients backward(const MlpClassifier& model, const ForwardCache& cache,
                   const std::vector<int>& labels);

// One gradient record per batch row (same loss scaled by batch size so that
// the mean of the records equals the batch gradient).
std::vector<Gradients> per_sample_gradients(const MlpClassifier& model,
                                            const ForwardCache& cache,
                                            const std::vector<int>& labels);

double mean_cross_entropy(const Matrix& probs, const std::vector<int>& labels);

void adamw_step(MlpClassifier& model, AdamState& state, const Gradients& grads,
                const TrainConfig& config);

// Clip each record to clip_norm, sum, add N(0, (noise_multiplier*clip_norm)^2)
// per coordinate, then divide by the record count.
Gradients dp_aggregate(const std::vector<Gradients>& per_sample, const DpConfig& dp,
                       Rng& rng);

void dp_sgd_step(MlpClassifier& model, AdamState& state,
                 const std::vector<Gradients>& per_sample, const DpConfig& dp,
                 const TrainConfig& config, Rng& rng);

MlpClassifier train(const TabularDataset& data, const TrainConfig& config);

// Like train() but reuses `start` as the initial parameters (warm start).
MlpClassifier retrain(const MlpClassifier& start, const TabularDataset& data,
                      const TrainConfig& config);

// "mlp-v1" flat binary format: magic, n_j/n_c/hidden header, then row-major
// w1, b1, w2, b2 as little-endian 64-bit floats.
void save_model(const MlpClassifier& model, const std::string& path);
MlpClassifier load_model(const std::string& path);

}  // namespace exfilt
