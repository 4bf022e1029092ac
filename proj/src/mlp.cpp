#include "exfilt/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "exfilt/dp_accountant.hpp"
#include "exfilt/errors.hpp"

namespace exfilt {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void softmax_rows(Matrix& logits) {
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double* row = logits.row(i);
    double max_v = row[0];
    for (std::size_t j = 1; j < logits.cols(); ++j) max_v = std::max(max_v, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      row[j] = std::exp(row[j] - max_v);
      sum += row[j];
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) row[j] /= sum;
  }
}

int argmax_lowest(const double* row, std::size_t n) {
  int best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = static_cast<int>(j);
  return best;
}

bool finite_range(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

void adam_update_span(double* param, double* m, double* v, const double* g,
                      std::size_t n, double lr, double decay, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    param[i] *= 1.0 - lr * decay;  // decoupled decay before the Adam update
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
    v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
  }
}

}  // namespace

void DpConfig::validate() const {
  if (clip_norm <= 0.0) throw ConfigError("dp: clip_norm must be positive");
  if (noise_multiplier <= 0.0 && !target_epsilon)
    throw ConfigError("dp: noise_multiplier must be positive (or set target_epsilon)");
  if (delta <= 0.0 || delta >= 1.0) throw ConfigError("dp: delta must lie in (0, 1)");
  if (target_epsilon && *target_epsilon <= 0.0)
    throw ConfigError("dp: target_epsilon must be positive");
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train: epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
  if (hidden <= 0) throw ConfigError("train: hidden width must be positive");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("train: dropout_p must lie in [0, 1)");
  if (l2_lambda < 0.0) throw ConfigError("train: l2_lambda must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (dp) dp->validate();
}

MlpClassifier MlpClassifier::init(std::size_t n_j, int n_c, int hidden, Rng& rng) {
  MlpClassifier m;
  m.w1 = Matrix(hidden, n_j);
  m.b1.assign(hidden, 0.0);
  m.w2 = Matrix(n_c, hidden);
  m.b2.assign(n_c, 0.0);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(n_j));
  for (std::size_t i = 0; i < m.w1.rows(); ++i)
    for (std::size_t j = 0; j < m.w1.cols(); ++j) m.w1(i, j) = rng.uniform(-bound1, bound1);
  for (double& b : m.b1) b = rng.uniform(-bound1, bound1);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < m.w2.rows(); ++i)
    for (std::size_t j = 0; j < m.w2.cols(); ++j) m.w2(i, j) = rng.uniform(-bound2, bound2);
  for (double& b : m.b2) b = rng.uniform(-bound2, bound2);
  return m;
}

Matrix forward(const MlpClassifier& model, const Matrix& batch, double dropout_p,
               Rng* rng, ForwardCache* cache) {
  if (batch.cols() != model.input_dim())
    throw SchemaError("forward: batch width " + std::to_string(batch.cols()) +
                      " does not match model input " + std::to_string(model.input_dim()));
  const std::size_t n = batch.rows();
  const std::size_t h = model.hidden_dim();

  Matrix hidden;
  matmul_nt(batch, model.w1, hidden);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = hidden.row(i);
    for (std::size_t j = 0; j < h; ++j) row[j] = std::tanh(row[j] + model.b1[j]);
  }

  Matrix kept = hidden;
  std::vector<std::uint8_t> mask;
  if (dropout_p > 0.0) {
    if (rng == nullptr) throw ConfigError("forward: dropout requires a generator");
    mask.resize(n * h);
    const double keep_scale = 1.0 / (1.0 - dropout_p);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = kept.row(i);
      for (std::size_t j = 0; j < h; ++j) {
        const bool keep = !rng->bernoulli(dropout_p);
        mask[i * h + j] = keep ? 1 : 0;
        row[j] = keep ? row[j] * keep_scale : 0.0;
      }
    }
  }

  Matrix probs;
  matmul_nt(kept, model.w2, probs);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = probs.row(i);
    for (std::size_t j = 0; j < probs.cols(); ++j) row[j] += model.b2[j];
  }
  softmax_rows(probs);

  if (cache != nullptr) {
    cache->input = batch;
    cache->hidden = std::move(hidden);
    cache->hidden_kept = std::move(kept);
    cache->probs = probs;
    cache->dropout_p = dropout_p;
    cache->mask = std::move(mask);
  }
  return probs;
}

Matrix MlpClassifier::predict_proba(const Matrix& batch) const {
  return forward(*this, batch, 0.0, nullptr, nullptr);
}

std::vector<int> MlpClassifier::predict(const Matrix& batch) const {
  const Matrix probs = predict_proba(batch);
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    out[i] = argmax_lowest(probs.row(i), probs.cols());
  return out;
}

int MlpClassifier::predict_one(std::span<const double> x) const {
  const std::vector<double> z = logits_one(x);
  return argmax_lowest(z.data(), z.size());
}

std::vector<double> MlpClassifier::logits_one(std::span<const double> x) const {
  if (x.size() != input_dim()) throw SchemaError("predict: sample width mismatch");
  const std::size_t h = hidden_dim();
  std::vector<double> act(h);
  for (std::size_t i = 0; i < h; ++i)
    act[i] = std::tanh(dot({w1.row(i), w1.cols()}, x) + b1[i]);
  std::vector<double> z(class_count());
  for (std::size_t c = 0; c < z.size(); ++c)
    z[c] = dot({w2.row(c), w2.cols()}, {act.data(), act.size()}) + b2[c];
  return z;
}

bool MlpClassifier::all_finite() const {
  return finite_range(w1.data(), w1.rows() * w1.cols()) &&
         finite_range(b1.data(), b1.size()) &&
         finite_range(w2.data(), w2.rows() * w2.cols()) &&
         finite_range(b2.data(), b2.size());
}

Gradients Gradients::zeros_like(const MlpClassifier& m) {
  Gradients g;
  g.w1 = Matrix(m.w1.rows(), m.w1.cols());
  g.b1.assign(m.b1.size(), 0.0);
  g.w2 = Matrix(m.w2.rows(), m.w2.cols());
  g.b2.assign(m.b2.size(), 0.0);
  return g;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (double v : w1.storage()) s += v * v;
  for (double v : b1) s += v * v;
  for (double v : w2.storage()) s += v * v;
  for (double v : b2) s += v * v;
  return s;
}

void Gradients::scale(double s) {
  for (double& v : w1.storage()) v *= s;
  for (double& v : b1) v *= s;
  for (double& v : w2.storage()) v *= s;
  for (double& v : b2) v *= s;
}

void Gradients::add_scaled(const Gradients& other, double s) {
  for (std::size_t i = 0; i < w1.storage().size(); ++i)
    w1.storage()[i] += s * other.w1.storage()[i];
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += s * other.b1[i];
  for (std::size_t i = 0; i < w2.storage().size(); ++i)
    w2.storage()[i] += s * other.w2.storage()[i];
  for (std::size_t i = 0; i < b2.size(); ++i) b2[i] += s * other.b2[i];
}

AdamState AdamState::zeros_like(const MlpClassifier& m) {
  AdamState s;
  s.m = Gradients::zeros_like(m);
  s.v = Gradients::zeros_like(m);
  s.step = 0;
  return s;
}

Gradients backward(const MlpClassifier& model, const ForwardCache& cache,
                   const std::vector<int>& labels) {
  const std::size_t n = cache.probs.rows();
  if (labels.size() != n) throw SchemaError("backward: label count mismatch");
  if (cache.input.rows() != n || cache.hidden.rows() != n)
    throw Error("backward: stale or mismatched forward cache");
  const std::size_t h = model.hidden_dim();
  const double inv_n = 1.0 / static_cast<double>(n);

  // dL/dlogits for mean cross-entropy.
  Matrix dz2 = cache.probs;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = dz2.row(i);
    row[labels[i]] -= 1.0;
    for (std::size_t c = 0; c < dz2.cols(); ++c) row[c] *= inv_n;
  }

  Gradients g = Gradients::zeros_like(model);
  matmul_tn(dz2, cache.hidden_kept, g.w2);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = dz2.row(i);
    for (std::size_t c = 0; c < dz2.cols(); ++c) g.b2[c] += row[c];
  }

  Matrix dkept;
  matmul_nn(dz2, model.w2, dkept);
  // Through dropout (mask + scale), then the tanh derivative.
  if (cache.dropout_p > 0.0) {
    const double keep_scale = 1.0 / (1.0 - cache.dropout_p);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = dkept.row(i);
      for (std::size_t j = 0; j < h; ++j)
        row[j] = cache.mask[i * h + j] ? row[j] * keep_scale : 0.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double* row = dkept.row(i);
    const double* act = cache.hidden.row(i);
    for (std::size_t j = 0; j < h; ++j) row[j] *= 1.0 - act[j] * act[j];
  }

  matmul_tn(dkept, cache.input, g.w1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = dkept.row(i);
    for (std::size_t j = 0; j < h; ++j) g.b1[j] += row[j];
  }
  return g;
}

std::vector<Gradients> per_sample_gradients(const MlpClassifier& model,
                                            const ForwardCache& cache,
                                            const std::vector<int>& labels) {
  const std::size_t n = cache.probs.rows();
  if (labels.size() != n) throw SchemaError("per_sample_gradients: label count mismatch");
  const std::size_t h = model.hidden_dim();
  const std::size_t n_c = model.class_count();
  std::vector<Gradients> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Gradients& g = out[i];
    g = Gradients::zeros_like(model);
    std::vector<double> dz2(n_c);
    for (std::size_t c = 0; c < n_c; ++c) dz2[c] = cache.probs(i, c);
    dz2[labels[i]] -= 1.0;

    const double* kept = cache.hidden_kept.row(i);
    for (std::size_t c = 0; c < n_c; ++c) {
      double* wrow = g.w2.row(c);
      for (std::size_t j = 0; j < h; ++j) wrow[j] = dz2[c] * kept[j];
      g.b2[c] = dz2[c];
    }

    std::vector<double> dh(h, 0.0);
    for (std::size_t c = 0; c < n_c; ++c) {
      const double* wrow = model.w2.row(c);
      for (std::size_t j = 0; j < h; ++j) dh[j] += dz2[c] * wrow[j];
    }
    if (cache.dropout_p > 0.0) {
      const double keep_scale = 1.0 / (1.0 - cache.dropout_p);
      for (std::size_t j = 0; j < h; ++j)
        dh[j] = cache.mask[i * h + j] ? dh[j] * keep_scale : 0.0;
    }
    const double* act = cache.hidden.row(i);
    const double* x = cache.input.row(i);
    for (std::size_t j = 0; j < h; ++j) {
      const double dz1 = dh[j] * (1.0 - act[j] * act[j]);
      double* wrow = g.w1.row(j);
      for (std::size_t k = 0; k < model.input_dim(); ++k) wrow[k] = dz1 * x[k];
      g.b1[j] = dz1;
    }
  }
  return out;
}

double mean_cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i)
    loss -= std::log(std::max(probs(i, labels[i]), 1e-300));
  return loss / static_cast<double>(probs.rows());
}

void adamw_step(MlpClassifier& model, AdamState& state, const Gradients& grads,
                const TrainConfig& config) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  adam_update_span(model.w1.data(), state.m.w1.data(), state.v.w1.data(), grads.w1.data(),
                   model.w1.rows() * model.w1.cols(), config.learning_rate,
                   config.weight_decay, bc1, bc2);
  adam_update_span(model.b1.data(), state.m.b1.data(), state.v.b1.data(), grads.b1.data(),
                   model.b1.size(), config.learning_rate, config.weight_decay, bc1, bc2);
  adam_update_span(model.w2.data(), state.m.w2.data(), state.v.w2.data(), grads.w2.data(),
                   model.w2.rows() * model.w2.cols(), config.learning_rate,
                   config.weight_decay, bc1, bc2);
  adam_update_span(model.b2.data(), state.m.b2.data(), state.v.b2.data(), grads.b2.data(),
                   model.b2.size(), config.learning_rate, config.weight_decay, bc1, bc2);
}

Gradients dp_aggregate(const std::vector<Gradients>& per_sample, const DpConfig& dp,
                       Rng& rng) {
  dp.validate();
  if (dp.noise_multiplier <= 0.0)
    throw ConfigError("dp_aggregate: noise_multiplier not resolved");
  if (per_sample.empty()) throw ConfigError("dp_aggregate: empty batch");
  Gradients sum = per_sample.front();
  {
    const double norm = std::sqrt(sum.squared_norm());
    if (norm > dp.clip_norm) sum.scale(dp.clip_norm / norm);
  }
  for (std::size_t i = 1; i < per_sample.size(); ++i) {
    const double norm = std::sqrt(per_sample[i].squared_norm());
    const double s = norm > dp.clip_norm ? dp.clip_norm / norm : 1.0;
    sum.add_scaled(per_sample[i], s);
  }
  const double sigma = dp.noise_multiplier * dp.clip_norm;
  auto add_noise = [&](double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] += rng.normal(0.0, sigma);
  };
  add_noise(sum.w1.data(), sum.w1.rows() * sum.w1.cols());
  add_noise(sum.b1.data(), sum.b1.size());
  add_noise(sum.w2.data(), sum.w2.rows() * sum.w2.cols());
  add_noise(sum.b2.data(), sum.b2.size());
  sum.scale(1.0 / static_cast<double>(per_sample.size()));
  return sum;
}

void dp_sgd_step(MlpClassifier& model, AdamState& state,
                 const std::vector<Gradients>& per_sample, const DpConfig& dp,
                 const TrainConfig& config, Rng& rng) {
  const Gradients noisy = dp_aggregate(per_sample, dp, rng);
  adamw_step(model, state, noisy, config);
}

namespace {

MlpClassifier train_impl(const MlpClassifier* start, const TabularDataset& data,
                         const TrainConfig& config_in) {
  TrainConfig config = config_in;
  config.validate();
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!data.schema.label_in_range(data.labels[i]))
      throw SchemaError("train: label out of range at row " + std::to_string(i));

  if (config.dp && config.dp->target_epsilon && config.dp->noise_multiplier <= 0.0) {
    const double q = std::min(1.0, static_cast<double>(config.batch_size) /
                                       static_cast<double>(data.size()));
    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(data.size()) + config.batch_size - 1) / config.batch_size;
    config.dp->noise_multiplier = solve_sigma_for_epsilon(
        *config.dp->target_epsilon, q, config.epochs * steps_per_epoch, config.dp->delta);
  }

  Rng rng(derive_seed(config.seed, "train"));
  MlpClassifier model;
  if (start != nullptr) {
    model = *start;
  } else {
    model = MlpClassifier::init(data.samples.cols(), data.schema.n_classes,
                                config.hidden, rng);
  }
  AdamState state = AdamState::zeros_like(model);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(begin + batch, order.size());
      std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);
      Matrix x = data.samples.take_rows(idx);
      std::vector<int> y;
      y.reserve(idx.size());
      for (std::size_t i : idx) y.push_back(data.labels[i]);

      ForwardCache cache;
      forward(model, x, config.dropout_p, &rng, &cache);

      if (config.dp) {
        std::vector<Gradients> records = per_sample_gradients(model, cache, y);
        dp_sgd_step(model, state, records, *config.dp, config, rng);
      } else {
        Gradients grads = backward(model, cache, y);
        if (config.l2_lambda > 0.0) {
          for (std::size_t i = 0; i < grads.w1.storage().size(); ++i)
            grads.w1.storage()[i] += config.l2_lambda * model.w1.storage()[i];
          for (std::size_t i = 0; i < grads.w2.storage().size(); ++i)
            grads.w2.storage()[i] += config.l2_lambda * model.w2.storage()[i];
        }
        adamw_step(model, state, grads, config);
      }
      if (!model.all_finite())
        throw TrainingError("train: non-finite parameters at epoch " +
                            std::to_string(epoch));
    }
  }
  return model;
}

}  // namespace

MlpClassifier train(const TabularDataset& data, const TrainConfig& config) {
  if (config.warm_start)
    throw ConfigError("train: warm_start requires retrain() with a starting model");
  return train_impl(nullptr, data, config);
}

MlpClassifier retrain(const MlpClassifier& start, const TabularDataset& data,
                      const TrainConfig& config) {
  return train_impl(&start, data, config);
}

namespace {
constexpr char kModelMagic[8] = {'m', 'l', 'p', '-', 'v', '1', '\n', '\0'};

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
}
}  // namespace

void save_model(const MlpClassifier& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("model: cannot write " + path);
  out.write(kModelMagic, 8);
  const std::int64_t dims[3] = {static_cast<std::int64_t>(model.input_dim()),
                                static_cast<std::int64_t>(model.class_count()),
                                static_cast<std::int64_t>(model.hidden_dim())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  write_doubles(out, model.w1.data(), model.w1.rows() * model.w1.cols());
  write_doubles(out, model.b1.data(), model.b1.size());
  write_doubles(out, model.w2.data(), model.w2.rows() * model.w2.cols());
  write_doubles(out, model.b2.data(), model.b2.size());
  if (!out) throw IoError("model: write failed for " + path);
}

MlpClassifier load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("model: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw IoError("model: bad magic in " + path + " (expected mlp-v1)");
  std::int64_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw IoError("model: invalid header in " + path);
  MlpClassifier m;
  const std::size_t n_j = static_cast<std::size_t>(dims[0]);
  const std::size_t n_c = static_cast<std::size_t>(dims[1]);
  const std::size_t hidden = static_cast<std::size_t>(dims[2]);
  m.w1 = Matrix(hidden, n_j);
  m.b1.assign(hidden, 0.0);
  m.w2 = Matrix(n_c, hidden);
  m.b2.assign(n_c, 0.0);
  read_doubles(in, m.w1.data(), hidden * n_j);
  read_doubles(in, m.b1.data(), hidden);
  read_doubles(in, m.w2.data(), n_c * hidden);
  read_doubles(in, m.b2.data(), n_c);
  if (!in) throw IoError("model: truncated payload in " + path);
  char extra;
  if (in.read(&extra, 1)) throw IoError("model: trailing bytes in " + path);
  return m;
}

}  // namespace exfilt
