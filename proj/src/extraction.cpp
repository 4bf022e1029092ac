#include "exfilt/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "exfilt/errors.hpp"
#include "exfilt/kmeans.hpp"

namespace exfilt {

namespace {

std::size_t ceil_frac(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n)));
}

}  // namespace

std::size_t ExtractionConfig::cluster_select_size() const {
  return ceil_frac(cluster_keep_frac, candidate_count);
}

std::size_t ExtractionConfig::query_select_size() const {
  return ceil_frac(cluster_keep_frac * loss_keep_frac, candidate_count);
}

void ExtractionConfig::validate(int n_classes) const {
  if (augment_factor <= 0) throw ConfigError("extraction: augment_factor must be positive");
  if (flip_prob <= 0.0 || flip_prob > 1.0)
    throw ConfigError("extraction: flip_prob must lie in (0, 1]");
  if (candidate_count == 0) throw ConfigError("extraction: candidate_count must be positive");
  if (cluster_keep_frac <= 0.0 || cluster_keep_frac > 1.0)
    throw ConfigError("extraction: cluster_keep_frac must lie in (0, 1]");
  if (loss_keep_frac <= 0.0 || loss_keep_frac > 1.0)
    throw ConfigError("extraction: loss_keep_frac must lie in (0, 1]");
  const int k = cluster_count > 0 ? cluster_count : n_classes;
  if (cluster_select_size() < static_cast<std::size_t>(k))
    throw ConfigError("extraction: cluster selection smaller than cluster count");
  if (query_select_size() == 0)
    throw ConfigError("extraction: per-round query count must be at least 1");
  if (dup_retry_limit < 0) throw ConfigError("extraction: dup_retry_limit must be >= 0");
}

double predictive_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

ExtractionState bootstrap(const TabularDataset& aux, LabelOracle& oracle,
                          const TrainConfig& train_config) {
  if (aux.size() == 0) throw ConfigError("bootstrap: auxiliary dataset is empty");
  ExtractionState state;
  const std::vector<int> labels = oracle.query(aux.samples);
  state.queries_spent = static_cast<std::int64_t>(aux.size());

  state.labeled_pool.schema = aux.schema;
  state.labeled_pool.samples = aux.samples;
  state.labeled_pool.labels = labels;
  for (std::size_t i = 0; i < aux.size(); ++i)
    state.seen.insert(fingerprint_row(aux.samples.row(i), aux.samples.cols()));

  TrainConfig cfg = train_config;
  cfg.warm_start = false;  // nothing to warm-start from yet
  state.surrogate = train(state.labeled_pool, cfg);
  state.rounds = 0;
  return state;
}

Matrix build_query_pool(const ExtractionState& state, const TabularDataset& aux,
                        const ExtractionConfig& config, int round, std::size_t* dropped) {
  const std::size_t n_j = aux.schema.feature_count();
  const std::size_t source_rows = aux.size();
  Rng rng(derive_seed(config.seed ^ static_cast<std::uint64_t>(round), "pool"));

  // Per-feature noise scale for continuous features.
  std::vector<double> sigma;
  bool any_continuous = false;
  for (const FeatureDomain& d : aux.schema.features)
    if (d.kind == DomainKind::kContinuous) any_continuous = true;
  if (any_continuous) {
    if (!config.continuous_noise.empty()) {
      if (config.continuous_noise.size() != n_j)
        throw ConfigError("extraction: continuous_noise must have one entry per feature");
      sigma = config.continuous_noise;
    } else {
      sigma.assign(n_j, 0.0);
      for (std::size_t j = 0; j < n_j; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < source_rows; ++i) mean += aux.samples(i, j);
        mean /= static_cast<double>(source_rows);
        double var = 0.0;
        for (std::size_t i = 0; i < source_rows; ++i) {
          const double d = aux.samples(i, j) - mean;
          var += d * d;
        }
        sigma[j] = std::sqrt(var / static_cast<double>(source_rows));
      }
    }
  }

  std::unordered_set<std::uint64_t> in_pool;
  std::vector<double> rows;
  rows.reserve(static_cast<std::size_t>(config.augment_factor) * source_rows * n_j);
  std::vector<double> candidate(n_j);
  std::size_t dropped_count = 0;

  for (int copy = 0; copy < config.augment_factor; ++copy) {
    for (std::size_t i = 0; i < source_rows; ++i) {
      const double* src = aux.samples.row(i);
      bool accepted = false;
      for (int attempt = 0; attempt <= config.dup_retry_limit; ++attempt) {
        for (std::size_t j = 0; j < n_j; ++j) {
          const FeatureDomain& dom = aux.schema.features[j];
          double v = src[j];
          if (rng.bernoulli(config.flip_prob)) {
            switch (dom.kind) {
              case DomainKind::kBinary:
                v = 1.0 - v;
                break;
              case DomainKind::kCategorical:
                v = static_cast<double>(rng.below(static_cast<std::uint64_t>(dom.hi) + 1));
                break;
              case DomainKind::kContinuous:
                v += rng.normal(0.0, sigma[j]);
                break;
            }
          }
          candidate[j] = dom.clamp(v);
        }
        const std::uint64_t fp = fingerprint_row(candidate.data(), n_j);
        if (state.seen.count(fp) != 0 || in_pool.count(fp) != 0) continue;
        in_pool.insert(fp);
        rows.insert(rows.end(), candidate.begin(), candidate.end());
        accepted = true;
        break;
      }
      if (!accepted) ++dropped_count;
    }
  }
  if (dropped != nullptr) *dropped = dropped_count;

  Matrix pool(rows.size() / n_j, n_j);
  std::copy(rows.begin(), rows.end(), pool.data());
  return pool;
}

std::vector<std::size_t> entropy_select(const Matrix& pool, const MlpClassifier& surrogate,
                                        std::size_t take) {
  const Matrix probs = surrogate.predict_proba(pool);
  std::vector<double> entropy(pool.rows());
  for (std::size_t i = 0; i < pool.rows(); ++i)
    entropy[i] = predictive_entropy(probs.row_span(i));
  std::vector<std::size_t> idx(pool.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return entropy[a] > entropy[b];
  });
  if (idx.size() > take) idx.resize(take);
  return idx;
}

Matrix entropy_input_gradients(const MlpClassifier& model, const Matrix& rows) {
  ForwardCache cache;
  forward(model, rows, 0.0, nullptr, &cache);
  const std::size_t n = rows.rows();
  const std::size_t n_c = model.class_count();
  const std::size_t h = model.hidden_dim();

  // dH/dlogit_c = -p_c (ln p_c + H)
  Matrix dz(n, n_c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = cache.probs.row(i);
    const double ent = predictive_entropy({p, n_c});
    double* out = dz.row(i);
    for (std::size_t c = 0; c < n_c; ++c)
      out[c] = p[c] > 0.0 ? -p[c] * (std::log(p[c]) + ent) : 0.0;
  }

  Matrix dh;
  matmul_nn(dz, model.w2, dh);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = dh.row(i);
    const double* act = cache.hidden.row(i);
    for (std::size_t j = 0; j < h; ++j) row[j] *= 1.0 - act[j] * act[j];
  }
  Matrix grads;
  matmul_nn(dh, model.w1, grads);
  return grads;
}

std::vector<std::size_t> gradient_cluster_select(const Matrix& pool,
                                                 const std::vector<std::size_t>& candidates,
                                                 const MlpClassifier& surrogate,
                                                 std::size_t take, int k_clusters,
                                                 std::uint64_t seed, bool* fell_back) {
  if (fell_back != nullptr) *fell_back = false;
  if (take >= candidates.size()) return candidates;
  if (candidates.size() < static_cast<std::size_t>(k_clusters)) {
    // Too few rows to cluster; keep entropy order.
    if (fell_back != nullptr) *fell_back = true;
    return {candidates.begin(), candidates.begin() + take};
  }

  const Matrix rows = pool.take_rows(candidates);
  const Matrix grads = entropy_input_gradients(surrogate, rows);
  const KmeansResult km = kmeans(grads, k_clusters, seed);

  // Per cluster, candidates ordered nearest-to-center first (ties: lower pool
  // index, candidates arrive entropy-sorted so stable ordering is preserved).
  std::vector<std::vector<std::pair<double, std::size_t>>> buckets(k_clusters);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const int c = km.assignment[i];
    const double d = squared_distance(km.centers.row_span(c), grads.row_span(i));
    buckets[c].emplace_back(d, candidates[i]);
  }
  for (auto& bucket : buckets)
    std::stable_sort(bucket.begin(), bucket.end(),
                     [](const auto& a, const auto& b) {
                       if (a.first != b.first) return a.first < b.first;
                       return a.second < b.second;
                     });

  std::vector<std::size_t> selected;
  selected.reserve(take);
  std::vector<std::size_t> cursor(k_clusters, 0);
  while (selected.size() < take) {
    bool progressed = false;
    for (int c = 0; c < k_clusters && selected.size() < take; ++c) {
      if (cursor[c] >= buckets[c].size()) continue;  // empty or exhausted cluster
      selected.push_back(buckets[c][cursor[c]].second);
      cursor[c] += 1;
      progressed = true;
    }
    if (!progressed) break;
  }
  return selected;
}

std::vector<std::size_t> loss_proximity_select(const Matrix& pool,
                                               const std::vector<std::size_t>& candidates,
                                               const ExtractionState& state,
                                               std::size_t take, std::size_t anchor_count,
                                               bool* degenerate) {
  if (degenerate != nullptr) *degenerate = false;
  if (state.labeled_pool.size() == 0)
    throw ConfigError("loss_proximity_select: empty surrogate training pool");
  if (take >= candidates.size()) return candidates;

  // Cross-entropy of the surrogate's prediction against stored oracle labels.
  const Matrix probs = state.surrogate.predict_proba(state.labeled_pool.samples);
  const std::size_t n_stored = state.labeled_pool.size();
  std::vector<double> loss(n_stored);
  double max_loss = 0.0;
  for (std::size_t i = 0; i < n_stored; ++i) {
    loss[i] = -std::log(std::max(probs(i, state.labeled_pool.labels[i]), 1e-300));
    max_loss = std::max(max_loss, loss[i]);
  }
  if (degenerate != nullptr && max_loss < 1e-12) *degenerate = true;

  std::vector<std::size_t> order(n_stored);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return loss[a] > loss[b]; });
  const std::size_t n_anchors = std::min(anchor_count == 0 ? take : anchor_count, n_stored);

  // sum_s ||q - s||^2 = k*||q||^2 - 2*q.t + sum_s ||s||^2 with t = sum of anchors.
  const std::size_t n_j = pool.cols();
  std::vector<double> anchor_sum(n_j, 0.0);
  double anchor_sq = 0.0;
  for (std::size_t a = 0; a < n_anchors; ++a) {
    const double* s = state.labeled_pool.samples.row(order[a]);
    for (std::size_t j = 0; j < n_j; ++j) anchor_sum[j] += s[j];
    anchor_sq += dot({s, n_j}, {s, n_j});
  }

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t idx : candidates) {
    const double* q = pool.row(idx);
    const double qq = dot({q, n_j}, {q, n_j});
    const double qt = dot({q, n_j}, {anchor_sum.data(), n_j});
    scored.emplace_back(static_cast<double>(n_anchors) * qq - 2.0 * qt + anchor_sq, idx);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
  return out;
}

namespace {

double probe_fidelity(const MlpClassifier& surrogate, const FidelityProbe& probe) {
  const std::vector<int> mine = surrogate.predict(*probe.samples);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < mine.size(); ++i)
    if (mine[i] == (*probe.target_labels)[i]) ++agree;
  return static_cast<double>(agree) / static_cast<double>(mine.size());
}

}  // namespace

ExtractionState extract(const TabularDataset& aux, LabelOracle& oracle,
                        const ExtractionConfig& config, const TrainConfig& train_config,
                        const FidelityProbe& probe) {
  config.validate(aux.schema.n_classes);
  const bool has_probe = probe.samples != nullptr && probe.target_labels != nullptr;

  ExtractionState state = bootstrap(aux, oracle, train_config);
  const std::size_t per_round = config.query_select_size();
  const int k = config.cluster_count > 0 ? config.cluster_count : aux.schema.n_classes;

  double last_fidelity = has_probe ? probe_fidelity(state.surrogate, probe) : 0.0;

  for (int round = 1;; ++round) {
    if (config.max_rounds > 0 && round > config.max_rounds) break;
    if (config.fidelity_target && has_probe && last_fidelity >= *config.fidelity_target)
      break;
    const std::int64_t rem = oracle.remaining();
    if (rem != kUnlimitedBudget && rem < static_cast<std::int64_t>(per_round)) break;

    RoundRecord rec;
    rec.round = round;
    const Matrix pool = build_query_pool(state, aux, config, round, &rec.pool_dropped);
    rec.pool_size = pool.rows();
    if (pool.rows() == 0) {
      rec.spent_after = state.queries_spent;
      state.history.push_back(rec);
      break;
    }

    const std::vector<std::size_t> by_entropy =
        entropy_select(pool, state.surrogate, config.candidate_count);
    rec.entropy_selected = by_entropy.size();

    const std::vector<std::size_t> by_cluster = gradient_cluster_select(
        pool, by_entropy, state.surrogate, config.cluster_select_size(), k,
        derive_seed(config.seed ^ static_cast<std::uint64_t>(round), "cluster"),
        &rec.cluster_fallback);
    rec.cluster_selected = by_cluster.size();

    const std::vector<std::size_t> chosen = loss_proximity_select(
        pool, by_cluster, state, per_round, config.anchor_count, &rec.anchors_degenerate);

    const Matrix queries = pool.take_rows(chosen);
    std::vector<int> labels;
    try {
      labels = oracle.query(queries);
    } catch (const BudgetExhaustedError&) {
      break;  // keep the last surrogate
    } catch (const TransportError&) {
      break;
    }
    rec.queried = queries.rows();
    state.queries_spent += static_cast<std::int64_t>(queries.rows());

    // Extend the labeled pool; rows are unique by construction.
    const std::size_t old_rows = state.labeled_pool.size();
    Matrix merged(old_rows + queries.rows(), queries.cols());
    std::copy(state.labeled_pool.samples.data(),
              state.labeled_pool.samples.data() + old_rows * queries.cols(), merged.data());
    std::copy(queries.data(), queries.data() + queries.rows() * queries.cols(),
              merged.data() + old_rows * queries.cols());
    state.labeled_pool.samples = std::move(merged);
    state.labeled_pool.labels.insert(state.labeled_pool.labels.end(), labels.begin(),
                                     labels.end());
    for (std::size_t i = 0; i < queries.rows(); ++i)
      state.seen.insert(fingerprint_row(queries.row(i), queries.cols()));

    TrainConfig round_cfg = train_config;
    round_cfg.seed = derive_seed(train_config.seed ^ static_cast<std::uint64_t>(round),
                                 "surrogate-round");
    if (train_config.warm_start) {
      round_cfg.warm_start = false;
      state.surrogate = retrain(state.surrogate, state.labeled_pool, round_cfg);
    } else {
      state.surrogate = train(state.labeled_pool, round_cfg);
    }
    state.rounds = round;

    if (has_probe) {
      last_fidelity = probe_fidelity(state.surrogate, probe);
      rec.probe_fidelity = last_fidelity;
    }
    rec.spent_after = state.queries_spent;
    state.history.push_back(rec);
  }
  return state;
}

void write_history_jsonl(const std::vector<RoundRecord>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("history: cannot write " + path);
  for (const RoundRecord& r : history) {
    nlohmann::json j{{"round", r.round},
                     {"pool_size", r.pool_size},
                     {"pool_dropped", r.pool_dropped},
                     {"entropy_selected", r.entropy_selected},
                     {"cluster_selected", r.cluster_selected},
                     {"queried", r.queried},
                     {"spent_after", r.spent_after},
                     {"cluster_fallback", r.cluster_fallback},
                     {"anchors_degenerate", r.anchors_degenerate}};
    if (r.probe_fidelity) j["probe_fidelity"] = *r.probe_fidelity;
    out << j.dump() << '\n';
  }
}

}  // namespace exfilt
