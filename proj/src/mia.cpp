#include "exfilt/mia.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "exfilt/errors.hpp"
#include "exfilt/rng.hpp"

namespace exfilt {

BoundaryMethod boundary_method_from_string(const std::string& s) {
  if (s == "exhaustive") return BoundaryMethod::kExhaustive;
  if (s == "whitebox_margin") return BoundaryMethod::kWhiteboxMargin;
  if (s == "labelonly_hsj") return BoundaryMethod::kLabelOnlyHsj;
  throw ConfigError("mia: unknown boundary method '" + s + "'");
}

std::string to_string(BoundaryMethod m) {
  switch (m) {
    case BoundaryMethod::kExhaustive: return "exhaustive";
    case BoundaryMethod::kWhiteboxMargin: return "whitebox_margin";
    case BoundaryMethod::kLabelOnlyHsj: return "labelonly_hsj";
  }
  return "unknown";
}

void BoundaryEstimatorConfig::validate() const {
  if (max_model_evals <= 0) throw ConfigError("mia: max_model_evals must be positive");
  if (init_trials <= 0) throw ConfigError("mia: init_trials must be positive");
  if (binsearch_tol <= 0.0) throw ConfigError("mia: binsearch_tol must be positive");
  if (grad_samples <= 0) throw ConfigError("mia: grad_samples must be positive");
}

namespace {

// Counts label evaluations against the per-sample budget and applies the
// integer-grid constraint before each check.
class LabelProbe {
 public:
  LabelProbe(const MlpClassifier& model, const DatasetSchema& schema,
             bool integer_constrained, int budget)
      : model_(model), schema_(schema), constrain_(integer_constrained), budget_(budget) {}

  bool exhausted() const { return evals_ >= budget_; }
  int evals() const { return evals_; }

  // Applies the constraint in place and returns the predicted label, or -1
  // when the budget is gone.
  int label(std::vector<double>& point) {
    if (exhausted()) return -1;
    ++evals_;
    if (constrain_) constrain_point(point);
    return model_.predict_one(point);
  }

  // Batched variant; rows of `points` are constrained in place. Returns
  // labels only for the rows that fit in the remaining budget.
  std::vector<int> label_rows(Matrix& points) {
    const std::size_t fit = std::min<std::size_t>(
        points.rows(), static_cast<std::size_t>(std::max(0, budget_ - evals_)));
    if (fit == 0) return {};
    if (constrain_) {
      for (std::size_t i = 0; i < fit; ++i) {
        double* row = points.row(i);
        for (std::size_t j = 0; j < points.cols(); ++j) {
          const FeatureDomain& d = schema_.features[j];
          if (d.is_integer_valued()) row[j] = d.clamp(row[j]);
        }
      }
    }
    std::vector<std::size_t> idx(fit);
    std::iota(idx.begin(), idx.end(), 0);
    const Matrix head = points.take_rows(idx);
    evals_ += static_cast<int>(fit);
    return model_.predict(head);
  }

  void constrain_point(std::vector<double>& point) const {
    for (std::size_t j = 0; j < point.size(); ++j) {
      const FeatureDomain& d = schema_.features[j];
      if (d.is_integer_valued()) point[j] = d.clamp(point[j]);
    }
  }

 private:
  const MlpClassifier& model_;
  const DatasetSchema& schema_;
  bool constrain_;
  int budget_;
  int evals_ = 0;
};

double distance_to(std::span<const double> x, const std::vector<double>& p) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = p[j] - x[j];
    s += d * d;
  }
  return std::sqrt(s);
}

// --- exact search over flip masks (binary schemas only) ---

double exhaustive_distance(const MlpClassifier& model, std::span<const double> x,
                           int base_label) {
  const std::size_t n = x.size();
  std::vector<std::size_t> comb;
  for (std::size_t k = 1; k <= n; ++k) {
    comb.resize(k);
    std::iota(comb.begin(), comb.end(), 0);
    // Lexicographic walk over all k-subsets, evaluated as one batch per level.
    std::vector<double> rows;
    for (;;) {
      for (std::size_t j = 0, c = 0; j < n; ++j) {
        const bool flip = c < k && comb[c] == j;
        rows.push_back(flip ? 1.0 - x[j] : x[j]);
        if (flip) ++c;
      }
      std::size_t i = k;
      while (i > 0 && comb[i - 1] == n - k + i - 1) --i;
      if (i == 0) break;
      ++comb[i - 1];
      for (std::size_t j = i; j < k; ++j) comb[j] = comb[j - 1] + 1;
    }
    Matrix batch(rows.size() / n, n);
    std::copy(rows.begin(), rows.end(), batch.data());
    const std::vector<int> labels = model.predict(batch);
    for (int lab : labels)
      if (lab != base_label) return std::sqrt(static_cast<double>(k));
  }
  return kNoBoundary;
}

// Binary search along the segment from x to an adversarial point, keeping the
// adversarial side. Returns the tightened adversarial point.
std::vector<double> segment_tighten(std::span<const double> x,
                                    std::vector<double> adversarial, int base_label,
                                    double tol, LabelProbe& probe) {
  double lo = 0.0, hi = 1.0;
  std::vector<double> best = adversarial;
  std::vector<double> cand(x.size());
  while (hi - lo > tol && !probe.exhausted()) {
    const double mid = 0.5 * (lo + hi);
    for (std::size_t j = 0; j < x.size(); ++j)
      cand[j] = x[j] + mid * (adversarial[j] - x[j]);
    const int lab = probe.label(cand);
    if (lab < 0) break;
    if (lab != base_label) {
      hi = mid;
      best = cand;  // constrained in place by the probe
    } else {
      lo = mid;
    }
  }
  return best;
}

// Drop unnecessary coordinate changes from an adversarial grid point.
void prune_coordinates(std::span<const double> x, std::vector<double>& point,
                       int base_label, LabelProbe& probe) {
  for (std::size_t j = 0; j < x.size() && !probe.exhausted(); ++j) {
    if (point[j] == x[j]) continue;
    std::vector<double> reverted = point;
    reverted[j] = x[j];
    const int lab = probe.label(reverted);
    if (lab >= 0 && lab != base_label) point = reverted;
  }
}

double whitebox_margin_distance(const MlpClassifier& model, std::span<const double> x,
                                const BoundaryEstimatorConfig& cfg, int base_label,
                                LabelProbe& probe) {
  const std::size_t n_j = x.size();
  const std::size_t h = model.hidden_dim();
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> grad(n_j);

  bool flipped = false;
  while (!probe.exhausted()) {
    const std::vector<double> z = model.logits_one(cur);
    // Margin between the original label and the best challenger.
    int runner = base_label == 0 ? 1 : 0;
    for (std::size_t c = 0; c < z.size(); ++c)
      if (static_cast<int>(c) != base_label && z[c] > z[runner]) runner = static_cast<int>(c);
    const double margin = z[base_label] - z[runner];

    std::vector<double> check = cur;
    const int lab = probe.label(check);
    if (lab < 0) break;
    if (lab != base_label) {
      cur = check;
      flipped = true;
      break;
    }

    // d(z_a - z_b)/dx through the tanh layer.
    std::vector<double> act(h);
    for (std::size_t i = 0; i < h; ++i)
      act[i] = std::tanh(dot({model.w1.row(i), n_j}, {cur.data(), n_j}) + model.b1[i]);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const double coeff =
          (model.w2(base_label, i) - model.w2(runner, i)) * (1.0 - act[i] * act[i]);
      const double* w1row = model.w1.row(i);
      for (std::size_t j = 0; j < n_j; ++j) grad[j] += coeff * w1row[j];
    }
    const double gnorm2 = dot({grad.data(), n_j}, {grad.data(), n_j});
    if (gnorm2 < 1e-18) return kNoBoundary;  // flat margin, no usable direction
    // Overshoot the first-order zero crossing of the margin.
    const double step = 1.25 * margin / gnorm2;
    for (std::size_t j = 0; j < n_j; ++j) cur[j] -= step * grad[j];
  }
  if (!flipped) return kNoBoundary;

  std::vector<double> tight = segment_tighten(x, cur, base_label, cfg.binsearch_tol, probe);
  if (cfg.integer_constrained) prune_coordinates(x, tight, base_label, probe);
  return distance_to(x, tight);
}

double hsj_distance(std::span<const double> x, const DatasetSchema& schema,
                    const BoundaryEstimatorConfig& cfg, int base_label, LabelProbe& probe,
                    Rng& rng) {
  const std::size_t n_j = x.size();
  // Rounded label checks quantize the search; probes and jumps must clear the
  // rounding threshold to move at all.
  const bool on_grid = cfg.integer_constrained;
  const double min_step = on_grid ? 0.51 : 0.0;

  std::vector<double> best;
  double best_dist = kNoBoundary;

  // Restart phase: random in-domain far points until misclassified; tighten
  // the promising ones. Capped at a quarter of the eval budget.
  const int restart_budget = std::max(cfg.max_model_evals / 4, 2);
  for (int trial = 0; trial < cfg.init_trials && probe.evals() < restart_budget; ++trial) {
    std::vector<double> p(n_j);
    for (std::size_t j = 0; j < n_j; ++j) {
      const FeatureDomain& d = schema.features[j];
      switch (d.kind) {
        case DomainKind::kBinary:
          p[j] = rng.bernoulli(0.5) ? 1.0 : 0.0;
          break;
        case DomainKind::kCategorical:
          p[j] = static_cast<double>(rng.below(static_cast<std::uint64_t>(d.hi) + 1));
          break;
        case DomainKind::kContinuous:
          p[j] = rng.uniform(d.lo, d.hi);
          break;
      }
    }
    const int lab = probe.label(p);
    if (lab < 0 || lab == base_label) continue;
    if (distance_to(x, p) >= best_dist && !best.empty()) continue;  // cannot improve
    std::vector<double> tight = segment_tighten(x, p, base_label, cfg.binsearch_tol, probe);
    const double d = distance_to(x, tight);
    if (d < best_dist) {
      best_dist = d;
      best = std::move(tight);
    }
  }
  if (best.empty()) return kNoBoundary;
  if (on_grid) {
    prune_coordinates(x, best, base_label, probe);
    best_dist = distance_to(x, best);
  }

  // Monte-Carlo normal estimation and geometric jumps toward the boundary.
  for (int iter = 1; !probe.exhausted(); ++iter) {
    const double radius = best_dist;
    if (radius <= cfg.binsearch_tol) break;
    const double delta = std::max(
        {min_step, cfg.binsearch_tol, radius / std::sqrt(static_cast<double>(n_j))});

    Matrix probes(static_cast<std::size_t>(cfg.grad_samples), n_j);
    Matrix directions(static_cast<std::size_t>(cfg.grad_samples), n_j);
    for (int s = 0; s < cfg.grad_samples; ++s) {
      double* dir = directions.row(s);
      double norm2 = 0.0;
      for (std::size_t j = 0; j < n_j; ++j) {
        dir[j] = rng.normal();
        norm2 += dir[j] * dir[j];
      }
      const double inv = 1.0 / std::max(std::sqrt(norm2), 1e-12);
      double* row = probes.row(s);
      for (std::size_t j = 0; j < n_j; ++j) {
        dir[j] *= inv;
        row[j] = best[j] + delta * dir[j];
      }
    }
    const std::vector<int> labels = probe.label_rows(probes);
    if (labels.empty()) break;

    double mean = 0.0;
    std::vector<double> phi(labels.size());
    for (std::size_t s = 0; s < labels.size(); ++s) {
      phi[s] = labels[s] != base_label ? 1.0 : -1.0;
      mean += phi[s];
    }
    mean /= static_cast<double>(labels.size());
    std::vector<double> normal(n_j, 0.0);
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const double w = phi[s] - mean;
      if (w == 0.0) continue;
      const double* dir = directions.row(s);
      for (std::size_t j = 0; j < n_j; ++j) normal[j] += w * dir[j];
    }
    const double nnorm = l2_norm({normal.data(), n_j});
    if (nnorm < 1e-12) continue;
    for (double& v : normal) v /= nnorm;

    // Jump along the estimated normal, halving until adversarial again.
    double xi = radius / std::sqrt(static_cast<double>(iter));
    bool jumped = false;
    for (int attempt = 0; attempt < 8 && !probe.exhausted(); ++attempt) {
      std::vector<double> cand(n_j);
      const double step = std::max(xi, min_step);
      for (std::size_t j = 0; j < n_j; ++j) cand[j] = best[j] + step * normal[j];
      const int lab = probe.label(cand);
      if (lab >= 0 && lab != base_label) {
        std::vector<double> tight =
            segment_tighten(x, cand, base_label, cfg.binsearch_tol, probe);
        if (on_grid) prune_coordinates(x, tight, base_label, probe);
        const double d = distance_to(x, tight);
        if (d < best_dist) {
          best_dist = d;
          best = std::move(tight);
        }
        jumped = true;
        break;
      }
      xi *= 0.5;
      if (xi < min_step) break;  // the grid cannot resolve smaller jumps
    }
    if (!jumped && probe.exhausted()) break;
  }

  if (on_grid) {
    prune_coordinates(x, best, base_label, probe);
    best_dist = distance_to(x, best);
  }
  return best_dist;
}

}  // namespace

double boundary_distance(const MlpClassifier& model, std::span<const double> x,
                         const DatasetSchema& schema,
                         const BoundaryEstimatorConfig& config) {
  config.validate();
  if (x.size() != model.input_dim())
    throw SchemaError("boundary_distance: sample width mismatch");

  if (config.method == BoundaryMethod::kExhaustive) {
    if (!schema.all_binary() || schema.feature_count() > 20)
      throw ConfigError(
          "boundary_distance: exhaustive search requires a fully binary schema "
          "with at most 20 features");
    return exhaustive_distance(model, x, model.predict_one(x));
  }

  const int base_label = model.predict_one(x);
  LabelProbe probe(model, schema, config.integer_constrained, config.max_model_evals);
  if (config.method == BoundaryMethod::kWhiteboxMargin)
    return whitebox_margin_distance(model, x, config, base_label, probe);

  // Per-sample stream derived from the sample content, so row order and
  // parallel scheduling never change a distance.
  Rng rng(splitmix64(derive_seed(config.seed, "boundary") ^
                     fingerprint_row(x.data(), x.size())));
  return hsj_distance(x, schema, config, base_label, probe, rng);
}

MiaThreshold calibrate_threshold(const MlpClassifier& model, const DatasetSchema& schema,
                                 std::size_t n_cal, const BoundaryEstimatorConfig& config,
                                 std::uint64_t seed, const TabularDataset* reference,
                                 const std::unordered_set<std::uint64_t>* exclude) {
  if (n_cal == 0) throw ConfigError("calibrate_threshold: n_cal must be at least 1");

  // Binary features are drawn from the reference activation rates when given.
  const std::size_t n_j = schema.feature_count();
  std::vector<double> rates(n_j, 0.5);
  if (reference != nullptr && reference->size() > 0) {
    for (std::size_t j = 0; j < n_j; ++j) {
      if (schema.features[j].kind != DomainKind::kBinary) continue;
      double mean = 0.0;
      for (std::size_t i = 0; i < reference->size(); ++i)
        mean += reference->samples(i, j);
      rates[j] = mean / static_cast<double>(reference->size());
    }
  }

  Rng rng(derive_seed(seed, "calibration"));
  MiaThreshold out;
  out.source = MiaThreshold::Source::kCalibrated;
  out.calibration_size = n_cal;

  for (std::size_t i = 0; i < n_cal; ++i) {
    std::vector<double> sample(n_j);
    bool fresh = false;
    for (int attempt = 0; attempt < 1000 && !fresh; ++attempt) {
      for (std::size_t j = 0; j < n_j; ++j) {
        const FeatureDomain& d = schema.features[j];
        switch (d.kind) {
          case DomainKind::kBinary:
            sample[j] = rng.bernoulli(rates[j]) ? 1.0 : 0.0;
            break;
          case DomainKind::kCategorical:
            sample[j] = static_cast<double>(rng.below(static_cast<std::uint64_t>(d.hi) + 1));
            break;
          case DomainKind::kContinuous:
            sample[j] = rng.uniform(d.lo, d.hi);
            break;
        }
      }
      fresh = exclude == nullptr ||
              exclude->count(fingerprint_row(sample.data(), n_j)) == 0;
    }
    if (!fresh)
      throw ConfigError("calibrate_threshold: cannot draw samples outside the attacker pool");
    out.calibration_distances.push_back(
        boundary_distance(model, sample, schema, config));
  }

  double tau = -1.0;
  for (double d : out.calibration_distances)
    if (std::isfinite(d)) tau = std::max(tau, d);
  if (tau < 0.0)
    throw ConfigError("calibrate_threshold: no calibration sample reached a boundary");
  out.tau = tau;
  return out;
}

MiaResult infer_membership(const MlpClassifier& model, const TabularDataset& d_mem,
                           const MiaThreshold& threshold,
                           const BoundaryEstimatorConfig& config) {
  MiaResult out;
  const std::size_t n = d_mem.size();
  out.distances.assign(n, 0.0);
  out.predicted.assign(n, 0);
  if (n == 0) return out;
  // First row outside the parallel region so config/schema errors propagate.
  out.distances[0] = boundary_distance(model, d_mem.samples.row_span(0), d_mem.schema, config);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 1; i < static_cast<long long>(n); ++i) {
    out.distances[i] =
        boundary_distance(model, d_mem.samples.row_span(i), d_mem.schema, config);
  }
  // Robust (far-from-boundary) predictions indicate training membership.
  for (std::size_t i = 0; i < n; ++i)
    out.predicted[i] = out.distances[i] >= threshold.tau ? 1 : 0;
  return out;
}

void write_mia_csv(const std::string& path, const TabularDataset& d_mem,
                   const MiaResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("mia: cannot write " + path);
  out << "row_index,true_member,distance,predicted_member\n";
  for (std::size_t i = 0; i < result.distances.size(); ++i) {
    const int truth = d_mem.membership ? static_cast<int>((*d_mem.membership)[i]) : -1;
    out << i << ',' << truth << ',' << result.distances[i] << ','
        << result.predicted[i] << '\n';
  }
}

void write_threshold_sidecar(const std::string& path, const MiaThreshold& threshold,
                             const BoundaryEstimatorConfig& config) {
  nlohmann::json j{{"tau", threshold.tau},
                   {"calibration_size", threshold.calibration_size},
                   {"source", threshold.source == MiaThreshold::Source::kCalibrated
                                  ? "calibrated"
                                  : "manual"},
                   {"method", to_string(config.method)},
                   {"max_model_evals", config.max_model_evals},
                   {"integer_constrained", config.integer_constrained},
                   {"seed", config.seed}};
  std::ofstream out(path);
  if (!out) throw IoError("mia: cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace exfilt
