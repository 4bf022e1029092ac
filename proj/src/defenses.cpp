#include "exfilt/defenses.hpp"

#include <cstdio>

#include "exfilt/errors.hpp"

namespace exfilt {

void DefenseSpec::validate() const {
  switch (kind) {
    case DefenseKind::kNone:
      if (dropout_p != 0.0 || l2_lambda != 0.0 || dp_target_epsilon != 0.0)
        throw ConfigError("defense: kind=none must not carry parameters");
      return;
    case DefenseKind::kDropout:
      if (dropout_p <= 0.0 || dropout_p >= 1.0)
        throw ConfigError("defense: dropout_p must lie in (0, 1)");
      if (l2_lambda != 0.0 || dp_target_epsilon != 0.0)
        throw ConfigError("defense: dropout must not carry other parameters");
      return;
    case DefenseKind::kL2:
      if (l2_lambda <= 0.0) throw ConfigError("defense: l2_lambda must be positive");
      if (dropout_p != 0.0 || dp_target_epsilon != 0.0)
        throw ConfigError("defense: l2 must not carry other parameters");
      return;
    case DefenseKind::kDpSgd:
      if (dp_target_epsilon <= 0.0)
        throw ConfigError("defense: dp_target_epsilon must be positive");
      if (dp_delta <= 0.0 || dp_delta >= 1.0)
        throw ConfigError("defense: dp_delta must lie in (0, 1)");
      if (dp_clip_norm <= 0.0)
        throw ConfigError("defense: dp_clip_norm must be positive");
      if (dropout_p != 0.0 || l2_lambda != 0.0)
        throw ConfigError("defense: dpsgd must not carry other parameters");
      return;
  }
  throw ConfigError("defense: unknown kind");
}

std::string DefenseSpec::label() const {
  char buf[64];
  switch (kind) {
    case DefenseKind::kNone:
      return "none";
    case DefenseKind::kDropout:
      std::snprintf(buf, sizeof(buf), "dropout(p=%g)", dropout_p);
      return buf;
    case DefenseKind::kL2:
      std::snprintf(buf, sizeof(buf), "l2(lambda=%g)", l2_lambda);
      return buf;
    case DefenseKind::kDpSgd:
      std::snprintf(buf, sizeof(buf), "dpsgd(eps=%g)", dp_target_epsilon);
      return buf;
  }
  return "unknown";
}

DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "none") return DefenseKind::kNone;
  if (s == "dropout") return DefenseKind::kDropout;
  if (s == "l2") return DefenseKind::kL2;
  if (s == "dpsgd") return DefenseKind::kDpSgd;
  throw ConfigError("defense: unknown kind '" + s + "'");
}

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kDropout: return "dropout";
    case DefenseKind::kL2: return "l2";
    case DefenseKind::kDpSgd: return "dpsgd";
  }
  return "unknown";
}

TrainConfig apply_defense(const TrainConfig& base, const DefenseSpec& spec) {
  spec.validate();
  TrainConfig cfg = base;
  switch (spec.kind) {
    case DefenseKind::kNone:
      break;
    case DefenseKind::kDropout:
      cfg.dropout_p = spec.dropout_p;
      break;
    case DefenseKind::kL2:
      cfg.l2_lambda = spec.l2_lambda;
      break;
    case DefenseKind::kDpSgd: {
      DpConfig dp;
      dp.clip_norm = spec.dp_clip_norm;
      dp.delta = spec.dp_delta;
      dp.target_epsilon = spec.dp_target_epsilon;
      dp.noise_multiplier = 0.0;  // resolved by the accountant in train()
      cfg.dp = dp;
      break;
    }
  }
  return cfg;
}

MlpClassifier train_defended(const TabularDataset& data, const TrainConfig& base,
                             const DefenseSpec& spec) {
  return train(data, apply_defense(base, spec));
}

}  // namespace exfilt
