#pragma once

#include <string>

#include "exfilt/mlp.hpp"

namespace exfilt {

enum class DefenseKind { kNone, kDropout, kL2, kDpSgd };

// One defense knob on top of the shared training recipe. Exactly one kind is
// active; train_defended(kind = none) is bit-identical to plain train().
struct DefenseSpec {
  DefenseKind kind = DefenseKind::kNone;
  double dropout_p = 0.0;
  double l2_lambda = 0.0;
  double dp_target_epsilon = 0.0;
  double dp_delta = 1e-5;
  double dp_clip_norm = 1.0;

  void validate() const;
  std::string label() const;  // e.g. "dropout(p=0.4)", used in reports
};

DefenseKind defense_kind_from_string(const std::string& s);
std::string to_string(DefenseKind kind);

TrainConfig apply_defense(const TrainConfig& base, const DefenseSpec& spec);
MlpClassifier train_defended(const TabularDataset& data, const TrainConfig& base,
                             const DefenseSpec& spec);

}  // namespace exfilt
