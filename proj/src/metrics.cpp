#include "faceattack/metrics.hpp"

#include <cmath>

#include "faceattack/errors.hpp"

namespace faceattack {

double conf_decrease(double baseline_conf, double attacked_conf) {
  if (!(baseline_conf > 0.0 && baseline_conf <= 1.0)) {
    throw InvalidArgument("baseline confidence must lie in (0, 1], got " + std::to_string(baseline_conf));
  }
  if (!(attacked_conf >= 0.0 && attacked_conf <= 1.0)) {
    throw InvalidArgument("attacked confidence must lie in [0, 1], got " + std::to_string(attacked_conf));
  }
  return 1.0 - attacked_conf / baseline_conf;
}

double misclass_rate(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) {
    throw InvalidArgument("misclassification rate of no outcomes");
  }
  std::size_t missed = 0;
  for (const auto& o : outcomes) {
    missed += o.attacked_probs.argmax() != o.true_label;
  }
  return static_cast<double>(missed) / static_cast<double>(outcomes.size());
}

}  // namespace faceattack
