#pragma once

#include <span>

#include "faceattack/attacks.hpp"

namespace faceattack {

/// Relative drop in true-class confidence, 1 - attacked / baseline. Negative
/// when the attack raised the confidence. Throws InvalidArgument unless
/// baseline is in (0, 1] and attacked in [0, 1].
double conf_decrease(double baseline_conf, double attacked_conf);

/// Fraction of outcomes whose attacked argmax differs from the true label.
/// Throws InvalidArgument on empty input.
double misclass_rate(std::span<const AttackOutcome> outcomes);

}  // namespace faceattack
