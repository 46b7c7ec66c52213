#include "faceattack/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "faceattack/errors.hpp"

namespace faceattack {

ClassProbabilities::ClassProbabilities(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw InvalidArgument("probability vector is empty");
  }
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidArgument("probability " + std::to_string(v) + " outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidArgument("probabilities sum to " + std::to_string(sum));
  }
}

std::size_t ClassProbabilities::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) - values_.begin());
}

ClassProbabilities Oracle::classify(const GrayscaleImage& image) {
  queries_.fetch_add(1, std::memory_order_relaxed);
  if (image.width() != input_width() || image.height() != input_height()) {
    throw DimensionMismatch("oracle expects " + std::to_string(input_width()) + "x" +
                            std::to_string(input_height()) + " images, got " + std::to_string(image.width()) +
                            "x" + std::to_string(image.height()));
  }
  return do_classify(image);
}

}  // namespace faceattack
