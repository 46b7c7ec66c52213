#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "faceattack/image.hpp"

namespace faceattack {

/// Per-class confidences. Every value is in [0, 1] and they sum to 1 within
/// kSumTolerance.
class ClassProbabilities {
 public:
  static constexpr double kSumTolerance = 1e-6;

  ClassProbabilities() = default;
  // Throws InvalidArgument if the vector is empty or not a distribution.
  explicit ClassProbabilities(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t c) const { return values_.at(c); }
  const std::vector<double>& values() const noexcept { return values_; }

  // Lowest index among maxima.
  std::size_t argmax() const noexcept;

  friend bool operator==(const ClassProbabilities&, const ClassProbabilities&) = default;

 private:
  std::vector<double> values_;
};

/// A classifier under attack. classify() counts every call; attacks read
/// the counter for query-budget accounting. Implementations must be
/// deterministic for a given image.
class Oracle {
 public:
  virtual ~Oracle() = default;
  Oracle() = default;
  Oracle(const Oracle&) = delete;
  Oracle& operator=(const Oracle&) = delete;

  ClassProbabilities classify(const GrayscaleImage& image);

  virtual std::size_t num_classes() const = 0;
  virtual std::size_t input_width() const = 0;
  virtual std::size_t input_height() const = 0;
  virtual std::vector<std::string> class_names() const = 0;
  virtual std::string descriptor() const = 0;

  std::uint64_t query_count() const noexcept { return queries_.load(std::memory_order_relaxed); }

 protected:
  virtual ClassProbabilities do_classify(const GrayscaleImage& image) = 0;

 private:
  std::atomic<std::uint64_t> queries_{0};
};

}  // namespace faceattack
