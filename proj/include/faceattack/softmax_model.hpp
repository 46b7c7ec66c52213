#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faceattack/dataset.hpp"
#include "faceattack/oracle.hpp"

namespace faceattack {

/// Intensity v maps to v / 255. Part of the model contract.
std::vector<double> normalize(const GrayscaleImage& image);

/// Real-valued per-pixel field laid out like the image it belongs to.
struct GradientField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values.at(y * width + x); }
};

/// Multinomial logistic regression over normalized, flattened pixels:
/// logits = W x + b, probabilities = softmax(logits).
class SoftmaxModel {
 public:
  // All-zero parameters.
  SoftmaxModel(std::size_t width, std::size_t height, std::vector<std::string> class_names);
  // weights is row-major [num_classes x width*height].
  SoftmaxModel(std::size_t width, std::size_t height, std::vector<std::string> class_names,
               std::vector<double> weights, std::vector<double> biases);

  std::size_t num_classes() const noexcept { return class_names_.size(); }
  std::size_t input_width() const noexcept { return width_; }
  std::size_t input_height() const noexcept { return height_; }
  std::size_t input_size() const noexcept { return width_ * height_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> biases() const noexcept { return biases_; }
  std::span<const double> weight_row(std::size_t c) const {
    return std::span<const double>(weights_).subspan(c * input_size(), input_size());
  }
  std::span<double> mutable_weights() noexcept { return weights_; }
  std::span<double> mutable_biases() noexcept { return biases_; }

  std::vector<double> logits(std::span<const double> normalized) const;
  ClassProbabilities probabilities_normalized(std::span<const double> normalized) const;
  ClassProbabilities probabilities(const GrayscaleImage& image) const;

  // Cross-entropy of the true label, -log p[label].
  double loss_normalized(std::span<const double> normalized, std::size_t label) const;

  friend bool operator==(const SoftmaxModel&, const SoftmaxModel&) = default;

 private:
  void check_input(std::span<const double> normalized) const;

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::string> class_names_;
  std::vector<double> weights_;
  std::vector<double> biases_;
};

/// Gradient of the cross-entropy loss with respect to the normalized input,
/// W^T (p - onehot(true_label)), reshaped to the image grid.
GradientField loss_input_gradient(const SoftmaxModel& model, const GrayscaleImage& image, std::size_t true_label);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.001;
  double l2_penalty = 1e-3;
  // Recorded for provenance; zero-initialised full-batch descent draws no
  // random numbers.
  std::uint64_t seed = 7;
};

struct TrainHistory {
  // Objective before each update: mean cross-entropy + (l2/2) * ||W||^2.
  std::vector<double> losses;

  // True if no epoch raised the objective by more than slack.
  bool monotone(double slack = 1e-9) const;
};

/// Full-batch gradient descent from zero parameters for cfg.epochs steps.
SoftmaxModel train_softmax(const Dataset& train, const TrainConfig& cfg, TrainHistory* history = nullptr);

/// Objective used by train_softmax, evaluated at the given parameters.
double training_objective(const SoftmaxModel& model, const Dataset& data, double l2_penalty);

double accuracy(const SoftmaxModel& model, const Dataset& data);

/// Flat text dump:
///   softmax-model 1
///   <classes> <width> <height>
///   <class names, space separated>
///   one line per class with its weight row, then one line of biases,
/// all values as shortest round-trip decimal floats.
std::string serialize_model(const SoftmaxModel& model);
SoftmaxModel parse_model(std::string_view text);
void save_model(const SoftmaxModel& model, const std::string& path);
SoftmaxModel load_model(const std::string& path);

/// The built-in model as a query oracle. White-box attacks reach the
/// parameters through model().
class SoftmaxOracle : public Oracle {
 public:
  explicit SoftmaxOracle(SoftmaxModel model, std::string descriptor = "builtin-softmax");

  const SoftmaxModel& model() const noexcept { return model_; }

  std::size_t num_classes() const override { return model_.num_classes(); }
  std::size_t input_width() const override { return model_.input_width(); }
  std::size_t input_height() const override { return model_.input_height(); }
  std::vector<std::string> class_names() const override { return model_.class_names(); }
  std::string descriptor() const override { return descriptor_; }

 protected:
  ClassProbabilities do_classify(const GrayscaleImage& image) override;

 private:
  SoftmaxModel model_;
  std::string descriptor_;
};

}  // namespace faceattack
