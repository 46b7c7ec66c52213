#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "faceattack/image.hpp"

namespace faceattack {

struct LabeledImage {
  GrayscaleImage image;
  std::size_t label = 0;
  std::string source_name;
};

/// Labeled images sharing one size. Invariants are checked on construction.
class Dataset {
 public:
  Dataset(std::vector<std::string> class_names, std::vector<LabeledImage> items);

  std::size_t num_classes() const noexcept { return class_names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const std::vector<LabeledImage>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  // Zero when empty.
  std::size_t image_width() const noexcept { return items_.empty() ? 0 : items_.front().image.width(); }
  std::size_t image_height() const noexcept { return items_.empty() ? 0 : items_.front().image.height(); }

  std::vector<std::size_t> class_counts() const;

 private:
  std::vector<std::string> class_names_;
  std::vector<LabeledImage> items_;
};

/// Reads `<root>/<class>/<name>.pgm`. Classes are indexed by byte-wise
/// lexicographic order of their directory names; files within a class are
/// read in the same order.
Dataset load_directory(const std::filesystem::path& root);

/// Writes the layout read by load_directory. Files are named after the last
/// component of each item's source_name.
void write_directory(const Dataset& ds, const std::filesystem::path& root);

/// Per class, per_class_test items chosen by a seeded shuffle go to the test
/// set. Both halves keep the input order. Returns {train, test}.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t per_class_test, std::uint64_t seed);

struct SyntheticConfig {
  std::size_t num_classes = 8;
  std::size_t per_class = 40;
  std::size_t width = 56;
  std::size_t height = 64;
  std::uint64_t seed = 7;

  int min_blobs = 3;
  int max_blobs = 6;
  double base_lo = 80.0;
  double base_hi = 180.0;
  // Blob peak magnitude, in intensity units before clamping. Magnitudes above
  // the base intensity saturate the blob core at 0 or 255.
  double amplitude_lo = 200.0;
  double amplitude_hi = 400.0;
  double darkening_probability = 0.75;
  // Blob standard deviation as a fraction of min(width, height).
  double sigma_lo = 0.05;
  double sigma_hi = 0.2;

  int noise_amplitude = 8;
  double min_template_separation = 48.0;  // mean absolute difference
  int max_template_attempts = 10000;
};

/// Smooth class templates: base intensity plus a few Gaussian blobs,
/// rounded and clamped. Each template is resampled until its mean absolute
/// difference to every earlier template reaches min_template_separation.
std::vector<GrayscaleImage> generate_templates(const SyntheticConfig& cfg, Rng& rng);

struct SyntheticDataset {
  Dataset data;
  std::vector<GrayscaleImage> templates;
};

/// Each item is its class template plus independent per-pixel integer noise
/// drawn from [-noise_amplitude, noise_amplitude], clamped to [0, 255].
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

double mean_absolute_difference(const GrayscaleImage& a, const GrayscaleImage& b);

}  // namespace faceattack
