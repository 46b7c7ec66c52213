#include "faceattack/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "faceattack/errors.hpp"

namespace fs = std::filesystem;

namespace faceattack {

Dataset::Dataset(std::vector<std::string> class_names, std::vector<LabeledImage> items)
    : class_names_(std::move(class_names)), items_(std::move(items)) {
  for (const auto& item : items_) {
    if (item.label >= class_names_.size()) {
      throw DatasetError("item '" + item.source_name + "' has label " + std::to_string(item.label) +
                         " outside [0, " + std::to_string(class_names_.size()) + ")");
    }
    if (item.image.width() != image_width() || item.image.height() != image_height()) {
      throw DatasetError("item '" + item.source_name + "' is " + std::to_string(item.image.width()) + "x" +
                         std::to_string(item.image.height()) + ", expected " + std::to_string(image_width()) +
                         "x" + std::to_string(image_height()));
    }
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto& item : items_) {
    ++counts[item.label];
  }
  return counts;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) {
      out.push_back(entry.path());
    }
  }
  // Byte-wise order of the final component, independent of locale.
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

std::string stem_of(const std::string& source_name) {
  const auto slash = source_name.find_last_of('/');
  return slash == std::string::npos ? source_name : source_name.substr(slash + 1);
}

}  // namespace

Dataset load_directory(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw DatasetError("dataset root '" + root.string() + "' is not a directory");
  }
  const auto class_dirs = sorted_entries(root, true);
  if (class_dirs.empty()) {
    throw DatasetError("dataset root '" + root.string() + "' has no class directories");
  }
  std::vector<std::string> names;
  std::vector<LabeledImage> items;
  for (const auto& dir : class_dirs) {
    const std::size_t label = names.size();
    names.push_back(dir.filename().string());
    std::size_t found = 0;
    for (const auto& file : sorted_entries(dir, false)) {
      if (file.extension() != ".pgm") {
        continue;
      }
      GrayscaleImage image;
      try {
        image = read_pgm_file(file.string());
      } catch (const Error& e) {
        throw DatasetError("unreadable image '" + file.string() + "': " + e.what());
      }
      items.push_back({std::move(image), label, names.back() + "/" + file.stem().string()});
      ++found;
    }
    if (found == 0) {
      throw DatasetError("class directory '" + dir.string() + "' holds no .pgm files");
    }
  }
  return Dataset(std::move(names), std::move(items));
}

void write_directory(const Dataset& ds, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) {
    throw IoError("cannot create '" + root.string() + "': " + ec.message());
  }
  std::set<std::string> written;
  for (const auto& name : ds.class_names()) {
    fs::create_directories(root / name, ec);
    if (ec) {
      throw IoError("cannot create '" + (root / name).string() + "': " + ec.message());
    }
  }
  for (const auto& item : ds.items()) {
    const auto rel = ds.class_names()[item.label] + "/" + stem_of(item.source_name) + ".pgm";
    if (!written.insert(rel).second) {
      throw DatasetError("two items map to file '" + rel + "'");
    }
    write_pgm_file(item.image, (root / rel).string());
  }
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t per_class_test, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[ds.items()[i].label].push_back(i);
  }
  Rng rng(seed);
  std::vector<bool> is_test(ds.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() <= per_class_test) {
      throw DatasetError("class '" + ds.class_names()[c] + "' has " + std::to_string(idx.size()) +
                         " items, need more than " + std::to_string(per_class_test));
    }
    // Fisher-Yates on the class's indices, then the first k become test items.
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t k = 0; k < per_class_test; ++k) {
      is_test[idx[k]] = true;
    }
  }
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (is_test[i] ? test : train).push_back(ds.items()[i]);
  }
  return {Dataset(ds.class_names(), std::move(train)), Dataset(ds.class_names(), std::move(test))};
}

double mean_absolute_difference(const GrayscaleImage& a, const GrayscaleImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionMismatch("mean_absolute_difference: dimension mismatch");
  }
  if (a.empty()) {
    return 0.0;
  }
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    total += static_cast<std::uint64_t>(std::abs(int(a.pixels()[i]) - int(b.pixels()[i])));
  }
  return static_cast<double>(total) / static_cast<double>(a.pixel_count());
}

namespace {

GrayscaleImage draw_template(const SyntheticConfig& cfg, Rng& rng) {
  const double base = rng.uniform_real(cfg.base_lo, cfg.base_hi);
  std::vector<double> field(cfg.width * cfg.height, base);
  const auto blobs = rng.uniform_int(cfg.min_blobs, cfg.max_blobs);
  const double scale = static_cast<double>(std::min(cfg.width, cfg.height));
  for (std::int64_t b = 0; b < blobs; ++b) {
    const double cx = rng.uniform_real(0.0, static_cast<double>(cfg.width));
    const double cy = rng.uniform_real(0.0, static_cast<double>(cfg.height));
    const double sigma = rng.uniform_real(cfg.sigma_lo, cfg.sigma_hi) * scale;
    double amplitude = rng.uniform_real(cfg.amplitude_lo, cfg.amplitude_hi);
    if (rng.uniform_real() < cfg.darkening_probability) {
      amplitude = -amplitude;
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        field[y * cfg.width + x] += amplitude * std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  std::vector<std::uint8_t> px(field.size());
  std::transform(field.begin(), field.end(), px.begin(),
                 [](double v) { return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)); });
  return GrayscaleImage(cfg.width, cfg.height, std::move(px));
}

void validate(const SyntheticConfig& cfg) {
  if (cfg.num_classes < 2) {
    throw InvalidArgument("synthetic dataset needs at least 2 classes");
  }
  if (cfg.per_class < 2) {
    throw InvalidArgument("synthetic dataset needs at least 2 images per class");
  }
  if (cfg.width == 0 || cfg.height == 0) {
    throw InvalidArgument("synthetic image dimensions must be positive");
  }
  if (cfg.min_blobs < 0 || cfg.min_blobs > cfg.max_blobs || cfg.base_lo > cfg.base_hi ||
      cfg.amplitude_lo > cfg.amplitude_hi || cfg.sigma_lo <= 0 || cfg.sigma_lo > cfg.sigma_hi ||
      cfg.noise_amplitude < 0 || cfg.noise_amplitude > 255 || cfg.max_template_attempts < 1) {
    throw InvalidArgument("inconsistent synthetic generator parameters");
  }
}

}  // namespace

std::vector<GrayscaleImage> generate_templates(const SyntheticConfig& cfg, Rng& rng) {
  validate(cfg);
  std::vector<GrayscaleImage> templates;
  templates.reserve(cfg.num_classes);
  while (templates.size() < cfg.num_classes) {
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_template_attempts && !accepted; ++attempt) {
      auto candidate = draw_template(cfg, rng);
      accepted = std::all_of(templates.begin(), templates.end(), [&](const GrayscaleImage& t) {
        return mean_absolute_difference(candidate, t) >= cfg.min_template_separation;
      });
      if (accepted) {
        templates.push_back(std::move(candidate));
      }
    }
    if (!accepted) {
      throw InvalidArgument("could not draw " + std::to_string(cfg.num_classes) + " templates separated by " +
                            std::to_string(cfg.min_template_separation));
    }
  }
  return templates;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  Rng rng(cfg.seed);
  auto templates = generate_templates(cfg, rng);
  std::vector<std::string> names;
  std::vector<LabeledImage> items;
  items.reserve(cfg.num_classes * cfg.per_class);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "class_%02zu", c);
    names.emplace_back(name);
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      GrayscaleImage image = templates[c];
      for (auto& v : image.mutable_pixels()) {
        const auto noise = rng.uniform_int(-cfg.noise_amplitude, cfg.noise_amplitude);
        v = static_cast<std::uint8_t>(std::clamp<std::int64_t>(v + noise, 0, 255));
      }
      char stem[32];
      std::snprintf(stem, sizeof stem, "img_%03zu", i);
      items.push_back({std::move(image), c, names.back() + "/" + stem});
    }
  }
  return {Dataset(std::move(names), std::move(items)), std::move(templates)};
}

}  // namespace faceattack
