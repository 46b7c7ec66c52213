#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

#include "faceattack/dataset.hpp"
#include "faceattack/errors.hpp"

using namespace faceattack;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("faceattack_ds_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void put(const fs::path& file, const GrayscaleImage& img) {
  fs::create_directories(file.parent_path());
  write_pgm_file(img, file.string());
}

Dataset tiny(std::size_t classes, std::size_t per_class) {
  std::vector<std::string> names;
  std::vector<LabeledImage> items;
  for (std::size_t c = 0; c < classes; ++c) {
    names.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < per_class; ++i) {
      items.push_back({GrayscaleImage(2, 2, static_cast<std::uint8_t>(c * 10 + i)), c,
                       "c" + std::to_string(c) + "/i" + std::to_string(i)});
    }
  }
  return Dataset(names, items);
}

std::vector<std::string> sorted_names(const Dataset& ds) {
  std::vector<std::string> out;
  for (const auto& it : ds.items()) out.push_back(it.source_name);
  std::sort(out.begin(), out.end());
  return out;
}

double l2_distance(const GrayscaleImage& a, const GrayscaleImage& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    const double d = double(a.pixels()[i]) - double(b.pixels()[i]);
    s += d * d;
  }
  return s;
}

}  // namespace

TEST(Dataset, ValidatesInvariants) {
  EXPECT_THROW(Dataset({"a"}, {{GrayscaleImage(2, 2), 1, "x"}}), DatasetError);
  EXPECT_THROW(Dataset({"a"}, {{GrayscaleImage(2, 2), 0, "x"}, {GrayscaleImage(3, 2), 0, "y"}}), DatasetError);
  const auto ds = tiny(3, 2);
  EXPECT_EQ(ds.num_classes(), 3u);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{2, 2, 2}));
}

TEST(LoadDirectory, MinimalLayoutAndOrdering) {
  TempDir dir;
  put(dir.path() / "b" / "x.pgm", GrayscaleImage(4, 4, 2));
  put(dir.path() / "a" / "y.pgm", GrayscaleImage(4, 4, 1));
  const auto ds = load_directory(dir.path());
  ASSERT_EQ(ds.num_classes(), 2u);
  EXPECT_EQ(ds.class_names()[0], "a");
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.items()[0].label, 0u);
  EXPECT_EQ(ds.items()[0].source_name, "a/y");
  EXPECT_EQ(ds.items()[0].image.at(0, 0), 1);
}

TEST(LoadDirectory, Errors) {
  TempDir dir;
  EXPECT_THROW(load_directory(dir.path() / "missing"), DatasetError);
  EXPECT_THROW(load_directory(dir.path()), DatasetError);
  put(dir.path() / "a" / "1.pgm", GrayscaleImage(4, 4));
  put(dir.path() / "b" / "1.pgm", GrayscaleImage(5, 4));
  EXPECT_THROW(load_directory(dir.path()), DatasetError);
  fs::remove(dir.path() / "b" / "1.pgm");
  std::ofstream(dir.path() / "b" / "bad.pgm") << "P6\n1 1\n255\nx";
  EXPECT_THROW(load_directory(dir.path()), DatasetError);
}

TEST(WriteDirectory, RoundTrip) {
  TempDir dir;
  const auto ds = tiny(2, 3);
  write_directory(ds, dir.path());
  const auto back = load_directory(dir.path());
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.items()[i].image, ds.items()[i].image);
    EXPECT_EQ(back.items()[i].source_name, ds.items()[i].source_name);
  }
}

TEST(Split, ThirtyEightClassCounts) {
  const auto ds = tiny(38, 65);
  const auto [train, test] = split_train_test(ds, 1, 3);
  EXPECT_EQ(test.size(), 38u);
  EXPECT_EQ(train.size(), 2432u);
  EXPECT_EQ(test.class_counts(), std::vector<std::size_t>(38, 1));
}

TEST(Split, DisjointUnionAndDeterministic) {
  const auto ds = tiny(4, 6);
  const auto [train, test] = split_train_test(ds, 2, 9);
  auto names = sorted_names(train);
  const auto t = sorted_names(test);
  names.insert(names.end(), t.begin(), t.end());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, sorted_names(ds));
  EXPECT_TRUE(std::adjacent_find(names.begin(), names.end()) == names.end());
  const auto again = split_train_test(ds, 2, 9);
  EXPECT_EQ(sorted_names(again.second), t);
}

TEST(Split, DegenerateAndInsufficient) {
  const auto ds = tiny(2, 3);
  const auto [train, test] = split_train_test(ds, 0, 1);
  EXPECT_TRUE(test.empty());
  EXPECT_EQ(sorted_names(train), sorted_names(ds));
  EXPECT_THROW(split_train_test(ds, 3, 1), DatasetError);
}

TEST(Synthetic, ShapeContract) {
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = 2;
  cfg.width = 8;
  cfg.height = 8;
  cfg.min_template_separation = 5;
  const auto s = generate_synthetic(cfg);
  EXPECT_EQ(s.data.size(), 4u);
  EXPECT_EQ(s.data.num_classes(), 2u);
  for (const auto& it : s.data.items()) {
    EXPECT_EQ(it.image.width(), 8u);
    EXPECT_EQ(it.image.height(), 8u);
  }
  cfg.num_classes = 1;
  EXPECT_THROW(generate_synthetic(cfg), InvalidArgument);
  cfg.num_classes = 2;
  cfg.per_class = 1;
  EXPECT_THROW(generate_synthetic(cfg), InvalidArgument);
}

TEST(Synthetic, DeterministicUnderSeed) {
  const auto a = generate_synthetic(SyntheticConfig{});
  const auto b = generate_synthetic(SyntheticConfig{});
  ASSERT_EQ(a.data.size(), b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    EXPECT_EQ(a.data.items()[i].image, b.data.items()[i].image);
  }
  SyntheticConfig other;
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other).data.items()[0].image, a.data.items()[0].image);
}

TEST(Synthetic, TemplatesAreSeparated) {
  const SyntheticConfig cfg;
  const auto s = generate_synthetic(cfg);
  ASSERT_EQ(s.templates.size(), cfg.num_classes);
  for (std::size_t i = 0; i < s.templates.size(); ++i) {
    for (std::size_t j = i + 1; j < s.templates.size(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < s.templates[i].pixel_count(); ++k) {
        sum += std::abs(double(s.templates[i].pixels()[k]) - double(s.templates[j].pixels()[k]));
      }
      EXPECT_GE(sum / double(s.templates[i].pixel_count()), cfg.min_template_separation) << i << " vs " << j;
    }
  }
}

TEST(Synthetic, ItemsStayNearTheirTemplate) {
  const SyntheticConfig cfg;
  const auto s = generate_synthetic(cfg);
  for (const auto& it : s.data.items()) {
    const auto& t = s.templates[it.label];
    for (std::size_t k = 0; k < t.pixel_count(); ++k) {
      EXPECT_LE(std::abs(int(it.image.pixels()[k]) - int(t.pixels()[k])), cfg.noise_amplitude);
    }
  }
}

TEST(Synthetic, NearestTemplateClassifierIsPerfect) {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    SyntheticConfig cfg;
    cfg.seed = seed;
    ASSERT_LE(cfg.noise_amplitude, cfg.min_template_separation / 4);
    const auto s = generate_synthetic(cfg);
    for (const auto& it : s.data.items()) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.templates.size(); ++c) {
        const double d = l2_distance(it.image, s.templates[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      EXPECT_EQ(best, it.label) << it.source_name;
    }
  }
}
