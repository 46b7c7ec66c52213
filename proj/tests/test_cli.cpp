#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "faceattack/cli.hpp"
#include "faceattack/errors.hpp"

using namespace faceattack;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "faceattack");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tree(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("faceattack_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path dir(const std::string& name) const { return root_ / name; }

  void synth_and_train() {
    ASSERT_EQ(invoke({"synth", "--out", dir("data").string()}).code, 0);
    ASSERT_EQ(invoke({"train", "--data", dir("data").string(), "--model", dir("model.txt").string()}).code, 0);
  }

  fs::path root_;
};

}  // namespace

TEST(CliHelpers, ImageIdSeedAndBand) {
  EXPECT_EQ(cli::image_id({GrayscaleImage(1, 1), 0, "class_03/img_007"}), "class_03_img_007");
  EXPECT_EQ(cli::per_image_seed(7, 0), 7u);
  EXPECT_EQ(cli::per_image_seed(7, 3), 4u);
  const auto b = cli::parse_band("30:60");
  EXPECT_EQ(b.lo, 30);
  EXPECT_EQ(b.hi, 60);
  EXPECT_THROW(cli::parse_band("60:30"), InvalidArgument);
  EXPECT_THROW(cli::parse_band("30"), InvalidArgument);
}

TEST_F(CliTest, SynthDefaultsAndDeterminism) {
  ASSERT_EQ(invoke({"synth", "--out", dir("a").string()}).code, 0);
  ASSERT_EQ(invoke({"synth", "--out", dir("b").string()}).code, 0);
  std::size_t classes = 0;
  for (const auto& e : fs::directory_iterator(dir("a"))) {
    if (!e.is_directory()) continue;
    ++classes;
    EXPECT_EQ(std::distance(fs::directory_iterator(e.path()), fs::directory_iterator{}), 40);
  }
  EXPECT_EQ(classes, 8u);
  const auto files = tree(dir("a"));
  ASSERT_EQ(files, tree(dir("b")));
  for (const auto& f : files) EXPECT_EQ(slurp(dir("a") / f), slurp(dir("b") / f)) << f;
  EXPECT_TRUE(fs::exists(dir("a") / "manifest.json"));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({"synth", "--classes", "1", "--out", dir("a").string()}).code, 1);
  EXPECT_EQ(invoke({"synth"}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"report", "--out", dir("x.svg").string()}).code, 1);
}

TEST_F(CliTest, TrainReportsAccuracyAndIsDeterministic) {
  synth_and_train();
  const auto r = invoke({"train", "--data", dir("data").string(), "--model", dir("again.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("test accuracy"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir("model.txt")), slurp(dir("again.txt")));
  EXPECT_TRUE(fs::exists(dir("model.txt.manifest.json")));
}

TEST_F(CliTest, AttackWritesImagesReportAndManifest) {
  synth_and_train();
  const auto r = invoke({"attack", "--data", dir("data").string(), "--model", dir("model.txt").string(), "--kind", "F",
                         "--out", dir("out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t pgm = 0, csv = 0;
  for (const auto& e : fs::directory_iterator(dir("out"))) {
    if (e.path().extension() == ".pgm") ++pgm;
    if (e.path().extension() == ".csv") ++csv;
  }
  EXPECT_EQ(pgm, 8u);
  EXPECT_EQ(csv, 1u);
  const auto report = read_csv(dir("out") / "report_F.csv");
  EXPECT_EQ(report.per_image.size(), 8u);
  EXPECT_EQ(report.oracle_descriptor, "builtin-softmax");
  for (const auto& row : report.per_image) EXPECT_EQ(row.queries, 2u);
  const auto manifest = slurp(dir("out") / "manifest.json");
  for (const char* key : {"command", "config", "artifact_paths", "oracle_descriptor"}) {
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
  }

  const auto chart = invoke({"report", (dir("out") / "report_F.csv").string(), "--figure", "per-image", "--out",
                             dir("f.svg").string()});
  ASSERT_EQ(chart.code, 0) << chart.err;
  const auto svg = slurp(dir("f.svg"));
  std::size_t bars = 0;
  for (auto p = svg.find("class=\"bar\""); p != std::string::npos; p = svg.find("class=\"bar\"", p + 1)) ++bars;
  EXPECT_EQ(bars, 8u);
}

TEST_F(CliTest, EscalationWritesTrace) {
  synth_and_train();
  const auto r = invoke({"attack", "--data", dir("data").string(), "--model", dir("model.txt").string(), "--kind",
                         "escalate", "--escalation-step", "40", "--out", dir("out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto trace = slurp(dir("out") / "escalation_trace.csv");
  EXPECT_EQ(trace.rfind("image_id,round,lo,hi,conf_decrease,misclassified\n", 0), 0u);
}

TEST_F(CliTest, ListKinds) {
  const auto r = invoke({"attack", "--list-kinds"});
  ASSERT_EQ(r.code, 0);
  for (const char* k : {"A", "B", "C", "D", "E", "F", "G", "FGSM", "Escalation"}) {
    EXPECT_NE(r.out.find(k), std::string::npos) << k;
  }
}

TEST_F(CliTest, AttackExitCodes) {
  synth_and_train();
  const auto data = dir("data").string(), model = dir("model.txt").string(), out = dir("out").string();
  EXPECT_EQ(invoke({"attack", "--data", data, "--model", model, "--kind", "Z", "--out", out}).code, 1);
  EXPECT_EQ(invoke({"attack", "--data", data, "--model", model, "--kind", "D", "--band", "1:2", "--out", out}).code, 1);
  EXPECT_EQ(invoke({"attack", "--data", data, "--kind", "A", "--out", out}).code, 1);
  EXPECT_EQ(invoke({"attack", "--data", dir("nope").string(), "--model", model, "--out", out}).code, 2);
  EXPECT_EQ(invoke({"attack", "--data", data, "--oracle", "tcp://127.0.0.1:1", "--out", out}).code, 3);
  EXPECT_EQ(invoke({"attack", "--data", data, "--oracle", "exec:true", "--out", out}).code, 3);
}

TEST_F(CliTest, ExternalOracleMatchesBuiltIn) {
  synth_and_train();
  const auto data = dir("data").string(), model = dir("model.txt").string();
  ASSERT_EQ(invoke({"attack", "--data", data, "--model", model, "--kind", "G", "--out", dir("in").string()}).code, 0);
  const std::string endpoint = std::string("exec:") + FACEATTACK_CLI_PATH + " serve-oracle --model " + model;
  const auto r = invoke({"attack", "--data", data, "--oracle", endpoint, "--kind", "G", "--out", dir("ex").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto a = read_csv(dir("in") / "report_G.csv"), b = read_csv(dir("ex") / "report_G.csv");
  ASSERT_EQ(a.per_image.size(), b.per_image.size());
  for (std::size_t i = 0; i < a.per_image.size(); ++i) {
    EXPECT_EQ(a.per_image[i].attacked_conf, b.per_image[i].attacked_conf);
    EXPECT_EQ(a.per_image[i].queries, b.per_image[i].queries);
  }
  EXPECT_EQ(b.oracle_descriptor, "external:" + endpoint);
  for (const auto& f : tree(dir("in"))) {
    if (f.ends_with(".pgm")) EXPECT_EQ(slurp(dir("in") / f), slurp(dir("ex") / f)) << f;
  }
}
