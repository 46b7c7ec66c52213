#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "faceattack/attacks.hpp"
#include "faceattack/dataset.hpp"
#include "faceattack/report.hpp"
#include "faceattack/softmax_model.hpp"

namespace faceattack::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kOracleError = 3 };

struct SynthOptions {
  SyntheticConfig config;
  std::filesystem::path out_dir;
};

struct TrainOptions {
  std::filesystem::path data_dir;
  TrainConfig config;
  std::size_t per_class_test = 1;
  std::uint64_t split_seed = 7;
  std::filesystem::path model_out;
};

struct AttackOptions {
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> model;
  std::optional<std::string> oracle_endpoint;
  AttackKind kind = AttackKind::A;
  std::uint64_t seed = 7;
  std::optional<std::size_t> cell_side;
  std::optional<MagnitudeBand> band;
  std::vector<double> fgsm_grid;  // empty: default grid
  int escalation_step = 10;
  int escalation_max = 255;
  std::size_t per_class_test = 1;
  std::uint64_t split_seed = 7;
  std::filesystem::path out_dir;
};

struct ReportOptions {
  std::vector<std::filesystem::path> csv_paths;
  ChartMetric metric = ChartMetric::MeanConfDecrease;
  std::filesystem::path out;
};

struct ServeOptions {
  std::filesystem::path model;
  std::optional<std::string> listen;  // tcp://host:port; stdio when unset
};

void cmd_synth(const SynthOptions& opt, std::ostream& out);
void cmd_train(const TrainOptions& opt, std::ostream& out);
void cmd_attack(const AttackOptions& opt, std::ostream& out, std::ostream& err);
void cmd_report(const ReportOptions& opt, std::ostream& out);
void cmd_serve_oracle(const ServeOptions& opt, std::ostream& err);

// "<class>_<stem>" for a source name "<class>/<stem>".
std::string image_id(const LabeledImage& item);
// Per-image attack seed: run seed XOR position in the test split.
std::uint64_t per_image_seed(std::uint64_t seed, std::size_t index);
// "lo:hi".
MagnitudeBand parse_band(const std::string& text);

/// Parses arguments, runs the subcommand, and maps failures to ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace faceattack::cli
