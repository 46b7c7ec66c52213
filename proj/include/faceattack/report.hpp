#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faceattack/attacks.hpp"

namespace faceattack {

struct ImageResult {
  std::string image_id;
  std::size_t true_class = 0;
  double baseline_conf = 0.0;
  double attacked_conf = 0.0;
  double conf_decrease = 0.0;
  bool misclassified = false;
  std::uint64_t queries = 0;

  friend bool operator==(const ImageResult&, const ImageResult&) = default;
};

struct EvaluationReport {
  std::string attack_kind;
  std::vector<ImageResult> per_image;  // sorted by image_id
  double mean_conf_decrease = 0.0;
  double misclass_rate = 0.0;
  std::uint64_t seed = 0;
  std::string oracle_descriptor;
};

struct NamedOutcome {
  std::string image_id;
  AttackOutcome outcome;
};

ImageResult image_result(std::string image_id, const AttackOutcome& outcome);

/// Throws InvalidArgument if outcomes is empty or any outcome's kind differs
/// from kind.
EvaluationReport build_report(AttackKind kind, std::span<const NamedOutcome> outcomes, std::uint64_t seed,
                              std::string oracle_descriptor);

/// Aggregates precomputed rows. Throws InvalidArgument on empty input or
/// duplicate image ids.
EvaluationReport build_report(std::string attack_kind, std::vector<ImageResult> rows, std::uint64_t seed,
                              std::string oracle_descriptor);

/// Header
///   image_id,true_class,baseline_conf,attacked_conf,conf_decrease,misclassified,queries
/// one row per image with 6 fractional digits and true/false flags, then
///   #aggregate,kind=..,images=..,mean_conf_decrease=..,misclass_rate=..,seed=..,oracle=..
/// Text fields are percent-encoded for '%', ',', and line breaks.
std::string format_csv(const EvaluationReport& report);
std::size_t write_csv(const EvaluationReport& report, std::ostream& out);
std::size_t write_csv(const EvaluationReport& report, const std::filesystem::path& path);

/// Inverse of format_csv. Throws InvalidArgument on malformed input,
/// including an aggregate row that disagrees with the per-image rows.
EvaluationReport parse_csv(std::string_view text);
EvaluationReport read_csv(const std::filesystem::path& path);

enum class ChartMetric { MeanConfDecrease, MisclassRate, PerImageConfDecrease };

ChartMetric parse_chart_metric(std::string_view text);
std::string_view to_string(ChartMetric metric);

/// Standalone SVG bar chart: one bar per report for the aggregate metrics,
/// one bar per image row (across all reports) for PerImageConfDecrease.
/// The value axis always spans at least [0, 1]; every bar carries a
/// percentage caption with one decimal.
std::string render_bar_chart(std::span<const EvaluationReport> reports, ChartMetric metric);
void write_bar_chart(std::span<const EvaluationReport> reports, ChartMetric metric,
                     const std::filesystem::path& path);

}  // namespace faceattack
