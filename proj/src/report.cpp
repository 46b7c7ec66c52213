#include "faceattack/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "faceattack/errors.hpp"
#include "faceattack/metrics.hpp"

namespace faceattack {

ImageResult image_result(std::string image_id, const AttackOutcome& outcome) {
  ImageResult r;
  r.image_id = std::move(image_id);
  r.true_class = outcome.true_label;
  r.baseline_conf = outcome.baseline_confidence();
  r.attacked_conf = outcome.attacked_confidence();
  r.conf_decrease = conf_decrease(r.baseline_conf, r.attacked_conf);
  r.misclassified = outcome.misclassified;
  r.queries = outcome.queries_used;
  return r;
}

EvaluationReport build_report(AttackKind kind, std::span<const NamedOutcome> outcomes, std::uint64_t seed,
                              std::string oracle_descriptor) {
  if (outcomes.empty()) {
    throw InvalidArgument("report needs at least one outcome");
  }
  std::vector<ImageResult> rows;
  rows.reserve(outcomes.size());
  for (const auto& n : outcomes) {
    if (n.outcome.kind != kind) {
      throw InvalidArgument("outcome for " + n.image_id + " comes from attack " +
                            std::string(to_string(n.outcome.kind)) + ", not " + std::string(to_string(kind)));
    }
    rows.push_back(image_result(n.image_id, n.outcome));
  }
  return build_report(std::string(to_string(kind)), std::move(rows), seed, std::move(oracle_descriptor));
}

EvaluationReport build_report(std::string attack_kind, std::vector<ImageResult> rows, std::uint64_t seed,
                              std::string oracle_descriptor) {
  if (rows.empty()) {
    throw InvalidArgument("report needs at least one row");
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ImageResult& a, const ImageResult& b) { return a.image_id < b.image_id; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].image_id == rows[i - 1].image_id) {
      throw InvalidArgument("duplicate image id " + rows[i].image_id);
    }
  }
  EvaluationReport rep;
  rep.attack_kind = std::move(attack_kind);
  rep.seed = seed;
  rep.oracle_descriptor = std::move(oracle_descriptor);
  double sum = 0.0;
  std::size_t missed = 0;
  for (const auto& r : rows) {
    sum += r.conf_decrease;
    missed += r.misclassified;
  }
  const auto n = static_cast<double>(rows.size());
  rep.mean_conf_decrease = sum / n;
  rep.misclass_rate = static_cast<double>(missed) / n;
  rep.per_image = std::move(rows);
  return rep;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string encode_field(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '%': out += "%25"; break;
      case ',': out += "%2C"; break;
      case '\n': out += "%0A"; break;
      case '\r': out += "%0D"; break;
      default: out += c;
    }
  }
  return out;
}

std::string decode_field(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    unsigned v = 0;
    if (i + 2 >= s.size() || std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16).ptr != s.data() + i + 3) {
      throw InvalidArgument("bad percent escape in CSV field '" + std::string(s) + "'");
    }
    out += static_cast<char>(v);
    i += 2;
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view s, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InvalidArgument(std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s, const char* what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument(std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

constexpr std::string_view kHeader = "image_id,true_class,baseline_conf,attacked_conf,conf_decrease,misclassified,queries";

}  // namespace

std::string format_csv(const EvaluationReport& report) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& r : report.per_image) {
    out += encode_field(r.image_id) + ',' + std::to_string(r.true_class) + ',' + fixed6(r.baseline_conf) + ',' +
           fixed6(r.attacked_conf) + ',' + fixed6(r.conf_decrease) + ',' + (r.misclassified ? "true" : "false") +
           ',' + std::to_string(r.queries) + '\n';
  }
  out += "#aggregate,kind=" + encode_field(report.attack_kind) + ",images=" + std::to_string(report.per_image.size()) +
         ",mean_conf_decrease=" + fixed6(report.mean_conf_decrease) + ",misclass_rate=" +
         fixed6(report.misclass_rate) + ",seed=" + std::to_string(report.seed) +
         ",oracle=" + encode_field(report.oracle_descriptor) + '\n';
  return out;
}

std::size_t write_csv(const EvaluationReport& report, std::ostream& out) {
  const std::string text = format_csv(report);
  out << text;
  if (!out) {
    throw IoError("failed writing CSV");
  }
  return text.size();
}

std::size_t write_csv(const EvaluationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create " + path.string());
  }
  return write_csv(report, out);
}

EvaluationReport parse_csv(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) {
    lines.pop_back();
  }
  if (lines.empty() || lines.front() != kHeader) {
    throw InvalidArgument("CSV does not start with the report header");
  }
  std::vector<ImageResult> rows;
  std::optional<std::string_view> aggregate;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.starts_with("#aggregate,")) {
      if (aggregate || i + 1 != lines.size()) {
        throw InvalidArgument("the aggregate row must be the single last line");
      }
      aggregate = line;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) {
      throw InvalidArgument("CSV line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) +
                            " fields, expected 7");
    }
    ImageResult r;
    r.image_id = decode_field(f[0]);
    r.true_class = static_cast<std::size_t>(parse_u64(f[1], "true_class"));
    r.baseline_conf = parse_double(f[2], "baseline_conf");
    r.attacked_conf = parse_double(f[3], "attacked_conf");
    r.conf_decrease = parse_double(f[4], "conf_decrease");
    if (f[5] != "true" && f[5] != "false") {
      throw InvalidArgument("misclassified must be true or false, got '" + std::string(f[5]) + "'");
    }
    r.misclassified = f[5] == "true";
    r.queries = parse_u64(f[6], "queries");
    rows.push_back(std::move(r));
  }
  if (!aggregate) {
    throw InvalidArgument("CSV has no #aggregate row");
  }
  const auto fields = split(*aggregate, ',');
  const std::vector<std::string_view> keys{"kind", "images", "mean_conf_decrease", "misclass_rate", "seed", "oracle"};
  if (fields.size() != keys.size() + 1) {
    throw InvalidArgument("malformed #aggregate row");
  }
  std::vector<std::string_view> values;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto kv = fields[k + 1];
    if (!kv.starts_with(keys[k]) || kv.size() <= keys[k].size() || kv[keys[k].size()] != '=') {
      throw InvalidArgument("expected '" + std::string(keys[k]) + "=' in #aggregate row");
    }
    values.push_back(kv.substr(keys[k].size() + 1));
  }
  if (parse_u64(values[1], "images") != rows.size()) {
    throw InvalidArgument("#aggregate image count disagrees with the rows");
  }
  auto rep = build_report(decode_field(values[0]), std::move(rows), parse_u64(values[4], "seed"),
                          decode_field(values[5]));
  const double mean = parse_double(values[2], "mean_conf_decrease");
  const double rate = parse_double(values[3], "misclass_rate");
  // Printed rows and printed aggregates are each rounded to 6 decimals.
  if (std::abs(mean - rep.mean_conf_decrease) > 1.01e-6 || std::abs(rate - rep.misclass_rate) > 0.51e-6) {
    throw InvalidArgument("#aggregate row disagrees with the per-image rows");
  }
  rep.mean_conf_decrease = mean;
  rep.misclass_rate = rate;
  return rep;
}

EvaluationReport read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

ChartMetric parse_chart_metric(std::string_view text) {
  if (text == "conf" || text == "confa" || text == "mean_conf_decrease") return ChartMetric::MeanConfDecrease;
  if (text == "misclass" || text == "misclass_rate") return ChartMetric::MisclassRate;
  if (text == "per-image" || text == "per_image") return ChartMetric::PerImageConfDecrease;
  throw InvalidArgument("unknown figure '" + std::string(text) + "' (expected conf, misclass or per-image)");
}

std::string_view to_string(ChartMetric metric) {
  switch (metric) {
    case ChartMetric::MeanConfDecrease: return "conf";
    case ChartMetric::MisclassRate: return "misclass";
    case ChartMetric::PerImageConfDecrease: return "per-image";
  }
  return "";
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", v * 100.0);
  return buf;
}

struct Bar {
  std::string label;
  double value;
};

constexpr double kLeft = 80.0;
constexpr double kTop = 50.0;
constexpr double kPlotHeight = 300.0;
constexpr double kPitch = 60.0;
constexpr double kBarWidth = 40.0;

}  // namespace

std::string render_bar_chart(std::span<const EvaluationReport> reports, ChartMetric metric) {
  if (reports.empty()) {
    throw InvalidArgument("chart needs at least one report");
  }
  std::vector<Bar> bars;
  std::string title;
  std::string axis;
  switch (metric) {
    case ChartMetric::MeanConfDecrease:
      title = "Mean confidence decrease per attack";
      axis = "mean confidence decrease";
      for (const auto& r : reports) bars.push_back({"Attack " + r.attack_kind, r.mean_conf_decrease});
      break;
    case ChartMetric::MisclassRate:
      title = "Misclassification rate per attack";
      axis = "misclassified images";
      for (const auto& r : reports) bars.push_back({"Attack " + r.attack_kind, r.misclass_rate});
      break;
    case ChartMetric::PerImageConfDecrease:
      title = reports.size() == 1 ? "Confidence decrease per image, attack " + reports.front().attack_kind
                                  : "Confidence decrease per image";
      axis = "confidence decrease";
      for (const auto& r : reports) {
        for (const auto& row : r.per_image) {
          bars.push_back({reports.size() == 1 ? row.image_id : r.attack_kind + ":" + row.image_id, row.conf_decrease});
        }
      }
      break;
  }
  double lo = 0.0;
  double hi = 1.0;
  for (const auto& b : bars) {
    lo = std::min(lo, b.value);
    hi = std::max(hi, b.value);
  }
  const auto y = [&](double v) { return kTop + (hi - v) / (hi - lo) * kPlotHeight; };
  const double width = kLeft + kPitch * static_cast<double>(bars.size()) + 20.0;
  const double height = kTop + kPlotHeight + 110.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  svg << "<text transform=\"translate(18," << num(kTop + kPlotHeight / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(axis) << "</text>\n";
  // Ticks every 25 percentage points inside the value range.
  for (int t = static_cast<int>(std::ceil(lo * 4.0)); t <= static_cast<int>(std::floor(hi * 4.0)); ++t) {
    const double v = t / 4.0;
    svg << "<line class=\"tick\" x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(y(v)) << "\" x2=\"" << num(width - 20)
        << "\" y2=\"" << num(y(v)) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(y(v) + 4) << "\" text-anchor=\"end\">" << percent(v)
        << "</text>\n";
  }
  svg << "<line class=\"axis\" x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
      << num(kTop + kPlotHeight) << "\" stroke=\"black\"/>\n";
  svg << "<line class=\"axis\" x1=\"" << num(kLeft) << "\" y1=\"" << num(y(0)) << "\" x2=\"" << num(width - 20)
      << "\" y2=\"" << num(y(0)) << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = kLeft + kPitch * static_cast<double>(i) + (kPitch - kBarWidth) / 2;
    const double top = std::min(y(bars[i].value), y(0));
    const double h = std::abs(y(bars[i].value) - y(0));
    svg << "<rect class=\"bar\" x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(kBarWidth)
        << "\" height=\"" << num(h) << "\" fill=\"#4a72b0\"/>\n";
    svg << "<text class=\"caption\" x=\"" << num(x + kBarWidth / 2) << "\" y=\"" << num(top - 4)
        << "\" text-anchor=\"middle\">" << percent(bars[i].value) << "</text>\n";
    const double lx = x + kBarWidth / 2;
    const double ly = kTop + kPlotHeight + 14;
    svg << "<text class=\"label\" transform=\"translate(" << num(lx) << ',' << num(ly)
        << ") rotate(45)\" text-anchor=\"start\">" << xml_escape(bars[i].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_bar_chart(std::span<const EvaluationReport> reports, ChartMetric metric, const std::filesystem::path& path) {
  const std::string text = render_bar_chart(reports, metric);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create " + path.string());
  }
  out << text;
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

}  // namespace faceattack
