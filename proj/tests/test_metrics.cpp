#include <gtest/gtest.h>

#include <algorithm>
#include <regex>

#include "faceattack/errors.hpp"
#include "faceattack/metrics.hpp"
#include "faceattack/report.hpp"

using namespace faceattack;

namespace {

AttackOutcome outcome(AttackKind kind, double baseline, double attacked, bool miss) {
  AttackOutcome o;
  o.kind = kind;
  o.true_label = 0;
  o.baseline_probs = ClassProbabilities({baseline, 1 - baseline});
  o.attacked_probs = miss ? ClassProbabilities({attacked, 1 - attacked}) : ClassProbabilities({attacked, 1 - attacked});
  o.misclassified = o.attacked_probs.argmax() != 0;
  o.queries_used = 2;
  return o;
}

std::vector<AttackOutcome> flags(std::vector<bool> missed) {
  std::vector<AttackOutcome> out;
  for (bool m : missed) out.push_back(outcome(AttackKind::F, 0.9, m ? 0.2 : 0.8, m));
  return out;
}

ImageResult row(std::string id, double cd, bool miss) {
  ImageResult r;
  r.image_id = std::move(id);
  r.baseline_conf = 0.8;
  r.attacked_conf = 0.8 * (1 - cd);
  r.conf_decrease = cd;
  r.misclassified = miss;
  r.queries = 57;
  return r;
}

std::vector<double> numbers_in(const std::string& svg, const std::string& attr, const std::string& cls) {
  std::vector<double> out;
  const std::regex re("<rect class=\"" + cls + "\"[^>]* " + attr + "=\"([-0-9.]+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back(std::stod((*it)[1]));
  }
  return out;
}

}  // namespace

TEST(ConfDecrease, FigureCaptionValues) {
  EXPECT_NEAR(conf_decrease(0.625, 0.444), 0.2896, 1e-9);
  EXPECT_NEAR(conf_decrease(0.625, 0.0423), 0.93232, 1e-9);
}

TEST(ConfDecrease, Properties) {
  EXPECT_EQ(conf_decrease(0.4, 0.4), 0.0);
  EXPECT_EQ(conf_decrease(0.3, 0.0), 1.0);
  EXPECT_LT(conf_decrease(0.3, 0.6), 0.0);
  for (double b : {0.1, 0.5, 1.0}) {
    double prev = 2.0;
    for (double a = 0.0; a <= 1.0; a += 0.05) {
      const double v = conf_decrease(b, a);
      EXPECT_EQ(v, 1.0 - a / b);
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
  EXPECT_THROW(conf_decrease(0.0, 0.1), InvalidArgument);
  EXPECT_THROW(conf_decrease(1.1, 0.1), InvalidArgument);
  EXPECT_THROW(conf_decrease(0.5, -0.1), InvalidArgument);
}

TEST(MisclassRate, RatesOverThirtyEightAndEdges) {
  std::vector<bool> f(38, false);
  std::fill(f.begin(), f.begin() + 31, true);
  EXPECT_NEAR(misclass_rate(flags(f)), 0.8158, 5e-5);
  std::vector<bool> d(38, false);
  std::fill(d.begin(), d.begin() + 17, true);
  EXPECT_NEAR(misclass_rate(flags(d)), 0.4474, 5e-5);
  EXPECT_EQ(misclass_rate(flags({false, false})), 0.0);
  EXPECT_THROW(misclass_rate(std::vector<AttackOutcome>{}), InvalidArgument);
}

TEST(MisclassRate, PermutationInvariant) {
  auto v = flags({true, false, false, true, true, false, false});
  const double r = misclass_rate(v);
  std::reverse(v.begin(), v.end());
  EXPECT_EQ(misclass_rate(v), r);
  std::rotate(v.begin(), v.begin() + 3, v.end());
  EXPECT_EQ(misclass_rate(v), r);
}

TEST(BuildReport, Aggregates) {
  const std::vector<NamedOutcome> one{{"x", outcome(AttackKind::D, 0.8, 0.4, false)}};
  EXPECT_DOUBLE_EQ(build_report(AttackKind::D, one, 1, "m").mean_conf_decrease, 0.5);

  const auto two = build_report("A", {row("a", 0.2, false), row("b", 0.4, false)}, 0, "m");
  EXPECT_NEAR(two.mean_conf_decrease, 0.3, 1e-15);

  const auto four = build_report("A", {row("a", 0, true), row("b", 0, false), row("c", 0, false), row("d", 0, true)}, 0, "m");
  EXPECT_EQ(four.misclass_rate, 0.5);
}

TEST(BuildReport, SortsByIdAndRejectsBadInput) {
  const auto rep = build_report("B", {row("z", 0.1, false), row("a", 0.2, true)}, 3, "m");
  EXPECT_EQ(rep.per_image[0].image_id, "a");
  EXPECT_EQ(rep.per_image[1].image_id, "z");
  EXPECT_THROW(build_report("B", {}, 0, "m"), InvalidArgument);
  EXPECT_THROW(build_report("B", {row("a", 0, false), row("a", 0, false)}, 0, "m"), InvalidArgument);
  const std::vector<NamedOutcome> mixed{{"x", outcome(AttackKind::D, 0.8, 0.4, false)},
                                        {"y", outcome(AttackKind::E, 0.8, 0.4, false)}};
  EXPECT_THROW(build_report(AttackKind::D, mixed, 0, "m"), InvalidArgument);
  EXPECT_THROW(build_report(AttackKind::D, std::vector<NamedOutcome>{}, 0, "m"), InvalidArgument);
}

TEST(Csv, LayoutOfSingletonReport) {
  const auto rep = build_report("F", {row("class_00_img_001", 0.25, true)}, 7, "builtin-softmax");
  const auto text = format_csv(rep);
  EXPECT_EQ(text,
            "image_id,true_class,baseline_conf,attacked_conf,conf_decrease,misclassified,queries\n"
            "class_00_img_001,0,0.800000,0.600000,0.250000,true,57\n"
            "#aggregate,kind=F,images=1,mean_conf_decrease=0.250000,misclass_rate=1.000000,seed=7,"
            "oracle=builtin-softmax\n");
  std::ostringstream os;
  EXPECT_EQ(write_csv(rep, os), text.size());
}

TEST(Csv, RoundTripToPrintedPrecision) {
  std::vector<ImageResult> rows;
  for (int i = 0; i < 12; ++i) {
    ImageResult r = row("img," + std::to_string(i) + "%", 0.0, i % 3 == 0);
    r.baseline_conf = 0.123456789 + i * 0.01;
    r.attacked_conf = 0.0987654321 * (i % 5);
    r.conf_decrease = 1 - r.attacked_conf / r.baseline_conf;
    r.true_class = static_cast<std::size_t>(i % 4);
    rows.push_back(r);
  }
  const auto rep = build_report("G", rows, 123, "external:exec:a,b");
  const auto back = parse_csv(format_csv(rep));
  EXPECT_EQ(back.attack_kind, "G");
  EXPECT_EQ(back.seed, 123u);
  EXPECT_EQ(back.oracle_descriptor, "external:exec:a,b");
  ASSERT_EQ(back.per_image.size(), rep.per_image.size());
  for (std::size_t i = 0; i < rep.per_image.size(); ++i) {
    const auto &a = rep.per_image[i], &b = back.per_image[i];
    EXPECT_EQ(a.image_id, b.image_id);
    EXPECT_EQ(a.true_class, b.true_class);
    EXPECT_NEAR(a.baseline_conf, b.baseline_conf, 5e-7);
    EXPECT_NEAR(a.attacked_conf, b.attacked_conf, 5e-7);
    EXPECT_NEAR(a.conf_decrease, b.conf_decrease, 5e-7);
    EXPECT_EQ(a.misclassified, b.misclassified);
    EXPECT_EQ(a.queries, b.queries);
  }
  EXPECT_NEAR(back.mean_conf_decrease, rep.mean_conf_decrease, 5e-7);
  EXPECT_NEAR(back.misclass_rate, rep.misclass_rate, 5e-7);
  EXPECT_EQ(format_csv(back), format_csv(rep));
}

TEST(Csv, MalformedInputs) {
  const std::string header = "image_id,true_class,baseline_conf,attacked_conf,conf_decrease,misclassified,queries\n";
  const std::string good_row = "a,0,0.500000,0.250000,0.500000,false,2\n";
  const std::string agg = "#aggregate,kind=D,images=1,mean_conf_decrease=0.500000,misclass_rate=0.000000,seed=1,oracle=m\n";
  EXPECT_NO_THROW(parse_csv(header + good_row + agg));
  EXPECT_THROW(parse_csv(""), InvalidArgument);
  EXPECT_THROW(parse_csv(header + good_row), InvalidArgument);
  EXPECT_THROW(parse_csv(header + "a,0,0.5,0.25,0.5,no,2\n" + agg), InvalidArgument);
  EXPECT_THROW(parse_csv(header + "a,0,0.5,0.25\n" + agg), InvalidArgument);
  EXPECT_THROW(parse_csv(header + "a,x,0.5,0.25,0.5,false,2\n" + agg), InvalidArgument);
  EXPECT_THROW(parse_csv(header + good_row +
                         "#aggregate,kind=D,images=1,mean_conf_decrease=0.400000,misclass_rate=0.000000,seed=1,oracle=m\n"),
               InvalidArgument);
  EXPECT_THROW(parse_csv(header + good_row +
                         "#aggregate,kind=D,images=2,mean_conf_decrease=0.500000,misclass_rate=0.000000,seed=1,oracle=m\n"),
               InvalidArgument);
}

TEST(BarChart, SingleBarAtHalfHeight) {
  const std::vector<EvaluationReport> reps{build_report("A", {row("a", 0.5, false)}, 0, "m")};
  const auto svg = render_bar_chart(reps, ChartMetric::MeanConfDecrease);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  const auto heights = numbers_in(svg, "height", "bar");
  ASSERT_EQ(heights.size(), 1u);
  EXPECT_DOUBLE_EQ(heights[0], 150.0);
  EXPECT_NE(svg.find(">50.0%</text>"), std::string::npos);
  EXPECT_EQ(svg, render_bar_chart(reps, ChartMetric::MeanConfDecrease));
}

TEST(BarChart, MisclassBarsFollowData) {
  std::vector<EvaluationReport> reps;
  const std::vector<std::vector<bool>> data{{true, false, false}, {true, true, false}, {true, true, true}};
  const char* kinds[] = {"D", "E", "F"};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<ImageResult> rows;
    for (std::size_t i = 0; i < 3; ++i) rows.push_back(row("i" + std::to_string(i), 0.1, data[k][i]));
    reps.push_back(build_report(kinds[k], rows, 0, "m"));
  }
  const auto svg = render_bar_chart(reps, ChartMetric::MisclassRate);
  const auto h = numbers_in(svg, "height", "bar");
  ASSERT_EQ(h.size(), 3u);
  EXPECT_LT(h[0], h[1]);
  EXPECT_LT(h[1], h[2]);
  EXPECT_NE(svg.find("Attack F"), std::string::npos);
  EXPECT_NE(svg.find(">100.0%</text>"), std::string::npos);
}

TEST(BarChart, PerImageModeAndNegativeValues) {
  const std::vector<EvaluationReport> reps{
      build_report("C", {row("a", 0.1, false), row("b", -0.2, false), row("c", 0.3, false), row("d<&>", 0.0, false)},
                   0, "m")};
  const auto svg = render_bar_chart(reps, ChartMetric::PerImageConfDecrease);
  EXPECT_EQ(numbers_in(svg, "height", "bar").size(), 4u);
  EXPECT_NE(svg.find("-20.0%"), std::string::npos);
  EXPECT_NE(svg.find("d&lt;&amp;&gt;"), std::string::npos);
  EXPECT_THROW(render_bar_chart(std::vector<EvaluationReport>{}, ChartMetric::MisclassRate), InvalidArgument);
  EXPECT_EQ(parse_chart_metric("per-image"), ChartMetric::PerImageConfDecrease);
  EXPECT_THROW(parse_chart_metric("pie"), InvalidArgument);
}
