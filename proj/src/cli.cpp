#include "faceattack/cli.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "faceattack/errors.hpp"
#include "faceattack/wire.hpp"
#include "json.hpp"

namespace faceattack::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string image_id(const LabeledImage& item) {
  std::string id = item.source_name;
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

std::uint64_t per_image_seed(std::uint64_t seed, std::size_t index) { return seed ^ static_cast<std::uint64_t>(index); }

MagnitudeBand parse_band(const std::string& text) {
  const auto colon = text.find(':');
  MagnitudeBand band;
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    band.lo = std::stoi(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(text);
    const std::string hi = text.substr(colon + 1);
    band.hi = std::stoi(hi, &used);
    if (used != hi.size()) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw InvalidArgument("band must be <lo>:<hi>, got '" + text + "'");
  }
  if (band.lo < 0 || band.lo > band.hi || band.hi > 255) {
    throw InvalidArgument("band needs 0 <= lo <= hi <= 255, got '" + text + "'");
  }
  return band;
}

namespace {

void write_manifest(const fs::path& path, const std::string& command, json config,
                    const std::vector<std::string>& artifacts, const std::string& oracle) {
  json m = json::object();
  m["command"] = command;
  m["config"] = std::move(config);
  m["artifact_paths"] = artifacts;
  m["oracle_descriptor"] = oracle;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create " + path.string());
  }
  out << m.dump(2) << '\n';
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string());
  }
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void cmd_synth(const SynthOptions& opt, std::ostream& out) {
  const auto& c = opt.config;
  if (c.num_classes < 2 || c.per_class < 2) {
    throw InvalidArgument("synth needs at least 2 classes and 2 images per class");
  }
  const auto synth = generate_synthetic(c);
  ensure_dir(opt.out_dir);
  write_directory(synth.data, opt.out_dir);
  std::vector<std::string> artifacts;
  for (const auto& item : synth.data.items()) {
    artifacts.push_back(item.source_name + ".pgm");
  }
  json config = {{"classes", c.num_classes}, {"per_class", c.per_class}, {"width", c.width},
                 {"height", c.height},       {"seed", c.seed},           {"noise", c.noise_amplitude},
                 {"min_template_separation", c.min_template_separation}};
  artifacts.push_back("manifest.json");
  write_manifest(opt.out_dir / "manifest.json", "synth", std::move(config), artifacts, "");
  out << "wrote " << synth.data.size() << " images in " << c.num_classes << " classes to " << opt.out_dir.string()
      << '\n';
}

void cmd_train(const TrainOptions& opt, std::ostream& out) {
  const Dataset ds = load_directory(opt.data_dir);
  const auto [train, test] = split_train_test(ds, opt.per_class_test, opt.split_seed);
  TrainHistory history;
  const SoftmaxModel model = train_softmax(train, opt.config, &history);
  if (!opt.model_out.parent_path().empty()) {
    ensure_dir(opt.model_out.parent_path());
  }
  save_model(model, opt.model_out.string());
  const double train_acc = accuracy(model, train);
  out << "train images: " << train.size() << ", test images: " << test.size() << '\n';
  out << "final objective: " << history.losses.back() << (history.monotone() ? "" : " (objective rose during training; lower the learning rate)") << '\n';
  out << "train accuracy: " << fixed6(train_acc) << '\n';
  json config = {{"data", opt.data_dir.string()},  {"epochs", opt.config.epochs},
                 {"learning_rate", opt.config.learning_rate}, {"l2_penalty", opt.config.l2_penalty},
                 {"seed", opt.config.seed},        {"per_class_test", opt.per_class_test},
                 {"split_seed", opt.split_seed},   {"model", opt.model_out.string()}};
  json summary = {{"train_accuracy", train_acc}};
  if (!test.empty()) {
    const double test_acc = accuracy(model, test);
    out << "test accuracy: " << fixed6(test_acc) << '\n';
    summary["test_accuracy"] = test_acc;
  }
  config["result"] = summary;
  fs::path manifest = opt.model_out;
  manifest += ".manifest.json";
  write_manifest(manifest, "train", std::move(config),
                 {opt.model_out.filename().string(), manifest.filename().string()}, "builtin-softmax");
}

void cmd_attack(const AttackOptions& opt, std::ostream& out, std::ostream& err) {
  if (opt.model.has_value() == opt.oracle_endpoint.has_value()) {
    throw InvalidArgument("give exactly one of --model and --oracle");
  }
  const bool fixed_band = opt.kind == AttackKind::D || opt.kind == AttackKind::E || opt.kind == AttackKind::F;
  if (opt.band && fixed_band) {
    throw InvalidArgument("attacks D, E and F use fixed bands; --band applies to G only");
  }
  if (opt.band && opt.kind != AttackKind::G) {
    throw InvalidArgument("--band applies to attack G only");
  }
  const Dataset ds = load_directory(opt.data_dir);
  const Dataset test = split_train_test(ds, opt.per_class_test, opt.split_seed).second;
  if (test.empty()) {
    throw InvalidArgument("the test split is empty; use --per-class-test >= 1");
  }

  std::unique_ptr<Oracle> oracle;
  if (opt.model) {
    oracle = std::make_unique<SoftmaxOracle>(load_model(opt.model->string()));
  } else {
    oracle = connect_external(*opt.oracle_endpoint);
  }
  if (oracle->input_width() != test.image_width() || oracle->input_height() != test.image_height()) {
    throw DimensionMismatch("oracle expects " + std::to_string(oracle->input_width()) + "x" +
                            std::to_string(oracle->input_height()) + " images, dataset has " +
                            std::to_string(test.image_width()) + "x" + std::to_string(test.image_height()));
  }
  if (oracle->num_classes() != test.num_classes()) {
    throw DimensionMismatch("oracle has " + std::to_string(oracle->num_classes()) + " classes, dataset has " +
                            std::to_string(test.num_classes()));
  }

  AttackConfig base = AttackConfig::defaults(opt.kind, opt.seed);
  base.cell_side = opt.cell_side;
  if (opt.band) base.band = *opt.band;
  if (!opt.fgsm_grid.empty()) base.fgsm_epsilon_grid = opt.fgsm_grid;
  base.escalation_step = opt.escalation_step;
  base.escalation_max = opt.escalation_max;
  const std::string kind_name(to_string(opt.kind));

  ensure_dir(opt.out_dir);
  std::vector<NamedOutcome> outcomes;
  std::ostringstream trace;
  trace << "image_id,round,lo,hi,conf_decrease,misclassified\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& item = test.items()[i];
    const std::string id = image_id(item);
    AttackConfig cfg = base;
    cfg.seed = per_image_seed(opt.seed, i);
    try {
      if (opt.kind == AttackKind::Escalation) {
        Rng rng(cfg.seed);
        auto res = escalate_until_misclassified(item.image, item.label, *oracle, cfg.escalation_step,
                                                cfg.escalation_max, rng);
        for (std::size_t r = 0; r < res.trace.size(); ++r) {
          const auto& t = res.trace[r];
          trace << id << ',' << r + 1 << ',' << t.band.lo << ',' << t.band.hi << ',' << fixed6(t.conf_decrease) << ','
                << (t.misclassified ? "true" : "false") << '\n';
        }
        outcomes.push_back({id, std::move(res.outcome)});
      } else {
        outcomes.push_back({id, run_attack(item.image, item.label, *oracle, cfg)});
      }
    } catch (const Error& e) {
      err << "attack " << kind_name << " failed on image " << id << ": " << e.what() << '\n';
      throw;
    }
  }

  std::vector<std::string> artifacts;
  for (const auto& n : outcomes) {
    const std::string name = n.image_id + "_" + kind_name + ".pgm";
    write_pgm_file(n.outcome.perturbed, (opt.out_dir / name).string());
    artifacts.push_back(name);
  }
  const auto report = build_report(opt.kind, outcomes, opt.seed, oracle->descriptor());
  const std::string csv_name = "report_" + kind_name + ".csv";
  write_csv(report, opt.out_dir / csv_name);
  artifacts.push_back(csv_name);
  if (opt.kind == AttackKind::Escalation) {
    std::ofstream t(opt.out_dir / "escalation_trace.csv", std::ios::binary | std::ios::trunc);
    t << trace.str();
    if (!t) {
      throw IoError("failed writing escalation trace");
    }
    artifacts.push_back("escalation_trace.csv");
  }
  artifacts.push_back("manifest.json");

  json config = {{"data", opt.data_dir.string()},
                 {"kind", kind_name},
                 {"seed", opt.seed},
                 {"per_image_seed", "seed xor test index"},
                 {"cell_side", base.cell_side ? json(*base.cell_side) : json(nullptr)},
                 {"per_class_test", opt.per_class_test},
                 {"split_seed", opt.split_seed},
                 {"out", opt.out_dir.string()}};
  if (opt.model) config["model"] = opt.model->string();
  if (opt.oracle_endpoint) config["oracle"] = *opt.oracle_endpoint;
  if (opt.kind == AttackKind::D || opt.kind == AttackKind::E || opt.kind == AttackKind::F ||
      opt.kind == AttackKind::G) {
    config["band"] = {base.band.lo, base.band.hi};
  }
  if (opt.kind == AttackKind::Fgsm) config["fgsm_epsilon_grid"] = base.fgsm_epsilon_grid;
  if (opt.kind == AttackKind::Escalation) {
    config["escalation_step"] = base.escalation_step;
    config["escalation_max"] = base.escalation_max;
  }
  write_manifest(opt.out_dir / "manifest.json", "attack", std::move(config), artifacts, oracle->descriptor());
  out << "attack " << kind_name << ": " << report.per_image.size() << " images, mean conf decrease "
      << fixed6(report.mean_conf_decrease) << ", misclass rate " << fixed6(report.misclass_rate) << '\n';
}

void cmd_report(const ReportOptions& opt, std::ostream& out) {
  if (opt.csv_paths.empty()) {
    throw InvalidArgument("report needs at least one CSV");
  }
  std::vector<EvaluationReport> reports;
  for (const auto& p : opt.csv_paths) {
    try {
      reports.push_back(read_csv(p));
    } catch (const InvalidArgument& e) {
      throw DatasetError(p.string() + ": " + e.what());
    }
  }
  if (!opt.out.parent_path().empty()) {
    ensure_dir(opt.out.parent_path());
  }
  write_bar_chart(reports, opt.metric, opt.out);
  out << "wrote " << to_string(opt.metric) << " chart of " << reports.size() << " report(s) to " << opt.out.string()
      << '\n';
}

void cmd_serve_oracle(const ServeOptions& opt, std::ostream& err) {
  SoftmaxOracle oracle(load_model(opt.model.string()));
  if (!opt.listen) {
    FdChannel channel(::dup(STDIN_FILENO), ::dup(STDOUT_FILENO));
    serve_channel(oracle, channel);
    return;
  }
  const std::string& ep = *opt.listen;
  constexpr std::string_view tcp = "tcp://";
  const auto colon = ep.rfind(':');
  if (!ep.starts_with(tcp) || colon == std::string::npos || colon < tcp.size()) {
    throw InvalidArgument("--listen must be tcp://host:port, got '" + ep + "'");
  }
  std::string host = ep.substr(tcp.size(), colon - tcp.size());
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  int port = 0;
  try {
    port = std::stoi(ep.substr(colon + 1));
  } catch (const std::logic_error&) {
    port = -1;
  }
  if (port < 0 || port > 65535) {
    throw InvalidArgument("bad port in '" + ep + "'");
  }
  TcpOracleServer server(oracle, host, static_cast<std::uint16_t>(port));
  err << "listening on " << server.endpoint() << std::endl;
  for (;;) {
    ::pause();
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial attacks on grayscale face classifiers", "faceattack"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "write a synthetic labeled dataset");
  s->add_option("--classes", synth.config.num_classes, "number of classes")->capture_default_str();
  s->add_option("--per-class", synth.config.per_class, "images per class")->capture_default_str();
  s->add_option("--width", synth.config.width, "image width")->capture_default_str();
  s->add_option("--height", synth.config.height, "image height")->capture_default_str();
  s->add_option("--seed", synth.config.seed, "generator seed")->capture_default_str();
  s->add_option("--noise", synth.config.noise_amplitude, "per-pixel noise amplitude")->capture_default_str();
  s->add_option("--out", synth_out, "output directory")->required();

  TrainOptions train;
  std::string train_data, train_model;
  auto* t = app.add_subcommand("train", "train the built-in softmax model");
  t->add_option("--data", train_data, "dataset directory")->required();
  t->add_option("--model", train_model, "model file to write")->required();
  t->add_option("--epochs", train.config.epochs, "gradient descent steps")->capture_default_str();
  t->add_option("--lr", train.config.learning_rate, "learning rate")->capture_default_str();
  t->add_option("--l2", train.config.l2_penalty, "L2 penalty")->capture_default_str();
  t->add_option("--seed", train.config.seed, "training seed")->capture_default_str();
  t->add_option("--per-class-test", train.per_class_test, "test images per class")->capture_default_str();
  t->add_option("--split-seed", train.split_seed, "train/test split seed")->capture_default_str();

  AttackOptions attack;
  std::string attack_data, attack_out, kind_text = "A", band_text, model_path, endpoint;
  std::vector<double> grid;
  bool list_kinds = false;
  auto* a = app.add_subcommand("attack", "attack every test image and write a report");
  a->add_flag("--list-kinds", list_kinds, "list attack kinds and exit");
  a->add_option("--data", attack_data, "dataset directory");
  a->add_option("--model", model_path, "built-in model file");
  a->add_option("--oracle", endpoint, "external oracle endpoint (tcp://host:port or exec:<command>)");
  a->add_option("--kind", kind_text, "A..G, fgsm or escalate")->capture_default_str();
  a->add_option("--seed", attack.seed, "attack seed")->capture_default_str();
  a->add_option("--cell-side", attack.cell_side, "grid cell side in pixels");
  a->add_option("--band", band_text, "checkerboard band lo:hi for attack G");
  a->add_option("--epsilons", grid, "FGSM epsilon grid (ascending)")->delimiter(',');
  a->add_option("--escalation-step", attack.escalation_step, "escalation magnitude step")->capture_default_str();
  a->add_option("--escalation-max", attack.escalation_max, "escalation maximum magnitude")->capture_default_str();
  a->add_option("--per-class-test", attack.per_class_test, "test images per class")->capture_default_str();
  a->add_option("--split-seed", attack.split_seed, "train/test split seed")->capture_default_str();
  a->add_option("--out", attack_out, "output directory");

  ReportOptions report;
  std::vector<std::string> csvs;
  std::string metric_text = "conf", report_out;
  auto* r = app.add_subcommand("report", "render report CSVs as an SVG bar chart");
  r->add_option("csv", csvs, "report CSV files");
  r->add_option("--figure", metric_text, "conf, misclass or per-image")->capture_default_str();
  r->add_option("--out", report_out, "SVG file to write")->required();

  ServeOptions serve;
  std::string serve_model, listen;
  auto* v = app.add_subcommand("serve-oracle", "serve a built-in model over the oracle protocol");
  v->add_option("--model", serve_model, "model file")->required();
  v->add_option("--listen", listen, "tcp://host:port; stdin/stdout when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) {
      synth.out_dir = synth_out;
      cmd_synth(synth, out);
    } else if (t->parsed()) {
      train.data_dir = train_data;
      train.model_out = train_model;
      cmd_train(train, out);
    } else if (a->parsed()) {
      if (list_kinds) {
        for (AttackKind k : all_attack_kinds()) {
          out << to_string(k) << "\t" << describe(k) << '\n';
        }
        return kOk;
      }
      if (attack_data.empty() || attack_out.empty()) {
        err << "attack needs --data and --out\n";
        return kUsage;
      }
      attack.data_dir = attack_data;
      attack.out_dir = attack_out;
      attack.kind = parse_attack_kind(kind_text);
      if (!model_path.empty()) attack.model = model_path;
      if (!endpoint.empty()) attack.oracle_endpoint = endpoint;
      if (!band_text.empty()) attack.band = parse_band(band_text);
      attack.fgsm_grid = grid;
      cmd_attack(attack, out, err);
    } else if (r->parsed()) {
      for (const auto& c : csvs) report.csv_paths.emplace_back(c);
      report.metric = parse_chart_metric(metric_text);
      report.out = report_out;
      cmd_report(report, out);
    } else if (v->parsed()) {
      serve.model = serve_model;
      if (!listen.empty()) serve.listen = listen;
      cmd_serve_oracle(serve, err);
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const OracleError& e) {
    err << "oracle error: " << e.what() << '\n';
    return kOracleError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace faceattack::cli
