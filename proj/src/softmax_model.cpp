#include "faceattack/softmax_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "faceattack/errors.hpp"

namespace faceattack {

namespace {

// Four independent partial sums; summation order is fixed so results are
// reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) {
    s0 += a[i] * b[i];
  }
  return (s0 + s1) + (s2 + s3);
}

// In-place softmax; returns log-sum-exp of the input.
double softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) {
    v /= sum;
  }
  return m + std::log(sum);
}

}  // namespace

std::vector<double> normalize(const GrayscaleImage& image) {
  std::vector<double> x(image.pixel_count());
  std::transform(image.pixels().begin(), image.pixels().end(), x.begin(),
                 [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
  return x;
}

SoftmaxModel::SoftmaxModel(std::size_t width, std::size_t height, std::vector<std::string> class_names)
    : width_(width),
      height_(height),
      class_names_(std::move(class_names)),
      weights_(class_names_.size() * width * height, 0.0),
      biases_(class_names_.size(), 0.0) {
  if (class_names_.empty() || width == 0 || height == 0) {
    throw InvalidArgument("softmax model needs at least one class and a non-empty input");
  }
}

SoftmaxModel::SoftmaxModel(std::size_t width, std::size_t height, std::vector<std::string> class_names,
                           std::vector<double> weights, std::vector<double> biases)
    : width_(width),
      height_(height),
      class_names_(std::move(class_names)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  if (class_names_.empty() || width == 0 || height == 0) {
    throw InvalidArgument("softmax model needs at least one class and a non-empty input");
  }
  if (weights_.size() != class_names_.size() * input_size() || biases_.size() != class_names_.size()) {
    throw ModelError("weight/bias shapes do not match " + std::to_string(class_names_.size()) + " classes of " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights_.begin(), weights_.end(), finite) || !std::all_of(biases_.begin(), biases_.end(), finite)) {
    throw ModelError("model parameters must be finite");
  }
}

void SoftmaxModel::check_input(std::span<const double> normalized) const {
  if (normalized.size() != input_size()) {
    throw DimensionMismatch("model expects " + std::to_string(input_size()) + " inputs, got " +
                            std::to_string(normalized.size()));
  }
}

std::vector<double> SoftmaxModel::logits(std::span<const double> normalized) const {
  check_input(normalized);
  std::vector<double> z(num_classes());
  for (std::size_t c = 0; c < z.size(); ++c) {
    z[c] = dot(weights_.data() + c * input_size(), normalized.data(), input_size()) + biases_[c];
  }
  return z;
}

ClassProbabilities SoftmaxModel::probabilities_normalized(std::span<const double> normalized) const {
  auto z = logits(normalized);
  softmax_inplace(z);
  return ClassProbabilities(std::move(z));
}

ClassProbabilities SoftmaxModel::probabilities(const GrayscaleImage& image) const {
  if (image.width() != width_ || image.height() != height_) {
    throw DimensionMismatch("model expects " + std::to_string(width_) + "x" + std::to_string(height_) +
                            " images, got " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  return probabilities_normalized(normalize(image));
}

double SoftmaxModel::loss_normalized(std::span<const double> normalized, std::size_t label) const {
  if (label >= num_classes()) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range");
  }
  auto z = logits(normalized);
  const double target = z[label];
  return softmax_inplace(z) - target;
}

GradientField loss_input_gradient(const SoftmaxModel& model, const GrayscaleImage& image, std::size_t true_label) {
  if (true_label >= model.num_classes()) {
    throw InvalidArgument("label " + std::to_string(true_label) + " out of range");
  }
  const auto p = model.probabilities(image);
  GradientField g{image.width(), image.height(), std::vector<double>(model.input_size(), 0.0)};
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    const double coeff = p[c] - (c == true_label ? 1.0 : 0.0);
    const auto row = model.weight_row(c);
    for (std::size_t i = 0; i < row.size(); ++i) {
      g.values[i] += coeff * row[i];
    }
  }
  return g;
}

bool TrainHistory::monotone(double slack) const {
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] > losses[i - 1] + slack) {
      return false;
    }
  }
  return true;
}

namespace {

struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<std::size_t> labels;

  const double* row(std::size_t n) const { return x.data() + n * cols; }
};

DesignMatrix design_matrix(const Dataset& data) {
  DesignMatrix m;
  m.rows = data.size();
  m.cols = data.image_width() * data.image_height();
  m.x.reserve(m.rows * m.cols);
  for (const auto& item : data.items()) {
    const auto v = normalize(item.image);
    m.x.insert(m.x.end(), v.begin(), v.end());
    m.labels.push_back(item.label);
  }
  return m;
}

// Mean cross-entropy, filling probs (rows x classes) as a by-product.
double forward(const SoftmaxModel& model, const DesignMatrix& m, std::vector<double>& probs) {
  const std::size_t k = model.num_classes();
  probs.assign(m.rows * k, 0.0);
  std::vector<double> z(k);
  double total = 0.0;
  for (std::size_t n = 0; n < m.rows; ++n) {
    for (std::size_t c = 0; c < k; ++c) {
      z[c] = dot(model.weight_row(c).data(), m.row(n), m.cols) + model.biases()[c];
    }
    const double target = z[m.labels[n]];
    total += softmax_inplace(z) - target;
    std::copy(z.begin(), z.end(), probs.begin() + static_cast<std::ptrdiff_t>(n * k));
  }
  return total / static_cast<double>(m.rows);
}

double l2_term(const SoftmaxModel& model, double l2_penalty) {
  const auto w = model.weights();
  return 0.5 * l2_penalty * dot(w.data(), w.data(), w.size());
}

}  // namespace

double training_objective(const SoftmaxModel& model, const Dataset& data, double l2_penalty) {
  if (data.empty()) {
    throw InvalidArgument("objective over an empty dataset");
  }
  std::vector<double> probs;
  return forward(model, design_matrix(data), probs) + l2_term(model, l2_penalty);
}

SoftmaxModel train_softmax(const Dataset& train, const TrainConfig& cfg, TrainHistory* history) {
  if (train.empty()) {
    throw InvalidArgument("cannot train on an empty dataset");
  }
  if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0) || !(cfg.l2_penalty >= 0.0)) {
    throw InvalidArgument("train config needs epochs >= 1, learning_rate > 0, l2_penalty >= 0");
  }
  const auto m = design_matrix(train);
  SoftmaxModel model(train.image_width(), train.image_height(), train.class_names());
  const std::size_t k = model.num_classes();
  const double inv_n = 1.0 / static_cast<double>(m.rows);
  std::vector<double> probs;
  std::vector<double> grad_w(model.weights().size());
  std::vector<double> grad_b(k);
  if (history != nullptr) {
    history->losses.clear();
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = forward(model, m, probs) + l2_term(model, cfg.l2_penalty);
    if (history != nullptr) {
      history->losses.push_back(loss);
    }
    const auto w = model.weights();
    for (std::size_t i = 0; i < grad_w.size(); ++i) {
      grad_w[i] = cfg.l2_penalty * w[i];
    }
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t n = 0; n < m.rows; ++n) {
      const double* x = m.row(n);
      for (std::size_t c = 0; c < k; ++c) {
        const double r = (probs[n * k + c] - (m.labels[n] == c ? 1.0 : 0.0)) * inv_n;
        grad_b[c] += r;
        double* g = grad_w.data() + c * m.cols;
        for (std::size_t i = 0; i < m.cols; ++i) {
          g[i] += r * x[i];
        }
      }
    }
    auto wm = model.mutable_weights();
    for (std::size_t i = 0; i < wm.size(); ++i) {
      wm[i] -= cfg.learning_rate * grad_w[i];
    }
    auto bm = model.mutable_biases();
    for (std::size_t c = 0; c < k; ++c) {
      bm[c] -= cfg.learning_rate * grad_b[c];
    }
  }
  if (history != nullptr) {
    history->losses.push_back(forward(model, m, probs) + l2_term(model, cfg.l2_penalty));
  }
  return model;
}

double accuracy(const SoftmaxModel& model, const Dataset& data) {
  if (data.empty()) {
    throw InvalidArgument("accuracy over an empty dataset");
  }
  std::size_t correct = 0;
  for (const auto& item : data.items()) {
    correct += model.probabilities(item.image).argmax() == item.label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  std::string_view line() {
    if (pos_ >= text_.size()) {
      throw ModelError("model file ends early");
    }
    const auto end = text_.find('\n', pos_);
    const auto stop = end == std::string_view::npos ? text_.size() : end;
    auto out = text_.substr(pos_, stop - pos_);
    pos_ = stop + 1;
    return out;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') {
      ++i;
    }
    const auto start = i;
    while (i < s.size() && s[i] != ' ') {
      ++i;
    }
    if (i > start) {
      out.push_back(s.substr(start, i - start));
    }
  }
  return out;
}

std::vector<double> parse_doubles(std::string_view line, std::size_t expected, const char* what) {
  const auto tokens = split_spaces(line);
  if (tokens.size() != expected) {
    throw ModelError(std::string(what) + ": expected " + std::to_string(expected) + " values, got " +
                     std::to_string(tokens.size()));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const auto t = tokens[i];
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out[i]);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      throw ModelError(std::string(what) + ": bad number '" + std::string(t) + "'");
    }
  }
  return out;
}

}  // namespace

std::string serialize_model(const SoftmaxModel& model) {
  std::string out = "softmax-model 1\n";
  out += std::to_string(model.num_classes()) + " " + std::to_string(model.input_width()) + " " +
         std::to_string(model.input_height()) + "\n";
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    out += (c ? " " : "") + model.class_names()[c];
  }
  out += '\n';
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    const auto row = model.weight_row(c);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) {
        out += ' ';
      }
      append_double(out, row[i]);
    }
    out += '\n';
  }
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    if (c) {
      out += ' ';
    }
    append_double(out, model.biases()[c]);
  }
  out += '\n';
  return out;
}

SoftmaxModel parse_model(std::string_view text) {
  TokenReader reader(text);
  if (reader.line() != "softmax-model 1") {
    throw ModelError("not a softmax-model 1 file");
  }
  const auto dims = parse_doubles(reader.line(), 3, "dimensions");
  const auto classes = static_cast<std::size_t>(dims[0]);
  const auto width = static_cast<std::size_t>(dims[1]);
  const auto height = static_cast<std::size_t>(dims[2]);
  if (classes == 0 || width == 0 || height == 0 || double(classes) != dims[0] || double(width) != dims[1] ||
      double(height) != dims[2]) {
    throw ModelError("invalid model dimensions");
  }
  std::vector<std::string> names;
  for (auto t : split_spaces(reader.line())) {
    names.emplace_back(t);
  }
  if (names.size() != classes) {
    throw ModelError("expected " + std::to_string(classes) + " class names");
  }
  std::vector<double> weights;
  weights.reserve(classes * width * height);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto row = parse_doubles(reader.line(), width * height, "weights");
    weights.insert(weights.end(), row.begin(), row.end());
  }
  auto biases = parse_doubles(reader.line(), classes, "biases");
  return SoftmaxModel(width, height, std::move(names), std::move(weights), std::move(biases));
}

void save_model(const SoftmaxModel& model, const std::string& path) {
  for (const auto& name : model.class_names()) {
    if (name.empty() || name.find_first_of(" \n") != std::string::npos) {
      throw ModelError("class name '" + name + "' cannot be stored in a model file");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create " + path);
  }
  out << serialize_model(model);
  if (!out) {
    throw IoError("failed writing " + path);
  }
}

SoftmaxModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

SoftmaxOracle::SoftmaxOracle(SoftmaxModel model, std::string descriptor)
    : model_(std::move(model)), descriptor_(std::move(descriptor)) {}

ClassProbabilities SoftmaxOracle::do_classify(const GrayscaleImage& image) { return model_.probabilities(image); }

}  // namespace faceattack
