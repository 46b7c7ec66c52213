#include "faceattack/attacks.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "faceattack/errors.hpp"
#include "faceattack/metrics.hpp"

namespace faceattack {

namespace {

struct KindInfo {
  AttackKind kind;
  std::string_view name;
  std::string_view summary;
};

constexpr std::array<KindInfo, 9> kKinds{{
    {AttackKind::A, "A", "invert the best of 56 sampled pixels (one per grid cell)"},
    {AttackKind::B, "B", "invert the two best of 56 sampled pixels"},
    {AttackKind::C, "C", "attack A twice, the second round on the first round's image"},
    {AttackKind::D, "D", "checkerboard noise, magnitudes 30..60"},
    {AttackKind::E, "E", "checkerboard noise, magnitudes 60..90"},
    {AttackKind::F, "F", "checkerboard noise, magnitudes 120..150"},
    {AttackKind::G, "G", "attack D, then attack B on the noisy image"},
    {AttackKind::Fgsm, "FGSM", "fast gradient sign steps, smallest misclassifying epsilon (built-in model only)"},
    {AttackKind::Escalation, "Escalation", "checkerboard bands raised step by step until misclassified"},
}};

const KindInfo& info(AttackKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw InvalidArgument("unknown attack kind");
}

// Counts the queries issued by one attack invocation, independent of other
// users of the same oracle.
class QueryLedger {
 public:
  explicit QueryLedger(Oracle& oracle) : oracle_(oracle) {}

  ClassProbabilities classify(const GrayscaleImage& image) {
    ++count_;
    return oracle_.classify(image);
  }
  std::uint64_t count() const noexcept { return count_; }

 private:
  Oracle& oracle_;
  std::uint64_t count_ = 0;
};

void check_label(const Oracle& oracle, std::size_t label) {
  if (label >= oracle.num_classes()) {
    throw InvalidArgument("true label " + std::to_string(label) + " out of range for " +
                          std::to_string(oracle.num_classes()) + " classes");
  }
}

std::vector<CandidateEvaluation> evaluate_candidates(const GrayscaleImage& image, std::size_t true_label,
                                                     QueryLedger& ledger, std::size_t cell_side, Rng& rng) {
  const auto coords = sample_candidates(image, cell_side, rng);
  std::vector<CandidateEvaluation> evals;
  evals.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto probs = ledger.classify(invert_pixel(image, coords[i]));
    const double conf = probs[true_label];
    evals.push_back({coords[i], i, conf, std::move(probs)});
  }
  return evals;
}

// Ascending true-class confidence, ties by cell index.
std::vector<CandidateEvaluation> ranked(std::vector<CandidateEvaluation> evals) {
  std::stable_sort(evals.begin(), evals.end(), [](const CandidateEvaluation& a, const CandidateEvaluation& b) {
    if (a.resulting_actual_confidence != b.resulting_actual_confidence) {
      return a.resulting_actual_confidence < b.resulting_actual_confidence;
    }
    return a.cell_index < b.cell_index;
  });
  return evals;
}

AttackOutcome finish(AttackKind kind, const GrayscaleImage& original, GrayscaleImage perturbed, std::size_t label,
                     ClassProbabilities baseline, ClassProbabilities attacked, std::uint64_t queries) {
  AttackOutcome out;
  out.kind = kind;
  out.original = original;
  out.pixels_changed = count_differing_pixels(original, perturbed);
  out.perturbed = std::move(perturbed);
  out.true_label = label;
  out.baseline_probs = std::move(baseline);
  out.attacked_probs = std::move(attacked);
  out.queries_used = queries;
  out.misclassified = out.attacked_probs.argmax() != label;
  return out;
}

std::vector<PixelCoordinate> still_changed(const GrayscaleImage& original, const GrayscaleImage& perturbed,
                                           std::vector<PixelCoordinate> coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  std::erase_if(coords, [&](PixelCoordinate p) { return original.at(p) == perturbed.at(p); });
  return coords;
}

// Second stage of B and G: pick the two best candidates on `image` and
// classify the joint result.
struct PairResult {
  GrayscaleImage image;
  ClassProbabilities probs;
  std::vector<PixelCoordinate> coords;
};

PairResult best_pair(const GrayscaleImage& image, std::size_t label, QueryLedger& ledger, std::size_t side, Rng& rng) {
  const auto order = ranked(evaluate_candidates(image, label, ledger, side, rng));
  PairResult r;
  r.image = image;
  const std::size_t picks = std::min<std::size_t>(2, order.size());
  for (std::size_t i = 0; i < picks; ++i) {
    r.image = invert_pixel(r.image, order[i].coordinate);
    r.coords.push_back(order[i].coordinate);
  }
  r.probs = ledger.classify(r.image);
  return r;
}

}  // namespace

const std::vector<AttackKind>& all_attack_kinds() {
  static const std::vector<AttackKind> kinds = [] {
    std::vector<AttackKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

std::string_view to_string(AttackKind kind) { return info(kind).name; }

std::string_view describe(AttackKind kind) { return info(kind).summary; }

AttackKind parse_attack_kind(std::string_view text) {
  std::string lower;
  for (char c : text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "escalate") return AttackKind::Escalation;
  for (const auto& k : kKinds) {
    std::string name;
    for (char c : k.name) name += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (name == lower) return k.kind;
  }
  throw InvalidArgument("unknown attack kind '" + std::string(text) + "'");
}

MagnitudeBand default_band(AttackKind kind) {
  switch (kind) {
    case AttackKind::D:
    case AttackKind::G:
      return {30, 60};
    case AttackKind::E:
      return {60, 90};
    case AttackKind::F:
      return {120, 150};
    default:
      throw InvalidArgument("attack " + std::string(to_string(kind)) + " has no magnitude band");
  }
}

std::vector<double> default_fgsm_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 50; ++i) grid.push_back(i / 100.0);
  return grid;
}

AttackConfig AttackConfig::defaults(AttackKind kind, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.kind = kind;
  cfg.seed = seed;
  if (kind == AttackKind::D || kind == AttackKind::E || kind == AttackKind::F || kind == AttackKind::G) {
    cfg.band = default_band(kind);
  }
  if (kind == AttackKind::Fgsm) {
    cfg.fgsm_epsilon_grid = default_fgsm_grid();
  }
  return cfg;
}

std::size_t resolve_cell_side(const AttackConfig& cfg, std::size_t width, std::size_t height) {
  if (cfg.cell_side) {
    if (*cfg.cell_side == 0 || width % *cfg.cell_side != 0 || height % *cfg.cell_side != 0) {
      throw InvalidArgument("cell side " + std::to_string(*cfg.cell_side) + " does not divide " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
    return *cfg.cell_side;
  }
  if (width > 0 && width % 7 == 0 && height % 8 == 0 && height % (width / 7) == 0) {
    return width / 7;
  }
  throw InvalidArgument("no default cell side for " + std::to_string(width) + "x" + std::to_string(height) +
                        " images; set one explicitly");
}

std::vector<PixelCoordinate> sample_candidates(const GrayscaleImage& image, std::size_t cell_side, Rng& rng) {
  const auto cells = partition_grid(image, cell_side);
  std::vector<PixelCoordinate> out;
  out.reserve(cells.size());
  const auto span = static_cast<std::int64_t>(cell_side) - 1;
  for (const auto& cell : cells) {
    const auto dx = static_cast<std::size_t>(rng.uniform_int(0, span));
    const auto dy = static_cast<std::size_t>(rng.uniform_int(0, span));
    out.push_back({cell.origin.x + dx, cell.origin.y + dy});
  }
  return out;
}

AttackOutcome attack_a(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg) {
  check_label(oracle, true_label);
  const std::size_t side = resolve_cell_side(cfg, image.width(), image.height());
  QueryLedger ledger(oracle);
  Rng rng(cfg.seed);
  auto baseline = ledger.classify(image);
  auto order = ranked(evaluate_candidates(image, true_label, ledger, side, rng));
  const auto& best = order.front();
  auto out = finish(AttackKind::A, image, invert_pixel(image, best.coordinate), true_label, std::move(baseline),
                    best.probs, ledger.count());
  out.changed_coordinates = {best.coordinate};
  return out;
}

AttackOutcome attack_b(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg) {
  check_label(oracle, true_label);
  const std::size_t side = resolve_cell_side(cfg, image.width(), image.height());
  QueryLedger ledger(oracle);
  Rng rng(cfg.seed);
  auto baseline = ledger.classify(image);
  auto pair = best_pair(image, true_label, ledger, side, rng);
  auto out = finish(AttackKind::B, image, std::move(pair.image), true_label, std::move(baseline),
                    std::move(pair.probs), ledger.count());
  out.changed_coordinates = std::move(pair.coords);
  return out;
}

AttackOutcome attack_c(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg) {
  check_label(oracle, true_label);
  const std::size_t side = resolve_cell_side(cfg, image.width(), image.height());
  QueryLedger ledger(oracle);
  Rng rng(cfg.seed);
  auto baseline = ledger.classify(image);
  const auto first = ranked(evaluate_candidates(image, true_label, ledger, side, rng)).front();
  const GrayscaleImage round1 = invert_pixel(image, first.coordinate);
  // The second round repeats attack A's procedure in full, including its
  // baseline query on the round-1 image.
  ledger.classify(round1);
  const auto second = ranked(evaluate_candidates(round1, true_label, ledger, side, rng)).front();
  GrayscaleImage round2 = invert_pixel(round1, second.coordinate);
  auto out = finish(AttackKind::C, image, std::move(round2), true_label, std::move(baseline), second.probs,
                    ledger.count());
  out.changed_coordinates = still_changed(image, out.perturbed, {first.coordinate, second.coordinate});
  return out;
}

AttackOutcome attack_checkerboard(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle,
                                  const AttackConfig& cfg) {
  check_label(oracle, true_label);
  QueryLedger ledger(oracle);
  Rng rng(cfg.seed);
  auto baseline = ledger.classify(image);
  GrayscaleImage noisy = apply_checkerboard_noise(image, cfg.band.lo, cfg.band.hi, rng);
  auto attacked = ledger.classify(noisy);
  return finish(cfg.kind, image, std::move(noisy), true_label, std::move(baseline), std::move(attacked),
                ledger.count());
}

AttackOutcome attack_g(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg) {
  check_label(oracle, true_label);
  const std::size_t side = resolve_cell_side(cfg, image.width(), image.height());
  QueryLedger ledger(oracle);
  auto baseline = ledger.classify(image);
  Rng noise_rng(cfg.seed);
  const GrayscaleImage noisy = apply_checkerboard_noise(image, cfg.band.lo, cfg.band.hi, noise_rng);
  ledger.classify(noisy);  // second stage's baseline
  Rng pixel_rng(cfg.seed);
  auto pair = best_pair(noisy, true_label, ledger, side, pixel_rng);
  auto out = finish(AttackKind::G, image, std::move(pair.image), true_label, std::move(baseline),
                    std::move(pair.probs), ledger.count());
  out.changed_coordinates = std::move(pair.coords);
  return out;
}

AttackOutcome attack_fgsm(const GrayscaleImage& image, std::size_t true_label, SoftmaxOracle& oracle,
                          const AttackConfig& cfg) {
  check_label(oracle, true_label);
  const auto& grid = cfg.fgsm_epsilon_grid;
  if (grid.empty()) {
    throw InvalidArgument("FGSM epsilon grid is empty");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]) || grid[i] < 0.0 || (i > 0 && grid[i] <= grid[i - 1])) {
      throw InvalidArgument("FGSM epsilon grid must be non-negative and strictly ascending");
    }
  }
  QueryLedger ledger(oracle);
  auto baseline = ledger.classify(image);
  const GradientField grad = loss_input_gradient(oracle.model(), image, true_label);
  std::vector<int> sign(grad.values.size());
  std::transform(grad.values.begin(), grad.values.end(), sign.begin(),
                 [](double g) { return g > 0.0 ? 1 : (g < 0.0 ? -1 : 0); });

  GrayscaleImage candidate;
  ClassProbabilities probs;
  double chosen = grid.back();
  for (double eps : grid) {
    const int delta = static_cast<int>(std::lround(eps * 255.0));
    candidate = image;
    auto px = candidate.mutable_pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = static_cast<std::uint8_t>(std::clamp(int(px[i]) + delta * sign[i], 0, 255));
    }
    probs = ledger.classify(candidate);
    if (probs.argmax() != true_label) {
      chosen = eps;
      break;
    }
  }
  auto out = finish(AttackKind::Fgsm, image, std::move(candidate), true_label, std::move(baseline),
                    std::move(probs), ledger.count());
  out.epsilon = chosen;
  return out;
}

EscalationResult escalate_until_misclassified(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle,
                                              int step, int max_magnitude, Rng& rng) {
  check_label(oracle, true_label);
  if (step < 1) {
    throw InvalidArgument("escalation step must be at least 1");
  }
  if (max_magnitude < 0 || max_magnitude > 255) {
    throw InvalidArgument("escalation max magnitude must lie in [0, 255]");
  }
  QueryLedger ledger(oracle);
  EscalationResult result;
  auto baseline = ledger.classify(image);
  GrayscaleImage current = image;
  ClassProbabilities current_probs = baseline;
  std::optional<int> last;
  for (int m = step; m <= max_magnitude; m += step) {
    current = apply_checkerboard_noise(image, m, m, rng);
    current_probs = ledger.classify(current);
    const bool miss = current_probs.argmax() != true_label;
    result.trace.push_back(
        {{m, m}, conf_decrease(baseline[true_label], current_probs[true_label]), miss});
    last = m;
    if (miss) break;
  }
  result.outcome = finish(AttackKind::Escalation, image, std::move(current), true_label, std::move(baseline),
                          std::move(current_probs), ledger.count());
  result.outcome.magnitude = last;
  return result;
}

AttackOutcome run_attack(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle,
                         const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::A:
      return attack_a(image, true_label, oracle, cfg);
    case AttackKind::B:
      return attack_b(image, true_label, oracle, cfg);
    case AttackKind::C:
      return attack_c(image, true_label, oracle, cfg);
    case AttackKind::D:
    case AttackKind::E:
    case AttackKind::F:
      return attack_checkerboard(image, true_label, oracle, cfg);
    case AttackKind::G:
      return attack_g(image, true_label, oracle, cfg);
    case AttackKind::Fgsm: {
      auto* white_box = dynamic_cast<SoftmaxOracle*>(&oracle);
      if (white_box == nullptr) {
        throw InvalidArgument("FGSM needs the built-in model's gradients; external oracles are black-box");
      }
      return attack_fgsm(image, true_label, *white_box, cfg);
    }
    case AttackKind::Escalation: {
      Rng rng(cfg.seed);
      return escalate_until_misclassified(image, true_label, oracle, cfg.escalation_step, cfg.escalation_max, rng)
          .outcome;
    }
  }
  throw InvalidArgument("unknown attack kind");
}

}  // namespace faceattack
