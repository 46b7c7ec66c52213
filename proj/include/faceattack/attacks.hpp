#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "faceattack/image.hpp"
#include "faceattack/oracle.hpp"
#include "faceattack/rng.hpp"
#include "faceattack/softmax_model.hpp"

namespace faceattack {

enum class AttackKind { A, B, C, D, E, F, G, Fgsm, Escalation };

const std::vector<AttackKind>& all_attack_kinds();
// "A" .. "G", "FGSM", "Escalation".
std::string_view to_string(AttackKind kind);
// Case-insensitive; also accepts "escalate". Throws InvalidArgument.
AttackKind parse_attack_kind(std::string_view text);
std::string_view describe(AttackKind kind);

struct MagnitudeBand {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const MagnitudeBand&, const MagnitudeBand&) = default;
};

// Fixed bands for D, E, F; G uses D's band. Throws for other kinds.
MagnitudeBand default_band(AttackKind kind);

// 0.01, 0.02, ..., 0.50.
std::vector<double> default_fgsm_grid();

struct AttackConfig {
  AttackKind kind = AttackKind::A;
  std::uint64_t seed = 0;
  // Unset: 24 for 168x192, width/7 when the image is a 7x8 grid of squares.
  std::optional<std::size_t> cell_side;
  MagnitudeBand band;
  std::vector<double> fgsm_epsilon_grid;
  int escalation_step = 10;
  int escalation_max = 255;

  // Band and epsilon grid filled in for the kind.
  static AttackConfig defaults(AttackKind kind, std::uint64_t seed);
};

std::size_t resolve_cell_side(const AttackConfig& cfg, std::size_t width, std::size_t height);

/// One uniformly drawn coordinate per grid cell, in cell row-major order.
/// Each cell draws x, then y.
std::vector<PixelCoordinate> sample_candidates(const GrayscaleImage& image, std::size_t cell_side, Rng& rng);

struct CandidateEvaluation {
  PixelCoordinate coordinate;
  std::size_t cell_index = 0;
  double resulting_actual_confidence = 0.0;
  ClassProbabilities probs;
};

struct AttackOutcome {
  AttackKind kind = AttackKind::A;
  GrayscaleImage original;
  GrayscaleImage perturbed;
  std::size_t true_label = 0;
  ClassProbabilities baseline_probs;
  ClassProbabilities attacked_probs;
  std::uint64_t queries_used = 0;
  std::size_t pixels_changed = 0;
  // Inverted pixels for the single-pixel attacks (for G: the second stage's).
  std::vector<PixelCoordinate> changed_coordinates;
  bool misclassified = false;
  std::optional<double> epsilon;   // FGSM
  std::optional<int> magnitude;    // Escalation: last band applied

  double baseline_confidence() const { return baseline_probs[true_label]; }
  double attacked_confidence() const { return attacked_probs[true_label]; }
};

/// Baseline query, then one query per grid cell, inverting a random pixel of
/// each cell in turn. Keeps the candidate with the lowest true-class
/// confidence (ties: lowest cell index). 57 queries on a 56-cell grid.
AttackOutcome attack_a(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg);

/// Same candidates as attack_a; the two best by individual ranking are
/// inverted together and the joint image is classified once more.
AttackOutcome attack_b(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg);

/// attack_a, then attack_a again on its result with fresh candidates from the
/// same random stream. The second best pixel is applied unconditionally.
AttackOutcome attack_c(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg);

/// Checkerboard noise in cfg.band seeded from cfg.seed. Two queries.
AttackOutcome attack_checkerboard(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle,
                                  const AttackConfig& cfg);

/// Checkerboard noise (cfg.band) followed by attack_b on the noisy image.
/// Both stages seed their own stream from cfg.seed. The noisy image's
/// classification doubles as the second stage's baseline.
AttackOutcome attack_g(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg);

/// Sign-of-gradient steps of round(eps * 255) intensity levels for each eps
/// of the ascending grid. Returns the first misclassifying candidate, or the
/// one for the largest eps if none does.
AttackOutcome attack_fgsm(const GrayscaleImage& image, std::size_t true_label, SoftmaxOracle& oracle,
                          const AttackConfig& cfg);

struct EscalationRound {
  MagnitudeBand band;
  double conf_decrease = 0.0;
  bool misclassified = false;
};

struct EscalationResult {
  std::vector<EscalationRound> trace;
  AttackOutcome outcome;
};

/// Checkerboard bands [m, m] for m = step, 2*step, ... <= max_magnitude, all
/// drawn from rng, stopping at the first misclassification.
EscalationResult escalate_until_misclassified(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle,
                                              int step, int max_magnitude, Rng& rng);

/// Dispatches on cfg.kind. FGSM requires oracle to be a SoftmaxOracle;
/// Escalation seeds its stream from cfg.seed.
AttackOutcome run_attack(const GrayscaleImage& image, std::size_t true_label, Oracle& oracle, const AttackConfig& cfg);

}  // namespace faceattack
