#pragma once

// Synthetic instances with known ground-truth filters, and Monte Carlo drivers
// that check the filter-error bounds against observed errors.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caol/bounds.hpp"

namespace caol {

enum class SignalModel { Gaussian, Impulse, Loaded };

struct MismatchModel {
  enum class Kind { Zero, IidGaussian, BoundedBall, Correlated };

  Kind kind = Kind::Zero;
  /// s for IidGaussian, sigma for BoundedBall, c for Correlated.
  double scale = 0.0;
  /// Radius of the bounded-ball noise added to Correlated mismatch.
  double noise = 0.0;

  bool zero_mean() const noexcept { return kind != Kind::Correlated; }
};

std::string to_string(SignalModel model);
std::string to_string(MismatchModel::Kind kind);
SignalModel parse_signal_model(const std::string& name);
MismatchModel::Kind parse_mismatch_kind(const std::string& name);

struct SynthSpec {
  std::size_t n = 256;
  std::size_t r = 8;
  std::size_t k = 8;
  std::size_t l = 32;
  SignalModel signals = SignalModel::Gaussian;
  MismatchModel mismatch{MismatchModel::Kind::IidGaussian, 0.1, 0.0};
  std::uint64_t seed = 0;
  std::size_t trials = 100;
  /// Samples for SignalModel::Loaded, drawn uniformly with replacement.
  std::vector<Signal> dataset;
  /// Defaults to OffsetPattern::line(r); required for Grid datasets.
  std::optional<OffsetPattern> pattern;

  OffsetPattern offsets() const;
  /// Throws InvalidArgument for K < R, L == 0, trials == 0, negative scales,
  /// or a Loaded model without data.
  void validate() const;
};

struct SynthInstance {
  std::vector<Signal> signals;
  std::vector<LiftedOperator> lifts;
  FilterBank truth;
  CodeSet codes;
  MismatchSet mismatches;
  std::size_t rejections = 0;
};

/// Fixed R x K direction (unit Frobenius norm) for correlated mismatch.
Matrix correlation_direction(const SynthSpec& spec);

std::vector<Signal> draw_signals(const SynthSpec& spec, Rng& rng);
Matrix draw_mismatch(const SynthSpec& spec, const LiftedOperator& lift, const Matrix& direction,
                     Rng& rng);

/// Draws signals, truth filters and mismatch, with codes Z_l = Psi_l D_true + E_l.
/// Regenerates (up to 100 attempts) until sum Psi^T Z and sum Psi^T Psi D_true are
/// both full row rank; throws RankHypothesisUnsatisfiable otherwise.
SynthInstance synth_instance(const SynthSpec& spec, Rng& rng);
SynthInstance synth_instance(const SynthSpec& spec);

/// Same as synth_instance but keeps the given signals and redraws only mismatch.
SynthInstance synth_mismatch(const SynthSpec& spec, std::vector<Signal> signals,
                             std::vector<LiftedOperator> lifts, const FilterBank& truth, Rng& rng);

struct TrialRecord {
  std::size_t trial = 0;
  double error = 0.0;  // ||D* - D_true||_F^2
  double bound = 0.0;
  bool holds = true;
  std::size_t rejections = 0;
};

struct VerifyReport {
  std::string theorem;  // "thm1", "cor1" or "thm2"
  std::vector<TrialRecord> trials;

  double max_violation = 0.0;  // max(error - bound); <= tolerance when the bound held
  std::size_t held = 0;

  double mean_error = 0.0;
  double std_error = 0.0;       // standard error of mean_error
  double expected_bound = 0.0;  // 5 sigma_bar^2 rho^2 (cor1)
  double sigma_bar_sq = 0.0;
  double rho_sq = 0.0;

  double delta = 0.0;           // thm2
  double coverage = 0.0;        // fraction of trials with error <= bound
  double probability = 0.0;     // lower bound on coverage
  bool vacuous = false;
  RhoChi rho_chi;

  bool passed = false;
};

/// Slack allowed between an observed error and a deterministic bound.
inline constexpr double kViolationTolerance = 1e-9;

/// Optional additive perturbation of every computed bound (failure-path testing).
struct VerifyOptions {
  double perturb_bound = 0.0;
};

VerifyReport verify_det_bound(const SynthSpec& spec, const VerifyOptions& options = {});
VerifyReport monte_carlo_expected(const SynthSpec& spec, const VerifyOptions& options = {});
VerifyReport monte_carlo_hp(const SynthSpec& spec, double delta,
                            const VerifyOptions& options = {});

/// Population statistics for the ensemble described by `spec`: analytic for impulse signals
/// (lambda_bar = I, gamma = 1), otherwise plug-in estimates from `draws`
/// held-out samples.
EnsembleStats population_stats(const SynthSpec& spec, std::size_t draws = 100000);

struct RhoScanRow {
  std::size_t samples = 0;
  double mean_rho_sq = 0.0;
  double std_rho_sq = 0.0;
  std::size_t replicates = 0;
};

/// Mean and standard deviation of rho^2 over random subsets (without
/// replacement) of each size in the grid; the full set is used once when the
/// size equals the data set size.
std::vector<RhoScanRow> rho_scan(std::span<const Signal> signals, const OffsetPattern& pattern,
                                 std::span<const std::size_t> grid, std::size_t replicates,
                                 std::uint64_t seed);

/// Least-squares slope of log(mean rho^2) against log(L).
double log_log_slope(std::span<const RhoScanRow> rows);

struct ChiRow {
  std::size_t iteration = 0;
  double chi_bar = 0.0;
};

inline constexpr std::size_t kDefaultChiStride = 50;

/// chi_bar at every snapshot whose iteration is a multiple of `stride` (and the
/// final one), with mismatch measured against `reference`. Throws
/// MissingSnapshots if the trace was not recorded at a compatible stride.
std::vector<ChiRow> chi_track(const TrainTrace& trace, std::span<const LiftedOperator> lifts,
                              const Matrix& reference, std::size_t stride = kDefaultChiStride);

}  // namespace caol
