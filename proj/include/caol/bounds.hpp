#pragma once

// Filter-error bounds for the tight-frame filter update.
//
// For codes Z_l = Psi_l D_true + E_l:
//   deterministic:       ||D* - D_true||_F^2 <= 5 ||sum Psi_l^T E_l||_F^2 / lmin(G)^2
//   zero-mean mismatch:  E||D* - D_true||_F^2 <= 5 sigma_bar^2 rho^2
//   high probability:    see hp_bound()
// where G = sum_l Psi_l^T Psi_l.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "caol/caol.hpp"
#include "caol/random.hpp"

namespace caol {

/// Per-sample N x K mismatch matrices E_l.
using MismatchSet = std::vector<Matrix>;

/// Extreme eigenvalues of a symmetric matrix (self-adjoint solver).
struct SymmetricSpectrum {
  double min = 0.0;
  double max = 0.0;
  double trace = 0.0;
};
SymmetricSpectrum symmetric_spectrum(const Matrix& s);

struct DetBound {
  double bound = 0.0;
  double numerator = 0.0;   // ||sum Psi_l^T E_l||_F^2
  double lambda_min = 0.0;  // of sum Psi_l^T Psi_l
};

/// Throws RankDeficient when lmin(G) <= 1e-10 lmax(G).
DetBound det_error_bound(std::span<const LiftedOperator> lifts, std::span<const Matrix> mismatches);

/// tr(G) / lmin(G)^2.
double rho_squared(std::span<const LiftedOperator> lifts);

/// max_l lmax(E_l E_l^T), treating each fixed E_l as a point mass.
double sigma_bar_sq(std::span<const Matrix> mismatches);

/// Draws E_l for sample l.
using MismatchSampler = std::function<Matrix(std::size_t l, Rng& rng)>;

/// Monte Carlo estimate of max_l lmax(E{E_l E_l^T}) from `trials` draws per sample.
double sigma_bar_sq(std::size_t samples, std::size_t trials, const MismatchSampler& draw,
                    std::uint64_t seed);

double expected_bound(double sigma_bar_sq, double rho_sq);

/// Plug-in estimates of the ensemble quantities entering the high-probability bound.
struct EnsembleStats {
  Matrix lambda_bar;  // estimate of E(Psi^T Psi), R x R
  double gamma = 0.0; // bound on ||x||_2
  double sigma = 0.0; // bound on ||E||_F
  Matrix corr;        // estimate of E(Psi^T E), R x K
  std::size_t samples = 0;
};

EnsembleStats estimate_ensemble(std::span<const LiftedOperator> lifts,
                                std::span<const Matrix> mismatches);
EnsembleStats estimate_ensemble(std::span<const Signal> signals, std::span<const Matrix> mismatches,
                                const OffsetPattern& pattern);

struct RhoChi {
  double rho_bar = 0.0;  // sqrt(tr(lambda_bar) / L) / lmin(lambda_bar)
  double chi_bar = 0.0;  // ||corr||_F / lmin(lambda_bar)
};

/// Uses stats.samples as L.
RhoChi rho_bar_chi_bar(const EnsembleStats& stats);
RhoChi rho_bar_chi_bar(const EnsembleStats& stats, std::size_t samples);

struct HpBound {
  double delta = 0.0;
  double bound = 0.0;
  double prob = 0.0;
  bool vacuous = false;  // prob <= 0; reported as-is, never clamped
};

/// Exclusive upper end of the admissible delta interval: lmin(lambda_bar) / (2 R gamma^2).
double delta_upper_limit(const EnsembleStats& stats);

/// 5 {[sigma sqrt(tr/L) + ||corr||_F + 2 sigma gamma sqrt(R) delta] /
///    [lmin - 2 gamma^2 R delta]}^2, holding with probability
/// 1 - 3R exp(-L (delta^2/2) / (3 + delta/3)).
/// Throws DeltaOutOfRange unless 0 < delta < delta_upper_limit(stats).
HpBound hp_bound(const EnsembleStats& stats, double delta, std::size_t samples);

/// E_l = Z_l - Psi_l D_ref. D_ref is a raw R x K matrix and need not be feasible.
MismatchSet mismatch_from_codes(std::span<const Matrix> codes, std::span<const LiftedOperator> lifts,
                                const Matrix& reference);

struct BoundReport {
  DetBound det;
  double rho_sq = 0.0;
  double sigma_bar_sq = 0.0;
  double expected_bound = 0.0;
  RhoChi rho_chi;
  EnsembleStats stats;
  std::vector<HpBound> hp;
  /// delta values rejected as outside (0, delta_upper_limit).
  std::vector<double> rejected_deltas;
  double delta_limit = 0.0;
  // rank diagnostics
  bool gram_full_rank = false;
  bool cross_full_rank = false;
  double gram_lambda_max = 0.0;
};

/// Assembles every bound quantity for one data set. Out-of-range deltas are
/// listed in rejected_deltas instead of throwing.
BoundReport compute_bound_report(std::span<const LiftedOperator> lifts,
                                 std::span<const Matrix> codes, std::span<const Matrix> mismatches,
                                 std::span<const double> deltas);

}  // namespace caol
