#pragma once

// Convolutional analysis operator learning with a tight-frame filter constraint:
//
//   min_D min_Z  sum_l sum_k ||Psi_l d_k - z_{l,k}||^2 + alpha ||z_{l,k}||_0
//   subject to   D D^T = (1/R) I
//
// solved by exact alternation between hard-thresholded codes and a scaled
// orthogonal Procrustes filter update.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "caol/lift.hpp"

namespace caol {

/// Relative singular-value threshold used by every full-rank test.
inline constexpr double kRankTolerance = 1e-10;

/// R x K filter matrix with K >= R and D D^T = (1/R) I.
class FilterBank {
 public:
  /// Validates shape and the tight-frame constraint to `tolerance` per entry
  /// (and D^T D = (1/K) I when R == K). Throws InvalidArgument otherwise.
  static FilterBank from_matrix(Matrix d, double tolerance = 1e-10);

  const Matrix& matrix() const noexcept { return d_; }
  std::size_t filter_size() const noexcept { return static_cast<std::size_t>(d_.rows()); }
  std::size_t filter_count() const noexcept { return static_cast<std::size_t>(d_.cols()); }
  Vector filter(std::size_t k) const { return d_.col(static_cast<Eigen::Index>(k)); }

  /// Largest entry of |D D^T - (1/R) I|.
  double frame_defect() const;

 private:
  explicit FilterBank(Matrix d) : d_(std::move(d)) {}
  Matrix d_;
};

/// Per-sample N x K code matrices; column k holds z_{l,k}.
using CodeSet = std::vector<Matrix>;

/// Polar factor of a K x R matrix with full column rank: Q = W V^T from the
/// thin SVD A = W S V^T. Throws RankDeficient when sigma_R <= 1e-10 sigma_1.
Matrix polar_factor(const Matrix& a);

/// sigma_min > kRankTolerance * sigma_max over min(rows, cols) singular values.
bool full_rank(const Matrix& a);

/// (1/sqrt(R)) Q(G)^T for a seeded standard Gaussian K x R matrix G.
FilterBank random_orthogonal_filters(std::size_t r, std::size_t k, std::uint64_t seed);

/// Elementwise: keep v_i when v_i^2 > alpha, else 0.
Matrix hard_threshold(const Matrix& v, double alpha);

double objective(const FilterBank& filters, std::span<const LiftedOperator> lifts,
                 std::span<const Matrix> codes, double alpha);

/// Exact minimiser over Z of F(D, Z) for one sample.
Matrix sparse_code_update(const FilterBank& filters, const Signal& x,
                          const OffsetPattern& pattern, double alpha);

/// Global minimiser of sum_l ||Psi_l D - Z_l||_F^2 over tight-frame D.
FilterBank filter_update(std::span<const LiftedOperator> lifts, std::span<const Matrix> codes);

/// Same update given the accumulated cross term C = sum_l Psi_l^T Z_l (R x K).
FilterBank filter_update_from_cross(const Matrix& cross);

struct TrainConfig {
  double alpha = 1e-3;
  std::size_t max_iters = 1000;
  double rel_tol = 1e-8;
  std::uint64_t seed = 0;
  std::size_t record_every = 50;
  /// Store full code matrices in each snapshot (memory heavy; small runs only).
  bool keep_codes = false;

  void validate() const;
};

struct TrainSnapshot {
  std::size_t iteration = 0;
  double objective = 0.0;
  double sparsity = 0.0;
  Matrix filters;     // filters after this iteration's filter update
  Matrix code_cross;  // sum_l Psi_l^T Z_l for this iteration's codes
  CodeSet codes;      // empty unless TrainConfig::keep_codes
};

struct TrainTrace {
  /// F(D_init, Z_0): objective after the first code update.
  double initial_objective = 0.0;
  /// objectives[i] = F(D_{i+1}, Z_i), i.e. after the filter update of iteration i.
  std::vector<double> objectives;
  /// Fraction of nonzero code entries at iteration i.
  std::vector<double> sparsity;
  std::vector<TrainSnapshot> snapshots;
  std::size_t record_every = 0;
  bool converged = false;

  std::size_t iterations() const noexcept { return objectives.size(); }
  /// Largest increase F_{i+1} - F_i relative to max(1, F_i); <= 0 for a monotone trace.
  double max_relative_increase() const;
};

struct TrainResult {
  FilterBank filters;
  CodeSet codes;
  TrainTrace trace;
};

/// Alternates code and filter updates until |F_prev - F| <= rel_tol * max(1, F_prev)
/// or max_iters. Snapshots are taken at iterations divisible by record_every
/// and at the final iteration.
TrainResult caol_train(std::span<const LiftedOperator> lifts, std::size_t filter_count,
                       const TrainConfig& config,
                       const std::optional<FilterBank>& init = std::nullopt);

}  // namespace caol
