#pragma once

#include <span>
#include <vector>

#include "caol/signal.hpp"

namespace caol {

/// Dense N x R matrix whose columns are cyclically shifted copies of a sample.
/// Multiplying by a length-R filter gives the filter response on that sample.
class LiftedOperator {
 public:
  LiftedOperator(Matrix matrix, Geometry geometry, OffsetPattern pattern);

  const Matrix& matrix() const noexcept { return matrix_; }
  const Geometry& geometry() const noexcept { return geometry_; }
  const OffsetPattern& pattern() const noexcept { return pattern_; }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  std::size_t filter_size() const noexcept { return static_cast<std::size_t>(matrix_.cols()); }

 private:
  Matrix matrix_;
  Geometry geometry_;
  OffsetPattern pattern_;
};

LiftedOperator build_lift(const Signal& x, const OffsetPattern& pattern);
std::vector<LiftedOperator> build_lifts(std::span<const Signal> signals,
                                        const OffsetPattern& pattern);

/// Response of filter d on x, defined as build_lift(x, pattern) * d (no kernel flip).
Signal convolve(const Signal& x, const Vector& d, const OffsetPattern& pattern);

/// Sum over samples of Psi^T Psi (R x R, symmetric PSD).
Matrix gram_accumulate(std::span<const LiftedOperator> lifts);

/// Psi^T M for an N x K matrix M.
Matrix adjoint_apply(const LiftedOperator& lift, const Matrix& m);

/// Sum over samples of Psi_l^T M_l.
Matrix adjoint_accumulate(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms);

}  // namespace caol
