#include "caol/lift.hpp"

#include <string>

#include "caol/errors.hpp"
#include "caol/kernels.hpp"

namespace caol {

namespace {
constexpr const char* kModule = "conv-operator";
}

LiftedOperator::LiftedOperator(Matrix matrix, Geometry geometry, OffsetPattern pattern)
    : matrix_(std::move(matrix)), geometry_(geometry), pattern_(std::move(pattern)) {
  if (static_cast<std::size_t>(matrix_.rows()) != geometry_.size() ||
      static_cast<std::size_t>(matrix_.cols()) != pattern_.size())
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "lifted operator must be N x R for its geometry and pattern");
}

LiftedOperator build_lift(const Signal& x, const OffsetPattern& pattern) {
  const Geometry& g = x.geometry();
  pattern.check(g);
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto r = static_cast<Eigen::Index>(pattern.size());
  const Vector& v = x.values();
  Matrix psi(n, r);
  if (g.is_grid()) {
    const long h = static_cast<long>(g.height);
    const long w = static_cast<long>(g.width);
    for (Eigen::Index c = 0; c < r; ++c) {
      const Shift s = pattern[static_cast<std::size_t>(c)];
      double* col = psi.col(c).data();
      for (long i = 0; i < h; ++i) {
        const double* src = v.data() + ((i + s.row) % h) * w;
        for (long j = 0; j < w; ++j) col[i * w + j] = src[(j + s.col) % w];
      }
    }
  } else {
    for (Eigen::Index c = 0; c < r; ++c) {
      const auto s = static_cast<Eigen::Index>(pattern[static_cast<std::size_t>(c)].col);
      psi.col(c).head(n - s) = v.tail(n - s);
      psi.col(c).tail(s) = v.head(s);
    }
  }
  return LiftedOperator(std::move(psi), g, pattern);
}

std::vector<LiftedOperator> build_lifts(std::span<const Signal> signals,
                                        const OffsetPattern& pattern) {
  std::vector<LiftedOperator> lifts;
  lifts.reserve(signals.size());
  for (const Signal& x : signals) lifts.push_back(build_lift(x, pattern));
  return lifts;
}

Signal convolve(const Signal& x, const Vector& d, const OffsetPattern& pattern) {
  if (static_cast<std::size_t>(d.size()) != pattern.size())
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "filter has " + std::to_string(d.size()) + " taps but pattern has " +
                    std::to_string(pattern.size()) + " offsets");
  const LiftedOperator lift = build_lift(x, pattern);
  return Signal(lift.matrix() * d, x.geometry());
}

Matrix gram_accumulate(std::span<const LiftedOperator> lifts) {
  return kernels::parallel::gram_sum(lifts);
}

Matrix adjoint_apply(const LiftedOperator& lift, const Matrix& m) {
  if (static_cast<std::size_t>(m.rows()) != lift.rows())
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "adjoint_apply needs " + std::to_string(lift.rows()) + " rows, got " +
                    std::to_string(m.rows()));
  return lift.matrix().transpose() * m;
}

Matrix adjoint_accumulate(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms) {
  return kernels::parallel::cross_sum(lifts, ms);
}

}  // namespace caol
