#include "caol/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "caol/errors.hpp"
#include "caol/kernels.hpp"

namespace caol {

namespace {

constexpr const char* kModule = "bounds";

SymmetricSpectrum checked_spectrum(const Matrix& s, const char* what) {
  const SymmetricSpectrum spec = symmetric_spectrum(s);
  if (!(spec.max > 0.0) || !(spec.min > kRankTolerance * spec.max)) {
    std::ostringstream msg;
    msg << what << " is rank deficient (lambda_min " << spec.min << ", lambda_max " << spec.max
        << ")";
    throw Error(ErrorCode::RankDeficient, kModule, msg.str());
  }
  return spec;
}

double largest_eigenvalue(const Matrix& s) { return symmetric_spectrum(s).max; }

}  // namespace

SymmetricSpectrum symmetric_spectrum(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();  // ascending
  return {ev(0), ev(ev.size() - 1), s.trace()};
}

DetBound det_error_bound(std::span<const LiftedOperator> lifts, std::span<const Matrix> mismatches) {
  const Matrix gram = kernels::parallel::gram_sum(lifts);
  const SymmetricSpectrum spec = checked_spectrum(gram, "sum of Psi^T Psi");
  DetBound out;
  out.numerator = kernels::parallel::cross_sum(lifts, mismatches).squaredNorm();
  out.lambda_min = spec.min;
  out.bound = 5.0 * out.numerator / (spec.min * spec.min);
  return out;
}

double rho_squared(std::span<const LiftedOperator> lifts) {
  const SymmetricSpectrum spec =
      checked_spectrum(kernels::parallel::gram_sum(lifts), "sum of Psi^T Psi");
  return spec.trace / (spec.min * spec.min);
}

double sigma_bar_sq(std::span<const Matrix> mismatches) {
  if (mismatches.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "no mismatch matrices");
  double worst = 0.0;
  for (const Matrix& e : mismatches) {
    if (e.size() == 0) continue;
    // lambda_max(E E^T) = lambda_max(E^T E); the K x K side is the cheap one
    const Matrix small = e.rows() >= e.cols() ? Matrix(e.transpose() * e) : Matrix(e * e.transpose());
    worst = std::max(worst, largest_eigenvalue(small));
  }
  return worst;
}

double sigma_bar_sq(std::size_t samples, std::size_t trials, const MismatchSampler& draw,
                    std::uint64_t seed) {
  if (samples == 0) throw Error(ErrorCode::EmptyDataset, kModule, "no samples");
  if (trials == 0) throw Error(ErrorCode::InvalidArgument, kModule, "trials must be >= 1");
  double worst = 0.0;
  for (std::size_t l = 0; l < samples; ++l) {
    Rng rng = make_rng(seed, l);
    std::vector<Matrix> draws;
    draws.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) draws.push_back(draw(l, rng));
    const Eigen::Index n = draws.front().rows();
    const Eigen::Index k = draws.front().cols();
    const double inv = 1.0 / static_cast<double>(trials);
    // mean of E E^T equals M M^T with M = [E_1 ... E_T] / sqrt(T); use whichever Gram is smaller
    if (n <= k * static_cast<Eigen::Index>(trials)) {
      Matrix acc = Matrix::Zero(n, n);
      for (const Matrix& e : draws) acc.selfadjointView<Eigen::Lower>().rankUpdate(e, inv);
      acc.triangularView<Eigen::StrictlyUpper>() = acc.transpose();
      worst = std::max(worst, largest_eigenvalue(acc));
    } else {
      Matrix m(n, k * static_cast<Eigen::Index>(trials));
      for (std::size_t t = 0; t < trials; ++t)
        m.middleCols(static_cast<Eigen::Index>(t) * k, k) = draws[t];
      worst = std::max(worst, largest_eigenvalue(Matrix(m.transpose() * m)) * inv);
    }
  }
  return worst;
}

double expected_bound(double sigma_bar_sq, double rho_sq) {
  if (!(sigma_bar_sq >= 0.0) || !(rho_sq >= 0.0))
    throw Error(ErrorCode::InvalidArgument, kModule, "expected_bound inputs must be >= 0");
  return 5.0 * sigma_bar_sq * rho_sq;
}

EnsembleStats estimate_ensemble(std::span<const LiftedOperator> lifts,
                                std::span<const Matrix> mismatches) {
  if (lifts.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "no samples");
  const double inv = 1.0 / static_cast<double>(lifts.size());
  EnsembleStats stats;
  stats.samples = lifts.size();
  stats.lambda_bar = kernels::parallel::gram_sum(lifts) * inv;
  stats.corr = kernels::parallel::cross_sum(lifts, mismatches) * inv;
  for (const LiftedOperator& lift : lifts)
    stats.gamma = std::max(stats.gamma, lift.matrix().col(0).norm());
  for (const Matrix& e : mismatches) stats.sigma = std::max(stats.sigma, e.norm());
  return stats;
}

EnsembleStats estimate_ensemble(std::span<const Signal> signals, std::span<const Matrix> mismatches,
                                const OffsetPattern& pattern) {
  const std::vector<LiftedOperator> lifts = build_lifts(signals, pattern);
  return estimate_ensemble(lifts, mismatches);
}

RhoChi rho_bar_chi_bar(const EnsembleStats& stats) { return rho_bar_chi_bar(stats, stats.samples); }

RhoChi rho_bar_chi_bar(const EnsembleStats& stats, std::size_t samples) {
  if (samples == 0) throw Error(ErrorCode::EmptyDataset, kModule, "sample count must be >= 1");
  const SymmetricSpectrum spec = checked_spectrum(stats.lambda_bar, "lambda_bar");
  RhoChi out;
  out.rho_bar = std::sqrt(spec.trace / static_cast<double>(samples)) / spec.min;
  out.chi_bar = stats.corr.norm() / spec.min;
  return out;
}

double delta_upper_limit(const EnsembleStats& stats) {
  const SymmetricSpectrum spec = checked_spectrum(stats.lambda_bar, "lambda_bar");
  const double r = static_cast<double>(stats.lambda_bar.rows());
  if (stats.gamma == 0.0) return std::numeric_limits<double>::infinity();
  return spec.min / (2.0 * r * stats.gamma * stats.gamma);
}

HpBound hp_bound(const EnsembleStats& stats, double delta, std::size_t samples) {
  if (samples == 0) throw Error(ErrorCode::EmptyDataset, kModule, "sample count must be >= 1");
  const SymmetricSpectrum spec = checked_spectrum(stats.lambda_bar, "lambda_bar");
  const double limit = delta_upper_limit(stats);
  if (!(delta > 0.0 && delta < limit)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "delta " << delta << " outside admissible interval (0, " << limit << ")";
    throw Error(ErrorCode::DeltaOutOfRange, kModule, msg.str());
  }
  const double r = static_cast<double>(stats.lambda_bar.rows());
  const double l = static_cast<double>(samples);
  const double g = stats.gamma;
  const double s = stats.sigma;

  const double numer = s * std::sqrt(spec.trace / l) + stats.corr.norm() + 2.0 * s * g * std::sqrt(r) * delta;
  const double denom = spec.min - 2.0 * g * g * r * delta;
  HpBound out;
  out.delta = delta;
  out.bound = 5.0 * (numer / denom) * (numer / denom);
  out.prob = 1.0 - 3.0 * r * std::exp(-l * (delta * delta / 2.0) / (3.0 + delta / 3.0));
  out.vacuous = out.prob <= 0.0;
  return out;
}

MismatchSet mismatch_from_codes(std::span<const Matrix> codes, std::span<const LiftedOperator> lifts,
                                const Matrix& reference) {
  if (codes.size() != lifts.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "codes and lifts differ in sample count");
  MismatchSet out;
  out.reserve(codes.size());
  for (std::size_t l = 0; l < codes.size(); ++l) {
    const Matrix& psi = lifts[l].matrix();
    if (reference.rows() != psi.cols() || codes[l].rows() != psi.rows() ||
        codes[l].cols() != reference.cols())
      throw Error(ErrorCode::DimensionMismatch, kModule,
                  "sample " + std::to_string(l) + ": codes, lift and reference shapes disagree");
    out.push_back(codes[l] - psi * reference);
  }
  return out;
}

BoundReport compute_bound_report(std::span<const LiftedOperator> lifts,
                                 std::span<const Matrix> codes, std::span<const Matrix> mismatches,
                                 std::span<const double> deltas) {
  BoundReport report;
  const Matrix gram = kernels::parallel::gram_sum(lifts);
  const SymmetricSpectrum spec = symmetric_spectrum(gram);
  report.gram_lambda_max = spec.max;
  report.gram_full_rank = spec.max > 0.0 && spec.min > kRankTolerance * spec.max;
  report.cross_full_rank = full_rank(kernels::parallel::cross_sum(lifts, codes));

  report.det = det_error_bound(lifts, mismatches);
  report.rho_sq = spec.trace / (spec.min * spec.min);
  report.sigma_bar_sq = sigma_bar_sq(mismatches);
  report.expected_bound = expected_bound(report.sigma_bar_sq, report.rho_sq);
  report.stats = estimate_ensemble(lifts, mismatches);
  report.rho_chi = rho_bar_chi_bar(report.stats);
  report.delta_limit = delta_upper_limit(report.stats);
  for (double delta : deltas) {
    if (delta > 0.0 && delta < report.delta_limit)
      report.hp.push_back(hp_bound(report.stats, delta, lifts.size()));
    else
      report.rejected_deltas.push_back(delta);
  }
  return report;
}

}  // namespace caol
