#include "caol/caol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "caol/errors.hpp"
#include "caol/kernels.hpp"
#include "caol/random.hpp"

namespace caol {

namespace {

constexpr const char* kModule = "caol-core";

std::size_t count_nonzeros(std::span<const Matrix> codes) {
  std::size_t nnz = 0;
  for (const Matrix& z : codes) nnz += static_cast<std::size_t>((z.array() != 0.0).count());
  return nnz;
}

std::size_t count_entries(std::span<const Matrix> codes) {
  std::size_t total = 0;
  for (const Matrix& z : codes) total += static_cast<std::size_t>(z.size());
  return total;
}

Eigen::VectorXd singular_values(const Matrix& a) {
  return Eigen::JacobiSVD<Matrix>(a).singularValues();
}

}  // namespace

FilterBank FilterBank::from_matrix(Matrix d, double tolerance) {
  const auto r = d.rows();
  const auto k = d.cols();
  if (r < 1 || k < r)
    throw Error(ErrorCode::InvalidArgument, kModule,
                "filter bank must be R x K with K >= R >= 1, got " + std::to_string(r) + "x" +
                    std::to_string(k));
  FilterBank bank(std::move(d));
  const double defect = bank.frame_defect();
  if (!(defect <= tolerance))
    throw Error(ErrorCode::InvalidArgument, kModule,
                "filters violate D D^T = I/R (max deviation " + std::to_string(defect) + ")");
  if (r == k) {
    const Matrix dtd = bank.d_.transpose() * bank.d_;
    const double square_defect =
        (dtd - Matrix::Identity(k, k) / static_cast<double>(k)).cwiseAbs().maxCoeff();
    if (!(square_defect <= tolerance))
      throw Error(ErrorCode::InvalidArgument, kModule,
                  "square filter bank violates D^T D = I/K (max deviation " +
                      std::to_string(square_defect) + ")");
  }
  return bank;
}

double FilterBank::frame_defect() const {
  const auto r = d_.rows();
  const Matrix ddt = d_ * d_.transpose();
  return (ddt - Matrix::Identity(r, r) / static_cast<double>(r)).cwiseAbs().maxCoeff();
}

bool full_rank(const Matrix& a) {
  if (a.size() == 0) return false;
  const Eigen::VectorXd s = singular_values(a);
  const double top = s(0);
  return top > 0.0 && s(s.size() - 1) > kRankTolerance * top;
}

Matrix polar_factor(const Matrix& a) {
  if (a.rows() < a.cols() || a.cols() == 0)
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "polar factor needs a K x R matrix with K >= R, got " + std::to_string(a.rows()) +
                    "x" + std::to_string(a.cols()));
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double top = s(0);
  const double bottom = s(s.size() - 1);
  if (!(top > 0.0) || !(bottom > kRankTolerance * top))
    throw Error(ErrorCode::RankDeficient, kModule,
                "matrix is not full rank (sigma_min " + std::to_string(bottom) + ", sigma_max " +
                    std::to_string(top) + ")");
  return svd.matrixU() * svd.matrixV().transpose();
}

FilterBank random_orthogonal_filters(std::size_t r, std::size_t k, std::uint64_t seed) {
  if (r < 1 || k < r)
    throw Error(ErrorCode::InvalidArgument, kModule, "random filters need K >= R >= 1");
  Rng rng = make_rng(seed);
  for (;;) {
    const Matrix g = gaussian_matrix(rng, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r));
    if (!full_rank(g)) continue;  // probability zero, but keep the draw well-defined
    Matrix d = polar_factor(g).transpose() / std::sqrt(static_cast<double>(r));
    return FilterBank::from_matrix(std::move(d));
  }
}

Matrix hard_threshold(const Matrix& v, double alpha) {
  return v.unaryExpr([alpha](double x) { return x * x > alpha ? x : 0.0; });
}

double objective(const FilterBank& filters, std::span<const LiftedOperator> lifts,
                 std::span<const Matrix> codes, double alpha) {
  const double fit = kernels::parallel::residual_energy(lifts, filters.matrix(), codes);
  if (static_cast<std::size_t>(codes.front().cols()) != filters.filter_count())
    throw Error(ErrorCode::DimensionMismatch, kModule, "codes and filters disagree on K");
  return fit + alpha * static_cast<double>(count_nonzeros(codes));
}

Matrix sparse_code_update(const FilterBank& filters, const Signal& x,
                          const OffsetPattern& pattern, double alpha) {
  if (!(alpha > 0.0))
    throw Error(ErrorCode::InvalidArgument, kModule, "alpha must be positive");
  if (pattern.size() != filters.filter_size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "pattern size differs from filter size R");
  const LiftedOperator lift = build_lift(x, pattern);
  return hard_threshold(lift.matrix() * filters.matrix(), alpha);
}

FilterBank filter_update_from_cross(const Matrix& cross) {
  if (cross.cols() < cross.rows())
    throw Error(ErrorCode::DimensionMismatch, kModule, "filter update needs K >= R");
  // D* = (1/sqrt(R)) Q(C^T)^T with C = sum_l Psi_l^T Z_l
  Matrix d = polar_factor(cross.transpose()).transpose() /
             std::sqrt(static_cast<double>(cross.rows()));
  return FilterBank::from_matrix(std::move(d));
}

FilterBank filter_update(std::span<const LiftedOperator> lifts, std::span<const Matrix> codes) {
  return filter_update_from_cross(kernels::parallel::cross_sum(lifts, codes));
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, kModule, "alpha must be > 0");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, kModule, "max_iters must be >= 1");
  if (!(rel_tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, kModule, "rel_tol must be >= 0");
  if (record_every < 1)
    throw Error(ErrorCode::InvalidArgument, kModule, "record_every must be >= 1");
}

double TrainTrace::max_relative_increase() const {
  double worst = -std::numeric_limits<double>::infinity();
  double prev = initial_objective;
  for (double f : objectives) {
    worst = std::max(worst, (f - prev) / std::max(1.0, std::abs(prev)));
    prev = f;
  }
  return objectives.empty() ? 0.0 : worst;
}

TrainResult caol_train(std::span<const LiftedOperator> lifts, std::size_t filter_count,
                       const TrainConfig& config, const std::optional<FilterBank>& init) {
  config.validate();
  if (lifts.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "no training samples");
  const std::size_t r = lifts.front().filter_size();
  if (filter_count < r)
    throw Error(ErrorCode::InvalidArgument, kModule,
                "need K >= R filters (K = " + std::to_string(filter_count) +
                    ", R = " + std::to_string(r) + ")");

  FilterBank filters = init ? *init : random_orthogonal_filters(r, filter_count, config.seed);
  if (filters.filter_size() != r || filters.filter_count() != filter_count)
    throw Error(ErrorCode::DimensionMismatch, kModule, "initial filters have the wrong shape");

  const std::size_t samples = lifts.size();
  std::vector<Matrix> responses(samples);  // Psi_l D for the current D
  CodeSet codes(samples);
  kernels::parallel::analysis(lifts, filters.matrix(), responses);
  const double entries = static_cast<double>(count_entries(responses));

  TrainTrace trace;
  trace.record_every = config.record_every;

  // F(D, Z) with Z the codes and responses = Psi D
  const auto fit = [&]() {
    double total = 0.0;
    for (std::size_t l = 0; l < samples; ++l) total += (responses[l] - codes[l]).squaredNorm();
    return total;
  };

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    for (std::size_t l = 0; l < samples; ++l) codes[l] = hard_threshold(responses[l], config.alpha);
    const std::size_t nnz = count_nonzeros(codes);
    const double penalty = config.alpha * static_cast<double>(nnz);
    if (iter == 0) trace.initial_objective = fit() + penalty;

    const Matrix cross = kernels::parallel::cross_sum(lifts, codes);
    try {
      filters = filter_update_from_cross(cross);
    } catch (const Error& e) {
      throw TrainError(e, iter);
    }
    kernels::parallel::analysis(lifts, filters.matrix(), responses);

    const double f = fit() + penalty;
    const double prev = trace.objectives.empty() ? trace.initial_objective : trace.objectives.back();
    trace.objectives.push_back(f);
    trace.sparsity.push_back(static_cast<double>(nnz) / entries);

    const bool done = std::abs(prev - f) <= config.rel_tol * std::max(1.0, prev);
    const bool last = done || iter + 1 == config.max_iters;
    if (iter % config.record_every == 0 || last) {
      TrainSnapshot snap;
      snap.iteration = iter;
      snap.objective = f;
      snap.sparsity = trace.sparsity.back();
      snap.filters = filters.matrix();
      snap.code_cross = cross;
      if (config.keep_codes) snap.codes = codes;
      trace.snapshots.push_back(std::move(snap));
    }
    if (done) {
      trace.converged = true;
      break;
    }
  }

  return TrainResult{std::move(filters), std::move(codes), std::move(trace)};
}

}  // namespace caol
