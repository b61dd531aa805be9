#include "caol/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include <omp.h>

#include "caol/errors.hpp"

namespace caol::kernels {

namespace {

constexpr const char* kModule = "conv-operator";

std::atomic<int> g_thread_cap{0};

int team_size() {
  const int cap = g_thread_cap.load(std::memory_order_relaxed);
  return cap > 0 ? cap : omp_get_max_threads();
}

Eigen::Index check_lifts(std::span<const LiftedOperator> lifts) {
  if (lifts.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "no lifted operators given");
  const std::size_t r = lifts.front().filter_size();
  for (const LiftedOperator& lift : lifts)
    if (lift.filter_size() != r)
      throw Error(ErrorCode::DimensionMismatch, kModule,
                  "lifted operators disagree on filter size (" + std::to_string(r) + " vs " +
                      std::to_string(lift.filter_size()) + ")");
  return static_cast<Eigen::Index>(r);
}

Eigen::Index check_pairs(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms) {
  check_lifts(lifts);
  if (ms.size() != lifts.size())
    throw Error(ErrorCode::DimensionMismatch, kModule,
                std::to_string(lifts.size()) + " lifts but " + std::to_string(ms.size()) +
                    " right-hand sides");
  const Eigen::Index k = ms.front().cols();
  for (std::size_t l = 0; l < ms.size(); ++l)
    if (static_cast<std::size_t>(ms[l].rows()) != lifts[l].rows() || ms[l].cols() != k)
      throw Error(ErrorCode::DimensionMismatch, kModule,
                  "sample " + std::to_string(l) + " has a " + std::to_string(ms[l].rows()) + "x" +
                      std::to_string(ms[l].cols()) + " block; expected " +
                      std::to_string(lifts[l].rows()) + "x" + std::to_string(k));
  return k;
}

void check_filters(std::span<const LiftedOperator> lifts, const Matrix& filters) {
  const auto r = check_lifts(lifts);
  if (filters.rows() != r)
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "filter matrix has " + std::to_string(filters.rows()) + " rows, lifts have R = " +
                    std::to_string(r));
}

// Per-thread partials summed in thread order so a fixed team size gives
// bitwise-reproducible results.
template <typename Partial, typename Body>
Partial reduce_samples(std::size_t count, Partial zero, Body body) {
  const int threads = team_size();
  std::vector<Partial> partials(static_cast<std::size_t>(threads), zero);
#pragma omp parallel num_threads(threads)
  {
    Partial& mine = partials[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (std::ptrdiff_t l = 0; l < static_cast<std::ptrdiff_t>(count); ++l)
      body(static_cast<std::size_t>(l), mine);
  }
  Partial total = zero;
  for (const Partial& p : partials) total += p;
  return total;
}

}  // namespace

void set_thread_cap(int threads) { g_thread_cap.store(threads < 0 ? 0 : threads); }

int thread_cap() { return g_thread_cap.load(); }

void apply_thread_env() {
  if (const char* env = std::getenv("CAOL_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end != env && value >= 0) set_thread_cap(static_cast<int>(value));
  }
}

namespace serial {

Matrix gram_sum(std::span<const LiftedOperator> lifts) {
  const Eigen::Index r = check_lifts(lifts);
  Matrix g = Matrix::Zero(r, r);
  for (const LiftedOperator& lift : lifts) {
    const Matrix& psi = lift.matrix();
    for (Eigen::Index a = 0; a < r; ++a)
      for (Eigen::Index b = 0; b < r; ++b) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < psi.rows(); ++i) s += psi(i, a) * psi(i, b);
        g(a, b) += s;
      }
  }
  return g;
}

Matrix cross_sum(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms) {
  const Eigen::Index k = check_pairs(lifts, ms);
  const Eigen::Index r = static_cast<Eigen::Index>(lifts.front().filter_size());
  Matrix c = Matrix::Zero(r, k);
  for (std::size_t l = 0; l < lifts.size(); ++l) {
    const Matrix& psi = lifts[l].matrix();
    const Matrix& m = ms[l];
    for (Eigen::Index a = 0; a < r; ++a)
      for (Eigen::Index b = 0; b < k; ++b) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < psi.rows(); ++i) s += psi(i, a) * m(i, b);
        c(a, b) += s;
      }
  }
  return c;
}

void analysis(std::span<const LiftedOperator> lifts, const Matrix& filters, std::span<Matrix> out) {
  check_filters(lifts, filters);
  if (out.size() != lifts.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "output buffer count differs from lifts");
  const Eigen::Index r = filters.rows();
  const Eigen::Index k = filters.cols();
  for (std::size_t l = 0; l < lifts.size(); ++l) {
    const Matrix& psi = lifts[l].matrix();
    Matrix& v = out[l];
    v.resize(psi.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < psi.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index a = 0; a < r; ++a) s += psi(i, a) * filters(a, j);
        v(i, j) = s;
      }
  }
}

void threshold_codes(std::span<const LiftedOperator> lifts, const Matrix& filters, double alpha,
                     std::span<Matrix> codes) {
  check_filters(lifts, filters);
  if (codes.size() != lifts.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "code buffer count differs from lifts");
  const Eigen::Index r = filters.rows();
  const Eigen::Index k = filters.cols();
  for (std::size_t l = 0; l < lifts.size(); ++l) {
    const Matrix& psi = lifts[l].matrix();
    Matrix& z = codes[l];
    z.resize(psi.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < psi.rows(); ++i) {
        double v = 0.0;
        for (Eigen::Index a = 0; a < r; ++a) v += psi(i, a) * filters(a, j);
        z(i, j) = v * v > alpha ? v : 0.0;
      }
  }
}

double residual_energy(std::span<const LiftedOperator> lifts, const Matrix& filters,
                       std::span<const Matrix> codes) {
  check_filters(lifts, filters);
  check_pairs(lifts, codes);
  const Eigen::Index r = filters.rows();
  double total = 0.0;
  for (std::size_t l = 0; l < lifts.size(); ++l) {
    const Matrix& psi = lifts[l].matrix();
    const Matrix& z = codes[l];
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      for (Eigen::Index i = 0; i < psi.rows(); ++i) {
        double v = 0.0;
        for (Eigen::Index a = 0; a < r; ++a) v += psi(i, a) * filters(a, j);
        const double e = v - z(i, j);
        total += e * e;
      }
  }
  return total;
}

}  // namespace serial

namespace parallel {

Matrix gram_sum(std::span<const LiftedOperator> lifts) {
  const Eigen::Index r = check_lifts(lifts);
  Matrix g = reduce_samples(lifts.size(), Matrix(Matrix::Zero(r, r)),
                            [&](std::size_t l, Matrix& acc) {
                              const Matrix& psi = lifts[l].matrix();
                              acc.selfadjointView<Eigen::Lower>().rankUpdate(psi.transpose());
                            });
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

Matrix cross_sum(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms) {
  const Eigen::Index k = check_pairs(lifts, ms);
  const Eigen::Index r = static_cast<Eigen::Index>(lifts.front().filter_size());
  return reduce_samples(lifts.size(), Matrix(Matrix::Zero(r, k)),
                        [&](std::size_t l, Matrix& acc) {
                          acc.noalias() += lifts[l].matrix().transpose() * ms[l];
                        });
}

void analysis(std::span<const LiftedOperator> lifts, const Matrix& filters, std::span<Matrix> out) {
  check_filters(lifts, filters);
  if (out.size() != lifts.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "output buffer count differs from lifts");
  const int threads = team_size();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t l = 0; l < static_cast<std::ptrdiff_t>(lifts.size()); ++l)
    out[static_cast<std::size_t>(l)].noalias() = lifts[static_cast<std::size_t>(l)].matrix() * filters;
}

void threshold_codes(std::span<const LiftedOperator> lifts, const Matrix& filters, double alpha,
                     std::span<Matrix> codes) {
  check_filters(lifts, filters);
  if (codes.size() != lifts.size())
    throw Error(ErrorCode::DimensionMismatch, kModule, "code buffer count differs from lifts");
  const int threads = team_size();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t l = 0; l < static_cast<std::ptrdiff_t>(lifts.size()); ++l) {
    Matrix& z = codes[static_cast<std::size_t>(l)];
    z.noalias() = lifts[static_cast<std::size_t>(l)].matrix() * filters;
    z = z.unaryExpr([alpha](double v) { return v * v > alpha ? v : 0.0; });
  }
}

double residual_energy(std::span<const LiftedOperator> lifts, const Matrix& filters,
                       std::span<const Matrix> codes) {
  check_filters(lifts, filters);
  check_pairs(lifts, codes);
  return reduce_samples(lifts.size(), 0.0, [&](std::size_t l, double& acc) {
    acc += (lifts[l].matrix() * filters - codes[l]).squaredNorm();
  });
}

}  // namespace parallel

}  // namespace caol::kernels
