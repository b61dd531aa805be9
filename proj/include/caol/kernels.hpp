#pragma once

// Per-sample reductions used by the trainer and the bound computations.
//
// Every kernel exists twice: `serial` is a plain-loop reference kept as a test
// oracle and benchmark baseline, `parallel` distributes samples over OpenMP
// threads and uses Eigen products inside each sample. The two must agree to
// 1e-10 relative; only the summation order differs.

#include <span>

#include "caol/lift.hpp"

namespace caol::kernels {

/// Upper bound on OpenMP threads used by `parallel` kernels; 0 means runtime default.
void set_thread_cap(int threads);
int thread_cap();

/// Reads CAOL_THREADS from the environment and applies it.
void apply_thread_env();

namespace serial {

Matrix gram_sum(std::span<const LiftedOperator> lifts);
Matrix cross_sum(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms);
/// out[l] = Psi_l D.
void analysis(std::span<const LiftedOperator> lifts, const Matrix& filters, std::span<Matrix> out);
/// codes[l] = hard threshold of Psi_l D at sqrt(alpha).
void threshold_codes(std::span<const LiftedOperator> lifts, const Matrix& filters, double alpha,
                     std::span<Matrix> codes);
/// Sum over l of ||Psi_l D - Z_l||_F^2.
double residual_energy(std::span<const LiftedOperator> lifts, const Matrix& filters,
                       std::span<const Matrix> codes);

}  // namespace serial

namespace parallel {

Matrix gram_sum(std::span<const LiftedOperator> lifts);
Matrix cross_sum(std::span<const LiftedOperator> lifts, std::span<const Matrix> ms);
void analysis(std::span<const LiftedOperator> lifts, const Matrix& filters, std::span<Matrix> out);
void threshold_codes(std::span<const LiftedOperator> lifts, const Matrix& filters, double alpha,
                     std::span<Matrix> codes);
double residual_energy(std::span<const LiftedOperator> lifts, const Matrix& filters,
                       std::span<const Matrix> codes);

}  // namespace parallel

}  // namespace caol::kernels
