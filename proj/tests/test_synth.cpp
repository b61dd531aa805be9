#include <gtest/gtest.h>

#include <random>

#include "caol/errors.hpp"
#include "caol/kernels.hpp"
#include "caol/synth.hpp"
#include "oracles.hpp"

using namespace caol;

namespace {

SynthSpec small_spec(SignalModel signals, MismatchModel::Kind kind, double scale) {
  SynthSpec s;
  s.n = 32;
  s.r = 4;
  s.k = 4;
  s.l = 16;
  s.trials = 40;
  s.signals = signals;
  s.mismatch = {kind, scale, 0.0};
  s.seed = 5;
  return s;
}

}  // namespace

TEST(SynthSpecType, ValidationRejectsBadFields) {
  SynthSpec s;
  EXPECT_NO_THROW(s.validate());
  s.trials = 0;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.k = s.r - 1;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.l = 0;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.mismatch.scale = -1.0;
  EXPECT_THROW(s.validate(), Error);
  s = {};
  s.signals = SignalModel::Loaded;
  EXPECT_THROW(s.validate(), Error);
}

TEST(ModelNames, RoundTrip) {
  for (auto m : {SignalModel::Gaussian, SignalModel::Impulse, SignalModel::Loaded})
    EXPECT_EQ(parse_signal_model(to_string(m)), m);
  for (auto k : {MismatchModel::Kind::Zero, MismatchModel::Kind::IidGaussian, MismatchModel::Kind::BoundedBall,
                 MismatchModel::Kind::Correlated})
    EXPECT_EQ(parse_mismatch_kind(to_string(k)), k);
  EXPECT_THROW(parse_signal_model("laplace"), Error);
}

TEST(SynthInstanceGen, ZeroMismatchCodesAreExact) {
  const SynthInstance inst = synth_instance(small_spec(SignalModel::Gaussian, MismatchModel::Kind::Zero, 0.0));
  for (std::size_t l = 0; l < inst.lifts.size(); ++l)
    EXPECT_EQ(inst.codes[l], Matrix(inst.lifts[l].matrix() * inst.truth.matrix()));
}

TEST(SynthInstanceGen, ImpulseGramIsScaledIdentityAndNeverRejected) {
  const SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::IidGaussian, 0.1);
  const SynthInstance inst = synth_instance(spec);
  EXPECT_EQ(gram_accumulate(inst.lifts), static_cast<double>(spec.l) * Matrix::Identity(4, 4));
  EXPECT_EQ(inst.rejections, 0u);
  for (const Signal& x : inst.signals) EXPECT_EQ(x.norm(), 1.0);
}

TEST(SynthInstanceGen, GaussianRejectionRateIsSmall) {
  SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::IidGaussian, 0.1);
  spec.n = 8;
  spec.l = 2;
  std::size_t rejections = 0;
  for (std::size_t g = 0; g < 1000; ++g) {
    Rng rng = make_rng(99, g);
    rejections += synth_instance(spec, rng).rejections;
  }
  EXPECT_LT(static_cast<double>(rejections) / 1000.0, 0.01);
}

TEST(SynthInstanceGen, BoundedBallRespectsRadius) {
  const SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::BoundedBall, 0.7);
  const SynthInstance inst = synth_instance(spec);
  for (const Matrix& e : inst.mismatches) EXPECT_LE(e.norm(), 0.7 + 1e-12);
}

TEST(SynthInstanceGen, SameSeedSameInstance) {
  const SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::IidGaussian, 0.3);
  const SynthInstance a = synth_instance(spec);
  const SynthInstance b = synth_instance(spec);
  EXPECT_EQ(a.truth.matrix(), b.truth.matrix());
  for (std::size_t l = 0; l < a.codes.size(); ++l) EXPECT_EQ(a.codes[l], b.codes[l]);
}

TEST(VerifyDet, ZeroMismatchBothSidesVanish) {
  const VerifyReport rep = verify_det_bound(small_spec(SignalModel::Gaussian, MismatchModel::Kind::Zero, 0.0));
  EXPECT_TRUE(rep.passed);
  for (const TrialRecord& t : rep.trials) {
    EXPECT_LE(t.error, 1e-16);
    EXPECT_EQ(t.bound, 0.0);
  }
}

TEST(VerifyDet, DefaultSpecHoldsEverywhereWithRatioAtMostOne) {
  const VerifyReport rep = verify_det_bound(SynthSpec{});
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.held, 100u);
  EXPECT_LE(rep.max_violation, kViolationTolerance);
  for (const TrialRecord& t : rep.trials) EXPECT_LE(t.error / t.bound, 1.0);
}

TEST(VerifyDet, NegativePerturbationIsCaught) {
  SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::IidGaussian, 0.1);
  spec.trials = 5;
  const VerifyReport rep = verify_det_bound(spec, VerifyOptions{-1e3});
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.held, 0u);
}

TEST(VerifyDet, ReproducibleAcrossThreadCounts) {
  const SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::IidGaussian, 0.2);
  kernels::set_thread_cap(1);
  const VerifyReport one = verify_det_bound(spec);
  kernels::set_thread_cap(4);
  const VerifyReport four = verify_det_bound(spec);
  kernels::set_thread_cap(0);
  for (std::size_t t = 0; t < one.trials.size(); ++t) {
    EXPECT_LE(oracle::rel_diff(one.trials[t].error, four.trials[t].error), 1e-10);
    EXPECT_LE(oracle::rel_diff(one.trials[t].bound, four.trials[t].bound), 1e-10);
  }
}

TEST(MonteCarloExpected, ZeroMismatchGivesZeroMeanAndBound) {
  const VerifyReport rep = monte_carlo_expected(small_spec(SignalModel::Impulse, MismatchModel::Kind::Zero, 0.0));
  EXPECT_LE(rep.mean_error, 1e-16);
  EXPECT_EQ(rep.expected_bound, 0.0);
  EXPECT_TRUE(rep.passed);
}

TEST(MonteCarloExpected, UnitSigmaImpulsesGiveFiveROverL) {
  SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::IidGaussian, 0.5);  // K s^2 = 1
  spec.trials = 200;
  const VerifyReport rep = monte_carlo_expected(spec);
  EXPECT_DOUBLE_EQ(rep.sigma_bar_sq, 1.0);
  EXPECT_LE(oracle::rel_diff(rep.expected_bound, 5.0 * 4.0 / 16.0), 1e-12);
  EXPECT_TRUE(rep.passed);
}

TEST(MonteCarloExpected, BoundScalesInverselyWithL) {
  SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::IidGaussian, 0.5);
  spec.trials = 5;
  spec.l = 8;
  const double b8 = monte_carlo_expected(spec).expected_bound;
  spec.l = 32;
  const double b32 = monte_carlo_expected(spec).expected_bound;
  EXPECT_LE(oracle::rel_diff(b8 / b32, 4.0), 1e-12);
}

TEST(MonteCarloExpected, CorrelatedMismatchIsRejected) {
  EXPECT_THROW(monte_carlo_expected(small_spec(SignalModel::Impulse, MismatchModel::Kind::Correlated, 0.1)), Error);
}

TEST(PopulationStats, ImpulseClosedForms) {
  const EnsembleStats s = population_stats(small_spec(SignalModel::Impulse, MismatchModel::Kind::BoundedBall, 0.3));
  EXPECT_EQ(s.lambda_bar, Matrix::Identity(4, 4));
  EXPECT_EQ(s.gamma, 1.0);
  EXPECT_EQ(s.sigma, 0.3);
  EXPECT_EQ(s.corr, Matrix::Zero(4, 4));
}

TEST(MonteCarloHp, VacuousProbabilitySkipsCoverage) {
  SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::BoundedBall, 0.5);
  spec.trials = 5;
  const VerifyReport rep = monte_carlo_hp(spec, 0.01);
  EXPECT_TRUE(rep.vacuous);
  EXPECT_TRUE(rep.passed);
}

TEST(MonteCarloHp, CorrelatedMismatchLeavesAFloor) {
  SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::Correlated, 0.2);
  const EnsembleStats s = population_stats(spec);
  const RhoChi rc = rho_bar_chi_bar(s, spec.l);
  EXPECT_GT(rc.chi_bar, 0.0);
  const double floor = 5.0 * rc.chi_bar * rc.chi_bar;
  for (std::size_t l : {16u, 1024u, 1u << 20})
    EXPECT_GE(hp_bound(s, 0.01, l).bound, floor);
}

TEST(RhoScan, ImpulsesAreExactWithZeroSpread) {
  SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::Zero, 0.0);
  spec.l = 64;
  Rng rng = make_rng(1);
  const auto xs = draw_signals(spec, rng);
  const std::vector<std::size_t> grid{1, 2, 4, 8, 16, 32, 64};
  for (const RhoScanRow& row : rho_scan(xs, spec.offsets(), grid, 10, 3)) {
    EXPECT_LE(oracle::rel_diff(row.mean_rho_sq, 4.0 / static_cast<double>(row.samples)), 1e-12);
    EXPECT_EQ(row.std_rho_sq, 0.0);
  }
}

TEST(RhoScan, GaussianSlopeNearMinusOne) {
  SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::Zero, 0.0);
  spec.l = 128;
  Rng rng = make_rng(2);
  const auto xs = draw_signals(spec, rng);
  const std::vector<std::size_t> grid{2, 4, 8, 16, 32, 64, 128};
  const auto rows = rho_scan(xs, spec.offsets(), grid, 20, 4);
  const double slope = log_log_slope(rows);
  EXPECT_GE(slope, -1.3);
  EXPECT_LE(slope, -0.7);
  EXPECT_EQ(rows.back().replicates, 1u);
}

TEST(RhoScan, GridBeyondDataIsRejected) {
  SynthSpec spec = small_spec(SignalModel::Impulse, MismatchModel::Kind::Zero, 0.0);
  Rng rng = make_rng(1);
  const auto xs = draw_signals(spec, rng);
  const std::vector<std::size_t> grid{4, 17};
  try {
    rho_scan(xs, spec.offsets(), grid, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(ChiTrack, CrossAndCodeRoutesAgree) {
  SynthSpec spec = small_spec(SignalModel::Gaussian, MismatchModel::Kind::Zero, 0.0);
  const SynthInstance inst = synth_instance(spec);
  TrainConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_iters = 30;
  cfg.rel_tol = 0.0;
  cfg.record_every = 5;
  cfg.keep_codes = true;
  const TrainResult res = caol_train(inst.lifts, spec.k, cfg);
  TrainTrace stripped = res.trace;
  for (TrainSnapshot& s : stripped.snapshots) s.codes.clear();
  const auto a = chi_track(res.trace, inst.lifts, res.filters.matrix(), 10);
  const auto b = chi_track(stripped, inst.lifts, res.filters.matrix(), 10);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), 4u);  // 0, 10, 20 and the final iteration 29
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].iteration, b[i].iteration);
    EXPECT_LE(std::abs(a[i].chi_bar - b[i].chi_bar), 1e-10 * (1.0 + a[i].chi_bar));
  }
}

TEST(ChiTrack, ExactCodesGiveZero) {
  const SynthInstance inst = synth_instance(small_spec(SignalModel::Gaussian, MismatchModel::Kind::Zero, 0.0));
  TrainTrace trace;
  trace.record_every = 50;
  for (std::size_t it : {0u, 50u, 100u}) {
    TrainSnapshot s;
    s.iteration = it;
    s.code_cross = adjoint_accumulate(inst.lifts, inst.codes);
    trace.snapshots.push_back(s);
  }
  const auto rows = chi_track(trace, inst.lifts, inst.truth.matrix());
  ASSERT_EQ(rows.size(), 3u);
  for (const ChiRow& row : rows) EXPECT_LE(row.chi_bar, 1e-12);
}

TEST(ChiTrack, DefaultStrideAndMissingSnapshots) {
  EXPECT_EQ(kDefaultChiStride, 50u);
  const SynthInstance inst = synth_instance(small_spec(SignalModel::Gaussian, MismatchModel::Kind::Zero, 0.0));
  TrainTrace trace;
  trace.record_every = 20;
  EXPECT_THROW(chi_track(trace, inst.lifts, inst.truth.matrix()), Error);
  TrainSnapshot s;
  s.code_cross = Matrix::Zero(4, 4);
  trace.snapshots.push_back(s);
  try {
    chi_track(trace, inst.lifts, inst.truth.matrix(), 50);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSnapshots);
  }
}
