#include "caol/synth.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include <omp.h>

#include "caol/errors.hpp"
#include "caol/kernels.hpp"

namespace caol {

namespace {

constexpr const char* kModule = "synth-harness";
constexpr std::size_t kMaxAttempts = 100;

// Stream ids for draws that are not tied to a trial.
constexpr std::uint64_t kDirectionStream = 0xD1'0000'0000ULL;
constexpr std::uint64_t kPopulationStream = 0xA0'0000'0000ULL;
constexpr std::uint64_t kFixedSignalStream = 0xF1'0000'0000ULL;

Rng trial_rng(const SynthSpec& spec, std::size_t trial) { return make_rng(spec.seed, trial + 1); }

/// Gaussian direction rescaled to radius sigma * u^(1/dim): uniform in the ball.
Matrix ball_draw(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
  if (sigma == 0.0) return Matrix::Zero(rows, cols);
  Matrix g = gaussian_matrix(rng, rows, cols);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  const double radius = sigma * std::pow(u, 1.0 / static_cast<double>(rows * cols));
  const double norm = g.norm();
  return norm > 0.0 ? Matrix(g * (radius / norm)) : Matrix(Matrix::Zero(rows, cols));
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Runs body(trial) for every trial over OpenMP threads; the first failure
/// (by trial index) is rethrown with the trial attached.
template <typename Body>
void for_each_trial(std::size_t trials, Body body) {
  std::vector<std::exception_ptr> failures(trials);
  const int threads = kernels::thread_cap() > 0 ? kernels::thread_cap() : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(trials); ++t) {
    try {
      body(static_cast<std::size_t>(t));
    } catch (...) {
      failures[static_cast<std::size_t>(t)] = std::current_exception();
    }
  }
  for (std::size_t t = 0; t < trials; ++t) {
    if (!failures[t]) continue;
    try {
      std::rethrow_exception(failures[t]);
    } catch (const Error& e) {
      throw Error(e.code(), e.module(), "trial " + std::to_string(t) + ": " + e.what());
    }
  }
}

bool rank_hypotheses_hold(std::span<const LiftedOperator> lifts, const CodeSet& codes,
                          const FilterBank& truth) {
  const Matrix gram = kernels::parallel::gram_sum(lifts);
  return full_rank(Matrix(gram * truth.matrix())) &&
         full_rank(kernels::parallel::cross_sum(lifts, codes));
}

void fill_codes(const SynthSpec& spec, SynthInstance& inst, const Matrix& direction, Rng& rng) {
  inst.codes.clear();
  inst.mismatches.clear();
  for (const LiftedOperator& lift : inst.lifts) {
    Matrix e = draw_mismatch(spec, lift, direction, rng);
    inst.codes.push_back(lift.matrix() * inst.truth.matrix() + e);
    inst.mismatches.push_back(std::move(e));
  }
}

void summarise_det(VerifyReport& report) {
  std::vector<double> errors;
  report.max_violation = -std::numeric_limits<double>::infinity();
  for (const TrialRecord& rec : report.trials) {
    errors.push_back(rec.error);
    report.max_violation = std::max(report.max_violation, rec.error - rec.bound);
    report.held += rec.holds ? 1 : 0;
  }
  report.mean_error = mean_of(errors);
  report.std_error = sample_std(errors, report.mean_error) / std::sqrt(static_cast<double>(errors.size()));
}

}  // namespace

std::string to_string(SignalModel model) {
  switch (model) {
    case SignalModel::Gaussian: return "gaussian";
    case SignalModel::Impulse: return "impulse";
    case SignalModel::Loaded: return "loaded";
  }
  return "unknown";
}

std::string to_string(MismatchModel::Kind kind) {
  switch (kind) {
    case MismatchModel::Kind::Zero: return "zero";
    case MismatchModel::Kind::IidGaussian: return "iid-gaussian";
    case MismatchModel::Kind::BoundedBall: return "bounded-ball";
    case MismatchModel::Kind::Correlated: return "correlated";
  }
  return "unknown";
}

SignalModel parse_signal_model(const std::string& name) {
  if (name == "gaussian") return SignalModel::Gaussian;
  if (name == "impulse" || name == "impulse-ensemble") return SignalModel::Impulse;
  if (name == "loaded" || name == "loaded-dataset") return SignalModel::Loaded;
  throw Error(ErrorCode::InvalidArgument, kModule, "unknown signal model '" + name + "'");
}

MismatchModel::Kind parse_mismatch_kind(const std::string& name) {
  if (name == "zero") return MismatchModel::Kind::Zero;
  if (name == "iid-gaussian") return MismatchModel::Kind::IidGaussian;
  if (name == "bounded-ball") return MismatchModel::Kind::BoundedBall;
  if (name == "correlated") return MismatchModel::Kind::Correlated;
  throw Error(ErrorCode::InvalidArgument, kModule, "unknown mismatch model '" + name + "'");
}

OffsetPattern SynthSpec::offsets() const { return pattern ? *pattern : OffsetPattern::line(r); }

void SynthSpec::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, kModule, msg); };
  if (r < 1) fail("R must be >= 1");
  if (k < r) fail("K must be >= R");
  if (l < 1) fail("L must be >= 1");
  if (trials < 1) fail("trials must be >= 1");
  if (!(mismatch.scale >= 0.0) || !(mismatch.noise >= 0.0)) fail("mismatch scales must be >= 0");
  if (signals == SignalModel::Loaded && dataset.empty()) fail("loaded signal model needs a dataset");
  if (signals != SignalModel::Loaded && n < r) fail("N must be >= R");
  if (pattern && pattern->size() != r) fail("pattern size must equal R");
}

Matrix correlation_direction(const SynthSpec& spec) {
  Rng rng = make_rng(spec.seed, kDirectionStream);
  Matrix p = gaussian_matrix(rng, static_cast<Eigen::Index>(spec.r), static_cast<Eigen::Index>(spec.k));
  return p / p.norm();
}

std::vector<Signal> draw_signals(const SynthSpec& spec, Rng& rng) {
  std::vector<Signal> out;
  out.reserve(spec.l);
  const auto n = static_cast<Eigen::Index>(spec.n);
  for (std::size_t i = 0; i < spec.l; ++i) {
    switch (spec.signals) {
      case SignalModel::Gaussian:
        out.emplace_back(Vector(gaussian_matrix(rng, n, 1)), Geometry::line(spec.n));
        break;
      case SignalModel::Impulse: {
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        Vector v = Vector::Zero(n);
        v(pick(rng)) = 1.0;
        out.emplace_back(std::move(v), Geometry::line(spec.n));
        break;
      }
      case SignalModel::Loaded: {
        std::uniform_int_distribution<std::size_t> pick(0, spec.dataset.size() - 1);
        out.push_back(spec.dataset[pick(rng)]);
        break;
      }
    }
  }
  return out;
}

Matrix draw_mismatch(const SynthSpec& spec, const LiftedOperator& lift, const Matrix& direction,
                     Rng& rng) {
  const auto rows = static_cast<Eigen::Index>(lift.rows());
  const auto cols = static_cast<Eigen::Index>(spec.k);
  switch (spec.mismatch.kind) {
    case MismatchModel::Kind::Zero: return Matrix::Zero(rows, cols);
    case MismatchModel::Kind::IidGaussian: return gaussian_matrix(rng, rows, cols, spec.mismatch.scale);
    case MismatchModel::Kind::BoundedBall: return ball_draw(rows, cols, spec.mismatch.scale, rng);
    case MismatchModel::Kind::Correlated:
      return spec.mismatch.scale * lift.matrix() * direction +
             ball_draw(rows, cols, spec.mismatch.noise, rng);
  }
  return Matrix::Zero(rows, cols);
}

SynthInstance synth_instance(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  const OffsetPattern pattern = spec.offsets();
  const Matrix direction = correlation_direction(spec);
  SynthInstance inst{{}, {}, random_orthogonal_filters(spec.r, spec.k, rng()), {}, {}, 0};
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    inst.signals = draw_signals(spec, rng);
    inst.lifts = build_lifts(inst.signals, pattern);
    fill_codes(spec, inst, direction, rng);
    if (rank_hypotheses_hold(inst.lifts, inst.codes, inst.truth)) return inst;
    ++inst.rejections;
  }
  throw Error(ErrorCode::RankHypothesisUnsatisfiable, kModule,
              "rank hypotheses failed in " + std::to_string(kMaxAttempts) + " attempts");
}

SynthInstance synth_instance(const SynthSpec& spec) {
  Rng rng = make_rng(spec.seed);
  return synth_instance(spec, rng);
}

SynthInstance synth_mismatch(const SynthSpec& spec, std::vector<Signal> signals,
                             std::vector<LiftedOperator> lifts, const FilterBank& truth, Rng& rng) {
  const Matrix direction = correlation_direction(spec);
  SynthInstance inst{std::move(signals), std::move(lifts), truth, {}, {}, 0};
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    fill_codes(spec, inst, direction, rng);
    if (rank_hypotheses_hold(inst.lifts, inst.codes, inst.truth)) return inst;
    ++inst.rejections;
  }
  throw Error(ErrorCode::RankHypothesisUnsatisfiable, kModule,
              "rank hypotheses failed in " + std::to_string(kMaxAttempts) + " attempts");
}

VerifyReport verify_det_bound(const SynthSpec& spec, const VerifyOptions& options) {
  spec.validate();
  VerifyReport report;
  report.theorem = "thm1";
  report.trials.resize(spec.trials);
  for_each_trial(spec.trials, [&](std::size_t t) {
    Rng rng = trial_rng(spec, t);
    const SynthInstance inst = synth_instance(spec, rng);
    const FilterBank estimate = filter_update(inst.lifts, inst.codes);
    const DetBound det = det_error_bound(inst.lifts, inst.mismatches);
    TrialRecord& rec = report.trials[t];
    rec.trial = t;
    rec.error = (estimate.matrix() - inst.truth.matrix()).squaredNorm();
    rec.bound = det.bound + options.perturb_bound;
    rec.holds = rec.error <= rec.bound + kViolationTolerance;
    rec.rejections = inst.rejections;
  });
  summarise_det(report);
  report.passed = report.held == report.trials.size();
  return report;
}

namespace {

/// E{E E^T} = sigma_bar^2 I for the zero-mean models.
double analytic_sigma_bar_sq(const SynthSpec& spec, std::size_t n) {
  const double k = static_cast<double>(spec.k);
  const double s = spec.mismatch.scale;
  switch (spec.mismatch.kind) {
    case MismatchModel::Kind::Zero: return 0.0;
    case MismatchModel::Kind::IidGaussian: return k * s * s;
    case MismatchModel::Kind::BoundedBall: {
      // E||E||_F^2 = s^2 * d / (d + 2) for a uniform draw from the d-dimensional ball
      const double d = static_cast<double>(n) * k;
      return s * s * d / (d + 2.0) / static_cast<double>(n);
    }
    case MismatchModel::Kind::Correlated: break;
  }
  throw Error(ErrorCode::InvalidArgument, kModule, "correlated mismatch is not zero-mean");
}

}  // namespace

VerifyReport monte_carlo_expected(const SynthSpec& spec, const VerifyOptions& options) {
  spec.validate();
  if (!spec.mismatch.zero_mean())
    throw Error(ErrorCode::InvalidArgument, kModule,
                "expected-error check needs a zero-mean mismatch model, got " +
                    to_string(spec.mismatch.kind));

  // signals and truth are fixed across trials; only the mismatch is redrawn
  Rng fixed = make_rng(spec.seed, kFixedSignalStream);
  SynthSpec zero = spec;
  zero.mismatch = {MismatchModel::Kind::Zero, 0.0, 0.0};
  const SynthInstance base = synth_instance(zero, fixed);

  VerifyReport report;
  report.theorem = "cor1";
  report.rho_sq = rho_squared(base.lifts);
  report.sigma_bar_sq = analytic_sigma_bar_sq(spec, base.lifts.front().rows());
  report.expected_bound = expected_bound(report.sigma_bar_sq, report.rho_sq) + options.perturb_bound;
  report.trials.resize(spec.trials);

  for_each_trial(spec.trials, [&](std::size_t t) {
    Rng rng = trial_rng(spec, t);
    const SynthInstance inst = synth_mismatch(spec, base.signals, base.lifts, base.truth, rng);
    const FilterBank estimate = filter_update(inst.lifts, inst.codes);
    TrialRecord& rec = report.trials[t];
    rec.trial = t;
    rec.error = (estimate.matrix() - inst.truth.matrix()).squaredNorm();
    rec.bound = report.expected_bound;
    rec.holds = rec.error <= rec.bound + kViolationTolerance;
    rec.rejections = inst.rejections;
  });
  summarise_det(report);
  report.passed =
      report.mean_error <= report.expected_bound + 2.0 * report.std_error + kViolationTolerance;
  return report;
}

EnsembleStats population_stats(const SynthSpec& spec, std::size_t draws) {
  spec.validate();
  const OffsetPattern pattern = spec.offsets();
  const Eigen::Index r = static_cast<Eigen::Index>(spec.r);
  const Matrix direction = correlation_direction(spec);

  EnsembleStats stats;
  stats.samples = draws;
  std::vector<LiftedOperator> held_out;
  if (spec.signals == SignalModel::Impulse) {
    stats.lambda_bar = Matrix::Identity(r, r);
    stats.gamma = 1.0;
    stats.samples = 0;  // analytic
  } else {
    if (draws == 0) throw Error(ErrorCode::InvalidArgument, kModule, "need held-out draws");
    Rng rng = make_rng(spec.seed, kPopulationStream);
    SynthSpec one = spec;
    one.l = 1;
    stats.lambda_bar = Matrix::Zero(r, r);
    for (std::size_t i = 0; i < draws; ++i) {
      const Signal x = draw_signals(one, rng).front();
      const LiftedOperator lift = build_lift(x, pattern);
      stats.lambda_bar.noalias() += lift.matrix().transpose() * lift.matrix();
      stats.gamma = std::max(stats.gamma, x.norm());
      if (spec.mismatch.kind == MismatchModel::Kind::IidGaussian)
        stats.sigma = std::max(stats.sigma, draw_mismatch(spec, lift, direction, rng).norm());
    }
    stats.lambda_bar /= static_cast<double>(draws);
  }

  stats.corr = Matrix::Zero(r, static_cast<Eigen::Index>(spec.k));
  switch (spec.mismatch.kind) {
    case MismatchModel::Kind::Zero: stats.sigma = 0.0; break;
    case MismatchModel::Kind::IidGaussian:
      if (spec.signals == SignalModel::Impulse) {
        // not almost surely bounded; plug in the largest norm seen in held-out draws
        Rng rng = make_rng(spec.seed, kPopulationStream + 1);
        const auto n = static_cast<Eigen::Index>(spec.n);
        for (std::size_t i = 0; i < std::max<std::size_t>(draws, 1); ++i)
          stats.sigma = std::max(
              stats.sigma,
              gaussian_matrix(rng, n, static_cast<Eigen::Index>(spec.k), spec.mismatch.scale).norm());
      }
      break;
    case MismatchModel::Kind::BoundedBall: stats.sigma = spec.mismatch.scale; break;
    case MismatchModel::Kind::Correlated: {
      stats.corr = spec.mismatch.scale * stats.lambda_bar * direction;
      // ||c Psi P||_F <= c ||Psi||_2 ||P||_F, with ||Psi||_2 = 1 for impulses and <= gamma sqrt(R) otherwise
      const double psi_norm =
          spec.signals == SignalModel::Impulse ? 1.0 : stats.gamma * std::sqrt(static_cast<double>(r));
      stats.sigma = spec.mismatch.scale * psi_norm + spec.mismatch.noise;
      break;
    }
  }
  return stats;
}

VerifyReport monte_carlo_hp(const SynthSpec& spec, double delta, const VerifyOptions& options) {
  spec.validate();
  const EnsembleStats stats = population_stats(spec);
  const HpBound hp = hp_bound(stats, delta, spec.l);

  VerifyReport report;
  report.theorem = "thm2";
  report.delta = delta;
  report.probability = hp.prob;
  report.vacuous = hp.vacuous;
  report.rho_chi = rho_bar_chi_bar(stats, spec.l);
  report.trials.resize(spec.trials);

  for_each_trial(spec.trials, [&](std::size_t t) {
    Rng rng = trial_rng(spec, t);
    const SynthInstance inst = synth_instance(spec, rng);
    const FilterBank estimate = filter_update(inst.lifts, inst.codes);
    TrialRecord& rec = report.trials[t];
    rec.trial = t;
    rec.error = (estimate.matrix() - inst.truth.matrix()).squaredNorm();
    rec.bound = hp.bound + options.perturb_bound;
    rec.holds = rec.error <= rec.bound;
    rec.rejections = inst.rejections;
  });
  summarise_det(report);
  report.coverage = static_cast<double>(report.held) / static_cast<double>(report.trials.size());
  report.passed = report.vacuous || report.coverage >= report.probability;
  return report;
}

std::vector<RhoScanRow> rho_scan(std::span<const Signal> signals, const OffsetPattern& pattern,
                                 std::span<const std::size_t> grid, std::size_t replicates,
                                 std::uint64_t seed) {
  if (signals.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "rho scan needs samples");
  if (replicates == 0) throw Error(ErrorCode::InvalidArgument, kModule, "replicates must be >= 1");
  const std::size_t available = signals.size();
  for (std::size_t l : grid)
    if (l == 0 || l > available)
      throw Error(ErrorCode::InvalidArgument, kModule,
                  "sample count " + std::to_string(l) + " outside [1, " + std::to_string(available) + "]");

  // per-sample Grams once; subset sums are then R x R work
  const std::vector<LiftedOperator> lifts = build_lifts(signals, pattern);
  std::vector<Matrix> grams(available);
  for (std::size_t i = 0; i < available; ++i)
    grams[i] = kernels::parallel::gram_sum(std::span<const LiftedOperator>(&lifts[i], 1));

  const auto r = static_cast<Eigen::Index>(pattern.size());
  std::vector<RhoScanRow> rows;
  for (std::size_t l : grid) {
    const std::size_t reps = l == available ? 1 : replicates;
    Rng rng = make_rng(seed, l);
    std::vector<std::size_t> index(available);
    std::vector<double> values;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      std::iota(index.begin(), index.end(), std::size_t{0});
      // partial Fisher-Yates: first l entries are a uniform subset
      for (std::size_t i = 0; i < l && l < available; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, available - 1);
        std::swap(index[i], index[pick(rng)]);
      }
      Matrix g = Matrix::Zero(r, r);
      for (std::size_t i = 0; i < l; ++i) g += grams[index[i]];
      const SymmetricSpectrum spec = symmetric_spectrum(g);
      if (!(spec.max > 0.0) || !(spec.min > kRankTolerance * spec.max))
        throw Error(ErrorCode::RankDeficient, kModule,
                    "rank-deficient Gram for a subset of size " + std::to_string(l));
      values.push_back(spec.trace / (spec.min * spec.min));
    }
    const double mean = mean_of(values);
    rows.push_back({l, mean, sample_std(values, mean), reps});
  }
  return rows;
}

double log_log_slope(std::span<const RhoScanRow> rows) {
  if (rows.size() < 2) throw Error(ErrorCode::InvalidArgument, kModule, "slope needs >= 2 rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const RhoScanRow& row : rows) {
    const double x = std::log(static_cast<double>(row.samples));
    const double y = std::log(row.mean_rho_sq);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<ChiRow> chi_track(const TrainTrace& trace, std::span<const LiftedOperator> lifts,
                              const Matrix& reference, std::size_t stride) {
  if (trace.snapshots.empty())
    throw Error(ErrorCode::MissingSnapshots, kModule, "trace has no snapshots");
  if (stride == 0 || trace.record_every == 0 || stride % trace.record_every != 0)
    throw Error(ErrorCode::MissingSnapshots, kModule,
                "stride " + std::to_string(stride) + " is not a multiple of the recording stride " +
                    std::to_string(trace.record_every));

  const Matrix gram = kernels::parallel::gram_sum(lifts);
  const double samples = static_cast<double>(lifts.size());
  const SymmetricSpectrum spec = symmetric_spectrum(gram / samples);
  if (!(spec.max > 0.0) || !(spec.min > kRankTolerance * spec.max))
    throw Error(ErrorCode::RankDeficient, kModule, "lambda_bar estimate is rank deficient");
  const Matrix gram_ref = gram * reference;

  std::vector<ChiRow> rows;
  for (std::size_t i = 0; i < trace.snapshots.size(); ++i) {
    const TrainSnapshot& snap = trace.snapshots[i];
    const bool last = i + 1 == trace.snapshots.size();
    if (snap.iteration % stride != 0 && !last) continue;
    Matrix corr;
    if (!snap.codes.empty()) {
      const MismatchSet e = mismatch_from_codes(snap.codes, lifts, reference);
      corr = kernels::parallel::cross_sum(lifts, e) / samples;
    } else {
      // sum Psi^T (Z - Psi D_ref) = sum Psi^T Z - G D_ref
      corr = (snap.code_cross - gram_ref) / samples;
    }
    rows.push_back({snap.iteration, corr.norm() / spec.min});
  }
  return rows;
}

}  // namespace caol
