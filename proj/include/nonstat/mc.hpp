#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nonstat/bootstrap.hpp"
#include "nonstat/core.hpp"
#include "nonstat/dgp.hpp"
#include "nonstat/gaussian.hpp"
#include "nonstat/inference.hpp"
#include "nonstat/parallel.hpp"
#include "nonstat/procspace.hpp"
#include "nonstat/rng.hpp"

namespace nonstat {

// ---------------------------------------------------------------------------
// Statistics over surfaces

struct Statistic {
  enum class Kind { SupNorm, Marginal };
  Kind kind = Kind::SupNorm;
  std::size_t s_index = 0;  // Marginal only
  std::size_t f_index = 0;

  double operator()(const Surface& s) const {
    if (kind == Kind::SupNorm) return sup_norm(s);
    return s(s_index, f_index);
  }
};

// ---------------------------------------------------------------------------
// Experiment configuration

/// Declarative Monte Carlo experiment. One struct serves all checks;
/// fields irrelevant to a given check are ignored by it.
struct ExperimentConfig {
  ProcessSpec spec;
  FunctionClass cls = IdentityClass{};
  WeightFamily family = ConstantWeights{};
  std::size_t s_count = 101;  // grid density over [0, 1] (1 point for constant weights)
  Statistic statistic;
  std::vector<std::size_t> n_schedule = {256};
  std::size_t replicates = 10000;  // M per n
  std::size_t bootstrap_replicates = 300;  // B, where relevant
  double alpha = 0.05;
  MultiplierSpec multiplier = BlockExponentialMultipliers{};

  enum class Centering { KnownPath, Zero, KernelSmoother };
  Centering centering = Centering::KnownPath;
  double centering_bandwidth = 0.1;

  /// Verdict threshold for the distance at the largest n. Default is the
  /// package-wide 0.03 (about twice the two-sample DKW 99% floor at
  /// M = 10^4, rounded up).
  double threshold = 0.03;
  /// Distance the broken-model negative control must exceed.
  double control_threshold = 0.10;

  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

inline void validate(const ExperimentConfig& config) {
  if (config.n_schedule.empty())
    throw ValidationError("experiment: n_schedule must be nonempty");
  for (std::size_t t = 1; t < config.n_schedule.size(); ++t)
    if (!(config.n_schedule[t - 1] < config.n_schedule[t]))
      throw ValidationError("experiment: n_schedule must be strictly increasing");
  if (config.replicates < 100) throw ValidationError("experiment: M must be >= 100");
  validate(config.cls);
  validate(config.family);
}

inline EvalGrid experiment_grid(const ExperimentConfig& config) {
  return make_grid(config.cls, config.family, config.s_count);
}

inline MeanEstimator make_mean_estimator(const ExperimentConfig& config,
                                         std::size_t n) {
  switch (config.centering) {
    case ExperimentConfig::Centering::Zero:
      return ZeroMeanEstimator{};
    case ExperimentConfig::Centering::KernelSmoother:
      return KernelSmootherEstimator{KernelFn::triweight(), config.centering_bandwidth};
    case ExperimentConfig::Centering::KnownPath:
      return KnownPathEstimator{class_mean_matrix(config.spec, n, config.cls)};
  }
  return ZeroMeanEstimator{};
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov distance

/// Exact sup-CDF distance between two empirical laws; O((Ma+Mb) log).
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Oracle preparation (exact cell, or Monte Carlo estimate as fallback)

namespace detail {

inline constexpr std::uint64_t kTagEmpirical = 1;
inline constexpr std::uint64_t kTagGaussian = 2;
inline constexpr std::uint64_t kTagFloorA = 3;
inline constexpr std::uint64_t kTagFloorB = 4;
inline constexpr std::uint64_t kTagControl = 5;
inline constexpr std::uint64_t kTagBootstrap = 6;
inline constexpr std::uint64_t kTagMcModel = 7;

/// Deterministic parallel mean of per-replicate n x K matrices: replicate
/// contributions are summed within 64 fixed chunks (by replicate order)
/// and the chunk partials are combined serially, so the result does not
/// depend on the worker count.
template <typename F>
Matrix deterministic_mean_matrix(std::size_t m, std::size_t rows, std::size_t cols,
                                 std::size_t threads, F&& fill) {
  constexpr std::size_t kChunks = 64;
  const std::size_t chunks = std::min(kChunks, m);
  std::vector<Matrix> partial(chunks, Matrix(rows, cols, 0.0));
  parallel_for(0, chunks, threads, [&](std::size_t c) {
    Matrix scratch(rows, cols, 0.0);
    const std::size_t lo = m * c / chunks;
    const std::size_t hi = m * (c + 1) / chunks;
    for (std::size_t k = lo; k < hi; ++k) {
      fill(k, scratch);
      auto& acc = partial[c].data();
      const auto& src = scratch.data();
      for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += src[e];
    }
  });
  Matrix mean(rows, cols, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    const auto& src = partial[c].data();
    for (std::size_t e = 0; e < mean.data().size(); ++e) mean.data()[e] += src[e];
  }
  for (double& v : mean.data()) v /= static_cast<double>(m);
  return mean;
}

struct OracleBundle {
  CenteringSpec centering;  // exact mean path, or Monte Carlo estimate
  CovarianceModel model;
  bool exact = true;
  std::string note;
};

/// Exact centering + exact matched-GP covariance when the (spec, class)
/// cell supports it; otherwise a Monte Carlo estimate over `m_cov`
/// replicates (documented in the bundle note and the model source).
/// Callers pass a dedicated stream; replicate k draws from its child k.
inline OracleBundle prepare_oracles(const ProcessSpec& spec, const FunctionClass& cls,
                                    const WeightFamily& family, const EvalGrid& grid,
                                    std::size_t n, std::size_t m_cov,
                                    const rng::Stream& mc_stream, std::size_t threads) {
  OracleBundle bundle;
  try {
    bundle.centering = exact_centering(spec, n, cls);
    bundle.model = corresponding_covariance(spec, cls, family, grid, n);
    bundle.exact = true;
    return bundle;
  } catch (const CapabilityError&) {
    // Fall through to the Monte Carlo estimate.
  }
  const std::size_t kcount = member_count(cls);
  const Matrix mean_f = deterministic_mean_matrix(
      m_cov, n, kcount, threads, [&](std::size_t k, Matrix& out) {
        const TimeSeriesSample sample = simulate_path(spec, n, mc_stream.child(k));
        out = eval_class(cls, sample.values);
      });
  bundle.centering = CenteringSpec::path(mean_f);
  std::vector<Surface> surfaces(m_cov);
  parallel_for(0, m_cov, threads, [&](std::size_t k) {
    const TimeSeriesSample sample = simulate_path(spec, n, mc_stream.child(k));
    surfaces[k] = empirical_surface(sample.values, cls, family, grid, bundle.centering);
  });
  bundle.model = empirical_covariance(surfaces);
  bundle.exact = false;
  bundle.note = "covariance cell lacks an exact oracle; monte-carlo-estimate model with M_cov=" +
                std::to_string(m_cov);
  return bundle;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// replicate_statistic

enum class StatisticSource { Empirical, GaussianOracle, Bootstrap };

/// M iid draws of the configured statistic at sample size n. Empirical
/// and bootstrap draws refresh the data each replicate; replicate k uses
/// child stream k of the per-source stream, so results are independent
/// of scheduling.
inline std::vector<double> replicate_statistic(const ExperimentConfig& config, std::size_t n,
                                               std::size_t m, StatisticSource source,
                                               const rng::Stream& stream) {
  validate(config);
  const EvalGrid grid = experiment_grid(config);
  std::vector<double> draws(m);
  switch (source) {
    case StatisticSource::Empirical: {
      const auto bundle =
          detail::prepare_oracles(config.spec, config.cls, config.family, grid, n, m,
                                  stream.child(detail::kTagMcModel), config.threads);
      parallel_for(0, m, config.threads, [&](std::size_t k) {
        const TimeSeriesSample sample =
            simulate_path(config.spec, n, stream.child(detail::kTagEmpirical).child(k));
        draws[k] = config.statistic(
            empirical_surface(sample.values, config.cls, config.family, grid, bundle.centering));
      });
      break;
    }
    case StatisticSource::GaussianOracle: {
      const auto bundle =
          detail::prepare_oracles(config.spec, config.cls, config.family, grid, n, m,
                                  stream.child(detail::kTagMcModel), config.threads);
      const GpSampler sampler(bundle.model);
      parallel_for(0, m, config.threads, [&](std::size_t k) {
        rng::Stream child = stream.child(detail::kTagGaussian).child(k);
        draws[k] = config.statistic(sampler.sample(child));
      });
      break;
    }
    case StatisticSource::Bootstrap: {
      parallel_for(0, m, config.threads, [&](std::size_t k) {
        const rng::Stream child = stream.child(detail::kTagBootstrap).child(k);
        rng::Stream data_stream = child.child(0);
        rng::Stream mult_stream = child.child(1);
        const TimeSeriesSample sample = simulate_path(config.spec, n, data_stream);
        const MeanEstimator centering = make_mean_estimator(config, n);
        const BootstrapEngine engine(sample.values, config.cls, config.family, grid,
                                     config.multiplier, centering);
        draws[k] = config.statistic(engine.replicate(mult_stream));
      });
      break;
    }
  }
  return draws;
}

// ---------------------------------------------------------------------------
// Distance reports

struct DistanceRow {
  std::size_t n = 0;
  double distance = 0.0;
  double noise_floor = 0.0;  // two-batch same-law KS floor at the same M
};

/// Outcome of a distribution-distance check across the n schedule, with
/// the mandatory noise floor and broken-model negative control.
struct DistanceReport {
  std::vector<DistanceRow> rows;
  double threshold = 0.03;
  std::size_t inversions = 0;  // material increases along n_schedule
  bool monotone_ok = true;     // at most one tolerated inversion
  bool final_ok = false;       // distance at max n within the verdict bound
  bool pass = false;
  double control_distance = 0.0;
  double control_threshold = 0.10;
  bool control_detected = false;  // broken model must fail the verdict
  std::string note;

  double final_bound() const {
    if (rows.empty()) return threshold;
    return std::max(2.0 * rows.back().noise_floor, threshold);
  }
};

namespace detail {

/// Count material inversions: a step counts only when the distance grows
/// beyond the larger of the previous distance and twice the local noise
/// floor (distances at noise level cannot be meaningfully ranked).
inline std::size_t count_inversions(const std::vector<DistanceRow>& rows) {
  std::size_t inv = 0;
  for (std::size_t t = 1; t < rows.size(); ++t)
    if (rows[t].distance > std::max(rows[t - 1].distance, 2.0 * rows[t].noise_floor)) ++inv;
  return inv;
}

inline void finalize_report(DistanceReport& report) {
  report.inversions = count_inversions(report.rows);
  report.monotone_ok = report.inversions <= 1;
  report.final_ok = !report.rows.empty() && report.rows.back().distance <= report.final_bound();
  report.pass = report.monotone_ok && report.final_ok;
}

}  // namespace detail

/// Relative-CLT distance check: per n, the two-sample KS distance between
/// M empirical draws of the statistic and M draws from the matched
/// Gaussian model, plus a same-law noise floor. The negative control
/// reruns the largest n against a variance-halved Gaussian model and
/// must break the verdict.
inline DistanceReport relative_clt_check(const ExperimentConfig& config) {
  validate(config);
  const rng::Stream root(config.seed);
  const EvalGrid grid = experiment_grid(config);

  DistanceReport report;
  report.threshold = config.threshold;
  report.control_threshold = config.control_threshold;

  std::vector<double> final_empirical;
  for (std::size_t t = 0; t < config.n_schedule.size(); ++t) {
    const std::size_t n = config.n_schedule[t];
    const std::size_t m = config.replicates;
    const rng::Stream level = root.child(t);
    const auto bundle = detail::prepare_oracles(config.spec, config.cls, config.family, grid, n,
                                                m, level.child(detail::kTagMcModel), config.threads);
    if (!bundle.exact && report.note.empty()) report.note = bundle.note;
    const GpSampler sampler(bundle.model);

    std::vector<double> empirical(m), gaussian(m), floor_a(m), floor_b(m);
    parallel_for(0, m, config.threads, [&](std::size_t k) {
      const TimeSeriesSample sample =
          simulate_path(config.spec, n, level.child(detail::kTagEmpirical).child(k));
      empirical[k] = config.statistic(
          empirical_surface(sample.values, config.cls, config.family, grid, bundle.centering));
      rng::Stream g = level.child(detail::kTagGaussian).child(k);
      gaussian[k] = config.statistic(sampler.sample(g));
      rng::Stream fa = level.child(detail::kTagFloorA).child(k);
      floor_a[k] = config.statistic(sampler.sample(fa));
      rng::Stream fb = level.child(detail::kTagFloorB).child(k);
      floor_b[k] = config.statistic(sampler.sample(fb));
    });

    DistanceRow row;
    row.n = n;
    row.distance = ks_distance(empirical, gaussian);
    row.noise_floor = ks_distance(floor_a, floor_b);
    report.rows.push_back(row);
    if (t + 1 == config.n_schedule.size()) final_empirical = std::move(empirical);
  }
  detail::finalize_report(report);

  // Negative control: same empirical draws against the deliberately
  // broken (variance-halved) Gaussian model at the largest n.
  {
    const std::size_t n = config.n_schedule.back();
    const std::size_t m = config.replicates;
    const rng::Stream level = root.child(config.n_schedule.size() - 1);
    auto bundle = detail::prepare_oracles(config.spec, config.cls, config.family, grid, n, m,
                                          level.child(detail::kTagMcModel), config.threads);
    for (double& v : bundle.model.matrix.data()) v *= 0.5;
    const GpSampler sampler(bundle.model);
    std::vector<double> broken(m);
    parallel_for(0, m, config.threads, [&](std::size_t k) {
      rng::Stream g = level.child(detail::kTagControl).child(k);
      broken[k] = config.statistic(sampler.sample(g));
    });
    report.control_distance = ks_distance(final_empirical, broken);
    const double bound = report.final_bound();
    report.control_detected =
        report.control_distance >= report.control_threshold && report.control_distance > bound;
  }
  return report;
}

/// Bootstrap consistency check: KS distance between unconditional
/// bootstrap draws (data and multipliers refreshed each replicate) and
/// empirical draws of the statistic. Noise floor from two independent
/// empirical batches; negative control doubles the multipliers
/// (variance x4) and must break the verdict.
inline DistanceReport bootstrap_consistency_check(const ExperimentConfig& config) {
  validate(config);
  const rng::Stream root(config.seed);
  const EvalGrid grid = experiment_grid(config);

  DistanceReport report;
  report.threshold = config.threshold;
  report.control_threshold = config.control_threshold;

  std::vector<double> final_bootstrap;
  for (std::size_t t = 0; t < config.n_schedule.size(); ++t) {
    const std::size_t n = config.n_schedule[t];
    const std::size_t m = config.replicates;
    const rng::Stream level = root.child(t);
    const auto bundle = detail::prepare_oracles(config.spec, config.cls, config.family, grid, n,
                                                m, level.child(detail::kTagMcModel), config.threads);
    if (!bundle.exact && report.note.empty()) report.note = bundle.note;
    const MeanEstimator centering = make_mean_estimator(config, n);

    std::vector<double> empirical(m), boot(m), floor_a(m), floor_b(m);
    parallel_for(0, m, config.threads, [&](std::size_t k) {
      {
        const TimeSeriesSample sample =
            simulate_path(config.spec, n, level.child(detail::kTagEmpirical).child(k));
        empirical[k] = config.statistic(
            empirical_surface(sample.values, config.cls, config.family, grid, bundle.centering));
      }
      {
        const rng::Stream child = level.child(detail::kTagBootstrap).child(k);
        rng::Stream data_stream = child.child(0);
        rng::Stream mult_stream = child.child(1);
        const TimeSeriesSample sample = simulate_path(config.spec, n, data_stream);
        const BootstrapEngine engine(sample.values, config.cls, config.family, grid,
                                     config.multiplier, centering);
        boot[k] = config.statistic(engine.replicate(mult_stream));
      }
      {
        const TimeSeriesSample sample =
            simulate_path(config.spec, n, level.child(detail::kTagFloorA).child(k));
        floor_a[k] = config.statistic(
            empirical_surface(sample.values, config.cls, config.family, grid, bundle.centering));
      }
      {
        const TimeSeriesSample sample =
            simulate_path(config.spec, n, level.child(detail::kTagFloorB).child(k));
        floor_b[k] = config.statistic(
            empirical_surface(sample.values, config.cls, config.family, grid, bundle.centering));
      }
    });

    DistanceRow row;
    row.n = n;
    row.distance = ks_distance(empirical, boot);
    row.noise_floor = ks_distance(floor_a, floor_b);
    report.rows.push_back(row);
    if (t + 1 == config.n_schedule.size()) final_bootstrap = std::move(empirical);
  }
  detail::finalize_report(report);

  // Negative control: multipliers scaled by 2 (variance 4).
  {
    const std::size_t n = config.n_schedule.back();
    const std::size_t m = config.replicates;
    const rng::Stream level = root.child(config.n_schedule.size() - 1);
    const MeanEstimator centering = make_mean_estimator(config, n);
    std::vector<double> broken(m);
    parallel_for(0, m, config.threads, [&](std::size_t k) {
      const rng::Stream child = level.child(detail::kTagControl).child(k);
      rng::Stream data_stream = child.child(0);
      rng::Stream mult_stream = child.child(1);
      const TimeSeriesSample sample = simulate_path(config.spec, n, data_stream);
      const BootstrapEngine engine(sample.values, config.cls, config.family, grid,
                                   config.multiplier, centering);
      std::vector<double> mult = gen_multipliers(config.multiplier, n, mult_stream);
      for (double& v : mult) v *= 2.0;
      broken[k] = config.statistic(engine.replicate_with_multipliers(mult));
    });
    report.control_distance = ks_distance(final_bootstrap, broken);
    const double bound = report.final_bound();
    report.control_detected =
        report.control_distance >= report.control_threshold && report.control_distance > bound;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Coverage and level/power experiments

/// Wilson 95% score interval for a binomial proportion.
struct Proportion {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double fraction = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline Proportion wilson_interval(std::size_t successes, std::size_t trials) {
  Proportion p;
  p.successes = successes;
  p.trials = trials;
  if (trials == 0) return p;
  const double z = 1.959963984540054;  // 97.5% normal quantile
  const double nt = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / nt;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nt;
  const double center = (phat + z2 / (2.0 * nt)) / denom;
  const double half =
      z * std::sqrt(phat * (1.0 - phat) / nt + z2 / (4.0 * nt * nt)) / denom;
  p.fraction = phat;
  p.lower = std::max(0.0, center - half);
  p.upper = std::min(1.0, center + half);
  return p;
}

struct CoverageConfig {
  ProcessSpec spec;
  std::size_t n = 1000;
  double bandwidth = 0.1;
  double alpha = 0.1;
  std::size_t bootstrap_replicates = 300;
  std::size_t runs = 200;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  MultiplierSpec multiplier = BlockExponentialMultipliers{};
};

struct CoverageReport {
  Proportion coverage;
  double bandwidth = 0.0;
  double alpha = 0.0;
  std::size_t n = 0;
};

/// Fraction of runs in which the uniform band covers the exact smoothed
/// mean at every index.
inline CoverageReport coverage_experiment(const CoverageConfig& config) {
  if (config.runs < 1) throw ValidationError("coverage: runs must be >= 1");
  const std::vector<double> mu = mean_path(config.spec, config.n);
  const std::vector<double> target = smoothed_mean(mu, config.bandwidth);
  const rng::Stream root(config.seed);
  std::vector<unsigned char> covered(config.runs, 0);
  parallel_for(0, config.runs, config.threads, [&](std::size_t k) {
    const rng::Stream run = root.child(k);
    rng::Stream data_stream = run.child(0);
    const TimeSeriesSample sample = simulate_path(config.spec, config.n, data_stream);
    const TrendBand band =
        uniform_band(sample.values, config.bandwidth, config.alpha,
                     config.bootstrap_replicates, config.multiplier, run.child(1));
    covered[k] = band.covers(target) ? 1 : 0;
  });
  CoverageReport report;
  report.bandwidth = config.bandwidth;
  report.alpha = config.alpha;
  report.n = config.n;
  const auto hits = static_cast<std::size_t>(
      std::count(covered.begin(), covered.end(), static_cast<unsigned char>(1)));
  report.coverage = wilson_interval(hits, config.runs);
  return report;
}

struct LevelPowerConfig {
  ProcessSpec h0_spec;
  ProcessSpec h1_spec;
  FunctionClass cls = IdentityClass{};
  WeightFamily family = ConstantWeights{};
  std::size_t s_count = 101;
  std::size_t n = 1000;
  double alpha = 0.05;
  std::size_t bootstrap_replicates = 300;
  MultiplierSpec multiplier = BlockExponentialMultipliers{};
  ExperimentConfig::Centering centering = ExperimentConfig::Centering::Zero;
  double centering_bandwidth = 0.1;
  std::size_t runs_level = 500;
  std::size_t runs_power = 100;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct LevelPowerReport {
  Proportion level;   // rejection rate under h0_spec
  Proportion power;   // rejection rate under h1_spec
  double alpha = 0.0;
};

/// Seeded rejection rates of run_test under the null and the alternative.
inline LevelPowerReport level_power_experiment(const LevelPowerConfig& config) {
  validate(config.cls);
  validate(config.family);
  const EvalGrid grid = make_grid(config.cls, config.family, config.s_count);
  const rng::Stream root(config.seed);

  auto rejection_rate = [&](const ProcessSpec& spec, std::size_t runs,
                            std::uint64_t tag) -> Proportion {
    std::vector<unsigned char> reject(runs, 0);
    MeanEstimator centering = ZeroMeanEstimator{};
    if (config.centering == ExperimentConfig::Centering::KernelSmoother)
      centering = KernelSmootherEstimator{KernelFn::triweight(), config.centering_bandwidth};
    else if (config.centering == ExperimentConfig::Centering::KnownPath)
      centering = KnownPathEstimator{class_mean_matrix(spec, config.n, config.cls)};
    parallel_for(0, runs, config.threads, [&](std::size_t k) {
      const rng::Stream run = root.child(tag).child(k);
      rng::Stream data_stream = run.child(0);
      const TimeSeriesSample sample = simulate_path(spec, config.n, data_stream);
      const TestReport r =
          run_test(sample.values, config.cls, config.family, grid, config.alpha,
                   config.bootstrap_replicates, config.multiplier, centering, run.child(1));
      reject[k] = r.reject ? 1 : 0;
    });
    const auto hits = static_cast<std::size_t>(
        std::count(reject.begin(), reject.end(), static_cast<unsigned char>(1)));
    return wilson_interval(hits, runs);
  };

  LevelPowerReport report;
  report.alpha = config.alpha;
  report.level = rejection_rate(config.h0_spec, config.runs_level, 0);
  report.power = rejection_rate(config.h1_spec, config.runs_power, 1);
  return report;
}

}  // namespace nonstat
