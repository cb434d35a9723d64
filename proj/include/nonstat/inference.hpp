#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nonstat/bootstrap.hpp"
#include "nonstat/parallel.hpp"
#include "nonstat/procspace.hpp"
#include "nonstat/rng.hpp"

namespace nonstat {

/// Raw kernel smoother of an arbitrary vector:
///   out(i) = (n b)^{-1} sum_j K((j - i)/(n b)) x_j.
/// Unnormalized on purpose: applied to data it is the trend estimator,
/// applied to the exact mean path it is the estimand, and the two then
/// agree in expectation index by index, boundary included.
inline std::vector<double> kernel_smooth(const std::vector<double>& x, double bandwidth,
                                         const KernelFn& kernel) {
  if (!(bandwidth > 0.0) || bandwidth > 1.0)
    throw ValidationError("kernel smoother: bandwidth must lie in (0, 1]");
  const std::size_t n = x.size();
  const double nb = static_cast<double>(n) * bandwidth;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    const auto [lo, hi] = kernel_window(static_cast<double>(i), n, bandwidth);
    double acc = 0.0;
    for (std::size_t j = lo; j <= hi && hi > 0; ++j)
      acc += kernel_weight(kernel, static_cast<double>(i), j, n, bandwidth) * x[j - 1];
    out[i - 1] = acc / nb;
  }
  return out;
}

/// Trend estimate mu_hat_b(1..n) from data.
inline std::vector<double> kernel_trend(const std::vector<double>& values, double bandwidth,
                                        const KernelFn& kernel = KernelFn::triweight()) {
  return kernel_smooth(values, bandwidth, kernel);
}

/// Smoothed mean mu_b(1..n) from an exact mean path: the estimand of
/// kernel_trend, E[kernel_trend] = smoothed_mean exactly.
inline std::vector<double> smoothed_mean(const std::vector<double>& mean_path, double bandwidth,
                                         const KernelFn& kernel = KernelFn::triweight()) {
  return kernel_smooth(mean_path, bandwidth, kernel);
}

/// Uniform confidence band for the smoothed mean.
struct TrendBand {
  std::vector<double> s_grid;    // i/n for i = 1..n
  std::vector<double> estimate;  // mu_hat_b
  std::vector<double> lower;
  std::vector<double> upper;
  double q_hat = 0.0;
  double alpha = 0.0;
  std::size_t replicates = 0;
  double bandwidth = 0.0;
  double scaled_width = 0.0;  // sqrt(n) * band width = 2 q_hat
  std::vector<double> sup_norms;  // sorted bootstrap draws

  bool covers(const std::vector<double>& target) const {
    for (std::size_t i = 0; i < target.size(); ++i)
      if (target[i] < lower[i] || target[i] > upper[i]) return false;
    return true;
  }
};

/// Band construction: bootstrap the smoother with multipliers on the
/// residuals X_j - c_j, where c is the trend estimate itself (default) or
/// a caller-supplied centering path (oracle variant for diagnostics).
/// q_hat is the ceil(B(1-alpha)) order statistic of
///   sup_i sqrt(n) | (n b)^{-1} sum_j K((j-i)/(n b)) V_j (X_j - c_j) |,
/// the sup running over the index grid s = i/n. The band is
/// mu_hat_b +- q_hat / sqrt(n).
inline TrendBand uniform_band(const std::vector<double>& values, double bandwidth, double alpha,
                              std::size_t b_replicates, const MultiplierSpec& mspec,
                              const rng::Stream& stream,
                              const KernelFn& kernel = KernelFn::triweight(),
                              std::size_t threads = 1,
                              const std::vector<double>* centering_path = nullptr) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw ValidationError("uniform band: alpha must lie in (0, 1)");
  if (b_replicates < 1) throw ValidationError("uniform band: B must be >= 1");
  const std::size_t n = values.size();
  if (n < 2) throw ValidationError("uniform band: need n >= 2");

  TrendBand band;
  band.alpha = alpha;
  band.replicates = b_replicates;
  band.bandwidth = bandwidth;
  band.estimate = kernel_trend(values, bandwidth, kernel);

  std::vector<double> residuals(n);
  const std::vector<double>& center = centering_path ? *centering_path : band.estimate;
  if (center.size() != n) throw ValidationError("uniform band: centering length mismatch");
  for (std::size_t j = 0; j < n; ++j) residuals[j] = values[j] - center[j];

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double nb = static_cast<double>(n) * bandwidth;
  band.sup_norms.resize(b_replicates);
  parallel_for(0, b_replicates, threads, [&](std::size_t k) {
    rng::Stream child = stream.child(k);
    const std::vector<double> v = gen_multipliers(mspec, n, child);
    double sup = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      const auto [lo, hi] = kernel_window(static_cast<double>(i), n, bandwidth);
      double acc = 0.0;
      for (std::size_t j = lo; j <= hi && hi > 0; ++j)
        acc += kernel_weight(kernel, static_cast<double>(i), j, n, bandwidth) * v[j - 1] *
               residuals[j - 1];
      sup = std::max(sup, std::fabs(acc) * sqrt_n / nb);
    }
    band.sup_norms[k] = sup;
  });
  std::sort(band.sup_norms.begin(), band.sup_norms.end());
  band.q_hat = quantile_from_sorted(band.sup_norms, alpha);
  band.scaled_width = 2.0 * band.q_hat;

  band.s_grid.resize(n);
  band.lower.resize(n);
  band.upper.resize(n);
  const double half = band.q_hat / sqrt_n;
  for (std::size_t i = 1; i <= n; ++i) {
    band.s_grid[i - 1] = static_cast<double>(i) / static_cast<double>(n);
    band.lower[i - 1] = band.estimate[i - 1] - half;
    band.upper[i - 1] = band.estimate[i - 1] + half;
  }
  return band;
}

/// Sup-type bootstrap test report.
struct TestReport {
  double statistic = 0.0;       // T_n
  double critical_value = 0.0;  // c*_n(alpha)
  double p_value = 1.0;         // (1 + #{T* >= T_n}) / (B + 1)
  bool reject = false;
  double alpha = 0.0;
  std::size_t replicates = 0;
  std::vector<double> sup_norms;  // sorted bootstrap draws T*
  std::string config_echo;
};

/// Finite-sample-valid bootstrap p-value.
inline double bootstrap_p_value(const std::vector<double>& sups, double statistic) {
  std::size_t count = 0;
  for (double s : sups)
    if (s >= statistic) ++count;
  return static_cast<double>(1 + count) / static_cast<double>(sups.size() + 1);
}

/// Test of H0: E[f(Z_i)] = 0 for all i and f in the class.
/// T_n is the sup norm of the zero-centered empirical surface; the
/// bootstrap version multiplies the (optionally centered) summands by
/// multipliers. Centering applies to the bootstrap side only and
/// defaults to zero (the H0 semantics); a kernel-smoother centering
/// improves power against fixed alternatives.
inline TestReport run_test(const std::vector<double>& z_values, const FunctionClass& cls,
                           const WeightFamily& family, const EvalGrid& grid, double alpha,
                           std::size_t b_replicates, const MultiplierSpec& mspec,
                           const MeanEstimator& centering, const rng::Stream& stream,
                           std::size_t threads = 1) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw ValidationError("test: alpha must lie in (0, 1)");
  if (b_replicates < 1) throw ValidationError("test: B must be >= 1");

  TestReport report;
  report.alpha = alpha;
  report.replicates = b_replicates;
  report.statistic =
      sup_norm(empirical_surface(z_values, cls, family, grid, CenteringSpec::zero()));

  const BootstrapEngine engine(z_values, cls, family, grid, mspec, centering);
  report.sup_norms.resize(b_replicates);
  parallel_for(0, b_replicates, threads, [&](std::size_t k) {
    rng::Stream child = stream.child(k);
    report.sup_norms[k] = engine.replicate_sup(child);
  });
  std::sort(report.sup_norms.begin(), report.sup_norms.end());
  report.critical_value = quantile_from_sorted(report.sup_norms, alpha);
  report.p_value = bootstrap_p_value(report.sup_norms, report.statistic);
  report.reject = report.statistic > report.critical_value;
  return report;
}

/// Equispaced threshold grid, inclusive of both ends.
inline std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi > lo)) throw ValidationError("threshold grid: bad range");
  std::vector<double> t;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
  t.reserve(count);
  for (std::size_t k = 0; k < count; ++k) t.push_back(lo + static_cast<double>(k) * step);
  return t;
}

/// Kolmogorov-Smirnov-type nonstationarity test: compares the empirical
/// distribution at lag-L separated positions through the class
/// f_t(Z_i) = 1{X_i < t} - 1{X_{i-L} < t} under kernel weights, with a
/// kernel-smoothed mean path centering the bootstrap side.
inline TestReport ks_nonstationarity_test(const std::vector<double>& x_values, std::size_t lag,
                                          const std::vector<double>& thresholds,
                                          double bandwidth, double alpha,
                                          std::size_t b_replicates, const rng::Stream& stream,
                                          std::size_t s_count = 101, std::size_t threads = 1) {
  if (lag >= x_values.size())
    throw ValidationError("ks test: lag must be smaller than the series length");
  const FunctionClass cls = PairedIndicatorDiff{thresholds, lag};
  const WeightFamily family = KernelWeights{KernelFn::triweight(), bandwidth};
  const EvalGrid grid = make_grid(cls, family, s_count);
  const MeanEstimator centering = KernelSmootherEstimator{KernelFn::triweight(), bandwidth};
  const MultiplierSpec mspec = BlockExponentialMultipliers{};
  return run_test(x_values, cls, family, grid, alpha, b_replicates, mspec, centering, stream,
                  threads);
}

}  // namespace nonstat
