#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "nonstat/gaussian.hpp"
#include "nonstat/inference.hpp"
#include "nonstat/parallel.hpp"

using namespace nonstat;

namespace {

double triweight(double u) {
  if (u < -1.0 || u > 1.0) return 0.0;
  const double t = 1.0 - u * u;
  return (35.0 / 32.0) * t * t * t;
}

}  // namespace

TEST_CASE("kernel trend hand evaluation") {
  SECTION("zero data maps to zero") {
    const std::vector<double> x(10, 0.0);
    for (double v : kernel_trend(x, 0.3)) REQUIRE(v == 0.0);
  }
  SECTION("three-point direct sum") {
    const std::vector<double> x = {0.0, 1.0, 0.0};
    const auto mu = kernel_trend(x, 1.0);
    // oracle: independent 3-term summation, nb = 3
    for (std::size_t i = 1; i <= 3; ++i) {
      double acc = 0.0;
      for (std::size_t j = 1; j <= 3; ++j)
        acc += triweight((static_cast<double>(j) - static_cast<double>(i)) / 3.0) * x[j - 1];
      REQUIRE_THAT(mu[i - 1], Catch::Matchers::WithinAbs(acc / 3.0, 1e-15));
    }
    REQUIRE_THAT(mu[1], Catch::Matchers::WithinAbs((35.0 / 32.0) / 3.0, 1e-15));
  }
  SECTION("linearity") {
    std::vector<double> x(50);
    rng::Stream s(2);
    for (double& v : x) v = s.next_normal();
    std::vector<double> x3 = x;
    for (double& v : x3) v *= 3.0;
    const auto a = kernel_trend(x, 0.2);
    const auto b = kernel_trend(x3, 0.2);
    for (std::size_t i = 0; i < x.size(); ++i)
      REQUIRE_THAT(b[i], Catch::Matchers::WithinAbs(3.0 * a[i], 1e-12));
  }
}

TEST_CASE("smoothed mean") {
  SECTION("zero mean path maps to zero") {
    for (double v : smoothed_mean(std::vector<double>(32, 0.0), 0.1)) REQUIRE(v == 0.0);
  }
  SECTION("constant path: interior values match the quadrature mass") {
    const std::size_t n = 1000;
    const double b = 0.1;
    const auto mu = smoothed_mean(std::vector<double>(n, 3.0), b);
    // Riemann sum of the kernel over the window approaches its unit mass.
    for (std::size_t i = 150; i <= 850; ++i)
      REQUIRE_THAT(mu[i - 1], Catch::Matchers::WithinAbs(3.0, 3.0 * 0.01));
  }
  SECTION("unbiasedness: mean of kernel_trend matches smoothed_mean within 5 SE") {
    TrendPlusNoise tn;
    tn.mean = PathRule::sinusoid(1.0, 1.5);
    tn.noise = ProcessSpec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0)});
    ProcessSpec spec{ProcessVariant(tn)};
    const std::size_t n = 200;
    const double b = 0.15;
    const auto target = smoothed_mean(mean_path(spec, n), b);

    const std::size_t m = 10000;
    const rng::Stream root(8);
    std::vector<std::vector<double>> trends(m);
    parallel_for(0, m, 4, [&](std::size_t k) {
      trends[k] = kernel_trend(simulate_path(spec, n, root.child(k)).values, b);
    });
    for (std::size_t i : {std::size_t{1}, std::size_t{50}, std::size_t{100}, std::size_t{200}}) {
      double mean = 0.0, var = 0.0;
      for (const auto& t : trends) mean += t[i - 1];
      mean /= static_cast<double>(m);
      for (const auto& t : trends) var += (t[i - 1] - mean) * (t[i - 1] - mean);
      var /= static_cast<double>(m - 1);
      const double se = std::sqrt(var / static_cast<double>(m));
      REQUIRE(std::fabs(mean - target[i - 1]) <= 5.0 * se);
    }
  }
}

TEST_CASE("uniform band basics") {
  SECTION("constant data with oracle centering has width zero") {
    const std::size_t n = 64;
    const std::vector<double> x(n, 2.0);
    const std::vector<double> truth(n, 2.0);
    const TrendBand band = uniform_band(x, 0.2, 0.1, 50, BlockExponentialMultipliers{},
                                        rng::Stream(3), KernelFn::triweight(), 1, &truth);
    REQUIRE(band.q_hat == 0.0);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(band.lower[i] == band.upper[i]);
  }
  SECTION("band geometry: constant width, estimate centered") {
    std::vector<double> x(200);
    rng::Stream s(5);
    for (double& v : x) v = s.next_normal();
    const TrendBand band =
        uniform_band(x, 0.1, 0.1, 100, BlockExponentialMultipliers{}, rng::Stream(6));
    const double w0 = band.upper[0] - band.lower[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      REQUIRE_THAT(band.upper[i] - band.lower[i], Catch::Matchers::WithinAbs(w0, 1e-12));
      REQUIRE(band.lower[i] <= band.estimate[i]);
      REQUIRE(band.estimate[i] <= band.upper[i]);
    }
    REQUIRE_THAT(band.scaled_width * (0.5 / std::sqrt(200.0)),
                 Catch::Matchers::WithinAbs(band.q_hat / std::sqrt(200.0), 1e-12));
  }
  SECTION("width shrinks like 1/sqrt(n)") {
    ProcessSpec spec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0)});
    auto mean_width = [&](std::size_t n, std::uint64_t seed) {
      double acc = 0.0;
      const std::size_t runs = 50;
      const rng::Stream root(seed);
      std::vector<double> widths(runs);
      parallel_for(0, runs, 4, [&](std::size_t k) {
        const auto sample = simulate_path(spec, n, root.child(k).child(0));
        const TrendBand band = uniform_band(sample.values, 0.1, 0.1, 120,
                                            BlockExponentialMultipliers{}, root.child(k).child(1));
        widths[k] = band.upper[0] - band.lower[0];
      });
      for (double w : widths) acc += w;
      return acc / static_cast<double>(runs);
    };
    const double ratio = mean_width(4000, 11) / mean_width(1000, 12);
    REQUIRE(ratio > 0.4);
    REQUIRE(ratio < 0.6);
  }
}

TEST_CASE("band/test duality at a fixed index") {
  // Covering the target at index i is the same event as the centered
  // statistic at i staying within q_hat.
  const std::size_t n = 150;
  ProcessSpec spec(IndepHetero{PathRule::constant(1.0), PathRule::sinusoid(0.5, 1.0)});
  const auto sample = simulate_path(spec, n, rng::Stream(21));
  const auto target = smoothed_mean(mean_path(spec, n), 0.1);
  const TrendBand band =
      uniform_band(sample.values, 0.1, 0.2, 80, BlockExponentialMultipliers{}, rng::Stream(22));
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const bool covered = target[i] >= band.lower[i] && target[i] <= band.upper[i];
    const bool small_stat = sqrt_n * std::fabs(band.estimate[i] - target[i]) <= band.q_hat;
    REQUIRE(covered == small_stat);
  }
}

TEST_CASE("translation equivariance of the band") {
  std::vector<double> x(120);
  rng::Stream s(31);
  for (double& v : x) v = s.next_normal();
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 5.0;
  const TrendBand a =
      uniform_band(x, 0.15, 0.1, 60, BlockExponentialMultipliers{}, rng::Stream(40));
  const TrendBand b =
      uniform_band(shifted, 0.15, 0.1, 60, BlockExponentialMultipliers{}, rng::Stream(40));
  // residuals X - mu_hat are shift-invariant up to the window mass, so
  // the bootstrap draws and q_hat agree; edges shift by the smoothed 5.
  REQUIRE_THAT(b.q_hat, Catch::Matchers::WithinAbs(a.q_hat, 1e-9));
  const auto smooth_shift = smoothed_mean(std::vector<double>(x.size(), 5.0), 0.15);
  for (std::size_t i = 0; i < x.size(); ++i)
    REQUIRE_THAT(b.lower[i] - a.lower[i],
                 Catch::Matchers::WithinAbs(smooth_shift[i], 1e-9));
}

TEST_CASE("run_test basics") {
  const FunctionClass cls = IdentityClass{};
  const WeightFamily fam = ConstantWeights{};
  const EvalGrid grid = make_grid(cls, {0.0});

  SECTION("zero data never rejects") {
    const std::vector<double> x(64, 0.0);
    const TestReport r = run_test(x, cls, fam, grid, 0.05, 100, BlockExponentialMultipliers{},
                                  ZeroMeanEstimator{}, rng::Stream(1));
    REQUIRE(r.statistic == 0.0);
    REQUIRE_FALSE(r.reject);
    REQUIRE(r.p_value > 0.0);
    REQUIRE(r.p_value <= 1.0);
  }
  SECTION("steep level shift is detected") {
    TrendPlusNoise tn;
    tn.mean = PathRule::polynomial({0.0, 2.0});
    tn.noise = ProcessSpec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0)});
    ProcessSpec spec{ProcessVariant(tn)};
    const auto sample = simulate_path(spec, 400, rng::Stream(3));
    const TestReport r = run_test(sample.values, cls, fam, grid, 0.05, 200,
                                  BlockExponentialMultipliers{}, ZeroMeanEstimator{},
                                  rng::Stream(4));
    REQUIRE(r.reject);
    REQUIRE(r.p_value <= 0.01);
  }
  SECTION("p-value recomputation from the stored draws is exact") {
    std::vector<double> x(128);
    rng::Stream s(5);
    for (double& v : x) v = s.next_normal();
    const TestReport r = run_test(x, cls, fam, grid, 0.1, 99, BlockExponentialMultipliers{},
                                  ZeroMeanEstimator{}, rng::Stream(6));
    REQUIRE(bootstrap_p_value(r.sup_norms, r.statistic) == r.p_value);
    REQUIRE(r.reject == (r.statistic > r.critical_value));
  }
  SECTION("steep raw-index trend is detected by first differences") {
    // mean 100 u = 0.1 per index at n = 1000: differences have a
    // non-vanishing mean, which is what the difference class needs.
    TrendPlusNoise tn;
    tn.mean = PathRule::polynomial({0.0, 100.0});
    tn.noise = ProcessSpec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0)});
    ProcessSpec spec{ProcessVariant(tn)};
    const auto sample = simulate_path(spec, 1000, rng::Stream(7));
    const FunctionClass diff = ForwardDifferences{1, 1};
    const EvalGrid dgrid = make_grid(diff, {0.0});
    const TestReport r = run_test(sample.values, diff, fam, dgrid, 0.05, 200,
                                  BlockExponentialMultipliers{}, ZeroMeanEstimator{},
                                  rng::Stream(8));
    REQUIRE(r.reject);
  }
}

TEST_CASE("threshold grid construction") {
  const auto t = threshold_grid(-1.0, 1.0, 0.5);
  REQUIRE(t == std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0});
  REQUIRE(threshold_grid(-5.0, 5.0, 0.05).size() == 201);
  REQUIRE_THROWS_AS(threshold_grid(1.0, -1.0, 0.5), ValidationError);
}

TEST_CASE("ks nonstationarity test") {
  SECTION("exactly periodic series gives a zero statistic") {
    std::vector<double> x;
    for (int i = 0; i < 240; ++i) x.push_back(std::sin(2.0 * 3.141592653589793 * (i % 12) / 12.0));
    const TestReport r = ks_nonstationarity_test(x, 12, threshold_grid(-2.0, 2.0, 0.25), 0.1,
                                                 0.05, 60, rng::Stream(3), 21);
    REQUIRE(r.statistic == 0.0);
    REQUIRE_FALSE(r.reject);
  }
  SECTION("lag must be smaller than the series") {
    std::vector<double> x(10, 0.0);
    REQUIRE_THROWS_AS(
        ks_nonstationarity_test(x, 10, {0.0}, 0.1, 0.05, 10, rng::Stream(1), 5),
        ValidationError);
  }
  SECTION("a strong distribution shift rejects") {
    // variance quadruples halfway through; lag comparisons straddle it
    std::vector<double> x;
    rng::Stream s(9);
    for (int i = 0; i < 600; ++i) x.push_back((i < 300 ? 1.0 : 3.0) * s.next_normal());
    const TestReport r = ks_nonstationarity_test(x, 150, threshold_grid(-4.0, 4.0, 0.2), 0.1,
                                                 0.05, 150, rng::Stream(10), 31, 4);
    REQUIRE(r.reject);
  }
}

TEST_CASE("run_test rejects invalid arguments") {
  const std::vector<double> x(16, 0.0);
  const FunctionClass cls = IdentityClass{};
  const WeightFamily fam = ConstantWeights{};
  const EvalGrid grid = make_grid(cls, {0.0});
  REQUIRE_THROWS_AS(run_test(x, cls, fam, grid, 0.0, 10, BlockExponentialMultipliers{},
                             ZeroMeanEstimator{}, rng::Stream(1)),
                    ValidationError);
  REQUIRE_THROWS_AS(run_test(x, cls, fam, grid, 0.05, 0, BlockExponentialMultipliers{},
                             ZeroMeanEstimator{}, rng::Stream(1)),
                    ValidationError);
}
