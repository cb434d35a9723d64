#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "nonstat/dgp.hpp"
#include "nonstat/matrix.hpp"
#include "nonstat/parallel.hpp"

using namespace nonstat;

namespace {

ProcessSpec iid_unit() {
  return ProcessSpec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0)});
}

ProcessSpec ar_half() {
  return ProcessSpec(
      TVAR1{PathRule::constant(0.5), PathRule::constant(1.0), PathRule::constant(0.0), 0.5});
}

double sample_mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_var(const std::vector<double>& x) {
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

double lag1_autocov(const std::vector<double>& x) {
  const double m = sample_mean(x);
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += (x[i] - m) * (x[i - 1] - m);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("degenerate sigma is rejected at construction") {
  ProcessSpec bad(IndepHetero{PathRule::constant(0.0), PathRule::constant(0.0)});
  REQUIRE_THROWS_AS(validate(bad, 16), ValidationError);
  ProcessSpec neg(IndepHetero{PathRule::constant(-1.0), PathRule::constant(0.0)});
  REQUIRE_THROWS_AS(simulate_path(neg, 8, rng::Stream(1)), ValidationError);
}

TEST_CASE("phi beyond the declared bound is rejected") {
  ProcessSpec bad(
      TVAR1{PathRule::constant(0.7), PathRule::constant(1.0), PathRule::constant(0.0), 0.5});
  REQUIRE_THROWS_AS(validate(bad, 16), ValidationError);
  ProcessSpec unit(
      TVAR1{PathRule::constant(1.0), PathRule::constant(1.0), PathRule::constant(0.0), 1.0});
  REQUIRE_THROWS_AS(validate(unit, 16), ValidationError);
}

TEST_CASE("TVAR1 with phi = 0 reproduces iid moments") {
  ProcessSpec spec(
      TVAR1{PathRule::constant(0.0), PathRule::constant(1.0), PathRule::constant(0.0), 0.0});
  const std::size_t n = 10000;
  const auto s = simulate_path(spec, n, rng::Stream(2024));
  REQUIRE(std::fabs(sample_mean(s.values)) < 4.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::fabs(sample_var(s.values) - 1.0) < 0.05);
}

TEST_CASE("MA(0) with unit coefficient behaves like iid noise") {
  MDependentMA ma;
  ma.m = 0;
  ma.coeffs = {PathRule::constant(1.0)};
  ProcessSpec spec{ProcessVariant(ma)};
  const std::size_t n = 10000;
  const auto s = simulate_path(spec, n, rng::Stream(7));
  REQUIRE(std::fabs(lag1_autocov(s.values)) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("mean_path evaluates closed forms") {
  SECTION("linear trend") {
    TrendPlusNoise tn;
    tn.mean = PathRule::polynomial({0.0, 1.0});
    tn.noise = iid_unit();
    const auto mu = mean_path(ProcessSpec{ProcessVariant(tn)}, 4);
    REQUIRE(mu == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  }
  SECTION("regime variance is centered") {
    ProcessSpec spec(RegimeVariance{1.0, 4.0, {RegimePattern::Rule::OscillatingDyadic, 0.0}});
    const auto mu = mean_path(spec, 8);
    for (double v : mu) REQUIRE(v == 0.0);
  }
  SECTION("AR recursion preserves a constant mean") {
    ProcessSpec spec(TVAR1{PathRule::constant(0.3), PathRule::constant(1.0),
                           PathRule::constant(2.5), 0.3});
    const auto mu = mean_path(spec, 6);
    for (double v : mu) REQUIRE(v == 2.5);
    const auto s = simulate_path(spec, 4000, rng::Stream(3));
    REQUIRE(std::fabs(sample_mean(s.values) - 2.5) < 0.2);
  }
}

TEST_CASE("covariance oracle: independent variants are diagonal") {
  ProcessSpec spec(IndepHetero{PathRule::polynomial({0.5, 1.0}), PathRule::constant(0.0)});
  REQUIRE(covariance(spec, 10, 2, 5) == 0.0);
  const double sd2 = 0.5 + 2.0 / 10.0;
  REQUIRE_THAT(covariance(spec, 10, 2, 2), Catch::Matchers::WithinAbs(sd2 * sd2, 1e-15));
}

TEST_CASE("TVAR1 stationary sub-case matches the MA(infinity) oracle") {
  // Brute-force oracle: X_i = sum_k phi^k eps_{i-k}; truncate far beyond
  // double precision.
  const double phi = 0.5;
  double var = 0.0;
  for (int k = 0; k < 200; ++k) var += std::pow(phi, 2 * k);
  double cov2 = phi * phi * var;
  const auto spec = ar_half();
  REQUIRE_THAT(covariance(spec, 100, 50, 52), Catch::Matchers::WithinAbs(cov2, 1e-12));
  REQUIRE_THAT(covariance(spec, 100, 50, 52), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
  // The exact-marginal start makes this hold from index 1 on.
  REQUIRE_THAT(covariance(spec, 100, 1, 3), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("m-dependent MA covariance by direct convolution") {
  MDependentMA ma;
  ma.m = 1;
  ma.coeffs = {PathRule::constant(1.0), PathRule::constant(1.0)};
  ProcessSpec spec{ProcessVariant(ma)};
  REQUIRE(covariance(spec, 50, 10, 11) == 1.0);
  REQUIRE(covariance(spec, 50, 10, 12) == 0.0);
  REQUIRE(covariance(spec, 50, 10, 10) == 2.0);
}

TEST_CASE("scaled average variance") {
  SECTION("regime example evaluates to 3.1 at an exact fraction") {
    ProcessSpec spec(RegimeVariance{1.0, 4.0, {RegimePattern::Rule::FixedFraction, 0.3}});
    REQUIRE_THAT(scaled_average_variance(spec, 100), Catch::Matchers::WithinAbs(3.1, 1e-14));
    // Independent summation over the regime pattern.
    double direct = 0.0;
    for (std::size_t i = 1; i <= 100; ++i) direct += (i <= 30 ? 1.0 : 4.0);
    REQUIRE_THAT(scaled_average_variance(spec, 100),
                 Catch::Matchers::WithinAbs(direct / 100.0, 1e-14));
  }
  SECTION("unit iid variance is 1 for every n") {
    for (std::size_t n : {1, 7, 64, 501})
      REQUIRE_THAT(scaled_average_variance(iid_unit(), n),
                   Catch::Matchers::WithinAbs(1.0, 1e-14));
  }
  SECTION("zero weights give zero") {
    const std::vector<double> w(32, 0.0);
    REQUIRE(scaled_average_variance(ar_half(), 32, &w) == 0.0);
  }
  SECTION("agrees with the covariance-matrix quadratic form") {
    ProcessSpec spec(TVAR1{PathRule::sinusoid(0.3, 1.0), PathRule::polynomial({0.8, 0.4}),
                           PathRule::constant(0.0), 0.35});
    const std::size_t n = 64;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.2 + 0.01 * static_cast<double>(i % 7);
    const Matrix c = covariance_matrix(spec, n);
    double direct = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) direct += w[i] * w[j] * c(i, j);
    direct /= static_cast<double>(n);
    REQUIRE_THAT(scaled_average_variance(spec, n, &w),
                 Catch::Matchers::WithinAbs(direct, 1e-12));
  }
}

TEST_CASE("beta mixing bounds") {
  REQUIRE(beta_mixing_bound(iid_unit(), 1) == 0.0);
  MDependentMA ma;
  ma.m = 3;
  ma.coeffs = std::vector<PathRule>(4, PathRule::constant(0.5));
  REQUIRE(beta_mixing_bound(ProcessSpec{ProcessVariant(ma)}, 4) == 0.0);
  REQUIRE(beta_mixing_bound(ProcessSpec{ProcessVariant(ma)}, 3) == 1.0);

  const auto spec = ar_half();
  const double c = 1.0 / (1.0 - 0.5);
  REQUIRE(beta_mixing_bound(spec, 20) <= c * std::pow(0.5, 20) + 1e-18);
  // Polynomial-decay certificate: lag^7 * bound -> 0 (monotone tail).
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t lag = 40; lag <= 200; lag += 20) {
    const double v = std::pow(static_cast<double>(lag), 7.0) * beta_mixing_bound(spec, lag);
    REQUIRE(v < prev);
    prev = v;
  }
  REQUIRE(prev < 1e-12);
}

TEST_CASE("covariance matrices are symmetric positive semidefinite") {
  std::vector<ProcessSpec> specs;
  specs.push_back(iid_unit());
  specs.push_back(ProcessSpec(
      RegimeVariance{1.0, 4.0, {RegimePattern::Rule::OscillatingDyadic, 0.0}}));
  specs.push_back(ProcessSpec(TVAR1{PathRule::sinusoid(0.4, 2.0), PathRule::polynomial({1.0, 0.5}),
                                    PathRule::constant(0.0), 0.45}));
  MDependentMA ma;
  ma.m = 2;
  ma.coeffs = {PathRule::constant(1.0), PathRule::sinusoid(0.5, 1.0),
               PathRule::polynomial({0.2, -0.4})};
  specs.push_back(ProcessSpec{ProcessVariant(ma)});
  TrendPlusNoise tn;
  tn.mean = PathRule::sinusoid(2.0, 3.0);
  tn.noise = ar_half();
  specs.push_back(ProcessSpec{ProcessVariant(tn)});

  for (const auto& spec : specs) {
    const std::size_t n = 512;
    const Matrix c = covariance_matrix(spec, n);
    REQUIRE(max_abs_asymmetry(c) == 0.0);
    REQUIRE(min_ldlt_pivot(c) >= -1e-8);
  }
}

TEST_CASE("Monte Carlo covariance of selected coordinates matches the oracle") {
  MDependentMA ma;
  ma.m = 2;
  ma.coeffs = {PathRule::constant(1.0), PathRule::polynomial({0.5, 0.5}),
               PathRule::constant(-0.3)};
  ma.mean = PathRule::sinusoid(1.0, 1.0);
  ProcessSpec spec{ProcessVariant(ma)};
  const std::size_t n = 256;
  const std::size_t m = 20000;
  const std::size_t idx[3] = {2, 17, 200};

  std::vector<std::array<double, 3>> draws(m);
  const rng::Stream root(515);
  parallel_for(0, m, 4, [&](std::size_t k) {
    const auto s = simulate_path(spec, n, root.child(k));
    draws[k] = {s.values[idx[0] - 1], s.values[idx[1] - 1], s.values[idx[2] - 1]};
  });

  double mean[3] = {0, 0, 0};
  for (const auto& d : draws)
    for (int a = 0; a < 3; ++a) mean[a] += d[a];
  for (double& v : mean) v /= static_cast<double>(m);

  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      double cov = 0.0, second = 0.0;
      for (const auto& d : draws) {
        const double pa = d[a] - mean[a], pb = d[b] - mean[b];
        cov += pa * pb;
        second += pa * pa * pb * pb;
      }
      cov /= static_cast<double>(m - 1);
      second /= static_cast<double>(m);
      const double se = std::sqrt((second - cov * cov) / static_cast<double>(m));
      const double oracle = covariance(spec, n, idx[a], idx[b]);
      INFO("entry (" << a << "," << b << ") cov=" << cov << " oracle=" << oracle);
      REQUIRE(std::fabs(cov - oracle) <= 5.0 * se);
    }
  }
}

TEST_CASE("identical (spec, n, seed) reproduces the sample bit for bit") {
  TrendPlusNoise tn;
  tn.mean = PathRule::step(0.5, 0.0, 1.0);
  tn.noise = ar_half();
  ProcessSpec spec{ProcessVariant(tn)};
  const auto a = simulate_path(spec, 300, rng::Stream(99).child(4));
  const auto b = simulate_path(spec, 300, rng::Stream(99).child(4));
  REQUIRE(a.values == b.values);
  const auto c = simulate_path(spec, 300, rng::Stream(99).child(5));
  REQUIRE(a.values != c.values);
}

TEST_CASE("centered exponential innovations have matching first two moments") {
  ProcessSpec spec(IndepHetero{PathRule::constant(2.0), PathRule::constant(1.0),
                               Innovation::CenteredExponential});
  const std::size_t n = 200000;
  const auto s = simulate_path(spec, n, rng::Stream(31));
  REQUIRE(std::fabs(sample_mean(s.values) - 1.0) < 0.03);
  REQUIRE(std::fabs(sample_var(s.values) - 4.0) < 0.15);
  REQUIRE_FALSE(is_gaussian(spec));
}

TEST_CASE("oscillating dyadic regime fractions keep moving") {
  RegimePattern p{RegimePattern::Rule::OscillatingDyadic, 0.0};
  // fraction of regime-1 indices up to n for n = 2^k alternates.
  auto frac = [&](std::size_t n) {
    std::size_t c = 0;
    for (std::size_t i = 1; i <= n; ++i)
      if (p.regime(i, n) == 1) ++c;
    return static_cast<double>(c) / static_cast<double>(n);
  };
  const double f1 = frac(1 << 6);
  const double f2 = frac(1 << 7);
  REQUIRE(std::fabs(f1 - f2) > 0.2);  // non-convergent by construction
}
