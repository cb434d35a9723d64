#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "nonstat/gaussian.hpp"
#include "nonstat/parallel.hpp"

using namespace nonstat;

namespace {

ProcessSpec iid_unit() {
  return ProcessSpec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0)});
}

CovarianceModel identity_model(std::size_t d) {
  CovarianceModel m;
  std::vector<double> s(d);
  for (std::size_t j = 0; j < d; ++j) s[j] = static_cast<double>(j) / static_cast<double>(d);
  m.grid = make_grid(IdentityClass{}, s);
  m.matrix = Matrix(d, d, 0.0);
  for (std::size_t j = 0; j < d; ++j) m.matrix(j, j) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("corresponding covariance: closed-form cells") {
  SECTION("unit iid with constant weights and identity class") {
    const EvalGrid grid = make_grid(IdentityClass{}, {0.0});
    for (std::size_t n : {5, 64, 321}) {
      const auto model =
          corresponding_covariance(iid_unit(), IdentityClass{}, ConstantWeights{}, grid, n);
      REQUIRE(model.dim() == 1);
      REQUIRE_THAT(model.matrix(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-14));
    }
  }
  SECTION("two-regime variance cell matches the scaled-average-variance oracle") {
    ProcessSpec spec(RegimeVariance{1.0, 4.0, {RegimePattern::Rule::FixedFraction, 0.3}});
    const EvalGrid grid = make_grid(IdentityClass{}, {0.0});
    const auto model =
        corresponding_covariance(spec, IdentityClass{}, ConstantWeights{}, grid, 100);
    REQUIRE_THAT(model.matrix(0, 0), Catch::Matchers::WithinAbs(3.1, 1e-14));
    REQUIRE_THAT(model.matrix(0, 0),
                 Catch::Matchers::WithinAbs(scaled_average_variance(spec, 100), 1e-14));
  }
  SECTION("sequential indicator overlap") {
    const EvalGrid grid = make_grid(IdentityClass{}, {0.5, 1.0});
    const std::size_t n = 101;
    const auto model =
        corresponding_covariance(iid_unit(), IdentityClass{}, SequentialIndicator{}, grid, n);
    const double expect = std::floor(0.5 * n) / static_cast<double>(n);
    REQUIRE_THAT(model.matrix(0, 1), Catch::Matchers::WithinAbs(expect, 1e-14));
    REQUIRE_THAT(model.matrix(0, 0), Catch::Matchers::WithinAbs(expect, 1e-14));
    REQUIRE_THAT(model.matrix(1, 1), Catch::Matchers::WithinAbs(1.0, 1e-14));
  }
}

TEST_CASE("gaussian product moments agree with closed forms") {
  // Cov[X^2, Y^2] = 2 c^2 + 4 mx my c for jointly normal X, Y.
  ProcessSpec spec(TVAR1{PathRule::constant(0.5), PathRule::constant(1.0),
                         PathRule::constant(0.7), 0.5});
  const std::size_t n = 64;
  const ClassCovOracle cc(spec, n, Monomials{{1, 2}});
  const CovOracle cov(spec, n);
  const std::size_t i = 10, j = 12;
  const double c = cov(i, j);
  const double expect_sq = 2.0 * c * c + 4.0 * 0.7 * 0.7 * c;
  REQUIRE_THAT(cc(i, 1, j, 1), Catch::Matchers::WithinAbs(expect_sq, 1e-12));
  REQUIRE_THAT(cc(i, 0, j, 0), Catch::Matchers::WithinAbs(c, 1e-12));
  // Cov[X, Y^2] = 2 my c for jointly normal pairs.
  REQUIRE_THAT(cc(i, 0, j, 1), Catch::Matchers::WithinAbs(2.0 * 0.7 * c, 1e-12));

  // E[X^4] through the mean oracle: mu^4 + 6 mu^2 var + 3 var^2.
  const Matrix means = class_mean_matrix(spec, n, Monomials{{4}});
  const double var = cov(i, i);
  const double expect4 =
      std::pow(0.7, 4) + 6.0 * 0.7 * 0.7 * var + 3.0 * var * var;
  REQUIRE_THAT(means(i - 1, 0), Catch::Matchers::WithinAbs(expect4, 1e-12));
}

TEST_CASE("indicator class mean and covariance oracles") {
  ProcessSpec spec(IndepHetero{PathRule::constant(2.0), PathRule::constant(1.0)});
  const std::size_t n = 32;
  const FunctionClass cls = IndicatorGrid{{0.0, 1.0}};
  const Matrix means = class_mean_matrix(spec, n, cls);
  REQUIRE_THAT(means(4, 0), Catch::Matchers::WithinAbs(norm_cdf(-0.5), 1e-14));
  REQUIRE_THAT(means(4, 1), Catch::Matchers::WithinAbs(0.5, 1e-14));

  const ClassCovOracle cc(spec, n, cls);
  // same index: Phi(min) - Phi(h)Phi(k)
  const double h = -0.5, k = 0.0;
  REQUIRE_THAT(cc(5, 0, 5, 1),
               Catch::Matchers::WithinAbs(norm_cdf(h) - norm_cdf(h) * norm_cdf(k), 1e-14));
  // distinct independent indices: zero
  REQUIRE(cc(5, 0, 6, 1) == 0.0);
}

TEST_CASE("capability error for non-Gaussian indicator cells") {
  ProcessSpec spec(IndepHetero{PathRule::constant(1.0), PathRule::constant(0.0),
                               Innovation::CenteredExponential});
  REQUIRE_THROWS_AS(class_mean_matrix(spec, 16, IndicatorGrid{{0.0}}), CapabilityError);
  REQUIRE_THROWS_AS(
      corresponding_covariance(spec, Monomials{{2}}, ConstantWeights{},
                               make_grid(Monomials{{2}}, {0.0}), 16),
      CapabilityError);
  // linear classes stay available
  REQUIRE_NOTHROW(class_mean_matrix(spec, 16, IdentityClass{}));
}

TEST_CASE("sample_gp draws have the right marginals") {
  const auto model = identity_model(3);
  const GpSampler sampler(model);
  REQUIRE(sampler.jitter() == 0.0);
  const rng::Stream root(21);
  const std::size_t m = 100000;
  std::vector<double> acc(3, 0.0), acc2(3, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    rng::Stream s = root.child(k);
    const Surface draw = sampler.sample(s);
    for (int a = 0; a < 3; ++a) {
      acc[a] += draw.values.data()[a];
      acc2[a] += draw.values.data()[a] * draw.values.data()[a];
    }
  }
  for (int a = 0; a < 3; ++a) {
    REQUIRE(std::fabs(acc[a] / m) < 0.02);
    REQUIRE(std::fabs(acc2[a] / m - 1.0) < 0.02);
  }
}

TEST_CASE("sample_gp degenerate models") {
  SECTION("zero matrix gives the zero surface") {
    CovarianceModel m = identity_model(4);
    m.matrix = Matrix(4, 4, 0.0);
    rng::Stream s(3);
    const Surface draw = sample_gp(m, s);
    for (double v : draw.values.data()) REQUIRE(v == 0.0);
  }
  SECTION("rank-1 model draws stay exactly proportional") {
    const std::vector<double> v = {1.0, 2.0, -2.0, 0.5};
    CovarianceModel m = identity_model(4);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) m.matrix(r, c) = v[r] * v[c];
    const GpSampler sampler(m);
    const rng::Stream root(9);
    for (int rep = 0; rep < 100; ++rep) {
      rng::Stream s = root.child(rep);
      const Surface draw = sampler.sample(s);
      const double ratio = draw.values.data()[0] / v[0];
      for (std::size_t a = 1; a < 4; ++a)
        REQUIRE_THAT(draw.values.data()[a] / v[a],
                     Catch::Matchers::WithinAbs(ratio, 1e-6 * (1.0 + std::fabs(ratio))));
    }
  }
  SECTION("indefinite model fails after max jitter") {
    CovarianceModel m = identity_model(2);
    m.matrix(0, 1) = m.matrix(1, 0) = 2.0;  // eigenvalues 3 and -1
    REQUIRE_THROWS_AS(GpSampler(m), NumericError);
  }
}

TEST_CASE("empirical covariance basics") {
  const EvalGrid grid = make_grid(IdentityClass{}, {0.0, 1.0});
  Surface a;
  a.grid = grid;
  a.values = Matrix(2, 1);
  a.values(0, 0) = 1.0;
  a.values(1, 0) = -2.0;

  SECTION("identical replicates give the zero matrix") {
    const auto model = empirical_covariance({a, a, a});
    for (double v : model.matrix.data()) REQUIRE(v == 0.0);
    REQUIRE(model.source == CovarianceModel::Source::MonteCarloEstimate);
    REQUIRE(model.mc_replicates == 3);
  }
  SECTION("two-point +v / -v sample has covariance 2 v v^T") {
    Surface b = a;
    for (double& v : b.values.data()) v = -v;
    const auto model = empirical_covariance({a, b});
    REQUIRE_THAT(model.matrix(0, 0), Catch::Matchers::WithinAbs(2.0, 1e-14));
    REQUIRE_THAT(model.matrix(0, 1), Catch::Matchers::WithinAbs(-4.0, 1e-14));
    REQUIRE_THAT(model.matrix(1, 1), Catch::Matchers::WithinAbs(8.0, 1e-14));
  }
  SECTION("grid mismatch is rejected") {
    Surface c;
    c.grid = make_grid(IdentityClass{}, {0.0});
    c.values = Matrix(1, 1, 0.0);
    REQUIRE_THROWS_AS(empirical_covariance({a, c}), ValidationError);
  }
}

TEST_CASE("empirical covariance of sampler draws converges to the model") {
  CovarianceModel m = identity_model(2);
  m.matrix(0, 0) = 2.0;
  m.matrix(1, 1) = 0.5;
  m.matrix(0, 1) = m.matrix(1, 0) = -0.6;
  const GpSampler sampler(m);
  const rng::Stream root(33);
  const std::size_t reps = 100000;
  std::vector<Surface> draws(reps);
  parallel_for(0, reps, 4, [&](std::size_t k) {
    rng::Stream s = root.child(k);
    draws[k] = sampler.sample(s);
  });
  const auto est = empirical_covariance(draws);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      const double se = std::sqrt((m.matrix(r, r) * m.matrix(c, c) +
                                   m.matrix(r, c) * m.matrix(r, c)) /
                                  static_cast<double>(reps));
      REQUIRE(std::fabs(est.matrix(r, c) - m.matrix(r, c)) <= 5.0 * se);
    }
}

TEST_CASE("covariance matching: empirical process vs matched Gaussian model") {
  // One supported cell at n = 128 with M = 20000 replicates; the
  // acceptance suite covers the full designated matrix at n = 512.
  ProcessSpec spec(IndepHetero{PathRule::polynomial({0.5, 1.0}), PathRule::sinusoid(1.0, 2.0)});
  const FunctionClass cls = IdentityClass{};
  const WeightFamily fam = SequentialIndicator{};
  const EvalGrid grid = make_grid(cls, {0.25, 0.5, 0.75, 1.0});
  const std::size_t n = 128;
  const std::size_t m = 20000;
  const auto model = corresponding_covariance(spec, cls, fam, grid, n);
  const CenteringSpec centering = exact_centering(spec, n, cls);

  std::vector<Surface> draws(m);
  const rng::Stream root(77);
  parallel_for(0, m, 4, [&](std::size_t k) {
    const auto sample = simulate_path(spec, n, root.child(k));
    draws[k] = empirical_surface(sample.values, cls, fam, grid, centering);
  });
  const auto est = empirical_covariance(draws);
  for (std::size_t r = 0; r < model.dim(); ++r)
    for (std::size_t c = 0; c < model.dim(); ++c) {
      const double se = std::sqrt((model.matrix(r, r) * model.matrix(c, c) +
                                   model.matrix(r, c) * model.matrix(r, c)) /
                                  static_cast<double>(m));
      INFO("entry (" << r << "," << c << ")");
      REQUIRE(std::fabs(est.matrix(r, c) - model.matrix(r, c)) <= 5.0 * se);
    }
}

TEST_CASE("sampler output passes a Mardia skewness sanity check") {
  const auto model = identity_model(3);
  const GpSampler sampler(model);
  const rng::Stream root(55);
  const std::size_t m = 10000;
  std::vector<std::array<double, 3>> w(m);
  std::array<double, 3> mean{};
  for (std::size_t k = 0; k < m; ++k) {
    rng::Stream s = root.child(k);
    const Surface draw = sampler.sample(s);
    for (int a = 0; a < 3; ++a) {
      w[k][a] = draw.values.data()[a];
      mean[a] += draw.values.data()[a];
    }
  }
  for (double& v : mean) v /= static_cast<double>(m);

  Matrix cov(3, 3, 0.0);
  for (const auto& row : w)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov(a, b) += (row[a] - mean[a]) * (row[b] - mean[b]);
  for (double& v : cov.data()) v /= static_cast<double>(m);
  const auto chol = cholesky_semidefinite(cov, 1e-12);
  REQUIRE(chol.has_value());

  // Whiten, then Mardia's b1 = sum of squared third-moment tensor entries.
  for (auto& row : w) {
    std::array<double, 3> c{row[0] - mean[0], row[1] - mean[1], row[2] - mean[2]};
    std::array<double, 3> y{};
    for (int a = 0; a < 3; ++a) {
      double s = c[a];
      for (int b = 0; b < a; ++b) s -= (*chol)(a, b) * y[b];
      y[a] = s / (*chol)(a, a);
    }
    row = y;
  }
  double b1 = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        double t = 0.0;
        for (const auto& row : w) t += row[a] * row[b] * row[c];
        t /= static_cast<double>(m);
        b1 += t * t;
      }
  const double statistic = static_cast<double>(m) * b1 / 6.0;
  // chi-square(10) 0.999 quantile
  REQUIRE(statistic < 29.588);
}

TEST_CASE("corresponding covariance commutes with grid reordering") {
  ProcessSpec spec(TVAR1{PathRule::constant(0.4), PathRule::constant(1.0),
                         PathRule::constant(0.0), 0.4});
  const FunctionClass cls = IdentityClass{};
  const WeightFamily fam = SequentialIndicator{};
  const std::size_t n = 50;
  const auto a = corresponding_covariance(spec, cls, fam, make_grid(cls, {0.3, 0.6, 1.0}), n);
  const auto b = corresponding_covariance(spec, cls, fam, make_grid(cls, {0.6, 1.0}), n);
  // the {0.6, 1.0} block of the larger model equals the smaller model
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      REQUIRE_THAT(a.matrix(r + 1, c + 1), Catch::Matchers::WithinAbs(b.matrix(r, c), 1e-13));
}

TEST_CASE("model validation rejects malformed input") {
  CovarianceModel m = identity_model(2);
  m.matrix(0, 1) = 0.5;  // asymmetric
  REQUIRE_THROWS_AS(validate(m), ValidationError);
  m.matrix(0, 1) = m.matrix(1, 0) = 0.0;
  m.matrix(1, 1) = -1.0;
  REQUIRE_THROWS_AS(validate(m), ValidationError);
}
