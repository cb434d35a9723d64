#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "nonstat/normal.hpp"
#include "nonstat/rng.hpp"

using nonstat::rng::Stream;

TEST_CASE("identical seed and stream reproduce draws bit for bit") {
  Stream a(42);
  Stream b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Stream c(42);
  Stream d(43);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("child streams are stable and order-independent") {
  const Stream root(7);
  Stream a = root.child(3);
  Stream b = root.child(3);
  REQUIRE(a.next_u64() == b.next_u64());

  // Distinct children differ.
  Stream c = root.child(4);
  REQUIRE(root.child(3).next_u64() != c.next_u64());

  // Consuming the parent does not perturb children (parent is const
  // anyway; guard the key-derivation contract).
  Stream parent(7);
  parent.next_u64();
  REQUIRE(parent.child(3).key() == root.child(3).key());
}

TEST_CASE("uniform draws lie strictly inside (0,1) with correct mean") {
  Stream s(1);
  double sum = 0.0;
  const int m = 200000;
  for (int i = 0; i < m; ++i) {
    const double u = s.next_uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  REQUIRE(std::fabs(sum / m - 0.5) < 4.0 / std::sqrt(12.0 * m));
}

TEST_CASE("normal quantile matches frozen reference values") {
  REQUIRE(nonstat::norm_quantile(0.5) == 0.0);
  // Reference values from the standard normal distribution.
  REQUIRE_THAT(nonstat::norm_quantile(0.975),
               Catch::Matchers::WithinAbs(1.959963984540054, 1e-12));
  REQUIRE_THAT(nonstat::norm_quantile(0.025),
               Catch::Matchers::WithinAbs(-1.959963984540054, 1e-12));
  REQUIRE_THAT(nonstat::norm_quantile(0.99), Catch::Matchers::WithinAbs(2.326347874040841, 1e-12));
  REQUIRE_THAT(nonstat::norm_quantile(1e-10), Catch::Matchers::WithinAbs(-6.361340902404056, 1e-8));
}

TEST_CASE("quantile and cdf are mutual inverses") {
  for (double x = -6.0; x <= 6.0; x += 0.25) {
    const double p = nonstat::norm_cdf(x);
    REQUIRE_THAT(nonstat::norm_quantile(p), Catch::Matchers::WithinAbs(x, 1e-9));
  }
}

TEST_CASE("normal and exponential draws have the right moments") {
  Stream s(99);
  const int m = 200000;
  double nsum = 0.0, nsq = 0.0, esum = 0.0, esq = 0.0;
  for (int i = 0; i < m; ++i) {
    const double z = s.next_normal();
    nsum += z;
    nsq += z * z;
    const double e = s.next_exponential();
    esum += e;
    esq += e * e;
  }
  const double se = 4.0 / std::sqrt(static_cast<double>(m));
  REQUIRE(std::fabs(nsum / m) < se);
  REQUIRE(std::fabs(nsq / m - 1.0) < 2.0 * se);
  REQUIRE(std::fabs(esum / m - 1.0) < se);
  REQUIRE(std::fabs(esq / m - 2.0) < 8.0 * se);
}
