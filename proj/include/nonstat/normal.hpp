#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace nonstat {

inline double norm_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

/// Inverse standard normal CDF, Wichura's algorithm AS 241 (PPND16).
/// Relative accuracy about 1e-16 over p in (0, 1).
inline double norm_quantile(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return (q < 0.0) ? -value : value;
}

/// 64-point Gauss-Legendre rule on [-1, 1], stored as the 32 positive
/// (node, weight) pairs; the rule is symmetric.
inline constexpr std::array<std::array<double, 2>, 32> kGaussLegendre64 = {{
    {2.43502926634244291e-02, 4.86909570091397514e-02},
    {7.29931217877990424e-02, 4.85754674415034560e-02},
    {1.21462819296120558e-01, 4.83447622348029543e-02},
    {1.69644420423992803e-01, 4.79993885964583172e-02},
    {2.17423643740007083e-01, 4.75401657148303014e-02},
    {2.64687162208767424e-01, 4.69681828162099996e-02},
    {3.11322871990210970e-01, 4.62847965813143747e-02},
    {3.57220158337668126e-01, 4.54916279274181143e-02},
    {4.02270157963991626e-01, 4.45905581637565454e-02},
    {4.46366017253464087e-01, 4.35837245293234643e-02},
    {4.89403145707052956e-01, 4.24735151236535977e-02},
    {5.31279464019894565e-01, 4.12625632426234859e-02},
    {5.71895646202634000e-01, 3.99537411327203495e-02},
    {6.11155355172393278e-01, 3.85501531786155913e-02},
    {6.48965471254657311e-01, 3.70551285402401509e-02},
    {6.85236313054233270e-01, 3.54722132568823234e-02},
    {7.19881850171610771e-01, 3.38051618371417867e-02},
    {7.52819907260531940e-01, 3.20579283548514532e-02},
    {7.83972358943341385e-01, 3.02346570724024953e-02},
    {8.13265315122797539e-01, 2.83396726142597019e-02},
    {8.40629296252580316e-01, 2.63774697150546272e-02},
    {8.65999398154092770e-01, 2.43527025687108531e-02},
    {8.89315445995114140e-01, 2.22701738083830071e-02},
    {9.10522137078502825e-01, 2.01348231535300945e-02},
    {9.29569172131939570e-01, 1.79517157756973016e-02},
    {9.46411374858402765e-01, 1.57260304760250824e-02},
    {9.61008799652053769e-01, 1.34630478967182315e-02},
    {9.73326827789910975e-01, 1.11681394601314665e-02},
    {9.83336253884625977e-01, 8.84675982636439102e-03},
    {9.91013371476744287e-01, 6.50445796897965427e-03},
    {9.96340116771955220e-01, 4.14703326056292329e-03},
    {9.99305041735772170e-01, 1.78328072169421517e-03},
}};

/// Integrate f over [a, b] with the 64-point Gauss-Legendre rule.
template <typename F>
double gauss_legendre_64(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  for (const auto& [node, weight] : kGaussLegendre64) {
    sum += weight * (f(mid + half * node) + f(mid - half * node));
  }
  return half * sum;
}

/// Cov[1{X < h}, 1{Y < k}] for (X, Y) standard bivariate normal with
/// correlation rho, |rho| < 1. Uses the correlation-integral form
///   Phi2(h, k; rho) - Phi(h) Phi(k)
///     = (1/2pi) int_0^{asin rho} exp(-(h^2 + k^2 - 2 h k sin t) / (2 cos^2 t)) dt
/// (Sheppard's arcsine substitution keeps the integrand smooth up to
/// |rho| -> 1), evaluated with the 64-point Gauss-Legendre rule.
/// Absolute error is far below the documented 1e-8 tolerance.
inline double bvn_indicator_cov(double h, double k, double rho) {
  if (rho == 0.0) return 0.0;
  const double upper = std::asin(rho);
  auto integrand = [h, k](double t) {
    const double c = std::cos(t);
    return std::exp(-(h * h + k * k - 2.0 * h * k * std::sin(t)) / (2.0 * c * c));
  };
  return gauss_legendre_64(integrand, 0.0, upper) / (2.0 * std::numbers::pi);
}

}  // namespace nonstat
