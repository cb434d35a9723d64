#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "nonstat/core.hpp"
#include "nonstat/rng.hpp"

namespace nonstat {

/// Deterministic scalar path over indices 1..n, evaluated at the
/// normalized position u = i/n. Closed-form rules keep every moment
/// oracle exact and make specs serializable.
class PathRule {
 public:
  enum class Kind { Constant, Polynomial, Sinusoid, Step, Explicit };

  static PathRule constant(double value) {
    PathRule p;
    p.kind_ = Kind::Constant;
    p.constant_ = value;
    return p;
  }
  /// coeffs[k] multiplies u^k.
  static PathRule polynomial(std::vector<double> coeffs) {
    PathRule p;
    p.kind_ = Kind::Polynomial;
    p.coeffs_ = std::move(coeffs);
    return p;
  }
  /// offset + amplitude * sin(2 pi cycles u + phase).
  static PathRule sinusoid(double amplitude, double cycles, double phase = 0.0,
                           double offset = 0.0) {
    PathRule p;
    p.kind_ = Kind::Sinusoid;
    p.amplitude_ = amplitude;
    p.cycles_ = cycles;
    p.phase_ = phase;
    p.offset_ = offset;
    return p;
  }
  /// before for u < at, after for u >= at.
  static PathRule step(double at, double before, double after) {
    PathRule p;
    p.kind_ = Kind::Step;
    p.step_at_ = at;
    p.before_ = before;
    p.after_ = after;
    return p;
  }
  static PathRule explicit_values(std::vector<double> values) {
    PathRule p;
    p.kind_ = Kind::Explicit;
    p.values_ = std::move(values);
    return p;
  }

  Kind kind() const { return kind_; }

  /// Value at index i (1-based) for sample size n.
  double operator()(std::size_t i, std::size_t n) const {
    const double u = static_cast<double>(i) / static_cast<double>(n);
    switch (kind_) {
      case Kind::Constant:
        return constant_;
      case Kind::Polynomial: {
        double v = 0.0;
        for (std::size_t k = coeffs_.size(); k-- > 0;) v = v * u + coeffs_[k];
        return v;
      }
      case Kind::Sinusoid:
        return offset_ + amplitude_ * std::sin(2.0 * std::numbers::pi * cycles_ * u + phase_);
      case Kind::Step:
        return u < step_at_ ? before_ : after_;
      case Kind::Explicit:
        if (i < 1 || i > values_.size())
          throw ValidationError("explicit path: index out of range");
        return values_[i - 1];
    }
    return 0.0;
  }

  bool is_zero() const {
    switch (kind_) {
      case Kind::Constant:
        return constant_ == 0.0;
      case Kind::Polynomial:
        return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c == 0.0; });
      case Kind::Sinusoid:
        return amplitude_ == 0.0 && offset_ == 0.0;
      case Kind::Step:
        return before_ == 0.0 && after_ == 0.0;
      case Kind::Explicit:
        return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
    }
    return false;
  }

  // Accessors used by serialization.
  double constant_value() const { return constant_; }
  const std::vector<double>& coefficients() const { return coeffs_; }
  double amplitude() const { return amplitude_; }
  double cycles() const { return cycles_; }
  double phase() const { return phase_; }
  double offset() const { return offset_; }
  double step_at() const { return step_at_; }
  double step_before() const { return before_; }
  double step_after() const { return after_; }
  const std::vector<double>& explicit_data() const { return values_; }

 private:
  Kind kind_ = Kind::Constant;
  double constant_ = 0.0;
  std::vector<double> coeffs_;
  double amplitude_ = 0.0, cycles_ = 0.0, phase_ = 0.0, offset_ = 0.0;
  double step_at_ = 0.5, before_ = 0.0, after_ = 0.0;
  std::vector<double> values_;
};

enum class Innovation { Gaussian, CenteredExponential };

/// Deterministic regime assignment for the two-variance process.
struct RegimePattern {
  enum class Rule { FixedFraction, OscillatingDyadic };
  Rule rule = Rule::FixedFraction;
  double fraction = 0.5;  // FixedFraction: regime 1 iff i <= floor(fraction * n)

  /// 1-based index -> regime (1 or 2). The dyadic rule flips regime on
  /// index blocks [2^k, 2^{k+1}), so the regime-1 fraction N_1/n keeps
  /// oscillating and never converges as n grows.
  int regime(std::size_t i, std::size_t n) const {
    if (rule == Rule::FixedFraction) {
      const auto n1 = static_cast<std::size_t>(fraction * static_cast<double>(n));
      return i <= n1 ? 1 : 2;
    }
    std::size_t block = 0;
    for (std::size_t v = i; v > 1; v >>= 1) ++block;  // floor(log2 i)
    return (block % 2 == 0) ? 1 : 2;
  }
};

struct IndepHetero {
  PathRule sigma = PathRule::constant(1.0);
  PathRule mean = PathRule::constant(0.0);
  Innovation innovation = Innovation::Gaussian;
};

struct RegimeVariance {
  double sigma1_sq = 1.0;
  double sigma2_sq = 1.0;
  RegimePattern pattern;
};

/// Time-varying Gaussian AR(1):
///   X_i = mu(i) + phi(i) (X_{i-1} - mu(i-1)) + sigma(i) eps_i,
/// started at the exact marginal implied by freezing the coefficients at
/// i = 1, Var[X_1] = sigma(1)^2 / (1 - phi(1)^2). That start keeps the
/// covariance oracle closed-form from the first index on. `phi_max` is
/// the declared uniform bound |phi(i)| <= phi_max < 1; it feeds the
/// beta-mixing certificate.
struct TVAR1 {
  PathRule phi = PathRule::constant(0.0);
  PathRule sigma = PathRule::constant(1.0);
  PathRule mean = PathRule::constant(0.0);
  double phi_max = 0.99;
};

/// X_i = mu(i) + sum_{k=0..m} theta_k(i) eps_{i-k}, Gaussian innovations.
struct MDependentMA {
  std::size_t m = 0;
  std::vector<PathRule> coeffs;  // size m + 1, coeffs[k] = theta(., k)
  PathRule mean = PathRule::constant(0.0);
};

struct TrendPlusNoise;

using ProcessVariant =
    std::variant<IndepHetero, RegimeVariance, TVAR1, MDependentMA, TrendPlusNoise>;

struct ProcessSpec {
  ProcessSpec();
  explicit ProcessSpec(ProcessVariant v, std::string id = "");
  ProcessSpec(const ProcessSpec&);
  ProcessSpec(ProcessSpec&&) noexcept = default;
  ProcessSpec& operator=(const ProcessSpec&);
  ProcessSpec& operator=(ProcessSpec&&) noexcept = default;
  ~ProcessSpec();

  const ProcessVariant& variant() const;
  ProcessVariant& variant();
  std::string id;

 private:
  std::unique_ptr<ProcessVariant> variant_;
};

/// Closed-form deterministic trend plus a zero-mean noise process.
struct TrendPlusNoise {
  PathRule mean = PathRule::constant(0.0);
  ProcessSpec noise;  // mean path must be identically zero, no nesting
};

inline const ProcessVariant& ProcessSpec::variant() const { return *variant_; }
inline ProcessVariant& ProcessSpec::variant() { return *variant_; }
inline ProcessSpec::~ProcessSpec() = default;
inline ProcessSpec::ProcessSpec() : variant_(std::make_unique<ProcessVariant>(IndepHetero{})) {}
inline ProcessSpec::ProcessSpec(ProcessVariant v, std::string id_)
    : id(std::move(id_)), variant_(std::make_unique<ProcessVariant>(std::move(v))) {}
inline ProcessSpec::ProcessSpec(const ProcessSpec& other)
    : id(other.id), variant_(std::make_unique<ProcessVariant>(*other.variant_)) {}
inline ProcessSpec& ProcessSpec::operator=(const ProcessSpec& other) {
  id = other.id;
  variant_ = std::make_unique<ProcessVariant>(*other.variant_);
  return *this;
}

struct TimeSeriesSample {
  std::vector<double> values;  // length n >= 1, finite entries
  std::string spec_id;
  std::uint64_t seed = 0;  // RNG stream identifier (key of the generating stream)

  std::size_t size() const { return values.size(); }
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const ProcessSpec& spec, std::size_t n);

namespace detail {

inline void validate_positive_path(const PathRule& p, std::size_t n, const char* name) {
  for (std::size_t i = 1; i <= n; ++i) {
    const double v = p(i, n);
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError(std::string(name) + ": must be strictly positive (index " +
                            std::to_string(i) + ")");
  }
}

inline void validate_finite_path(const PathRule& p, std::size_t n, const char* name) {
  for (std::size_t i = 1; i <= n; ++i) {
    if (!std::isfinite(p(i, n)))
      throw ValidationError(std::string(name) + ": non-finite value at index " +
                            std::to_string(i));
  }
}

struct ValidateVisitor {
  std::size_t n;
  void operator()(const IndepHetero& s) const {
    validate_positive_path(s.sigma, n, "sigma_path");
    validate_finite_path(s.mean, n, "mean_path");
  }
  void operator()(const RegimeVariance& s) const {
    if (!(s.sigma1_sq > 0.0) || !(s.sigma2_sq > 0.0))
      throw ValidationError("regime variances must be > 0");
    if (s.pattern.rule == RegimePattern::Rule::FixedFraction &&
        (s.pattern.fraction < 0.0 || s.pattern.fraction > 1.0))
      throw ValidationError("regime fraction must lie in [0, 1]");
  }
  void operator()(const TVAR1& s) const {
    if (!(s.phi_max < 1.0) || !(s.phi_max >= 0.0))
      throw ValidationError("phi_max must lie in [0, 1)");
    validate_positive_path(s.sigma, n, "sigma_path");
    validate_finite_path(s.mean, n, "mean_path");
    for (std::size_t i = 1; i <= n; ++i) {
      if (!(std::fabs(s.phi(i, n)) <= s.phi_max))
        throw ValidationError("phi_path: |phi(i)| must be <= phi_max (index " +
                              std::to_string(i) + ")");
    }
  }
  void operator()(const MDependentMA& s) const {
    if (s.coeffs.size() != s.m + 1)
      throw ValidationError("coeff_path: need exactly m + 1 lag rules");
    for (const auto& c : s.coeffs) validate_finite_path(c, n, "coeff_path");
    validate_finite_path(s.mean, n, "mean_path");
  }
  void operator()(const TrendPlusNoise& s) const {
    validate_finite_path(s.mean, n, "mean_fn");
    const bool noise_ok = std::visit(
        [](const auto& inner) -> bool {
          using T = std::decay_t<decltype(inner)>;
          if constexpr (std::is_same_v<T, RegimeVariance>)
            return true;
          else if constexpr (std::is_same_v<T, TrendPlusNoise>)
            return false;  // no nesting
          else
            return inner.mean.is_zero();
        },
        s.noise.variant());
    if (!noise_ok)
      throw ValidationError("trend_plus_noise: noise must be zero-mean and non-nested");
    validate(s.noise, n);
  }
};

}  // namespace detail

inline void validate(const ProcessSpec& spec, std::size_t n) {
  if (n < 1) throw ValidationError("sample size n must be >= 1");
  std::visit(detail::ValidateVisitor{n}, spec.variant());
}

// ---------------------------------------------------------------------------
// Moment oracles

/// Exact mean path mu(1..n).
inline std::vector<double> mean_path(const ProcessSpec& spec, std::size_t n) {
  validate(spec, n);
  std::vector<double> mu(n);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, RegimeVariance>) {
          std::fill(mu.begin(), mu.end(), 0.0);
        } else if constexpr (std::is_same_v<T, TrendPlusNoise>) {
          for (std::size_t i = 1; i <= n; ++i) mu[i - 1] = s.mean(i, n);
        } else {
          for (std::size_t i = 1; i <= n; ++i) mu[i - 1] = s.mean(i, n);
        }
      },
      spec.variant());
  return mu;
}

namespace detail {

inline double max_abs_phi(const TVAR1& s, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 1; i <= n; ++i) m = std::max(m, std::fabs(s.phi(i, n)));
  return m;
}

}  // namespace detail

/// Smallest lag beyond which Cov[X_i, X_j] is exactly zero or numerically
/// negligible, so double sums can run over a band instead of n^2 pairs.
inline std::size_t covariance_band(const ProcessSpec& spec, std::size_t n) {
  return std::visit(
      [&](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IndepHetero> || std::is_same_v<T, RegimeVariance>) {
          return 0;
        } else if constexpr (std::is_same_v<T, MDependentMA>) {
          return s.m;
        } else if constexpr (std::is_same_v<T, TVAR1>) {
          const double phi_max = detail::max_abs_phi(s, n);
          if (phi_max == 0.0) return 0;
          const double lag = std::log(1e-15) / std::log(phi_max);
          return std::min<double>(static_cast<double>(n), lag) + 1;
        } else {  // TrendPlusNoise
          return covariance_band(s.noise, n);
        }
      },
      spec.variant());
}

/// Cached exact covariance oracle for one (spec, n): O(1) entry lookups
/// after an O(n) setup (TVAR1 variance recursion). All supported variants
/// are Gaussian-linear, so entries are closed-form. Holds a reference
/// into `spec`; the spec must outlive the oracle.
class CovOracle {
 public:
  CovOracle(const ProcessSpec& spec, std::size_t n) : n_(n) {
    validate(spec, n);
    const ProcessSpec* leaf = &spec;
    if (const auto* tn = std::get_if<TrendPlusNoise>(&spec.variant())) leaf = &tn->noise;
    variant_ = &leaf->variant();
    band_ = covariance_band(spec, n);
    if (const auto* ar = std::get_if<TVAR1>(variant_)) {
      phi_.resize(n + 1, 0.0);
      var_.resize(n + 1, 0.0);
      for (std::size_t i = 1; i <= n; ++i) phi_[i] = ar->phi(i, n);
      const double s1 = ar->sigma(1, n);
      var_[1] = s1 * s1 / (1.0 - phi_[1] * phi_[1]);
      for (std::size_t i = 2; i <= n; ++i) {
        const double sig = ar->sigma(i, n);
        var_[i] = phi_[i] * phi_[i] * var_[i - 1] + sig * sig;
      }
    }
  }

  std::size_t n() const { return n_; }
  std::size_t band() const { return band_; }

  double operator()(std::size_t i, std::size_t j) const {
    if (i < 1 || i > n_ || j < 1 || j > n_)
      throw ValidationError("covariance: indices must lie in 1..n");
    const std::size_t lo = std::min(i, j), hi = std::max(i, j);
    if (hi - lo > band_ && !std::holds_alternative<TVAR1>(*variant_)) return 0.0;
    return std::visit(
        [&](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, IndepHetero>) {
            if (i != j) return 0.0;
            const double sd = s.sigma(i, n_);
            return sd * sd;
          } else if constexpr (std::is_same_v<T, RegimeVariance>) {
            if (i != j) return 0.0;
            return s.pattern.regime(i, n_) == 1 ? s.sigma1_sq : s.sigma2_sq;
          } else if constexpr (std::is_same_v<T, TVAR1>) {
            double c = var_[lo];
            for (std::size_t k = lo + 1; k <= hi; ++k) c *= phi_[k];
            return c;
          } else if constexpr (std::is_same_v<T, MDependentMA>) {
            const std::size_t d = hi - lo;
            if (d > s.m) return 0.0;
            // Shared innovations: eps_{lo-k} = eps_{hi-l} iff l = k + d.
            double c = 0.0;
            for (std::size_t k = 0; k + d <= s.m; ++k)
              c += s.coeffs[k](lo, n_) * s.coeffs[k + d](hi, n_);
            return c;
          } else {
            return 0.0;  // unreachable: TrendPlusNoise unwrapped in ctor
          }
        },
        *variant_);
  }

  double sd(std::size_t i) const { return std::sqrt((*this)(i, i)); }

 private:
  std::size_t n_ = 0;
  std::size_t band_ = 0;
  const ProcessVariant* variant_ = nullptr;
  std::vector<double> phi_, var_;
};

/// Exact Cov[X_i, X_j], 1-based indices.
inline double covariance(const ProcessSpec& spec, std::size_t n, std::size_t i, std::size_t j) {
  return CovOracle(spec, n)(i, j);
}

/// Full n x n covariance matrix (diagnostic use; O(n * band)).
inline Matrix covariance_matrix(const ProcessSpec& spec, std::size_t n) {
  const CovOracle cov(spec, n);
  const std::size_t band = cov.band();
  Matrix c(n, n, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t hi = std::min(n, i + band);
    for (std::size_t j = i; j <= hi; ++j) {
      const double v = cov(i, j);
      c(i - 1, j - 1) = v;
      c(j - 1, i - 1) = v;
    }
  }
  return c;
}

/// Var[n^{-1/2} sum_i w_i (X_i - mu_i)] via the exact double covariance
/// sum, band-truncated. Default weights are all ones.
inline double scaled_average_variance(const ProcessSpec& spec, std::size_t n,
                                      const std::vector<double>* weights = nullptr) {
  if (weights && weights->size() != n)
    throw ValidationError("scaled_average_variance: weight vector must have length n");
  const CovOracle cov(spec, n);
  const std::size_t band = cov.band();
  auto w = [&](std::size_t i) { return weights ? (*weights)[i - 1] : 1.0; };
  double total = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    total += w(i) * w(i) * cov(i, i);
    const std::size_t hi = std::min(n, i + band);
    for (std::size_t j = i + 1; j <= hi; ++j) total += 2.0 * w(i) * w(j) * cov(i, j);
  }
  return total / static_cast<double>(n);
}

/// Analytic upper bound on the beta-mixing coefficient at the given lag.
/// Guaranteed >= the true coefficient:
///   - independent variants: 0 for any lag >= 1;
///   - m-dependent MA: 0 for lag > m, trivial bound 1 otherwise;
///   - TVAR1: geometric certificate phi_max^lag / (1 - phi_max), with the
///     declared phi_max (a decay-rate certificate, not the exact value).
inline double beta_mixing_bound(const ProcessSpec& spec, std::size_t lag) {
  if (lag < 1) throw ValidationError("beta_mixing_bound: lag must be >= 1");
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IndepHetero> || std::is_same_v<T, RegimeVariance>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, MDependentMA>) {
          return lag > s.m ? 0.0 : 1.0;
        } else if constexpr (std::is_same_v<T, TVAR1>) {
          if (s.phi_max == 0.0) return 0.0;
          return std::pow(s.phi_max, static_cast<double>(lag)) / (1.0 - s.phi_max);
        } else {  // TrendPlusNoise
          return beta_mixing_bound(s.noise, lag);
        }
      },
      spec.variant());
}

// ---------------------------------------------------------------------------
// Simulation

/// Draw one path of length n. Deterministic given (spec, n, stream):
/// identical inputs reproduce the sample bit for bit.
inline TimeSeriesSample simulate_path(const ProcessSpec& spec, std::size_t n,
                                      rng::Stream stream) {
  validate(spec, n);
  TimeSeriesSample out;
  out.spec_id = spec.id;
  out.seed = stream.key();
  out.values.resize(n);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IndepHetero>) {
          for (std::size_t i = 1; i <= n; ++i) {
            const double eps = s.innovation == Innovation::Gaussian
                                   ? stream.next_normal()
                                   : stream.next_exponential() - 1.0;
            out.values[i - 1] = s.mean(i, n) + s.sigma(i, n) * eps;
          }
        } else if constexpr (std::is_same_v<T, RegimeVariance>) {
          for (std::size_t i = 1; i <= n; ++i) {
            const double sd =
                std::sqrt(s.pattern.regime(i, n) == 1 ? s.sigma1_sq : s.sigma2_sq);
            out.values[i - 1] = sd * stream.next_normal();
          }
        } else if constexpr (std::is_same_v<T, TVAR1>) {
          const double phi1 = s.phi(1, n);
          const double sd1 = s.sigma(1, n) / std::sqrt(1.0 - phi1 * phi1);
          double centered = sd1 * stream.next_normal();
          out.values[0] = s.mean(1, n) + centered;
          for (std::size_t i = 2; i <= n; ++i) {
            centered = s.phi(i, n) * centered + s.sigma(i, n) * stream.next_normal();
            out.values[i - 1] = s.mean(i, n) + centered;
          }
        } else if constexpr (std::is_same_v<T, MDependentMA>) {
          // eps_{1-m} .. eps_n drawn in index order; eps_t sits at slot t - 1 + m.
          std::vector<double> eps(n + s.m);
          for (auto& e : eps) e = stream.next_normal();
          for (std::size_t i = 1; i <= n; ++i) {
            double v = s.mean(i, n);
            for (std::size_t k = 0; k <= s.m; ++k)
              v += s.coeffs[k](i, n) * eps[(i - 1 + s.m) - k];
            out.values[i - 1] = v;
          }
        } else {  // TrendPlusNoise
          TimeSeriesSample noise = simulate_path(s.noise, n, stream);
          out.values = std::move(noise.values);
          for (std::size_t i = 1; i <= n; ++i) out.values[i - 1] += s.mean(i, n);
        }
      },
      spec.variant());
  return out;
}

inline bool is_gaussian(const ProcessSpec& spec) {
  return std::visit(
      [](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IndepHetero>)
          return s.innovation == Innovation::Gaussian;
        else if constexpr (std::is_same_v<T, TrendPlusNoise>)
          return is_gaussian(s.noise);
        else
          return true;
      },
      spec.variant());
}

}  // namespace nonstat
