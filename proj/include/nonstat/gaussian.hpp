#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "nonstat/core.hpp"
#include "nonstat/dgp.hpp"
#include "nonstat/matrix.hpp"
#include "nonstat/normal.hpp"
#include "nonstat/procspace.hpp"
#include "nonstat/rng.hpp"

namespace nonstat {

namespace detail {

// --- Gaussian product moments (Isserlis) -----------------------------------

inline double double_factorial_odd_count(int k) {
  // (k - 1)!! for even k >= 0, i.e. number of perfect matchings of k points.
  double v = 1.0;
  for (int j = k - 1; j > 1; j -= 2) v *= j;
  return v;
}

inline double binom(int n, int k) {
  double v = 1.0;
  for (int j = 1; j <= k; ++j) v = v * (n - k + j) / j;
  return v;
}

/// E[U^p V^q] for centered jointly Gaussian (U, V) with variances vu, vv
/// and covariance c. Pairings with r cross pairs contribute
/// C(p,r) C(q,r) r! (p-r-1)!! (q-r-1)!! c^r vu^{(p-r)/2} vv^{(q-r)/2}.
inline double gaussian_central_cross_moment(int p, int q, double vu, double vv, double c) {
  double sum = 0.0;
  for (int r = (p + q) % 2; r <= std::min(p, q); r += 2) {
    if ((p - r) % 2 != 0 || (q - r) % 2 != 0) continue;
    double term = binom(p, r) * binom(q, r);
    for (int j = 2; j <= r; ++j) term *= j;  // r!
    term *= double_factorial_odd_count(p - r) * double_factorial_odd_count(q - r);
    term *= std::pow(c, r) * std::pow(vu, (p - r) / 2.0) * std::pow(vv, (q - r) / 2.0);
    sum += term;
  }
  return sum;
}

/// E[X^a Y^b] for jointly Gaussian X ~ N(mx, vx), Y ~ N(my, vy), Cov = c.
inline double gaussian_cross_moment(int a, int b, double mx, double my, double vx, double vy,
                                    double c) {
  double sum = 0.0;
  for (int p = 0; p <= a; ++p) {
    for (int q = 0; q <= b; ++q) {
      const double central = gaussian_central_cross_moment(p, q, vx, vy, c);
      if (central == 0.0) continue;
      sum += binom(a, p) * binom(b, q) * std::pow(mx, a - p) * std::pow(my, b - q) * central;
    }
  }
  return sum;
}

inline double gaussian_moment(int a, double m, double v) {
  return gaussian_cross_moment(a, 0, m, 0.0, v, 1.0, 0.0);
}

/// Indices and coefficients of a linear class member (identity or
/// backward difference); empty when the zero convention applies.
inline std::vector<std::pair<std::size_t, double>> linear_support(const FunctionClass& cls,
                                                                  std::size_t k,
                                                                  std::size_t i) {
  if (std::holds_alternative<IdentityClass>(cls)) return {{i, 1.0}};
  const auto& fd = std::get<ForwardDifferences>(cls);
  const std::size_t r = k + 1;
  if (fd.step * r >= i) return {};
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(r + 1);
  double binom_c = 1.0;
  for (std::size_t j = 0; j <= r; ++j) {
    out.emplace_back(i - j * fd.step, (j % 2 == 0 ? binom_c : -binom_c));
    binom_c = binom_c * static_cast<double>(r - j) / static_cast<double>(j + 1);
  }
  return out;
}

inline bool is_linear_class(const FunctionClass& cls) {
  return std::holds_alternative<IdentityClass>(cls) ||
         std::holds_alternative<ForwardDifferences>(cls);
}

}  // namespace detail

/// Throws CapabilityError unless exact moment oracles exist for the
/// (spec, class) cell. Linear classes (identity, differences) need only
/// first/second moments; indicator and monomial classes need Gaussianity.
inline void require_oracle_support(const ProcessSpec& spec, const FunctionClass& cls) {
  if (detail::is_linear_class(cls)) return;
  if (!is_gaussian(spec))
    throw CapabilityError(
        "exact class-moment oracle unavailable: indicator and monomial classes require a "
        "Gaussian spec; supported cells are {any spec} x {identity, forward_differences} "
        "and {Gaussian spec} x {monomials, indicator_grid, paired_indicator_diff}; use a "
        "monte-carlo-estimate covariance model instead");
}

/// Exact mean oracle mu(i, f_k) = E[f_k(Z_i)], n x K.
inline Matrix class_mean_matrix(const ProcessSpec& spec, std::size_t n,
                                const FunctionClass& cls) {
  validate(cls);
  require_oracle_support(spec, cls);
  const std::vector<double> mu = mean_path(spec, n);
  const CovOracle cov(spec, n);
  const std::size_t count = member_count(cls);
  Matrix out(n, count, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t k = 0; k < count; ++k) {
      out(i - 1, k) = std::visit(
          [&](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, IdentityClass>) {
              return mu[i - 1];
            } else if constexpr (std::is_same_v<T, Monomials>) {
              return detail::gaussian_moment(c.degrees[k], mu[i - 1], cov(i, i));
            } else if constexpr (std::is_same_v<T, IndicatorGrid>) {
              return norm_cdf((c.thresholds[k] - mu[i - 1]) / cov.sd(i));
            } else if constexpr (std::is_same_v<T, PairedIndicatorDiff>) {
              if (i <= c.lag) return 0.0;
              const double t = c.thresholds[k];
              return norm_cdf((t - mu[i - 1]) / cov.sd(i)) -
                     norm_cdf((t - mu[i - 1 - c.lag]) / cov.sd(i - c.lag));
            } else {  // ForwardDifferences
              double v = 0.0;
              for (const auto& [idx, coef] : detail::linear_support(cls, k, i))
                v += coef * mu[idx - 1];
              return v;
            }
          },
          cls);
    }
  }
  return out;
}

/// Exact covariance oracle over class members:
/// entry(i, a, j, b) = Cov[f_a(Z_i), f_b(Z_j)]. Holds references to the
/// spec-level covariance oracle; keep the spec alive.
class ClassCovOracle {
 public:
  ClassCovOracle(const ProcessSpec& spec, std::size_t n, const FunctionClass& cls)
      : cls_(cls), cov_(spec, n), mu_(mean_path(spec, n)) {
    validate(cls_);
    require_oracle_support(spec, cls_);
    reach_ = class_reach(cls_);
    band_ = cov_.band() + reach_;
  }

  std::size_t n() const { return cov_.n(); }
  std::size_t members() const { return member_count(cls_); }
  /// Entries vanish for |i - j| > band().
  std::size_t band() const { return band_; }

  double operator()(std::size_t i, std::size_t a, std::size_t j, std::size_t b) const {
    if (i > j) {
      std::swap(i, j);
      std::swap(a, b);
    }
    if (j - i > band_) return 0.0;
    return std::visit(
        [&](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, IdentityClass> ||
                        std::is_same_v<T, ForwardDifferences>) {
            double v = 0.0;
            for (const auto& [iu, cu] : detail::linear_support(cls_, a, i))
              for (const auto& [jv, cv] : detail::linear_support(cls_, b, j))
                v += cu * cv * cov_(iu, jv);
            return v;
          } else if constexpr (std::is_same_v<T, Monomials>) {
            const double mi = mu_[i - 1], mj = mu_[j - 1];
            const double vi = cov_(i, i), vj = cov_(j, j);
            const double cij = (i == j) ? vi : cov_(i, j);
            const int da = c.degrees[a], db = c.degrees[b];
            return detail::gaussian_cross_moment(da, db, mi, mj, vi, vj, cij) -
                   detail::gaussian_moment(da, mi, vi) * detail::gaussian_moment(db, mj, vj);
          } else if constexpr (std::is_same_v<T, IndicatorGrid>) {
            return indicator_cov(i, c.thresholds[a], j, c.thresholds[b]);
          } else {  // PairedIndicatorDiff
            if (i <= c.lag || j <= c.lag) return 0.0;
            const double s = c.thresholds[a], t = c.thresholds[b];
            double v = 0.0;
            for (int p = 0; p <= 1; ++p)
              for (int q = 0; q <= 1; ++q) {
                const double sign = (p == q) ? 1.0 : -1.0;
                v += sign * indicator_cov(i - p * c.lag, s, j - q * c.lag, t);
              }
            return v;
          }
        },
        cls_);
  }

 private:
  /// Cov[1{X_i < s}, 1{X_j < t}] under the Gaussian spec.
  double indicator_cov(std::size_t i, double s, std::size_t j, double t) const {
    const double sd_i = cov_.sd(i), sd_j = cov_.sd(j);
    const double h = (s - mu_[i - 1]) / sd_i;
    const double k = (t - mu_[j - 1]) / sd_j;
    if (i == j) {
      return norm_cdf(std::min(h, k)) - norm_cdf(h) * norm_cdf(k);
    }
    double rho = cov_(i, j) / (sd_i * sd_j);
    rho = std::clamp(rho, -1.0 + 1e-12, 1.0 - 1e-12);
    return bvn_indicator_cov(h, k, rho);
  }

  FunctionClass cls_;
  CovOracle cov_;
  std::vector<double> mu_;
  std::size_t reach_ = 0;
  std::size_t band_ = 0;
};

// ---------------------------------------------------------------------------
// Covariance model of the matched (corresponding) Gaussian process

struct CovarianceModel {
  enum class Source { ExactOracle, MonteCarloEstimate };

  EvalGrid grid;
  Matrix matrix;  // flat (s, f) ordering: row index = j * f_count + k
  Source source = Source::ExactOracle;
  std::size_t mc_replicates = 0;

  std::size_t dim() const { return grid.flat_size(); }
};

inline void validate(const CovarianceModel& model) {
  const std::size_t d = model.dim();
  if (model.matrix.rows() != d || model.matrix.cols() != d)
    throw ValidationError("covariance model: matrix shape does not match grid");
  if (max_abs_asymmetry(model.matrix) > 1e-10)
    throw ValidationError("covariance model: matrix not symmetric within 1e-10");
  for (std::size_t r = 0; r < d; ++r)
    if (model.matrix(r, r) < 0.0)
      throw ValidationError("covariance model: negative diagonal entry");
}

/// Finite-marginal covariance of the Gaussian process matched to the
/// weighted empirical process of (spec, class, family) at sample size n:
///   Cov[G(s_j, f_a), G(s_l, f_b)]
///     = n^{-1} sum_{i, i'} w_i(s_j) w_{i'}(s_l) Cov[f_a(Z_i), f_b(Z_{i'})],
/// assembled over the dependence band of the spec.
inline CovarianceModel corresponding_covariance(const ProcessSpec& spec,
                                                const FunctionClass& cls,
                                                const WeightFamily& family,
                                                const EvalGrid& grid, std::size_t n) {
  validate(family);
  const ClassCovOracle cc(spec, n, cls);
  const std::size_t scount = grid.s_count();
  const std::size_t kcount = grid.f_count();
  if (kcount != cc.members())
    throw ValidationError("corresponding_covariance: grid member count mismatch");
  const std::size_t band = cc.band();

  // Memoized class-covariance blocks over the band, when memory allows.
  const std::size_t block = kcount * kcount;
  const std::size_t memo_entries = n * (band + 1) * block;
  std::vector<double> memo;
  std::vector<unsigned char> memo_set;
  const bool use_memo = memo_entries > 0 && memo_entries <= (std::size_t{1} << 23);
  if (use_memo) {
    memo.assign(memo_entries, 0.0);
    memo_set.assign(n * (band + 1), 0);
  }
  auto cc_block = [&](std::size_t i, std::size_t j) -> const double* {
    // i <= j, j - i <= band; returns K x K block [a][b].
    const std::size_t slot = (i - 1) * (band + 1) + (j - i);
    if (use_memo && memo_set[slot]) return memo.data() + slot * block;
    double* out = use_memo ? memo.data() + slot * block : nullptr;
    static thread_local std::vector<double> scratch;
    if (!use_memo) {
      scratch.assign(block, 0.0);
      out = scratch.data();
    }
    for (std::size_t a = 0; a < kcount; ++a)
      for (std::size_t b = 0; b < kcount; ++b) out[a * kcount + b] = cc(i, a, j, b);
    if (use_memo) memo_set[slot] = 1;
    return out;
  };

  std::vector<std::vector<double>> w(scount);
  std::vector<std::pair<std::size_t, std::size_t>> win(scount);
  for (std::size_t j = 0; j < scount; ++j) {
    w[j] = weights_at(family, n, grid.s_values[j]);
    win[j] = weight_window(family, n, grid.s_values[j]);
  }

  const std::size_t dim = scount * kcount;
  Matrix m(dim, dim, 0.0);
  for (std::size_t j = 0; j < scount; ++j) {
    for (std::size_t l = j; l < scount; ++l) {
      const auto [jlo, jhi] = win[j];
      const auto [llo, lhi] = win[l];
      if (jhi == 0 || lhi == 0) continue;
      for (std::size_t i = jlo; i <= jhi; ++i) {
        const double wi = w[j][i - 1];
        if (wi == 0.0) continue;
        const std::size_t ilo = std::max(llo, i > band ? i - band : std::size_t{1});
        const std::size_t ihi = std::min(lhi, i + band);
        for (std::size_t ip = ilo; ip <= ihi; ++ip) {
          const double wip = w[l][ip - 1];
          if (wip == 0.0) continue;
          const double wprod = wi * wip;
          const bool flip = ip < i;
          const double* blk = flip ? cc_block(ip, i) : cc_block(i, ip);
          for (std::size_t a = 0; a < kcount; ++a) {
            const std::size_t row = j * kcount + a;
            for (std::size_t b = 0; b < kcount; ++b) {
              const double v = flip ? blk[b * kcount + a] : blk[a * kcount + b];
              m(row, l * kcount + b) += wprod * v;
            }
          }
        }
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) m(r, c) *= inv_n;
  // Mirror the computed upper s-block triangle.
  for (std::size_t j = 0; j < scount; ++j)
    for (std::size_t l = j; l < scount; ++l)
      for (std::size_t a = 0; a < kcount; ++a)
        for (std::size_t b = 0; b < kcount; ++b) {
          if (l == j && b < a) continue;
          const std::size_t r = j * kcount + a, c = l * kcount + b;
          m(c, r) = m(r, c);
        }

  CovarianceModel model;
  model.grid = grid;
  model.matrix = std::move(m);
  model.source = CovarianceModel::Source::ExactOracle;
  validate(model);
  return model;
}

// ---------------------------------------------------------------------------
// Sampling

/// Exact multivariate normal sampler for a covariance model. Factorizes
/// once with escalating diagonal jitter 1e-12 -> 1e-6 (x10 per retry;
/// plain semidefinite factorization is attempted first, so PSD models
/// use jitter 0). Throws NumericError when the model stays indefinite.
class GpSampler {
 public:
  explicit GpSampler(CovarianceModel model) : model_(std::move(model)) {
    validate(model_);
    const std::size_t d = model_.dim();
    Matrix sym = model_.matrix;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r + 1; c < d; ++c) {
        const double v = 0.5 * (sym(r, c) + sym(c, r));
        sym(r, c) = v;
        sym(c, r) = v;
      }
    double scale = 0.0;
    for (std::size_t r = 0; r < d; ++r) scale = std::max(scale, std::fabs(sym(r, r)));
    if (scale == 0.0) scale = 1.0;

    for (double jitter = 0.0; jitter <= 1e-6; jitter = (jitter == 0.0 ? 1e-12 : jitter * 10)) {
      Matrix attempt = sym;
      for (std::size_t r = 0; r < d; ++r) attempt(r, r) += jitter;
      if (auto l = cholesky_semidefinite(attempt, 1e-14 * scale)) {
        factor_ = std::move(*l);
        jitter_ = jitter;
        return;
      }
      if (jitter == 1e-6) break;
    }
    throw NumericError("gp sampler: covariance model not PSD after max jitter 1e-6");
  }

  double jitter() const { return jitter_; }
  const CovarianceModel& model() const { return model_; }

  Surface sample(rng::Stream& stream) const {
    const std::size_t d = model_.dim();
    std::vector<double> z(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
      const double eta = stream.next_normal();
      if (factor_(c, c) == 0.0) continue;  // dropped rank-deficient direction
      for (std::size_t r = c; r < d; ++r) z[r] += factor_(r, c) * eta;
    }
    Surface s;
    s.grid = model_.grid;
    s.provenance = Provenance::Gaussian;
    s.values = Matrix(model_.grid.s_count(), model_.grid.f_count());
    std::copy(z.begin(), z.end(), s.values.data().begin());
    return s;
  }

 private:
  CovarianceModel model_;
  Matrix factor_;
  double jitter_ = 0.0;
};

inline Surface sample_gp(const CovarianceModel& model, rng::Stream& stream) {
  return GpSampler(model).sample(stream);
}

/// Unbiased sample covariance (and implied model) across M >= 2 replicate
/// surfaces on a common grid.
inline CovarianceModel empirical_covariance(const std::vector<Surface>& surfaces) {
  if (surfaces.size() < 2)
    throw ValidationError("empirical_covariance: need at least 2 replicates");
  const EvalGrid& grid = surfaces.front().grid;
  const std::size_t d = grid.flat_size();
  for (const auto& s : surfaces)
    if (!(s.grid == grid)) throw ValidationError("empirical_covariance: grid mismatch");
  const double m = static_cast<double>(surfaces.size());
  std::vector<double> mean(d, 0.0);
  for (const auto& s : surfaces)
    for (std::size_t r = 0; r < d; ++r) mean[r] += s.values.data()[r];
  for (double& v : mean) v /= m;
  Matrix cov(d, d, 0.0);
  std::vector<double> centered(d);
  for (const auto& s : surfaces) {
    for (std::size_t r = 0; r < d; ++r) centered[r] = s.values.data()[r] - mean[r];
    for (std::size_t r = 0; r < d; ++r) {
      const double cr = centered[r];
      if (cr == 0.0) continue;
      for (std::size_t c = r; c < d; ++c) cov(r, c) += cr * centered[c];
    }
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) {
      cov(r, c) /= (m - 1.0);
      cov(c, r) = cov(r, c);
    }
  CovarianceModel model;
  model.grid = grid;
  model.matrix = std::move(cov);
  model.source = CovarianceModel::Source::MonteCarloEstimate;
  model.mc_replicates = surfaces.size();
  return model;
}

/// Exact-mean-path centering for empirical surfaces over a spec with
/// moment oracles.
inline CenteringSpec exact_centering(const ProcessSpec& spec, std::size_t n,
                                     const FunctionClass& cls) {
  return CenteringSpec::path(class_mean_matrix(spec, n, cls));
}

}  // namespace nonstat
