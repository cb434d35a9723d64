#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "nonstat/core.hpp"
#include "nonstat/procspace.hpp"
#include "nonstat/rng.hpp"

namespace nonstat {

// ---------------------------------------------------------------------------
// Multipliers

struct IIDGaussianMultipliers {};

/// Windowed sums of centered Exp(1) noise:
///   V_i = norm * sum_{j=i}^{i+m} (xi_j - 1),  xi_j iid Exp(1),
/// which makes the V_i (m+1)-dependent. The default norm 1/sqrt(m)
/// follows the windowed-sum definition literally, giving
/// Cov[V_i, V_j] = max(0, m+1-|i-j|)/m (so Var = (m+1)/m). With
/// `unit_variance` the norm is 1/sqrt(m+1) and Var[V_i] = 1 exactly.
struct BlockExponentialMultipliers {
  /// m = ceil(n^(1/3)) when not set explicitly.
  std::optional<std::size_t> m_explicit;
  bool unit_variance = false;

  std::size_t block_length(std::size_t n) const {
    if (m_explicit) {
      if (*m_explicit < 1) throw ValidationError("block multiplier: m must be >= 1");
      return *m_explicit;
    }
    const double c = std::cbrt(static_cast<double>(n));
    return static_cast<std::size_t>(std::ceil(c - 1e-9));
  }
};

using MultiplierSpec = std::variant<IIDGaussianMultipliers, BlockExponentialMultipliers>;

/// Draw the multiplier vector V_{1..n}. Block-exponential draws the
/// n + m underlying exponentials in index order and forms sliding
/// window sums, so E[V] = 0 holds by construction.
inline std::vector<double> gen_multipliers(const MultiplierSpec& mspec, std::size_t n,
                                           rng::Stream& stream) {
  if (n < 1) throw ValidationError("gen_multipliers: n must be >= 1");
  std::vector<double> v(n);
  if (std::holds_alternative<IIDGaussianMultipliers>(mspec)) {
    for (auto& x : v) x = stream.next_normal();
    return v;
  }
  const auto& spec = std::get<BlockExponentialMultipliers>(mspec);
  const std::size_t m = spec.block_length(n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(spec.unit_variance ? m + 1 : m));
  std::vector<double> xi(n + m);
  for (auto& x : xi) x = stream.next_exponential() - 1.0;
  double window = 0.0;
  for (std::size_t j = 0; j <= m; ++j) window += xi[j];
  v[0] = norm * window;
  for (std::size_t i = 1; i < n; ++i) {
    window += xi[i + m] - xi[i - 1];
    v[i] = norm * window;
  }
  return v;
}

/// Exact Cov[V_i, V_j]: window overlap count over the normalization.
inline double multiplier_covariance(const MultiplierSpec& mspec, std::size_t n, std::size_t i,
                                    std::size_t j) {
  const std::size_t d = i > j ? i - j : j - i;
  if (std::holds_alternative<IIDGaussianMultipliers>(mspec)) return d == 0 ? 1.0 : 0.0;
  const auto& spec = std::get<BlockExponentialMultipliers>(mspec);
  const std::size_t m = spec.block_length(n);
  if (d > m) return 0.0;
  const double overlap = static_cast<double>(m + 1 - d);
  return overlap / static_cast<double>(spec.unit_variance ? m + 1 : m);
}

// ---------------------------------------------------------------------------
// Mean-path estimators

struct ZeroMeanEstimator {};

/// Copies a caller-supplied oracle path mu(i, f).
struct KnownPathEstimator {
  Matrix path;  // n x K
};

/// mu_hat(i, f) = (n b)^{-1} sum_j K((j - i)/(n b)) f(Z_j); the raw
/// (unnormalized) smoother, sharing kernel_weight() with the weight
/// family so both agree bit for bit.
struct KernelSmootherEstimator {
  KernelFn kernel = KernelFn::triweight();
  double bandwidth = 0.1;  // in (0, 1]
};

using MeanEstimator =
    std::variant<ZeroMeanEstimator, KnownPathEstimator, KernelSmootherEstimator>;

/// Estimated (or copied) mean path matrix mu_hat(i, f_k), n x K.
inline Matrix estimate_mean_path(const MeanEstimator& est, const std::vector<double>& values,
                                 const FunctionClass& cls) {
  validate(cls);
  const std::size_t n = values.size();
  const std::size_t kcount = member_count(cls);
  return std::visit(
      [&](const auto& e) -> Matrix {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ZeroMeanEstimator>) {
          return Matrix(n, kcount, 0.0);
        } else if constexpr (std::is_same_v<T, KnownPathEstimator>) {
          if (e.path.rows() != n || e.path.cols() != kcount)
            throw ValidationError("known-path centering: oracle matrix shape mismatch");
          return e.path;
        } else {  // KernelSmootherEstimator
          if (!(e.bandwidth > 0.0) || e.bandwidth > 1.0)
            throw ValidationError("kernel smoother: bandwidth must lie in (0, 1]");
          const Matrix f = eval_class(cls, values);
          Matrix out(n, kcount, 0.0);
          const double nb = static_cast<double>(n) * e.bandwidth;
          for (std::size_t i = 1; i <= n; ++i) {
            const auto [lo, hi] = kernel_window(static_cast<double>(i), n, e.bandwidth);
            for (std::size_t j = lo; j <= hi && hi > 0; ++j) {
              const double w =
                  kernel_weight(e.kernel, static_cast<double>(i), j, n, e.bandwidth);
              if (w == 0.0) continue;
              for (std::size_t k = 0; k < kcount; ++k) out(i - 1, k) += w * f(j - 1, k);
            }
            for (std::size_t k = 0; k < kcount; ++k) out(i - 1, k) /= nb;
          }
          return out;
        }
      },
      est);
}

// ---------------------------------------------------------------------------
// Bootstrap surfaces and quantiles

/// One experiment's bootstrap draws: sorted sup norms plus provenance.
struct BootstrapRun {
  std::size_t replicates = 0;
  double alpha = 0.0;
  std::vector<double> sup_norms;  // sorted ascending, length = replicates
  std::uint64_t seed = 0;
};

/// q_hat = order statistic of rank ceil(B (1 - alpha)) of the sorted
/// sup norms (1-based; conservative, distribution-free rule).
inline double quantile_from_sorted(const std::vector<double>& sorted_sups, double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw ValidationError("bootstrap quantile: alpha must lie in (0, 1)");
  if (sorted_sups.empty()) throw ValidationError("bootstrap quantile: empty run");
  const double b = static_cast<double>(sorted_sups.size());
  auto rank = static_cast<std::size_t>(std::ceil(b * (1.0 - alpha)));
  rank = std::clamp<std::size_t>(rank, 1, sorted_sups.size());
  return sorted_sups[rank - 1];
}

/// Precomputes the residual matrix f_k(Z_i) - mu_hat(i, k) once, then
/// produces multiplier-bootstrap replicate surfaces
///   G*(s_j, f_k) = n^{-1/2} sum_i V_i w_i(s_j) (f_k(Z_i) - mu_hat(i, k))
/// with multipliers drawn fresh per replicate while the data stays fixed.
class BootstrapEngine {
 public:
  BootstrapEngine(std::vector<double> values, const FunctionClass& cls,
                  const WeightFamily& family, EvalGrid grid, MultiplierSpec mspec,
                  const MeanEstimator& centering)
      : values_(std::move(values)),
        family_(family),
        grid_(std::move(grid)),
        mspec_(std::move(mspec)) {
    validate(family_);
    const Matrix mu_hat = estimate_mean_path(centering, values_, cls);
    residuals_ = detail::residual_matrix(cls, values_, CenteringSpec::path(mu_hat));
    if (grid_.f_count() != residuals_.cols())
      throw ValidationError("bootstrap: grid member count mismatch");
  }

  std::size_t n() const { return values_.size(); }
  const EvalGrid& grid() const { return grid_; }

  Surface replicate(rng::Stream& stream) const {
    const std::vector<double> v = gen_multipliers(mspec_, n(), stream);
    return replicate_with_multipliers(v);
  }

  /// Test hook and building block: surface for a given multiplier vector.
  Surface replicate_with_multipliers(const std::vector<double>& multipliers) const {
    if (multipliers.size() != n())
      throw ValidationError("bootstrap: multiplier vector length mismatch");
    Surface s;
    s.grid = grid_;
    s.values = detail::weighted_process(residuals_, family_, grid_, &multipliers);
    s.provenance = Provenance::Bootstrap;
    return s;
  }

  double replicate_sup(rng::Stream& stream) const { return sup_norm(replicate(stream)); }

 private:
  std::vector<double> values_;
  WeightFamily family_;
  EvalGrid grid_;
  MultiplierSpec mspec_;
  Matrix residuals_;
};

/// Single bootstrap replicate surface (spec'd convenience form).
inline Surface bootstrap_surface(const std::vector<double>& values, const FunctionClass& cls,
                                 const WeightFamily& family, const EvalGrid& grid,
                                 const MultiplierSpec& mspec, const MeanEstimator& centering,
                                 rng::Stream& stream) {
  return BootstrapEngine(values, cls, family, grid, mspec, centering).replicate(stream);
}

struct BootstrapQuantileResult {
  double q_hat = 0.0;
  BootstrapRun run;
};

/// B replicate sup norms (replicate k drawn from stream.child(k), so the
/// result is independent of evaluation order), sorted, plus the
/// ceil(B(1-alpha)) order statistic.
inline BootstrapQuantileResult bootstrap_quantile(const std::vector<double>& values,
                                                  const FunctionClass& cls,
                                                  const WeightFamily& family,
                                                  const EvalGrid& grid,
                                                  const MultiplierSpec& mspec,
                                                  const MeanEstimator& centering,
                                                  std::size_t b, double alpha,
                                                  const rng::Stream& stream) {
  if (b < 1) throw ValidationError("bootstrap quantile: B must be >= 1");
  const BootstrapEngine engine(values, cls, family, grid, mspec, centering);
  BootstrapQuantileResult out;
  out.run.replicates = b;
  out.run.alpha = alpha;
  out.run.seed = stream.key();
  out.run.sup_norms.resize(b);
  for (std::size_t k = 0; k < b; ++k) {
    rng::Stream child = stream.child(k);
    out.run.sup_norms[k] = engine.replicate_sup(child);
  }
  std::sort(out.run.sup_norms.begin(), out.run.sup_norms.end());
  out.q_hat = quantile_from_sorted(out.run.sup_norms, alpha);
  return out;
}

}  // namespace nonstat
