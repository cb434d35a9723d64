#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nonstat/core.hpp"
#include "nonstat/normal.hpp"

namespace nonstat {

// ---------------------------------------------------------------------------
// Kernels

/// Kernel on [-1, 1]. Construction checks nonnegativity and unit mass
/// (64-point Gauss-Legendre, tolerance 1e-9). Tabulated kernels are
/// interpolated linearly and normalized by their quadrature mass, so the
/// unit-mass invariant holds for them by construction.
class KernelFn {
 public:
  enum class Kind { Triweight, Biweight, Tabulated };

  /// (35/32)(1 - u^2)^3. Twice continuously differentiable on all of R
  /// (second derivative vanishes at +-1). Default kernel.
  static KernelFn triweight() { return KernelFn(Kind::Triweight); }

  /// (15/16)(1 - u^2)^2. C^1 but not C^2 at +-1; offered for comparison,
  /// not suitable where two continuous derivatives are required.
  static KernelFn biweight() { return KernelFn(Kind::Biweight); }

  static KernelFn tabulated(std::vector<double> abscissae, std::vector<double> values) {
    KernelFn k(Kind::Tabulated);
    if (abscissae.size() != values.size() || abscissae.size() < 2)
      throw ValidationError("tabulated kernel: need matching abscissae/values, size >= 2");
    if (!std::is_sorted(abscissae.begin(), abscissae.end()))
      throw ValidationError("tabulated kernel: abscissae must be sorted");
    if (abscissae.front() < -1.0 || abscissae.back() > 1.0)
      throw ValidationError("tabulated kernel: support must lie in [-1, 1]");
    for (double v : values)
      if (!(v >= 0.0)) throw ValidationError("tabulated kernel: values must be >= 0");
    k.xs_ = std::move(abscissae);
    k.ys_ = std::move(values);
    const double mass = gauss_legendre_64([&k](double u) { return k.raw(u); }, -1.0, 1.0);
    if (!(mass > 0.0)) throw ValidationError("tabulated kernel: zero mass");
    for (double& v : k.ys_) v /= mass;
    k.check_mass();
    return k;
  }

  Kind kind() const { return kind_; }

  double operator()(double u) const { return raw(u); }

 private:
  explicit KernelFn(Kind kind) : kind_(kind) { check_mass(); }

  double raw(double u) const {
    switch (kind_) {
      case Kind::Triweight: {
        if (u < -1.0 || u > 1.0) return 0.0;
        const double t = 1.0 - u * u;
        return (35.0 / 32.0) * t * t * t;
      }
      case Kind::Biweight: {
        if (u < -1.0 || u > 1.0) return 0.0;
        const double t = 1.0 - u * u;
        return (15.0 / 16.0) * t * t;
      }
      case Kind::Tabulated: {
        if (u <= xs_.front() || u >= xs_.back()) {
          if (u == xs_.front()) return ys_.front();
          if (u == xs_.back()) return ys_.back();
          return 0.0;
        }
        const auto it = std::upper_bound(xs_.begin(), xs_.end(), u);
        const std::size_t hi = static_cast<std::size_t>(it - xs_.begin());
        const double t = (u - xs_[hi - 1]) / (xs_[hi] - xs_[hi - 1]);
        return ys_[hi - 1] + t * (ys_[hi] - ys_[hi - 1]);
      }
    }
    return 0.0;
  }

  void check_mass() const {
    const double mass = gauss_legendre_64([this](double u) { return raw(u); }, -1.0, 1.0);
    if (std::fabs(mass - 1.0) > 1e-9)
      throw ValidationError("kernel does not integrate to 1 within 1e-9");
  }

  Kind kind_;
  std::vector<double> xs_, ys_;
};

// ---------------------------------------------------------------------------
// Weight families

/// Shared kernel-weight evaluation: K((i - center) / (n b)) for 1-based
/// index i and a real-valued window center. Used verbatim by the weight
/// family, the kernel mean smoother and the trend estimator, so those
/// agree bit for bit.
inline double kernel_weight(const KernelFn& kernel, double center, std::size_t i,
                            std::size_t n, double bandwidth) {
  return kernel((static_cast<double>(i) - center) /
                (static_cast<double>(n) * bandwidth));
}

/// 1-based inclusive index window outside which the kernel weight is zero.
inline std::pair<std::size_t, std::size_t> kernel_window(double center, std::size_t n,
                                                         double bandwidth) {
  const double radius = static_cast<double>(n) * bandwidth;
  const double lo = std::ceil(center - radius);
  const double hi = std::floor(center + radius);
  const std::size_t lo_i = lo < 1.0 ? 1 : static_cast<std::size_t>(lo);
  const std::size_t hi_i = hi > static_cast<double>(n) ? n
                           : hi < 1.0                  ? 0
                                                       : static_cast<std::size_t>(hi);
  return {lo_i, hi_i};
}

struct ConstantWeights {};

/// w_i(s) = 1{i <= floor(s n)}, s in [0, 1].
struct SequentialIndicator {};

/// w_i(s) = K((i - s n) / (n b)), s in [0, 1]. Raw (unnormalized) weights.
struct KernelWeights {
  KernelFn kernel = KernelFn::triweight();
  double bandwidth = 0.1;  // in (0, 1]
};

/// Explicit w[j][i] table over a fixed s-grid.
struct ExplicitWeights {
  std::vector<double> s_values;
  Matrix values;  // rows = s index, cols = i - 1
};

using WeightFamily =
    std::variant<ConstantWeights, SequentialIndicator, KernelWeights, ExplicitWeights>;

inline void validate(const WeightFamily& family) {
  if (const auto* kw = std::get_if<KernelWeights>(&family)) {
    if (!(kw->bandwidth > 0.0) || kw->bandwidth > 1.0)
      throw ValidationError("kernel weights: bandwidth must lie in (0, 1]");
  } else if (const auto* ew = std::get_if<ExplicitWeights>(&family)) {
    if (ew->s_values.size() != ew->values.rows())
      throw ValidationError("explicit weights: s grid / row mismatch");
    for (double v : ew->values.data())
      if (!std::isfinite(v)) throw ValidationError("explicit weights: non-finite entry");
  }
}

/// Exact weight vector w_{1..n}(s).
inline std::vector<double> weights_at(const WeightFamily& family, std::size_t n, double s) {
  validate(family);
  std::vector<double> w(n, 0.0);
  std::visit(
      [&](const auto& fam) {
        using T = std::decay_t<decltype(fam)>;
        if constexpr (std::is_same_v<T, ConstantWeights>) {
          std::fill(w.begin(), w.end(), 1.0);
        } else if constexpr (std::is_same_v<T, SequentialIndicator>) {
          if (s < 0.0 || s > 1.0)
            throw ValidationError("sequential weights: s must lie in [0, 1]");
          const auto cut = static_cast<std::size_t>(
              std::floor(s * static_cast<double>(n)));
          std::fill(w.begin(), w.begin() + std::min(cut, n), 1.0);
        } else if constexpr (std::is_same_v<T, KernelWeights>) {
          if (s < 0.0 || s > 1.0)
            throw ValidationError("kernel weights: s must lie in [0, 1]");
          const double center = s * static_cast<double>(n);
          const auto [lo, hi] = kernel_window(center, n, fam.bandwidth);
          for (std::size_t i = lo; i <= hi && hi > 0; ++i)
            w[i - 1] = kernel_weight(fam.kernel, center, i, n, fam.bandwidth);
        } else {  // ExplicitWeights
          const auto it = std::find(fam.s_values.begin(), fam.s_values.end(), s);
          if (it == fam.s_values.end())
            throw ValidationError("explicit weights: s not in declared grid");
          const auto row = static_cast<std::size_t>(it - fam.s_values.begin());
          if (fam.values.cols() != n)
            throw ValidationError("explicit weights: table has wrong length");
          for (std::size_t i = 0; i < n; ++i) w[i] = fam.values(row, i);
        }
      },
      family);
  return w;
}

/// 1-based inclusive window of indices with (possibly) nonzero weight at s.
/// Returns {1, 0} for an empty window.
inline std::pair<std::size_t, std::size_t> weight_window(const WeightFamily& family,
                                                         std::size_t n, double s) {
  return std::visit(
      [&](const auto& fam) -> std::pair<std::size_t, std::size_t> {
        using T = std::decay_t<decltype(fam)>;
        if constexpr (std::is_same_v<T, SequentialIndicator>) {
          const auto cut =
              static_cast<std::size_t>(std::floor(s * static_cast<double>(n)));
          if (cut == 0) return {1, 0};
          return {1, std::min(cut, n)};
        } else if constexpr (std::is_same_v<T, KernelWeights>) {
          return kernel_window(s * static_cast<double>(n), n, fam.bandwidth);
        } else {
          return {1, n};
        }
      },
      family);
}

/// Default s-grid for a family: the single point 0 for constant weights,
/// `count` equispaced points on [0, 1] otherwise.
inline std::vector<double> default_s_grid(const WeightFamily& family, std::size_t count = 101) {
  if (std::holds_alternative<ConstantWeights>(family)) return {0.0};
  if (const auto* ew = std::get_if<ExplicitWeights>(&family)) return ew->s_values;
  std::vector<double> s(count);
  for (std::size_t j = 0; j < count; ++j)
    s[j] = count == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(count - 1);
  return s;
}

// ---------------------------------------------------------------------------
// Function classes

/// Declared envelope: |f| <= scale * |x|^degree pointwise (degree 0 means
/// a constant envelope).
struct Envelope {
  double scale = 1.0;
  int degree = 0;
};

struct IdentityClass {};

/// f_d(x) = x^d for each d in degrees, degrees within 1..4.
struct Monomials {
  std::vector<int> degrees;
};

/// f_t(x) = 1{x < t} over a strictly increasing threshold grid.
struct IndicatorGrid {
  std::vector<double> thresholds;
};

/// f_t(Z_i) = 1{X_i < t} - 1{X_{i-L} < t}; zero for i <= L.
struct PairedIndicatorDiff {
  std::vector<double> thresholds;
  std::size_t lag = 1;
};

/// f_r(Z_i) = r-th h-step difference of X at i, looking back:
/// D_h^1 X_i = X_i - X_{i-h}, D_h^r = D_h^{r-1} X_i - D_h^{r-1} X_{i-h}.
/// Convention: f_r(Z_i) = 0 whenever h r >= i.
struct ForwardDifferences {
  std::size_t step = 1;  // h >= 1
  std::size_t max_order = 1;  // R >= 1, members r = 1..R
};

using FunctionClass =
    std::variant<IdentityClass, Monomials, IndicatorGrid, PairedIndicatorDiff,
                 ForwardDifferences>;

inline void validate(const FunctionClass& cls) {
  std::visit(
      [](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Monomials>) {
          if (c.degrees.empty()) throw ValidationError("monomials: empty degree set");
          for (int d : c.degrees)
            if (d < 1 || d > 4)
              throw ValidationError("monomials: degrees must lie in 1..4");
        } else if constexpr (std::is_same_v<T, IndicatorGrid> ||
                             std::is_same_v<T, PairedIndicatorDiff>) {
          if (c.thresholds.empty()) throw ValidationError("indicator class: no thresholds");
          for (std::size_t k = 1; k < c.thresholds.size(); ++k)
            if (!(c.thresholds[k - 1] < c.thresholds[k]))
              throw ValidationError("indicator class: thresholds must be strictly increasing");
        } else if constexpr (std::is_same_v<T, ForwardDifferences>) {
          if (c.step < 1) throw ValidationError("forward differences: step must be >= 1");
          if (c.max_order < 1)
            throw ValidationError("forward differences: max order must be >= 1");
        }
      },
      cls);
}

inline std::size_t member_count(const FunctionClass& cls) {
  return std::visit(
      [](const auto& c) -> std::size_t {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityClass>)
          return 1;
        else if constexpr (std::is_same_v<T, Monomials>)
          return c.degrees.size();
        else if constexpr (std::is_same_v<T, IndicatorGrid> ||
                           std::is_same_v<T, PairedIndicatorDiff>)
          return c.thresholds.size();
        else
          return c.max_order;
      },
      cls);
}

inline std::string member_label(const FunctionClass& cls, std::size_t k) {
  return std::visit(
      [&](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityClass>) {
          return "x";
        } else if constexpr (std::is_same_v<T, Monomials>) {
          return "x^" + std::to_string(c.degrees[k]);
        } else if constexpr (std::is_same_v<T, IndicatorGrid>) {
          return "ind_t=" + std::to_string(c.thresholds[k]);
        } else if constexpr (std::is_same_v<T, PairedIndicatorDiff>) {
          return "pairdiff_t=" + std::to_string(c.thresholds[k]);
        } else {
          return "diff_r=" + std::to_string(k + 1);
        }
      },
      cls);
}

inline Envelope envelope(const FunctionClass& cls) {
  return std::visit(
      [](const auto& c) -> Envelope {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityClass>) {
          return {1.0, 1};
        } else if constexpr (std::is_same_v<T, Monomials>) {
          return {1.0, *std::max_element(c.degrees.begin(), c.degrees.end())};
        } else if constexpr (std::is_same_v<T, IndicatorGrid>) {
          return {1.0, 0};
        } else if constexpr (std::is_same_v<T, PairedIndicatorDiff>) {
          return {1.0, 0};
        } else {
          return {std::pow(2.0, static_cast<double>(c.max_order)), 1};
        }
      },
      cls);
}

/// How far back f(Z_i) reaches into the path beyond index i itself.
inline std::size_t class_reach(const FunctionClass& cls) {
  return std::visit(
      [](const auto& c) -> std::size_t {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, PairedIndicatorDiff>)
          return c.lag;
        else if constexpr (std::is_same_v<T, ForwardDifferences>)
          return c.step * c.max_order;
        else
          return 0;
      },
      cls);
}

/// Evaluate member k at path position i (1-based) on raw values.
inline double eval_member(const FunctionClass& cls, std::size_t k,
                          const std::vector<double>& values, std::size_t i) {
  return std::visit(
      [&](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityClass>) {
          return values[i - 1];
        } else if constexpr (std::is_same_v<T, Monomials>) {
          double v = 1.0;
          for (int d = 0; d < c.degrees[k]; ++d) v *= values[i - 1];
          return v;
        } else if constexpr (std::is_same_v<T, IndicatorGrid>) {
          return values[i - 1] < c.thresholds[k] ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<T, PairedIndicatorDiff>) {
          if (i <= c.lag) return 0.0;
          const double t = c.thresholds[k];
          return (values[i - 1] < t ? 1.0 : 0.0) - (values[i - 1 - c.lag] < t ? 1.0 : 0.0);
        } else {  // ForwardDifferences
          const std::size_t r = k + 1;
          if (c.step * r >= i) return 0.0;
          // Backward binomial expansion: sum_j (-1)^j C(r, j) X_{i - j h}.
          double v = 0.0;
          double binom = 1.0;
          for (std::size_t j = 0; j <= r; ++j) {
            v += (j % 2 == 0 ? binom : -binom) * values[i - 1 - j * c.step];
            binom = binom * static_cast<double>(r - j) / static_cast<double>(j + 1);
          }
          return v;
        }
      },
      cls);
}

/// Evaluate all members at all positions: n x K matrix.
inline Matrix eval_class(const FunctionClass& cls, const std::vector<double>& values) {
  validate(cls);
  const std::size_t n = values.size();
  const std::size_t count = member_count(cls);
  Matrix out(n, count);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t k = 0; k < count; ++k) out(i - 1, k) = eval_member(cls, k, values, i);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation grid and surfaces

/// Finite evaluation grid: the (s, f) product the processes are evaluated
/// over. Row dimension is s, column dimension enumerates class members.
struct EvalGrid {
  std::vector<double> s_values;
  std::vector<std::string> f_labels;

  std::size_t s_count() const { return s_values.size(); }
  std::size_t f_count() const { return f_labels.size(); }
  std::size_t flat_size() const { return s_count() * f_count(); }

  bool operator==(const EvalGrid&) const = default;
};

inline EvalGrid make_grid(const FunctionClass& cls, std::vector<double> s_values) {
  validate(cls);
  if (s_values.empty()) throw ValidationError("grid: s values must be nonempty");
  if (!std::is_sorted(s_values.begin(), s_values.end()))
    throw ValidationError("grid: s values must be sorted");
  EvalGrid g;
  g.s_values = std::move(s_values);
  const std::size_t count = member_count(cls);
  g.f_labels.reserve(count);
  for (std::size_t k = 0; k < count; ++k) g.f_labels.push_back(member_label(cls, k));
  return g;
}

inline EvalGrid make_grid(const FunctionClass& cls, const WeightFamily& family,
                          std::size_t s_count = 101) {
  return make_grid(cls, default_s_grid(family, s_count));
}

enum class Provenance { Empirical, Bootstrap, Gaussian };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Empirical: return "empirical";
    case Provenance::Bootstrap: return "bootstrap";
    case Provenance::Gaussian: return "gaussian";
  }
  return "?";
}

/// Values of a weighted process over an EvalGrid; (j, k) is (s_j, f_k).
struct Surface {
  EvalGrid grid;
  Matrix values;  // s_count x f_count
  Provenance provenance = Provenance::Empirical;

  double operator()(std::size_t j, std::size_t k) const { return values(j, k); }
};

/// Centering c_{i,k} subtracted from f_k(X_i): zero, or an explicit
/// n x K matrix (exact oracle path or an estimated path).
struct CenteringSpec {
  static CenteringSpec zero() { return CenteringSpec{}; }
  static CenteringSpec path(Matrix m) {
    CenteringSpec c;
    c.matrix = std::move(m);
    return c;
  }
  std::optional<Matrix> matrix;  // nullopt = zero centering
};

namespace detail {

/// Core kernel shared by empirical and bootstrap surfaces: values are
/// (f_k(Z_i) - c_{i,k}), optionally multiplied per index by `factors`
/// (bootstrap multipliers).
inline Matrix weighted_process(const Matrix& residuals, const WeightFamily& family,
                               const EvalGrid& grid, const std::vector<double>* factors) {
  const std::size_t n = residuals.rows();
  const std::size_t kcount = residuals.cols();
  if (kcount != grid.f_count())
    throw ValidationError("surface: grid / class member count mismatch");
  Matrix out(grid.s_count(), kcount, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> w;
  for (std::size_t j = 0; j < grid.s_count(); ++j) {
    const double s = grid.s_values[j];
    w = weights_at(family, n, s);
    const auto [lo, hi] = weight_window(family, n, s);
    for (std::size_t i = lo; i <= hi && hi > 0; ++i) {
      double wi = w[i - 1];
      if (wi == 0.0) continue;
      if (factors) wi *= (*factors)[i - 1];
      for (std::size_t k = 0; k < kcount; ++k) out(j, k) += wi * residuals(i - 1, k);
    }
    for (std::size_t k = 0; k < kcount; ++k) out(j, k) *= scale;
  }
  return out;
}

inline Matrix residual_matrix(const FunctionClass& cls, const std::vector<double>& values,
                              const CenteringSpec& centering) {
  Matrix r = eval_class(cls, values);
  if (centering.matrix) {
    const Matrix& c = *centering.matrix;
    if (c.rows() != r.rows() || c.cols() != r.cols())
      throw ValidationError("centering: matrix shape mismatch");
    for (std::size_t i = 0; i < r.rows(); ++i)
      for (std::size_t k = 0; k < r.cols(); ++k) r(i, k) -= c(i, k);
  }
  return r;
}

}  // namespace detail

/// Weighted empirical process over the grid:
///   G(s_j, f_k) = n^{-1/2} sum_i w_i(s_j) (f_k(X_i) - c_{i,k}).
/// Kernel-weight locality is exploited: only indices in the support
/// window of s_j contribute.
inline Surface empirical_surface(const std::vector<double>& values, const FunctionClass& cls,
                                 const WeightFamily& family, const EvalGrid& grid,
                                 const CenteringSpec& centering = CenteringSpec::zero()) {
  validate(family);
  const Matrix residuals = detail::residual_matrix(cls, values, centering);
  Surface s;
  s.grid = grid;
  s.values = detail::weighted_process(residuals, family, grid, nullptr);
  s.provenance = Provenance::Empirical;
  return s;
}

/// Max of |entries| over the grid; 0 for an empty surface.
inline double sup_norm(const Surface& surface) {
  double m = 0.0;
  for (double v : surface.values.data()) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace nonstat
