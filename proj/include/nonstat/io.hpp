#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nonstat/bootstrap.hpp"
#include "nonstat/core.hpp"
#include "nonstat/dgp.hpp"
#include "nonstat/gaussian.hpp"
#include "nonstat/inference.hpp"
#include "nonstat/mc.hpp"
#include "nonstat/procspace.hpp"
#include "nonstat/version.hpp"

namespace nonstat::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting: shortest-exact is not required, 17 significant
// digits round-trip doubles bit for bit and keep files diffable.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config access helpers: errors name the offending key.

class ConfigView {
 public:
  ConfigView(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  ConfigView at(const std::string& key) const {
    if (!j_->is_object() || !j_->contains(key))
      throw ValidationError("config: missing key '" + join(key) + "'");
    return ConfigView((*j_)[key], join(key));
  }

  ConfigView at_or(const std::string& key, const json& fallback) const {
    if (has(key)) return at(key);
    return ConfigView(fallback, join(key));
  }

  double as_double() const {
    if (!j_->is_number()) throw ValidationError("config: key '" + path_ + "' must be a number");
    return j_->get<double>();
  }
  double get_double(const std::string& key) const { return at(key).as_double(); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? at(key).as_double() : fallback;
  }

  std::size_t as_size() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long long>() >= 0))
      throw ValidationError("config: key '" + path_ + "' must be a nonnegative integer");
    return j_->get<std::size_t>();
  }
  std::size_t get_size(const std::string& key) const { return at(key).as_size(); }
  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return has(key) ? at(key).as_size() : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean())
      throw ValidationError("config: key '" + join(key) + "' must be a boolean");
    return v.get<bool>();
  }

  std::string as_string() const {
    if (!j_->is_string()) throw ValidationError("config: key '" + path_ + "' must be a string");
    return j_->get<std::string>();
  }
  std::string get_string(const std::string& key) const { return at(key).as_string(); }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? at(key).as_string() : fallback;
  }

  std::vector<double> as_double_vector() const {
    if (!j_->is_array())
      throw ValidationError("config: key '" + path_ + "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(j_->size());
    for (const auto& v : *j_) {
      if (!v.is_number())
        throw ValidationError("config: key '" + path_ + "' must contain only numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }

  const json& raw() const { return *j_; }
  const json& raw(const std::string& key) const { return (*j_)[key]; }
  const std::string& path() const { return path_; }

 private:
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const json* j_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// PathRule <-> JSON

inline json to_json(const PathRule& p) {
  switch (p.kind()) {
    case PathRule::Kind::Constant:
      return {{"kind", "constant"}, {"value", p.constant_value()}};
    case PathRule::Kind::Polynomial:
      return {{"kind", "polynomial"}, {"coeffs", p.coefficients()}};
    case PathRule::Kind::Sinusoid:
      return {{"kind", "sinusoid"},
              {"amplitude", p.amplitude()},
              {"cycles", p.cycles()},
              {"phase", p.phase()},
              {"offset", p.offset()}};
    case PathRule::Kind::Step:
      return {{"kind", "step"},
              {"at", p.step_at()},
              {"before", p.step_before()},
              {"after", p.step_after()}};
    case PathRule::Kind::Explicit:
      return {{"kind", "explicit"}, {"values", p.explicit_data()}};
  }
  return {};
}

inline PathRule path_from_config(const ConfigView& c) {
  if (c.raw().is_number()) return PathRule::constant(c.as_double());
  const std::string kind = c.get_string("kind");
  if (kind == "constant") return PathRule::constant(c.get_double("value"));
  if (kind == "polynomial") return PathRule::polynomial(c.at("coeffs").as_double_vector());
  if (kind == "sinusoid")
    return PathRule::sinusoid(c.get_double("amplitude"), c.get_double("cycles"),
                              c.get_double("phase", 0.0), c.get_double("offset", 0.0));
  if (kind == "step")
    return PathRule::step(c.get_double("at"), c.get_double("before"), c.get_double("after"));
  if (kind == "explicit") return PathRule::explicit_values(c.at("values").as_double_vector());
  throw ValidationError("config: key '" + c.path() + ".kind' has unknown path kind '" + kind +
                        "'");
}

// ---------------------------------------------------------------------------
// ProcessSpec <-> JSON

inline json to_json(const ProcessSpec& spec);

namespace detail_io {

inline json variant_to_json(const ProcessVariant& v) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IndepHetero>) {
          return {{"kind", "indep_hetero"},
                  {"sigma", to_json(s.sigma)},
                  {"mean", to_json(s.mean)},
                  {"innovation", s.innovation == Innovation::Gaussian ? "gaussian"
                                                                      : "centered_exponential"}};
        } else if constexpr (std::is_same_v<T, RegimeVariance>) {
          json pattern;
          if (s.pattern.rule == RegimePattern::Rule::FixedFraction)
            pattern = {{"rule", "fixed_fraction"}, {"fraction", s.pattern.fraction}};
          else
            pattern = {{"rule", "oscillating_dyadic"}};
          return {{"kind", "regime_variance"},
                  {"sigma1_sq", s.sigma1_sq},
                  {"sigma2_sq", s.sigma2_sq},
                  {"pattern", pattern}};
        } else if constexpr (std::is_same_v<T, TVAR1>) {
          return {{"kind", "tvar1"},
                  {"phi", to_json(s.phi)},
                  {"sigma", to_json(s.sigma)},
                  {"mean", to_json(s.mean)},
                  {"phi_max", s.phi_max}};
        } else if constexpr (std::is_same_v<T, MDependentMA>) {
          json coeffs = json::array();
          for (const auto& c : s.coeffs) coeffs.push_back(to_json(c));
          return {{"kind", "mdependent_ma"},
                  {"m", s.m},
                  {"coeffs", coeffs},
                  {"mean", to_json(s.mean)}};
        } else {  // TrendPlusNoise
          return {{"kind", "trend_plus_noise"},
                  {"mean", to_json(s.mean)},
                  {"noise", to_json(s.noise)}};
        }
      },
      v);
}

}  // namespace detail_io

inline json to_json(const ProcessSpec& spec) {
  json j = detail_io::variant_to_json(spec.variant());
  if (!spec.id.empty()) j["id"] = spec.id;
  return j;
}

inline ProcessSpec spec_from_config(const ConfigView& c) {
  const std::string kind = c.get_string("kind");
  ProcessVariant v;
  if (kind == "indep_hetero") {
    IndepHetero s;
    s.sigma = path_from_config(c.at("sigma"));
    s.mean = c.has("mean") ? path_from_config(c.at("mean")) : PathRule::constant(0.0);
    const std::string innov = c.get_string("innovation", "gaussian");
    if (innov == "gaussian")
      s.innovation = Innovation::Gaussian;
    else if (innov == "centered_exponential")
      s.innovation = Innovation::CenteredExponential;
    else
      throw ValidationError("config: key '" + c.path() + ".innovation' unknown value '" +
                            innov + "'");
    v = s;
  } else if (kind == "regime_variance") {
    RegimeVariance s;
    s.sigma1_sq = c.get_double("sigma1_sq");
    s.sigma2_sq = c.get_double("sigma2_sq");
    const ConfigView p = c.at("pattern");
    const std::string rule = p.get_string("rule");
    if (rule == "fixed_fraction") {
      s.pattern.rule = RegimePattern::Rule::FixedFraction;
      s.pattern.fraction = p.get_double("fraction");
    } else if (rule == "oscillating_dyadic") {
      s.pattern.rule = RegimePattern::Rule::OscillatingDyadic;
    } else {
      throw ValidationError("config: key '" + p.path() + ".rule' unknown value '" + rule + "'");
    }
    v = s;
  } else if (kind == "tvar1") {
    TVAR1 s;
    s.phi = path_from_config(c.at("phi"));
    s.sigma = path_from_config(c.at("sigma"));
    s.mean = c.has("mean") ? path_from_config(c.at("mean")) : PathRule::constant(0.0);
    s.phi_max = c.get_double("phi_max", 0.99);
    v = s;
  } else if (kind == "mdependent_ma") {
    MDependentMA s;
    s.m = c.get_size("m");
    const json& coeffs = c.raw("coeffs");
    if (!c.has("coeffs") || !coeffs.is_array())
      throw ValidationError("config: key '" + c.path() + ".coeffs' must be an array");
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      s.coeffs.push_back(
          path_from_config(ConfigView(coeffs[k], c.path() + ".coeffs[" + std::to_string(k) + "]")));
    s.mean = c.has("mean") ? path_from_config(c.at("mean")) : PathRule::constant(0.0);
    v = s;
  } else if (kind == "trend_plus_noise") {
    TrendPlusNoise s;
    s.mean = path_from_config(c.at("mean"));
    s.noise = spec_from_config(c.at("noise"));
    v = s;
  } else {
    throw ValidationError("config: key '" + c.path() + ".kind' unknown spec kind '" + kind +
                          "'");
  }
  ProcessSpec spec(std::move(v));
  spec.id = c.get_string("id", "");
  return spec;
}

// ---------------------------------------------------------------------------
// FunctionClass / WeightFamily / MultiplierSpec <-> JSON

inline std::vector<double> thresholds_from_config(const ConfigView& c) {
  if (c.has("thresholds")) return c.at("thresholds").as_double_vector();
  if (c.has("range")) {
    const ConfigView r = c.at("range");
    return threshold_grid(r.get_double("lo"), r.get_double("hi"), r.get_double("step"));
  }
  throw ValidationError("config: key '" + c.path() + "' needs 'thresholds' or 'range'");
}

inline json to_json(const FunctionClass& cls) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, IdentityClass>) {
          return {{"kind", "identity"}};
        } else if constexpr (std::is_same_v<T, Monomials>) {
          return {{"kind", "monomials"}, {"degrees", c.degrees}};
        } else if constexpr (std::is_same_v<T, IndicatorGrid>) {
          return {{"kind", "indicator_grid"}, {"thresholds", c.thresholds}};
        } else if constexpr (std::is_same_v<T, PairedIndicatorDiff>) {
          return {{"kind", "paired_indicator_diff"},
                  {"lag", c.lag},
                  {"thresholds", c.thresholds}};
        } else {
          return {{"kind", "forward_differences"}, {"step", c.step}, {"max_order", c.max_order}};
        }
      },
      cls);
}

inline FunctionClass class_from_config(const ConfigView& c) {
  const std::string kind = c.get_string("kind");
  if (kind == "identity") return IdentityClass{};
  if (kind == "monomials") {
    Monomials m;
    for (double d : c.at("degrees").as_double_vector()) m.degrees.push_back(static_cast<int>(d));
    return m;
  }
  if (kind == "indicator_grid") return IndicatorGrid{thresholds_from_config(c)};
  if (kind == "paired_indicator_diff")
    return PairedIndicatorDiff{thresholds_from_config(c), c.get_size("lag")};
  if (kind == "forward_differences")
    return ForwardDifferences{c.get_size("step", 1), c.get_size("max_order", 1)};
  throw ValidationError("config: key '" + c.path() + ".kind' unknown class kind '" + kind + "'");
}

inline json to_json(const KernelFn& kernel) {
  switch (kernel.kind()) {
    case KernelFn::Kind::Triweight: return "triweight";
    case KernelFn::Kind::Biweight: return "biweight";
    case KernelFn::Kind::Tabulated: return "tabulated";
  }
  return "triweight";
}

inline KernelFn kernel_from_config(const ConfigView& c) {
  const std::string name = c.raw().is_string() ? c.as_string() : c.get_string("kind");
  if (name == "triweight") return KernelFn::triweight();
  if (name == "biweight") return KernelFn::biweight();
  throw ValidationError("config: key '" + c.path() + "' unknown kernel '" + name + "'");
}

inline json to_json(const WeightFamily& family) {
  return std::visit(
      [](const auto& f) -> json {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, ConstantWeights>) {
          return {{"kind", "constant"}};
        } else if constexpr (std::is_same_v<T, SequentialIndicator>) {
          return {{"kind", "sequential"}};
        } else if constexpr (std::is_same_v<T, KernelWeights>) {
          return {{"kind", "kernel"}, {"kernel", to_json(f.kernel)}, {"bandwidth", f.bandwidth}};
        } else {
          json rows = json::array();
          for (std::size_t r = 0; r < f.values.rows(); ++r) {
            json row = json::array();
            for (std::size_t i = 0; i < f.values.cols(); ++i) row.push_back(f.values(r, i));
            rows.push_back(row);
          }
          return {{"kind", "explicit"}, {"s_values", f.s_values}, {"rows", rows}};
        }
      },
      family);
}

inline WeightFamily family_from_config(const ConfigView& c) {
  const std::string kind = c.get_string("kind");
  if (kind == "constant") return ConstantWeights{};
  if (kind == "sequential") return SequentialIndicator{};
  if (kind == "kernel") {
    KernelWeights k;
    if (c.has("kernel")) k.kernel = kernel_from_config(c.at("kernel"));
    k.bandwidth = c.get_double("bandwidth");
    return k;
  }
  if (kind == "explicit") {
    ExplicitWeights e;
    e.s_values = c.at("s_values").as_double_vector();
    const json& rows = c.raw("rows");
    if (!c.has("rows") || !rows.is_array() || rows.empty())
      throw ValidationError("config: key '" + c.path() + ".rows' must be a nonempty array");
    const std::size_t cols = rows[0].size();
    e.values = Matrix(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || rows[r].size() != cols)
        throw ValidationError("config: key '" + c.path() + ".rows' must be rectangular");
      for (std::size_t i = 0; i < cols; ++i) e.values(r, i) = rows[r][i].get<double>();
    }
    return e;
  }
  throw ValidationError("config: key '" + c.path() + ".kind' unknown family kind '" + kind +
                        "'");
}

inline json to_json(const MultiplierSpec& mspec) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IIDGaussianMultipliers>) {
          return {{"kind", "iid_gaussian"}};
        } else {
          json j = {{"kind", "block_exponential"}, {"unit_variance", m.unit_variance}};
          if (m.m_explicit)
            j["m"] = *m.m_explicit;
          else
            j["m"] = "cuberoot";
          return j;
        }
      },
      mspec);
}

inline MultiplierSpec multiplier_from_config(const ConfigView& c) {
  const std::string kind = c.get_string("kind", "block_exponential");
  if (kind == "iid_gaussian") return IIDGaussianMultipliers{};
  if (kind == "block_exponential") {
    BlockExponentialMultipliers b;
    if (c.has("m") && !c.raw("m").is_string()) b.m_explicit = c.get_size("m");
    b.unit_variance = c.get_bool("unit_variance", false);
    return b;
  }
  throw ValidationError("config: key '" + c.path() + ".kind' unknown multiplier kind '" + kind +
                        "'");
}

inline ExperimentConfig::Centering centering_from_config(const ConfigView& c,
                                                         ExperimentConfig::Centering fallback) {
  if (!c.raw().is_object() && !c.raw().is_string()) return fallback;
  const std::string kind = c.raw().is_string() ? c.as_string() : c.get_string("kind");
  if (kind == "zero") return ExperimentConfig::Centering::Zero;
  if (kind == "known_path") return ExperimentConfig::Centering::KnownPath;
  if (kind == "kernel_smoother") return ExperimentConfig::Centering::KernelSmoother;
  throw ValidationError("config: key '" + c.path() + "' unknown centering kind '" + kind + "'");
}

inline json to_json(ExperimentConfig::Centering c, double bandwidth) {
  switch (c) {
    case ExperimentConfig::Centering::Zero: return {{"kind", "zero"}};
    case ExperimentConfig::Centering::KnownPath: return {{"kind", "known_path"}};
    case ExperimentConfig::Centering::KernelSmoother:
      return {{"kind", "kernel_smoother"}, {"bandwidth", bandwidth}};
  }
  return {{"kind", "zero"}};
}

// ---------------------------------------------------------------------------
// Reports -> JSON

inline json to_json(const Proportion& p) {
  return {{"successes", p.successes},
          {"trials", p.trials},
          {"fraction", p.fraction},
          {"wilson_lower", p.lower},
          {"wilson_upper", p.upper}};
}

inline json to_json(const DistanceReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back(
        {{"n", row.n}, {"distance", row.distance}, {"noise_floor", row.noise_floor}});
  return {{"rows", rows},
          {"threshold", r.threshold},
          {"final_bound", r.final_bound()},
          {"inversions", r.inversions},
          {"monotone_ok", r.monotone_ok},
          {"final_ok", r.final_ok},
          {"pass", r.pass},
          {"control_distance", r.control_distance},
          {"control_threshold", r.control_threshold},
          {"control_detected", r.control_detected},
          {"note", r.note}};
}

inline json to_json(const TestReport& r) {
  return {{"statistic", r.statistic},
          {"critical_value", r.critical_value},
          {"p_value", r.p_value},
          {"reject", r.reject},
          {"alpha", r.alpha},
          {"replicates", r.replicates},
          {"sup_norms", r.sup_norms},
          {"config_echo", r.config_echo}};
}

inline json to_json(const CoverageReport& r) {
  return {{"coverage", to_json(r.coverage)},
          {"bandwidth", r.bandwidth},
          {"alpha", r.alpha},
          {"n", r.n}};
}

inline json to_json(const LevelPowerReport& r) {
  return {{"level", to_json(r.level)}, {"power", to_json(r.power)}, {"alpha", r.alpha}};
}

// ---------------------------------------------------------------------------
// CSV writers (schema versioned in a comment header; '#' lines are
// ignored by the readers)

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw ValidationError("write failed: " + path.string());
}

inline std::string series_to_csv(const TimeSeriesSample& sample) {
  std::ostringstream out;
  out << "# nonstat-series v1\n";
  out << "index,value\n";
  for (std::size_t i = 0; i < sample.values.size(); ++i)
    out << (i + 1) << ',' << format_double(sample.values[i]) << '\n';
  return out.str();
}

inline std::string surface_to_csv(const Surface& s) {
  std::ostringstream out;
  out << "# nonstat-surface v1 provenance=" << to_string(s.provenance) << "\n";
  out << "s";
  for (const auto& label : s.grid.f_labels) out << ',' << label;
  out << '\n';
  for (std::size_t j = 0; j < s.grid.s_count(); ++j) {
    out << format_double(s.grid.s_values[j]);
    for (std::size_t k = 0; k < s.grid.f_count(); ++k)
      out << ',' << format_double(s.values(j, k));
    out << '\n';
  }
  return out.str();
}

inline json surface_to_json(const Surface& s) {
  json rows = json::array();
  for (std::size_t j = 0; j < s.grid.s_count(); ++j) {
    json row = json::array();
    for (std::size_t k = 0; k < s.grid.f_count(); ++k) row.push_back(s.values(j, k));
    rows.push_back(row);
  }
  return {{"provenance", to_string(s.provenance)},
          {"s_values", s.grid.s_values},
          {"f_labels", s.grid.f_labels},
          {"values", rows}};
}

/// Row-major CSV of the covariance matrix, plus a JSON metadata blob.
inline std::string covariance_to_csv(const CovarianceModel& m) {
  std::ostringstream out;
  out << "# nonstat-covariance v1 dim=" << m.dim() << "\n";
  for (std::size_t r = 0; r < m.matrix.rows(); ++r) {
    for (std::size_t c = 0; c < m.matrix.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m.matrix(r, c));
    }
    out << '\n';
  }
  return out.str();
}

inline json covariance_metadata(const CovarianceModel& m) {
  return {{"dim", m.dim()},
          {"s_values", m.grid.s_values},
          {"f_labels", m.grid.f_labels},
          {"source",
           m.source == CovarianceModel::Source::ExactOracle ? "exact-oracle"
                                                            : "monte-carlo-estimate"},
          {"mc_replicates", m.mc_replicates}};
}

inline std::string band_to_csv(const TrendBand& band) {
  std::ostringstream out;
  out << "# nonstat-trend-band v1\n";
  out << "s,estimate,lower,upper\n";
  for (std::size_t i = 0; i < band.s_grid.size(); ++i)
    out << format_double(band.s_grid[i]) << ',' << format_double(band.estimate[i]) << ','
        << format_double(band.lower[i]) << ',' << format_double(band.upper[i]) << '\n';
  return out.str();
}

inline json band_metadata(const TrendBand& band) {
  return {{"q_hat", band.q_hat},
          {"alpha", band.alpha},
          {"replicates", band.replicates},
          {"bandwidth", band.bandwidth},
          {"scaled_width", band.scaled_width},
          {"sup_norms", band.sup_norms}};
}

inline std::string bootstrap_run_to_csv(const BootstrapRun& run) {
  std::ostringstream out;
  out << "# nonstat-bootstrap-run v1 B=" << run.replicates << " alpha="
      << format_double(run.alpha) << "\n";
  out << "sup_norm\n";
  for (double v : run.sup_norms) out << format_double(v) << '\n';
  return out.str();
}

inline std::string distance_rows_to_csv(const DistanceReport& r) {
  std::ostringstream out;
  out << "# nonstat-distance v1\n";
  out << "n,distance,noise_floor\n";
  for (const auto& row : r.rows)
    out << row.n << ',' << format_double(row.distance) << ','
        << format_double(row.noise_floor) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Data ingestion

/// One monthly observation; `missing` marks dropped values.
struct AnomalyRecord {
  int year = 0;
  int month = 1;  // 1..12
  double value = 0.0;
  bool missing = false;
};

struct IngestResult {
  TimeSeriesSample sample;
  std::vector<AnomalyRecord> records;  // chronological, missing included
  std::size_t dropped = 0;
};

enum class IngestFormat { Auto, GistempWide, LongTriplet, SeriesCsv };

namespace detail_io {

inline bool is_missing_token(const std::string& tok) {
  if (tok.empty()) return true;
  if (tok == "NA" || tok == "nan" || tok == "NaN") return true;
  for (char ch : tok)
    if (ch != '*') return false;
  return true;  // "***" style markers
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("parse error at line " + std::to_string(line_no) +
                          ": not a number: '" + tok + "'");
  }
}

inline long parse_int(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("parse error at line " + std::to_string(line_no) +
                          ": not an integer: '" + tok + "'");
  }
}

}  // namespace detail_io

/// Long format: one (year, month, value) row per observation, optional
/// header. Rows must be chronological.
inline IngestResult ingest_long_triplet(std::istream& in) {
  IngestResult out;
  std::string line;
  std::size_t line_no = 0;
  long last_key = std::numeric_limits<long>::min();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail_io::split_csv_line(line);
    if (cells.empty()) continue;
    if (!cells[0].empty() && !std::isdigit(static_cast<unsigned char>(cells[0][0])) &&
        cells[0][0] != '-') {
      continue;  // header row
    }
    if (cells.size() < 3)
      throw ValidationError("parse error at line " + std::to_string(line_no) +
                            ": expected year,month,value");
    AnomalyRecord rec;
    rec.year = static_cast<int>(detail_io::parse_int(cells[0], line_no));
    rec.month = static_cast<int>(detail_io::parse_int(cells[1], line_no));
    if (rec.month < 1 || rec.month > 12)
      throw ValidationError("parse error at line " + std::to_string(line_no) +
                            ": month out of range");
    const long key = static_cast<long>(rec.year) * 12 + rec.month;
    if (key <= last_key)
      throw ValidationError("parse error at line " + std::to_string(line_no) +
                            ": dates not strictly increasing");
    last_key = key;
    if (detail_io::is_missing_token(cells[2])) {
      rec.missing = true;
      ++out.dropped;
    } else {
      rec.value = detail_io::parse_number(cells[2], line_no);
    }
    out.records.push_back(rec);
  }
  for (const auto& r : out.records)
    if (!r.missing) out.sample.values.push_back(r.value);
  if (out.sample.values.empty()) throw ValidationError("ingest: no usable observations");
  out.sample.spec_id = "ingested";
  return out;
}

/// Wide format: one row per year with 12 monthly columns after the year
/// column (extra seasonal columns are ignored). Preamble lines before
/// the "Year,..." header are skipped; "***" style markers are missing.
inline IngestResult ingest_gistemp_wide(std::istream& in) {
  IngestResult out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  int last_year = std::numeric_limits<int>::min();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail_io::split_csv_line(line);
    if (!seen_header) {
      if (!cells.empty() && (cells[0] == "Year" || cells[0] == "year")) seen_header = true;
      continue;
    }
    if (cells.empty() || cells[0].empty()) continue;
    if (!std::isdigit(static_cast<unsigned char>(cells[0][0]))) continue;  // footer text
    if (cells.size() < 13)
      throw ValidationError("parse error at line " + std::to_string(line_no) +
                            ": expected a year and 12 monthly columns");
    const int year = static_cast<int>(detail_io::parse_int(cells[0], line_no));
    if (year <= last_year)
      throw ValidationError("parse error at line " + std::to_string(line_no) +
                            ": years not strictly increasing");
    last_year = year;
    for (int month = 1; month <= 12; ++month) {
      AnomalyRecord rec;
      rec.year = year;
      rec.month = month;
      const std::string& tok = cells[static_cast<std::size_t>(month)];
      if (detail_io::is_missing_token(tok)) {
        rec.missing = true;
        ++out.dropped;
      } else {
        rec.value = detail_io::parse_number(tok, line_no);
      }
      out.records.push_back(rec);
    }
  }
  if (!seen_header) throw ValidationError("ingest: no 'Year' header found in wide file");
  for (const auto& r : out.records)
    if (!r.missing) out.sample.values.push_back(r.value);
  if (out.sample.values.empty()) throw ValidationError("ingest: no usable observations");
  out.sample.spec_id = "ingested";
  return out;
}

/// Two-column (index, value) format as written by series_to_csv.
inline IngestResult ingest_series_csv(std::istream& in) {
  IngestResult out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail_io::split_csv_line(line);
    if (cells.empty()) continue;
    if (!cells[0].empty() && !std::isdigit(static_cast<unsigned char>(cells[0][0])) &&
        cells[0][0] != '-')
      continue;  // header
    if (cells.size() < 2)
      throw ValidationError("parse error at line " + std::to_string(line_no) +
                            ": expected index,value");
    out.sample.values.push_back(detail_io::parse_number(cells[1], line_no));
  }
  if (out.sample.values.empty()) throw ValidationError("ingest: no usable observations");
  out.sample.spec_id = "ingested";
  return out;
}

inline IngestResult ingest_csv(const std::filesystem::path& path,
                               IngestFormat format = IngestFormat::Auto) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file: " + path.string());
  if (format == IngestFormat::Auto) {
    // Sniff: a "Year,..." header (possibly after preamble) means wide;
    // three columns mean long triplet; two mean a plain series.
    std::string line;
    std::size_t checked = 0;
    IngestFormat detected = IngestFormat::SeriesCsv;
    while (std::getline(in, line) && checked < 64) {
      if (line.empty() || line[0] == '#') continue;
      const auto cells = detail_io::split_csv_line(line);
      if (!cells.empty() && (cells[0] == "Year" || cells[0] == "year")) {
        detected = IngestFormat::GistempWide;
        break;
      }
      if (!cells.empty() && !cells[0].empty() &&
          (std::isdigit(static_cast<unsigned char>(cells[0][0])) || cells[0][0] == '-')) {
        if (cells.size() >= 13)
          detected = IngestFormat::GistempWide;
        else if (cells.size() == 3)
          detected = IngestFormat::LongTriplet;
        else
          detected = IngestFormat::SeriesCsv;
        break;
      }
      ++checked;
    }
    in.clear();
    in.seekg(0);
    format = detected;
  }
  switch (format) {
    case IngestFormat::GistempWide: return ingest_gistemp_wide(in);
    case IngestFormat::LongTriplet: return ingest_long_triplet(in);
    case IngestFormat::SeriesCsv: return ingest_series_csv(in);
    case IngestFormat::Auto: break;
  }
  throw ValidationError("ingest: unreachable format state");
}

inline std::string records_to_long_triplet_csv(const std::vector<AnomalyRecord>& records) {
  std::ostringstream out;
  out << "# nonstat-anomalies v1\n";
  out << "year,month,value\n";
  for (const auto& r : records) {
    out << r.year << ',' << r.month << ',';
    if (r.missing)
      out << "***";
    else
      out << format_double(r.value);
    out << '\n';
  }
  return out.str();
}

}  // namespace nonstat::io
