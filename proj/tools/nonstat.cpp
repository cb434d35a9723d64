// Command-line surface for the nonstat toolkit: simulation, matched-
// Gaussian distance checks, bootstrap diagnostics, trend bands, sup-type
// tests and the Monte Carlo experiments, all driven by a single JSON
// config document plus a handful of flags.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nonstat/impute.hpp"
#include "nonstat/io.hpp"
#include "nonstat/mc.hpp"
#include "nonstat/version.hpp"

namespace fs = std::filesystem;
using nonstat::io::ConfigView;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::string data_path;
  std::string data_format = "auto";
  std::string impute = "none";
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::size_t threads = 1;
};

json load_config(const GlobalOptions& opt) {
  if (opt.config_path.empty()) return json::object();
  std::ifstream in(opt.config_path);
  if (!in) throw nonstat::ValidationError("cannot open config file: " + opt.config_path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw nonstat::ValidationError("config parse error in " + opt.config_path + ": " +
                                   e.what());
  }
  if (!j.is_object()) throw nonstat::ValidationError("config: top level must be an object");
  return j;
}

std::uint64_t resolve_seed(const GlobalOptions& opt, const ConfigView& c) {
  if (opt.seed_given) return opt.seed;
  if (c.has("seed")) return static_cast<std::uint64_t>(c.get_size("seed"));
  return opt.seed;
}

nonstat::io::IngestFormat parse_format(const std::string& name) {
  if (name == "auto") return nonstat::io::IngestFormat::Auto;
  if (name == "gistemp-wide") return nonstat::io::IngestFormat::GistempWide;
  if (name == "long-triplet") return nonstat::io::IngestFormat::LongTriplet;
  if (name == "series") return nonstat::io::IngestFormat::SeriesCsv;
  throw nonstat::ValidationError("unknown --format value: " + name);
}

/// Load --data (with missing-value policy) or simulate from the config's
/// spec and n. Returns the values and a provenance string.
std::pair<std::vector<double>, std::string> resolve_input_series(const GlobalOptions& opt,
                                                                 const ConfigView& c,
                                                                 std::uint64_t seed) {
  if (!opt.data_path.empty()) {
    auto result = nonstat::io::ingest_csv(opt.data_path, parse_format(opt.data_format));
    if (result.dropped > 0) {
      if (opt.impute == "linear") {
        std::cerr << "note: imputing " << result.dropped << " missing value(s) linearly\n";
        return {nonstat::io::impute_linear(result.records), opt.data_path};
      }
      std::cerr << "warning: dropped " << result.dropped << " missing value(s)\n";
    }
    return {std::move(result.sample.values), opt.data_path};
  }
  if (!c.has("spec"))
    throw nonstat::ValidationError("config: missing key 'spec' (or pass --data)");
  const nonstat::ProcessSpec spec = nonstat::io::spec_from_config(c.at("spec"));
  const std::size_t n = c.get_size("n");
  const nonstat::rng::Stream stream = nonstat::rng::Stream(seed).child(0xDA7A);
  return {nonstat::simulate_path(spec, n, stream).values, "simulated"};
}

nonstat::Statistic statistic_from_config(const ConfigView& c) {
  nonstat::Statistic stat;
  if (!c.has("statistic")) return stat;
  const ConfigView s = c.at("statistic");
  const std::string kind = s.raw().is_string() ? s.as_string() : s.get_string("kind");
  if (kind == "sup_norm") {
    stat.kind = nonstat::Statistic::Kind::SupNorm;
  } else if (kind == "marginal") {
    stat.kind = nonstat::Statistic::Kind::Marginal;
    stat.s_index = s.raw().is_string() ? 0 : s.get_size("s_index", 0);
    stat.f_index = s.raw().is_string() ? 0 : s.get_size("f_index", 0);
  } else {
    throw nonstat::ValidationError("config: key 'statistic' unknown kind '" + kind + "'");
  }
  return stat;
}

json statistic_to_json(const nonstat::Statistic& stat) {
  if (stat.kind == nonstat::Statistic::Kind::SupNorm) return {{"kind", "sup_norm"}};
  return {{"kind", "marginal"}, {"s_index", stat.s_index}, {"f_index", stat.f_index}};
}

/// Writer that collects artifact names for the manifest and emits the
/// manifest last.
class RunEmitter {
 public:
  RunEmitter(std::string subcommand, const GlobalOptions& opt, std::uint64_t seed)
      : subcommand_(std::move(subcommand)), out_dir_(opt.out_dir), seed_(seed),
        threads_(opt.threads), data_file_(opt.data_path),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_dir_);
  }

  void write(const std::string& name, const std::string& text) {
    nonstat::io::write_text_file(out_dir_ / name, text);
    artifacts_.push_back(name);
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void finish(const json& resolved_config) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json manifest = {{"tool", "nonstat"},
                     {"version", nonstat::kVersion},
                     {"subcommand", subcommand_},
                     {"seed", seed_},
                     {"threads", threads_},
                     {"data_file", data_file_},
                     {"config", resolved_config},
                     {"artifacts", artifacts_},
                     {"wall_clock_seconds", elapsed}};
    nonstat::io::write_text_file(out_dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  fs::path out_dir_;
  std::uint64_t seed_;
  std::size_t threads_;
  std::string data_file_;
  std::vector<std::string> artifacts_;
  std::chrono::steady_clock::time_point start_;
};

nonstat::ExperimentConfig experiment_from_config(const ConfigView& c, std::uint64_t seed,
                                                 std::size_t threads, double default_threshold) {
  nonstat::ExperimentConfig config;
  config.spec = nonstat::io::spec_from_config(c.at("spec"));
  config.cls = c.has("class") ? nonstat::io::class_from_config(c.at("class"))
                              : nonstat::FunctionClass(nonstat::IdentityClass{});
  config.family = c.has("family") ? nonstat::io::family_from_config(c.at("family"))
                                  : nonstat::WeightFamily(nonstat::ConstantWeights{});
  config.s_count = c.get_size("s_count", 101);
  config.statistic = statistic_from_config(c);
  if (c.has("n_schedule")) {
    config.n_schedule.clear();
    for (double v : c.at("n_schedule").as_double_vector())
      config.n_schedule.push_back(static_cast<std::size_t>(v));
  } else if (c.has("n")) {
    config.n_schedule = {c.get_size("n")};
  }
  config.replicates = c.get_size("replicates", 10000);
  config.bootstrap_replicates = c.get_size("bootstrap_replicates", 300);
  config.alpha = c.get_double("alpha", 0.05);
  if (c.has("multiplier"))
    config.multiplier = nonstat::io::multiplier_from_config(c.at("multiplier"));
  if (c.has("centering")) {
    config.centering = nonstat::io::centering_from_config(
        c.at("centering"), nonstat::ExperimentConfig::Centering::KnownPath);
    if (c.at("centering").raw().is_object())
      config.centering_bandwidth = c.at("centering").get_double("bandwidth", 0.1);
  }
  config.threshold = c.get_double("threshold", default_threshold);
  config.control_threshold = c.get_double("control_threshold", 0.10);
  config.seed = seed;
  config.threads = threads;
  return config;
}

json experiment_to_json(const nonstat::ExperimentConfig& config) {
  return {{"spec", nonstat::io::to_json(config.spec)},
          {"class", nonstat::io::to_json(config.cls)},
          {"family", nonstat::io::to_json(config.family)},
          {"s_count", config.s_count},
          {"statistic", statistic_to_json(config.statistic)},
          {"n_schedule", config.n_schedule},
          {"replicates", config.replicates},
          {"bootstrap_replicates", config.bootstrap_replicates},
          {"alpha", config.alpha},
          {"multiplier", nonstat::io::to_json(config.multiplier)},
          {"centering", nonstat::io::to_json(config.centering, config.centering_bandwidth)},
          {"threshold", config.threshold},
          {"control_threshold", config.control_threshold},
          {"seed", config.seed},
          {"threads", config.threads}};
}

// ---------------------------------------------------------------------------
// Subcommand implementations

int cmd_simulate(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  const nonstat::ProcessSpec spec = nonstat::io::spec_from_config(c.at("spec"));
  const std::size_t n = c.get_size("n");
  const nonstat::rng::Stream stream = nonstat::rng::Stream(seed).child(0xDA7A);
  const nonstat::TimeSeriesSample sample = nonstat::simulate_path(spec, n, stream);

  RunEmitter emit("simulate", opt, seed);
  emit.write("series.csv", nonstat::io::series_to_csv(sample));
  emit.finish({{"spec", nonstat::io::to_json(spec)}, {"n", n}, {"seed", seed}});
  return 0;
}

int cmd_clt_check(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  nonstat::ExperimentConfig config = experiment_from_config(c, seed, opt.threads, 0.03);
  const nonstat::DistanceReport report = nonstat::relative_clt_check(config);

  RunEmitter emit("clt-check", opt, seed);
  emit.write_json("clt_check.json", nonstat::io::to_json(report));
  emit.write("clt_check.csv", nonstat::io::distance_rows_to_csv(report));
  emit.finish(experiment_to_json(config));
  return 0;
}

int cmd_bootstrap_check(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  nonstat::ExperimentConfig config = experiment_from_config(c, seed, opt.threads, 0.04);
  const nonstat::DistanceReport report = nonstat::bootstrap_consistency_check(config);

  RunEmitter emit("bootstrap-check", opt, seed);
  emit.write_json("bootstrap_check.json", nonstat::io::to_json(report));
  emit.write("bootstrap_check.csv", nonstat::io::distance_rows_to_csv(report));
  emit.finish(experiment_to_json(config));
  return 0;
}

int cmd_trend_band(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  auto [values, source] = resolve_input_series(opt, c, seed);
  const double bandwidth = c.get_double("bandwidth", 0.05);
  const double alpha = c.get_double("alpha", 0.1);
  const std::size_t b = c.get_size("bootstrap_replicates", 2000);
  const nonstat::MultiplierSpec mspec =
      c.has("multiplier") ? nonstat::io::multiplier_from_config(c.at("multiplier"))
                          : nonstat::MultiplierSpec(nonstat::BlockExponentialMultipliers{});
  const nonstat::rng::Stream stream = nonstat::rng::Stream(seed).child(0xBA2D);
  const nonstat::TrendBand band = nonstat::uniform_band(
      values, bandwidth, alpha, b, mspec, stream, nonstat::KernelFn::triweight(), opt.threads);

  RunEmitter emit("trend-band", opt, seed);
  emit.write("trend_band.csv", nonstat::io::band_to_csv(band));
  emit.write_json("trend_band.json", nonstat::io::band_metadata(band));
  emit.finish({{"source", source},
               {"n", values.size()},
               {"bandwidth", bandwidth},
               {"alpha", alpha},
               {"bootstrap_replicates", b},
               {"multiplier", nonstat::io::to_json(mspec)},
               {"seed", seed}});
  return 0;
}

int cmd_test(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  auto [values, source] = resolve_input_series(opt, c, seed);
  const nonstat::FunctionClass cls = nonstat::io::class_from_config(c.at("class"));
  const nonstat::WeightFamily family =
      c.has("family") ? nonstat::io::family_from_config(c.at("family"))
                      : nonstat::WeightFamily(nonstat::ConstantWeights{});
  const std::size_t s_count = c.get_size("s_count", 101);
  const double alpha = c.get_double("alpha", 0.05);
  const std::size_t b = c.get_size("bootstrap_replicates", 300);
  const nonstat::MultiplierSpec mspec =
      c.has("multiplier") ? nonstat::io::multiplier_from_config(c.at("multiplier"))
                          : nonstat::MultiplierSpec(nonstat::BlockExponentialMultipliers{});
  nonstat::MeanEstimator centering = nonstat::ZeroMeanEstimator{};
  double centering_bw = 0.1;
  auto centering_kind = nonstat::ExperimentConfig::Centering::Zero;
  if (c.has("centering")) {
    centering_kind = nonstat::io::centering_from_config(
        c.at("centering"), nonstat::ExperimentConfig::Centering::Zero);
    if (c.at("centering").raw().is_object())
      centering_bw = c.at("centering").get_double("bandwidth", 0.1);
    if (centering_kind == nonstat::ExperimentConfig::Centering::KernelSmoother)
      centering = nonstat::KernelSmootherEstimator{nonstat::KernelFn::triweight(), centering_bw};
    else if (centering_kind == nonstat::ExperimentConfig::Centering::KnownPath) {
      if (!c.has("spec"))
        throw nonstat::ValidationError(
            "config: centering 'known_path' needs a 'spec' with oracle means");
      const nonstat::ProcessSpec spec = nonstat::io::spec_from_config(c.at("spec"));
      centering = nonstat::KnownPathEstimator{
          nonstat::class_mean_matrix(spec, values.size(), cls)};
    }
  }
  const nonstat::EvalGrid grid = nonstat::make_grid(cls, family, s_count);
  const nonstat::rng::Stream stream = nonstat::rng::Stream(seed).child(0x7E57);
  nonstat::TestReport report =
      nonstat::run_test(values, cls, family, grid, alpha, b, mspec, centering, stream,
                        opt.threads);
  const json resolved = {{"source", source},
                         {"n", values.size()},
                         {"class", nonstat::io::to_json(cls)},
                         {"family", nonstat::io::to_json(family)},
                         {"s_count", s_count},
                         {"alpha", alpha},
                         {"bootstrap_replicates", b},
                         {"multiplier", nonstat::io::to_json(mspec)},
                         {"centering", nonstat::io::to_json(centering_kind, centering_bw)},
                         {"seed", seed}};
  report.config_echo = resolved.dump();

  RunEmitter emit("test", opt, seed);
  emit.write_json("test_report.json", nonstat::io::to_json(report));
  {
    nonstat::BootstrapRun run;
    run.replicates = report.replicates;
    run.alpha = report.alpha;
    run.sup_norms = report.sup_norms;
    emit.write("test_bootstrap_sups.csv", nonstat::io::bootstrap_run_to_csv(run));
  }
  emit.finish(resolved);
  return 0;
}

int cmd_ks_test(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  if (opt.data_path.empty() && !c.has("spec"))
    throw nonstat::ValidationError("ks-test: pass --data or a 'spec' config");
  auto [values, source] = resolve_input_series(opt, c, seed);
  const std::size_t lag = c.get_size("lag", 120);
  std::vector<double> thresholds;
  if (c.has("thresholds"))
    thresholds = c.at("thresholds").as_double_vector();
  else if (c.has("threshold_range")) {
    const ConfigView r = c.at("threshold_range");
    thresholds = nonstat::threshold_grid(r.get_double("lo"), r.get_double("hi"),
                                         r.get_double("step"));
  } else {
    thresholds = nonstat::threshold_grid(-5.0, 5.0, 0.05);
  }
  const double bandwidth = c.get_double("bandwidth", 0.05);
  const double alpha = c.get_double("alpha", 0.05);
  const std::size_t b = c.get_size("bootstrap_replicates", 2000);
  const std::size_t s_count = c.get_size("s_count", 101);
  const nonstat::rng::Stream stream = nonstat::rng::Stream(seed).child(0x4B57);
  nonstat::TestReport report = nonstat::ks_nonstationarity_test(
      values, lag, thresholds, bandwidth, alpha, b, stream, s_count, opt.threads);
  const json resolved = {{"source", source},
                         {"n", values.size()},
                         {"lag", lag},
                         {"thresholds",
                          {{"lo", thresholds.front()},
                           {"hi", thresholds.back()},
                           {"count", thresholds.size()}}},
                         {"bandwidth", bandwidth},
                         {"alpha", alpha},
                         {"bootstrap_replicates", b},
                         {"s_count", s_count},
                         {"seed", seed}};
  report.config_echo = resolved.dump();

  RunEmitter emit("ks-test", opt, seed);
  emit.write_json("ks_test_report.json", nonstat::io::to_json(report));
  emit.finish(resolved);
  return 0;
}

int cmd_coverage(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  nonstat::CoverageConfig config;
  config.spec = nonstat::io::spec_from_config(c.at("spec"));
  config.n = c.get_size("n", 1000);
  config.bandwidth = c.get_double("bandwidth", 0.1);
  config.alpha = c.get_double("alpha", 0.1);
  config.bootstrap_replicates = c.get_size("bootstrap_replicates", 300);
  config.runs = c.get_size("runs", 200);
  if (c.has("multiplier"))
    config.multiplier = nonstat::io::multiplier_from_config(c.at("multiplier"));
  config.seed = seed;
  config.threads = opt.threads;
  const nonstat::CoverageReport report = nonstat::coverage_experiment(config);

  RunEmitter emit("coverage", opt, seed);
  emit.write_json("coverage.json", nonstat::io::to_json(report));
  emit.finish({{"spec", nonstat::io::to_json(config.spec)},
               {"n", config.n},
               {"bandwidth", config.bandwidth},
               {"alpha", config.alpha},
               {"bootstrap_replicates", config.bootstrap_replicates},
               {"runs", config.runs},
               {"multiplier", nonstat::io::to_json(config.multiplier)},
               {"seed", seed}});
  return 0;
}

int cmd_level_power(const GlobalOptions& opt) {
  const json cfg = load_config(opt);
  const ConfigView c(cfg, "");
  const std::uint64_t seed = resolve_seed(opt, c);
  nonstat::LevelPowerConfig config;
  config.h0_spec = nonstat::io::spec_from_config(c.at("h0_spec"));
  config.h1_spec = nonstat::io::spec_from_config(c.at("h1_spec"));
  config.cls = c.has("class") ? nonstat::io::class_from_config(c.at("class"))
                              : nonstat::FunctionClass(nonstat::IdentityClass{});
  config.family = c.has("family") ? nonstat::io::family_from_config(c.at("family"))
                                  : nonstat::WeightFamily(nonstat::ConstantWeights{});
  config.s_count = c.get_size("s_count", 101);
  config.n = c.get_size("n", 1000);
  config.alpha = c.get_double("alpha", 0.05);
  config.bootstrap_replicates = c.get_size("bootstrap_replicates", 300);
  if (c.has("multiplier"))
    config.multiplier = nonstat::io::multiplier_from_config(c.at("multiplier"));
  if (c.has("centering")) {
    config.centering = nonstat::io::centering_from_config(
        c.at("centering"), nonstat::ExperimentConfig::Centering::Zero);
    if (c.at("centering").raw().is_object())
      config.centering_bandwidth = c.at("centering").get_double("bandwidth", 0.1);
  }
  config.runs_level = c.get_size("runs_level", 500);
  config.runs_power = c.get_size("runs_power", 100);
  config.seed = seed;
  config.threads = opt.threads;
  const nonstat::LevelPowerReport report = nonstat::level_power_experiment(config);

  RunEmitter emit("level-power", opt, seed);
  emit.write_json("level_power.json", nonstat::io::to_json(report));
  emit.finish({{"h0_spec", nonstat::io::to_json(config.h0_spec)},
               {"h1_spec", nonstat::io::to_json(config.h1_spec)},
               {"class", nonstat::io::to_json(config.cls)},
               {"family", nonstat::io::to_json(config.family)},
               {"s_count", config.s_count},
               {"n", config.n},
               {"alpha", config.alpha},
               {"bootstrap_replicates", config.bootstrap_replicates},
               {"multiplier", nonstat::io::to_json(config.multiplier)},
               {"centering",
                nonstat::io::to_json(config.centering, config.centering_bandwidth)},
               {"runs_level", config.runs_level},
               {"runs_power", config.runs_power},
               {"seed", seed}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonstat: inference tools for non-stationary time series"};
  app.set_version_flag("--version", nonstat::kVersion);
  app.fallthrough(true);

  GlobalOptions opt;
  app.add_option("--config", opt.config_path, "JSON config document");
  app.add_option("--out-dir", opt.out_dir, "output directory (default .)");
  app.add_option("--data", opt.data_path, "input data CSV");
  app.add_option("--format", opt.data_format,
                 "data format: auto|gistemp-wide|long-triplet|series");
  app.add_option("--impute", opt.impute, "missing data policy: none|linear (default none)");
  auto* seed_opt = app.add_option("--seed", opt.seed, "master seed (overrides config)");
  app.add_option("--threads", opt.threads, "worker count; never affects numerics");

  int (*handler)(const GlobalOptions&) = nullptr;
  app.add_subcommand("simulate", "draw a synthetic series from a spec")
      ->callback([&handler] { handler = cmd_simulate; });
  app.add_subcommand("clt-check", "distance between statistics and the matched Gaussian law")
      ->callback([&handler] { handler = cmd_clt_check; });
  app.add_subcommand("bootstrap-check", "distance between bootstrap and empirical laws")
      ->callback([&handler] { handler = cmd_bootstrap_check; });
  app.add_subcommand("trend-band", "kernel trend estimate with uniform confidence band")
      ->callback([&handler] { handler = cmd_trend_band; });
  app.add_subcommand("test", "sup-type multiplier bootstrap test")
      ->callback([&handler] { handler = cmd_test; });
  app.add_subcommand("ks-test", "lagged distribution-equality (KS-type) test")
      ->callback([&handler] { handler = cmd_ks_test; });
  app.add_subcommand("coverage", "uniform band coverage experiment")
      ->callback([&handler] { handler = cmd_coverage; });
  app.add_subcommand("level-power", "test level and power experiment")
      ->callback([&handler] { handler = cmd_level_power; });
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  opt.seed_given = seed_opt->count() > 0;

  try {
    return handler ? handler(opt) : 1;
  } catch (const nonstat::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nonstat::CapabilityError& e) {
    std::cerr << "capability error: " << e.what() << "\n";
    return 2;
  } catch (const nonstat::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
