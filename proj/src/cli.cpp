#include "specrisk/cli.hpp"

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "specrisk/assumptions.hpp"
#include "specrisk/estimators.hpp"
#include "specrisk/io.hpp"
#include "specrisk/measure.hpp"
#include "specrisk/models.hpp"
#include "specrisk/parallel.hpp"
#include "specrisk/rmt.hpp"
#include "specrisk/rng.hpp"
#include "specrisk/stieltjes.hpp"

namespace specrisk {

namespace {

using nlohmann::json;

// A config problem: reported on stderr and mapped to exit code 1, with no
// files written. Everything else escaping a pipeline maps to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultSeed = 20260814ull;

// Seed streams owned by the driver (module-internal streams live elsewhere).
constexpr std::uint64_t kModelStreamBase = 9000000;
constexpr std::uint64_t kFisherStreamBase = 9100000;
constexpr std::uint64_t kComboStreamBase = 9200000;
constexpr std::uint64_t kReportStreamBase = 9300000;
constexpr std::uint64_t kScenarioStreamBase = 9400000;

std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
  std::uint64_t value = 0;
  const char* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (result.ec != std::errc() || result.ptr != end) {
    throw ValidationError(std::string(what) + " must be an unsigned integer, got '" + text + "'");
  }
  return value;
}

// ---- typed config access -----------------------------------------------

const json& require_field(const json& config, const std::string& key) {
  if (!config.is_object() || !config.contains(key)) {
    throw ValidationError("missing config field '" + key + "'");
  }
  return config.at(key);
}

double get_number(const json& config, const std::string& key) {
  const json& value = require_field(config, key);
  if (!value.is_number()) throw ValidationError("config field '" + key + "' must be a number");
  return value.get<double>();
}

int get_int(const json& config, const std::string& key) {
  const json& value = require_field(config, key);
  if (!value.is_number_integer()) {
    throw ValidationError("config field '" + key + "' must be an integer");
  }
  return value.get<int>();
}

bool get_bool(const json& config, const std::string& key) {
  const json& value = require_field(config, key);
  if (!value.is_boolean()) throw ValidationError("config field '" + key + "' must be a boolean");
  return value.get<bool>();
}

std::string get_string(const json& config, const std::string& key) {
  const json& value = require_field(config, key);
  if (!value.is_string()) throw ValidationError("config field '" + key + "' must be a string");
  return value.get<std::string>();
}

void check_keys(const json& config, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : config.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) throw ValidationError("unknown config field '" + where + item.key() + "'");
  }
}

// ---- shared pieces -------------------------------------------------------

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  bool plot = false;
};

CommonOpts common_from(const json& config) {
  CommonOpts opts;
  const json& seed = require_field(config, "seed");
  if (!seed.is_number_integer() || (seed.is_number_integer() && !seed.is_number_unsigned() &&
                                    seed.get<long long>() < 0)) {
    throw ValidationError("config field 'seed' must be an unsigned integer");
  }
  opts.seed = seed.get<std::uint64_t>();
  opts.out_dir = get_string(config, "out");
  if (opts.out_dir.empty()) throw ValidationError("config field 'out' must not be empty");
  opts.threads = get_int(config, "threads");
  if (opts.threads < 0) throw ValidationError("config field 'threads' must be >= 0");
  opts.plot = get_bool(config, "plot");
  return opts;
}

SpectralMeasure measure_from(const json& spec) {
  if (!spec.is_object()) throw ValidationError("'measure' must be an object");
  const std::string kind = get_string(spec, "kind");
  try {
    if (kind == "dirac") {
      check_keys(spec, "measure.", {"kind", "value"});
      return SpectralMeasure::dirac(get_number(spec, "value"));
    }
    if (kind == "uniform") {
      check_keys(spec, "measure.", {"kind", "lower", "upper"});
      return SpectralMeasure::uniform(get_number(spec, "lower"), get_number(spec, "upper"));
    }
    if (kind == "semicircle") {
      check_keys(spec, "measure.", {"kind", "center"});
      return SpectralMeasure::semicircle(get_number(spec, "center"));
    }
    if (kind == "empirical") {
      check_keys(spec, "measure.", {"kind", "eigenvalues"});
      const json& eigs = require_field(spec, "eigenvalues");
      if (!eigs.is_array() || eigs.empty()) {
        throw ValidationError("measure.eigenvalues must be a non-empty array");
      }
      std::vector<double> values;
      for (const json& e : eigs) {
        if (!e.is_number()) throw ValidationError("measure.eigenvalues must hold numbers");
        values.push_back(e.get<double>());
      }
      return SpectralMeasure::empirical(std::move(values));
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("measure: ") + e.what());
  }
  throw ValidationError("measure.kind must be one of dirac, uniform, semicircle, empirical");
}

std::vector<double> grid_from(const json& spec, const std::string& field) {
  std::vector<double> values;
  if (spec.is_array()) {
    for (const json& v : spec) {
      if (!v.is_number()) throw ValidationError(field + " entries must be numbers");
      values.push_back(v.get<double>());
    }
  } else if (spec.is_object()) {
    check_keys(spec, field + ".", {"min", "max", "step"});
    const double lo = get_number(spec, "min");
    const double hi = get_number(spec, "max");
    const double step = get_number(spec, "step");
    if (!(step > 0.0) || hi < lo) throw ValidationError(field + ": need step > 0 and max >= min");
    for (int k = 0;; ++k) {
      const double v = lo + k * step;
      if (v > hi + 1e-9 * step) break;
      values.push_back(v);
    }
  } else {
    throw ValidationError(field + " must be an array or a {min,max,step} object");
  }
  if (values.empty()) throw ValidationError(field + " must not be empty");
  for (double v : values) {
    if (!(v > 0.0)) throw ValidationError(field + " entries must be positive");
  }
  return values;
}

ModelKind model_kind_from(const std::string& name) {
  if (name == "m1") return ModelKind::LinearM1;
  if (name == "m2") return ModelKind::ExponentialM2;
  if (name == "additive") return ModelKind::Additive;
  throw ValidationError("model '" + name + "' is not one of m1, m2, additive");
}

ModelInstance make_model(ModelKind kind, int p, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::LinearM1: return make_linear_model(p, seed);
    case ModelKind::ExponentialM2: return make_exponential_model(p, seed);
    default: return make_additive_model(p, 0, seed);
  }
}

void note_plot_failure(std::ostream& err, const std::string& path) {
  err << "spectral-risk: plot: could not write " << path << " (run continues)\n";
}

// ---- defaults ------------------------------------------------------------

json default_config(const std::string& sub) {
  json config{{"seed", kDefaultSeed}, {"threads", 0}, {"plot", false}};
  if (sub == "stieltjes") {
    config["out"] = "out/stieltjes";
    config["measure"] = json{{"kind", "dirac"}, {"value", 1.0}};
    config["tau_bar"] = 0.0;
    json gammas = json::array();
    for (int k = 1; k <= 19; ++k) gammas.push_back(k * 5 / 100.0);
    for (int k = 21; k <= 60; ++k) gammas.push_back(k * 5 / 100.0);
    config["gammas"] = gammas;
  } else if (sub == "descent") {
    config["out"] = "out/descent";
    config["model"] = "m1";
    config["p"] = 64;
    config["reps"] = 10;
    config["schedule"] = "match_gamma";
    config["tau"] = 0.1;
    config["gammas"] = json::array({0.25, 0.5, 0.75, 0.9, 1.0, 1.25, 1.5, 2.0, 3.0, 4.0});
    config["prediction_samples"] = 2000;
    config["fisher_samples"] = 200000;
  } else if (sub == "mp-verify") {
    config["out"] = "out/mp-verify";
    config["measure"] = json{{"kind", "dirac"}, {"value", 1.0}};
    config["p"] = 512;
    config["reps"] = 10;
    config["column_dist"] = "gaussian";
    config["trunc_bound"] = 1.0;
    config["scenarios"] = json::array({json{{"gamma", 0.5}, {"tau_bar", 0.0}},
                                       json{{"gamma", 2.0}, {"tau_bar", 0.0}},
                                       json{{"gamma", 1.0}, {"tau_bar", 1.0}}});
  } else {
    config["out"] = "out/assumptions";
    config["models"] = json::array({"m1", "m2"});
    config["gamma_primes"] = json::array({2.0, 5.0, 10.0});
    config["p_grid"] = json{{"min", 10}, {"max", 500}, {"step", 10}};
    config["tau"] = 0.01;
    config["reps"] = 10;
    config["fisher_samples"] = 20000;
    config["report"] = json{{"p", 50},
                            {"gamma_prime", 2.0},
                            {"reps", 10},
                            {"theta_samples", 100},
                            {"z_samples", 100}};
  }
  return config;
}

// ---- stieltjes -----------------------------------------------------------

struct StieltjesPlan {
  SpectralMeasure measure = SpectralMeasure::dirac(1.0);
  double tau_bar = 0.0;
  std::vector<double> gammas;
};

StieltjesPlan plan_stieltjes(const json& config) {
  check_keys(config, "", {"seed", "out", "threads", "plot", "measure", "tau_bar", "gammas"});
  StieltjesPlan plan;
  plan.measure = measure_from(require_field(config, "measure"));
  plan.tau_bar = get_number(config, "tau_bar");
  if (plan.tau_bar < 0.0) throw ValidationError("tau_bar must be >= 0");
  plan.gammas = grid_from(require_field(config, "gammas"), "gammas");
  for (double gamma : plan.gammas) {
    if (plan.tau_bar == 0.0 && std::abs(gamma - 1.0) < 1e-9) {
      throw ValidationError("gamma = 1 with tau_bar = 0 has no finite limit");
    }
  }
  return plan;
}

void run_stieltjes(const StieltjesPlan& plan, const CommonOpts& opts, std::ostream& err) {
  std::vector<std::vector<std::string>> rows;
  PlotSeries curve;
  curve.label = "lim h";
  for (double gamma : plan.gammas) {
    const double h = limit_h_at_zero(plan.measure, AsymptoticRegime(gamma, plan.tau_bar));
    rows.push_back({format_double(gamma), format_double(plan.tau_bar), format_double(h)});
    curve.x.push_back(gamma);
    curve.y.push_back(h);
  }
  write_csv(join_path(opts.out_dir, "h_curve.csv"), {"gamma", "tau_bar", "h"}, rows);
  if (opts.plot) {
    const std::string path = join_path(opts.out_dir, "h_curve.svg");
    PlotOptions po;
    po.title = "Limiting transform vs gamma (" + plan.measure.describe() + ")";
    po.x_label = "gamma = p/n";
    po.y_label = "lim h";
    if (!write_svg_chart(path, po, {curve})) note_plot_failure(err, path);
  }
}

// ---- descent -------------------------------------------------------------

struct DescentPlan {
  ModelKind kind = ModelKind::LinearM1;
  int p = 0;
  std::vector<double> gammas;
  SweepOptions options;
};

DescentPlan plan_descent(const json& config) {
  check_keys(config, "", {"seed", "out", "threads", "plot", "model", "p", "reps", "schedule",
                          "tau", "gammas", "prediction_samples", "fisher_samples"});
  DescentPlan plan;
  plan.kind = model_kind_from(get_string(config, "model"));
  plan.p = get_int(config, "p");
  if (plan.p < 1) throw ValidationError("p must be >= 1");
  plan.options.reps = get_int(config, "reps");
  if (plan.options.reps < 1) throw ValidationError("reps must be >= 1");
  const std::string schedule = get_string(config, "schedule");
  if (schedule == "decaying") {
    plan.options.schedule = TauSchedule::Decaying;
  } else if (schedule == "fixed") {
    plan.options.schedule = TauSchedule::Fixed;
  } else if (schedule == "match_gamma") {
    plan.options.schedule = TauSchedule::MatchGamma;
  } else {
    throw ValidationError("schedule must be one of decaying, fixed, match_gamma");
  }
  plan.options.tau_value = get_number(config, "tau");
  if (plan.options.schedule == TauSchedule::Fixed && !(plan.options.tau_value > 0.0)) {
    throw ValidationError("the fixed schedule needs tau > 0");
  }
  plan.gammas = grid_from(require_field(config, "gammas"), "gammas");
  if (plan.options.schedule == TauSchedule::Decaying) {
    for (double gamma : plan.gammas) {
      if (std::abs(gamma - 1.0) < 1e-9) {
        throw ValidationError("the decaying schedule excludes gamma = 1");
      }
    }
  }
  plan.options.prediction_samples = get_int(config, "prediction_samples");
  plan.options.fisher_samples = get_int(config, "fisher_samples");
  if (plan.options.prediction_samples < 1 || plan.options.fisher_samples < 1) {
    throw ValidationError("prediction_samples and fisher_samples must be >= 1");
  }
  return plan;
}

void run_descent(const DescentPlan& plan, const CommonOpts& opts, std::ostream& err) {
  SweepOptions options = plan.options;
  options.threads = static_cast<unsigned>(opts.threads);
  const auto reports = descent_sweep(plan.kind, plan.gammas, plan.p, options, opts.seed);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<std::string>> summary;
  PlotSeries variance, analytic;
  variance.label = "variance part (mean +- sd)";
  analytic.label = "analytic lim h";
  for (const auto& report : reports) {
    for (const auto& row : report.rows) {
      rows.push_back({format_double(row.gamma), format_double(row.tau), std::to_string(row.p),
                      std::to_string(row.n), std::to_string(row.rep),
                      format_double(row.weighted_risk), format_double(row.variance_part),
                      format_double(row.bias_part), format_double(row.prediction_risk),
                      format_double(row.analytic_h), format_double(row.principal_term)});
    }
    summary.push_back({format_double(report.gamma), format_double(report.tau),
                       std::to_string(report.p), std::to_string(report.n),
                       std::to_string(report.reps), format_double(report.analytic_h),
                       format_double(report.weighted_risk.mean),
                       format_double(report.weighted_risk.stddev),
                       format_double(report.variance_part.mean),
                       format_double(report.variance_part.stddev),
                       format_double(report.bias_part.mean),
                       format_double(report.bias_part.stddev),
                       format_double(report.prediction_risk.mean),
                       format_double(report.prediction_risk.stddev),
                       format_double(report.principal_term.mean),
                       format_double(report.principal_term.stddev)});
    variance.x.push_back(report.gamma);
    variance.y.push_back(report.variance_part.mean);
    variance.yerr.push_back(report.variance_part.stddev);
    analytic.x.push_back(report.gamma);
    analytic.y.push_back(report.analytic_h);
  }
  write_csv(join_path(opts.out_dir, "descent.csv"),
            {"gamma", "tau", "p", "n", "rep", "weighted_risk", "variance_part", "bias_part",
             "prediction_risk", "analytic_h", "principal_term"},
            rows);
  write_csv(join_path(opts.out_dir, "descent_summary.csv"),
            {"gamma", "tau", "p", "n", "reps", "analytic_h", "weighted_risk_mean",
             "weighted_risk_std", "variance_part_mean", "variance_part_std", "bias_part_mean",
             "bias_part_std", "prediction_risk_mean", "prediction_risk_std",
             "principal_term_mean", "principal_term_std"},
            summary);
  if (opts.plot) {
    const std::string path = join_path(opts.out_dir, "descent.svg");
    PlotOptions po;
    po.title = "Risk sweep at p = " + std::to_string(plan.p);
    po.x_label = "gamma = p/n";
    po.y_label = "weighted error";
    if (!write_svg_chart(path, po, {variance, analytic})) note_plot_failure(err, path);
  }
}

// ---- mp-verify -----------------------------------------------------------

struct MpPlan {
  SpectralMeasure measure = SpectralMeasure::dirac(1.0);
  int p = 0;
  int reps = 0;
  ColumnDist dist = ColumnDist::StandardGaussian;
  double trunc_bound = 1.0;
  std::vector<AsymptoticRegime> scenarios;
};

MpPlan plan_mp_verify(const json& config) {
  check_keys(config, "", {"seed", "out", "threads", "plot", "measure", "p", "reps",
                          "column_dist", "trunc_bound", "scenarios"});
  MpPlan plan;
  plan.measure = measure_from(require_field(config, "measure"));
  plan.p = get_int(config, "p");
  if (plan.p < 2) throw ValidationError("p must be >= 2");
  plan.reps = get_int(config, "reps");
  if (plan.reps < 1) throw ValidationError("reps must be >= 1");
  const std::string dist = get_string(config, "column_dist");
  if (dist == "gaussian") {
    plan.dist = ColumnDist::StandardGaussian;
  } else if (dist == "truncated") {
    plan.dist = ColumnDist::TruncatedGaussian;
  } else {
    throw ValidationError("column_dist must be gaussian or truncated");
  }
  plan.trunc_bound = get_number(config, "trunc_bound");
  if (plan.dist == ColumnDist::TruncatedGaussian && plan.trunc_bound < 0.1) {
    throw ValidationError("trunc_bound must be >= 0.1");
  }
  const json& scenarios = require_field(config, "scenarios");
  if (!scenarios.is_array() || scenarios.empty()) {
    throw ValidationError("scenarios must be a non-empty array");
  }
  for (const json& s : scenarios) {
    if (!s.is_object()) throw ValidationError("each scenario must be an object");
    check_keys(s, "scenarios[].", {"gamma", "tau_bar"});
    const double gamma = get_number(s, "gamma");
    const double tau_bar = get_number(s, "tau_bar");
    try {
      plan.scenarios.emplace_back(gamma, tau_bar);
    } catch (const std::exception& e) {
      throw ValidationError(std::string("scenario: ") + e.what());
    }
  }
  return plan;
}

void run_mp_verify(const MpPlan& plan, const CommonOpts& opts, std::ostream& err) {
  std::vector<std::vector<std::string>> rows;
  PlotSeries simulated, analytic;
  simulated.label = "simulated (mean +- sd)";
  analytic.label = "analytic limit";
  for (std::size_t i = 0; i < plan.scenarios.size(); ++i) {
    const auto report =
        verify_mp_limit(plan.measure, plan.scenarios[i], plan.p, plan.reps,
                        split_seed(opts.seed, kScenarioStreamBase + i), opts.threads, plan.dist,
                        plan.trunc_bound);
    rows.push_back({format_double(report.gamma), format_double(report.tau_bar),
                    std::to_string(report.p), std::to_string(report.n),
                    std::to_string(report.reps), format_double(report.mc_mean),
                    format_double(report.mc_std), format_double(report.analytic),
                    format_double(report.gap), format_double(report.cutoff)});
    simulated.x.push_back(static_cast<double>(i + 1));
    simulated.y.push_back(report.mc_mean);
    simulated.yerr.push_back(report.mc_std);
    analytic.x.push_back(static_cast<double>(i + 1));
    analytic.y.push_back(report.analytic);
  }
  write_csv(join_path(opts.out_dir, "mp_verify.csv"),
            {"gamma", "tau_bar", "p", "n", "reps", "mc_mean", "mc_std", "analytic", "gap",
             "cutoff"},
            rows);
  if (opts.plot) {
    const std::string path = join_path(opts.out_dir, "mp_verify.svg");
    PlotOptions po;
    po.title = "Truncated inverse trace vs analytic limit";
    po.x_label = "scenario";
    po.y_label = "value";
    if (!write_svg_chart(path, po, {simulated, analytic})) note_plot_failure(err, path);
  }
}

// ---- assumptions ---------------------------------------------------------

struct AssumptionsPlan {
  std::vector<ModelKind> kinds;
  std::vector<std::string> kind_names;
  std::vector<double> gamma_primes;
  std::vector<int> ps;
  double tau = 0.0;
  int reps = 0;
  int fisher_samples = 0;
  int report_p = 0;
  double report_gamma_prime = 0.0;
  AssumptionConfig report_config;
};

std::vector<int> p_grid_from(const json& spec) {
  std::vector<int> values;
  if (spec.is_array()) {
    for (const json& v : spec) {
      if (!v.is_number_integer()) throw ValidationError("p_grid entries must be integers");
      values.push_back(v.get<int>());
    }
  } else if (spec.is_object()) {
    check_keys(spec, "p_grid.", {"min", "max", "step"});
    const int lo = get_int(spec, "min");
    const int hi = get_int(spec, "max");
    const int step = get_int(spec, "step");
    if (step < 1 || hi < lo) throw ValidationError("p_grid: need step >= 1 and max >= min");
    for (int p = lo; p <= hi; p += step) values.push_back(p);
  } else {
    throw ValidationError("p_grid must be an array or a {min,max,step} object");
  }
  if (values.empty()) throw ValidationError("p_grid must not be empty");
  for (int p : values) {
    if (p < 1) throw ValidationError("p_grid entries must be >= 1");
  }
  return values;
}

AssumptionsPlan plan_assumptions(const json& config) {
  check_keys(config, "", {"seed", "out", "threads", "plot", "models", "gamma_primes", "p_grid",
                          "tau", "reps", "fisher_samples", "report"});
  AssumptionsPlan plan;
  const json& models = require_field(config, "models");
  if (!models.is_array() || models.empty()) {
    throw ValidationError("models must be a non-empty array");
  }
  for (const json& m : models) {
    if (!m.is_string()) throw ValidationError("models entries must be strings");
    const std::string name = m.get<std::string>();
    for (const auto& seen : plan.kind_names) {
      if (seen == name) throw ValidationError("duplicate model '" + name + "'");
    }
    plan.kinds.push_back(model_kind_from(name));
    plan.kind_names.push_back(name);
  }
  plan.gamma_primes = grid_from(require_field(config, "gamma_primes"), "gamma_primes");
  plan.ps = p_grid_from(require_field(config, "p_grid"));
  plan.tau = get_number(config, "tau");
  if (!(plan.tau > 0.0)) throw ValidationError("tau must be > 0");
  plan.reps = get_int(config, "reps");
  if (plan.reps < 1) throw ValidationError("reps must be >= 1");
  plan.fisher_samples = get_int(config, "fisher_samples");
  if (plan.fisher_samples < 1) throw ValidationError("fisher_samples must be >= 1");

  const json& report = require_field(config, "report");
  if (!report.is_object()) throw ValidationError("report must be an object");
  check_keys(report, "report.", {"p", "gamma_prime", "reps", "theta_samples", "z_samples"});
  plan.report_p = get_int(report, "p");
  if (plan.report_p < 1) throw ValidationError("report.p must be >= 1");
  plan.report_gamma_prime = get_number(report, "gamma_prime");
  if (!(plan.report_gamma_prime > 0.0)) throw ValidationError("report.gamma_prime must be > 0");
  plan.report_config.tau = plan.tau;
  plan.report_config.reps = get_int(report, "reps");
  if (plan.report_config.reps < 1) throw ValidationError("report.reps must be >= 1");
  plan.report_config.derivative_theta_samples = get_int(report, "theta_samples");
  plan.report_config.derivative_z_samples = get_int(report, "z_samples");
  if (plan.report_config.derivative_theta_samples < 100 ||
      plan.report_config.derivative_z_samples < 100) {
    throw ValidationError("report.theta_samples and report.z_samples must be >= 100");
  }
  return plan;
}

int sample_size_for(int p, double gamma_prime) {
  return std::max(1, static_cast<int>(std::lround(p / gamma_prime)));
}

void run_assumptions(const AssumptionsPlan& plan, const CommonOpts& opts, std::ostream& err) {
  const std::size_t num_kinds = plan.kinds.size();
  const std::size_t num_ps = plan.ps.size();

  // Frozen model instances and Fisher matrices, one per (model, p). The
  // Fisher is the expensive part for the Monte Carlo families, so it is
  // computed once here and shared across every gamma' and repetition.
  std::vector<ModelInstance> models;
  models.reserve(num_kinds * num_ps);
  for (std::size_t k = 0; k < num_kinds; ++k) {
    for (std::size_t ip = 0; ip < num_ps; ++ip) {
      models.push_back(make_model(plan.kinds[k], plan.ps[ip],
                                  split_seed(opts.seed, kModelStreamBase + k * 1000 + ip)));
    }
  }
  std::vector<Eigen::MatrixXd> fishers(models.size());
  parallel_for(static_cast<int>(models.size()), opts.threads, [&](int i) {
    const auto& model = models[static_cast<std::size_t>(i)];
    fishers[static_cast<std::size_t>(i)] =
        model.kind == ModelKind::LinearM1
            ? fisher_matrix(model, 0, 0)
            : fisher_matrix(model, plan.fisher_samples,
                            split_seed(opts.seed, kFisherStreamBase + static_cast<unsigned>(i)));
  });

  std::vector<std::vector<std::string>> rep_rows;
  std::vector<std::vector<std::string>> summary_rows;
  std::vector<PlotSeries> series;
  for (std::size_t k = 0; k < num_kinds; ++k) {
    for (std::size_t g = 0; g < plan.gamma_primes.size(); ++g) {
      PlotSeries s;
      s.label = plan.kind_names[k] + " g'=" + format_double(plan.gamma_primes[g]);
      for (std::size_t ip = 0; ip < num_ps; ++ip) {
        const std::size_t model_index = k * num_ps + ip;
        const std::size_t combo =
            (k * plan.gamma_primes.size() + g) * num_ps + ip;
        const int p = plan.ps[ip];
        const int n = sample_size_for(p, plan.gamma_primes[g]);
        const auto result = cross_term(models[model_index], n, plan.tau, plan.reps,
                                       split_seed(opts.seed, kComboStreamBase + combo),
                                       static_cast<unsigned>(opts.threads),
                                       fishers[model_index]);
        for (int rep = 0; rep < plan.reps; ++rep) {
          rep_rows.push_back({plan.kind_names[k], format_double(plan.gamma_primes[g]),
                              std::to_string(p), std::to_string(n), std::to_string(rep),
                              format_double(result.values[static_cast<std::size_t>(rep)])});
        }
        const double se = result.stddev / std::sqrt(static_cast<double>(plan.reps));
        summary_rows.push_back({plan.kind_names[k], format_double(plan.gamma_primes[g]),
                                std::to_string(p), std::to_string(n),
                                std::to_string(plan.reps), format_double(result.mean),
                                format_double(result.stddev), format_double(se),
                                format_double(result.mean_unordered)});
        s.x.push_back(static_cast<double>(p));
        s.y.push_back(result.mean);
        s.yerr.push_back(se);
      }
      series.push_back(std::move(s));
    }
  }
  write_csv(join_path(opts.out_dir, "cross_term_reps.csv"),
            {"model", "gamma_prime", "p", "n", "rep", "cross_term"}, rep_rows);
  write_csv(join_path(opts.out_dir, "cross_term_summary.csv"),
            {"model", "gamma_prime", "p", "n", "reps", "mean", "std", "se", "mean_unordered"},
            summary_rows);

  // Full per-assumption diagnostic at one representative size per model.
  AssumptionConfig report_config = plan.report_config;
  report_config.threads = static_cast<unsigned>(opts.threads);
  const int report_n = sample_size_for(plan.report_p, plan.report_gamma_prime);
  json report_json = json::array();
  std::vector<std::vector<std::string>> report_rows;
  for (std::size_t k = 0; k < num_kinds; ++k) {
    const ModelInstance model = make_model(
        plan.kinds[k], plan.report_p, split_seed(opts.seed, kReportStreamBase + 500 + k));
    const AssumptionReport report = assumption_report(
        model, report_n, report_config, split_seed(opts.seed, kReportStreamBase + k));
    report_json.push_back(json{{"model", plan.kind_names[k]},
                               {"p", report.p},
                               {"n", report.n},
                               {"num_submodels", report.num_submodels},
                               {"nu_sq", report.nu_sq},
                               {"kappa", report.kappa},
                               {"sum_beta_sq", report.sum_beta_sq},
                               {"sum_alpha_sq", report.sum_alpha_sq},
                               {"s_p", report.s_p},
                               {"s_p_source", report.s_p_source},
                               {"cross_term_mean", report.cross_term_mean},
                               {"cross_term_std", report.cross_term_std},
                               {"fisher_residual_opnorm", report.fisher_residual_opnorm},
                               {"bernstein_bound_prob", report.bernstein_bound_prob}});
    report_rows.push_back(
        {plan.kind_names[k], std::to_string(report.p), std::to_string(report.n),
         std::to_string(report.num_submodels), format_double(report.nu_sq),
         format_double(report.kappa), format_double(report.sum_beta_sq),
         format_double(report.sum_alpha_sq), format_double(report.s_p), report.s_p_source,
         format_double(report.cross_term_mean), format_double(report.cross_term_std),
         format_double(report.fisher_residual_opnorm),
         format_double(report.bernstein_bound_prob)});
  }
  write_text_atomic(join_path(opts.out_dir, "assumption_report.json"),
                    report_json.dump(2) + "\n");
  write_csv(join_path(opts.out_dir, "assumption_report.csv"),
            {"model", "p", "n", "num_submodels", "nu_sq", "kappa", "sum_beta_sq",
             "sum_alpha_sq", "s_p", "s_p_source", "cross_term_mean", "cross_term_std",
             "fisher_residual_opnorm", "bernstein_bound_prob"},
            report_rows);

  if (opts.plot) {
    const std::string path = join_path(opts.out_dir, "cross_term.svg");
    PlotOptions po;
    po.title = "Cross-term decay";
    po.x_label = "p";
    po.y_label = "pairwise score statistic (mean +- SE)";
    if (!write_svg_chart(path, po, series)) note_plot_failure(err, path);
  }
}

// ---- config assembly -----------------------------------------------------

void apply_set(json& config, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("--set expects dotted.path=value, got '" + spec + "'");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // not valid JSON: treat as a plain string

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key =
        path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("empty path segment in --set '" + spec + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) {
      throw ValidationError("--set path '" + path + "' descends into a non-object field");
    }
    start = dot + 1;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asymptotic-risk toolkit for penalized maximum-likelihood estimators"};
  app.name("spectral-risk");
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_flag = 0;
  std::string out_flag;
  int threads_flag = 0;
  bool plot_flag = false;
  std::vector<std::string> set_flags;

  const std::pair<const char*, const char*> subcommands[] = {
      {"stieltjes", "limiting transform curve over a gamma grid"},
      {"descent", "risk sweep of the penalized MLE with analytic overlay"},
      {"mp-verify", "simulated spectral functional vs the analytic limit"},
      {"assumptions", "cross-term decay grid and per-assumption diagnostics"},
  };
  for (const auto& [name, description] : subcommands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "JSON config file (merged over defaults)");
    sub->add_option("--seed", seed_flag, "RNG seed (env default: SPECTRAL_RISK_SEED)");
    sub->add_option("--out", out_flag, "output directory");
    sub->add_option("--threads", threads_flag, "worker thread cap, 0 = all cores");
    sub->add_flag("--plot", plot_flag, "also write SVG charts");
    sub->add_option("--set", set_flags, "override one config field: dotted.path=value")
        ->allow_extra_args(false);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  CLI::App* active = app.get_subcommands().front();
  const std::string sub_name = active->get_name();

  try {
    json config = default_config(sub_name);
    if (const char* env_seed = std::getenv("SPECTRAL_RISK_SEED")) {
      config["seed"] = parse_u64(env_seed, "SPECTRAL_RISK_SEED");
    }
    if (active->count("--config") > 0) {
      std::ifstream file(config_path);
      if (!file) throw ValidationError("cannot read config file " + config_path);
      json file_config = json::parse(file, nullptr, false);
      if (file_config.is_discarded() || !file_config.is_object()) {
        throw ValidationError("config file " + config_path + " is not a JSON object");
      }
      // A previously emitted config.resolved.json is valid input. Its
      // subcommand tag must match; it is not a tunable field.
      if (file_config.contains("subcommand")) {
        if (file_config["subcommand"] != json(sub_name)) {
          const json& tag = file_config["subcommand"];
          throw ValidationError("config file " + config_path + " was resolved for subcommand '" +
                                (tag.is_string() ? tag.get<std::string>() : tag.dump()) + "'");
        }
        file_config.erase("subcommand");
      }
      // merge_patch deep-merges objects, which would leave the default
      // measure's fields behind when a config file switches the kind. A
      // measure that names its kind is taken as a whole.
      if (file_config.contains("measure") && file_config["measure"].is_object() &&
          file_config["measure"].contains("kind")) {
        config.erase("measure");
      }
      config.merge_patch(file_config);
    }
    for (const auto& spec : set_flags) apply_set(config, spec);
    if (active->count("--seed") > 0) config["seed"] = seed_flag;
    if (active->count("--out") > 0) config["out"] = out_flag;
    if (active->count("--threads") > 0) config["threads"] = threads_flag;
    if (plot_flag) config["plot"] = true;

    const CommonOpts opts = common_from(config);
    auto emit_resolved = [&]() {
      std::error_code ec;
      std::filesystem::create_directories(opts.out_dir, ec);
      if (ec) throw ValidationError("cannot create output directory " + opts.out_dir);
      json resolved = config;
      resolved["subcommand"] = sub_name;
      write_text_atomic(join_path(opts.out_dir, "config.resolved.json"),
                        resolved.dump(2) + "\n");
    };

    if (sub_name == "stieltjes") {
      const StieltjesPlan plan = plan_stieltjes(config);
      emit_resolved();
      run_stieltjes(plan, opts, err);
    } else if (sub_name == "descent") {
      const DescentPlan plan = plan_descent(config);
      emit_resolved();
      run_descent(plan, opts, err);
    } else if (sub_name == "mp-verify") {
      const MpPlan plan = plan_mp_verify(config);
      emit_resolved();
      run_mp_verify(plan, opts, err);
    } else {
      const AssumptionsPlan plan = plan_assumptions(config);
      emit_resolved();
      run_assumptions(plan, opts, err);
    }
    return 0;
  } catch (const ValidationError& e) {
    err << "spectral-risk: config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "spectral-risk: " << sub_name << ": " << e.what() << "\n";
    return 2;
  }
}

}  // namespace specrisk
