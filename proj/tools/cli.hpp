#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpa/fpa.hpp"

namespace fpa::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int
{
  exit_ok = 0,
  exit_failure = 1,
  exit_usage = 2,
  exit_data = 3,
  exit_numerical = 4
};

using Json = nlohmann::ordered_json;

//! Bad flag combinations found after parsing.
class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
Json value_of(const T& v)
{
  return v;
}

template <class T>
Json value_of(const std::optional<T>& v)
{
  return v ? Json(*v) : Json(nullptr);
}

/// Options bound to variables, remembered so the effective configuration
/// can be written out after flags and the config file are merged.
class OptionSet
{
public:
  explicit OptionSet(CLI::App* app)
    : app_(app)
  {
  }

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& help)
  {
    CLI::Option* opt = app_->add_option(flag, var, help);
    remember(opt, [&var] { return value_of(var); });
    return opt;
  }

  CLI::Option* flag(const std::string& flag, bool& var, const std::string& help)
  {
    CLI::Option* opt = app_->add_flag(flag, var, help);
    remember(opt, [&var] { return Json(var); });
    return opt;
  }

  Json effective() const
  {
    Json j = Json::object();
    for (const auto& [name, get] : values_)
      j[name] = get();
    return j;
  }

  CLI::App* app() const { return app_; }

private:
  void remember(CLI::Option* opt, std::function<Json()> get)
  {
    values_.emplace_back(opt->get_lnames().front(), std::move(get));
  }

  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<Json()>>> values_;
};

inline std::string config_scalar(const Json& v, const std::string& key)
{
  if (v.is_string())
    return v.get<std::string>();
  if (v.is_boolean())
    return v.get<bool>() ? "true" : "false";
  if (v.is_number())
    return v.dump();
  throw UsageError("config: unsupported value for '" + key + "'");
}

/**
 * Fills options that were not given on the command line from a JSON object.
 * Keys are long flag names ("grid-step" or "grid_step"); a key naming the
 * subcommand may hold a nested object.
 */
inline void apply_config(CLI::App& root, CLI::App& sub, const Json& doc)
{
  if (!doc.is_object())
    throw UsageError("config: top level must be a JSON object");
  for (const auto& [raw_key, value] : doc.items()) {
    if (raw_key == sub.get_name() && value.is_object()) {
      apply_config(root, sub, value);
      continue;
    }
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config")
      continue;
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr)
      opt = root.get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw UsageError("config: unknown option '" + raw_key + "'");
    if (opt->count() > 0)
      continue; // the command line wins
    if (value.is_array()) {
      for (const auto& item : value)
        opt->add_result(config_scalar(item, raw_key));
    } else if (!value.is_null()) {
      opt->add_result(config_scalar(value, raw_key));
    }
    opt->run_callback();
  }
}

inline Json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw MissingFile(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

//! Writes to `path`, or to `fallback` when the path is empty.
inline void emit(const std::string& path, const std::string& content,
                 std::ostream& fallback)
{
  if (path.empty()) {
    fallback << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out)
    throw std::runtime_error("write to '" + path + "' failed");
}

inline void emit_sidecar(const std::string& path, const Json& meta)
{
  if (!path.empty())
    emit(path + ".json", meta.dump(2) + "\n", std::cout);
}

inline std::string rows_to_csv(const std::vector<std::string>& header,
                               const std::vector<std::vector<double>>& columns)
{
  std::ostringstream s;
  csv::write_row(s, header);
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  std::vector<std::string> fields(columns.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c)
      fields[c] = csv::format(columns[c][r]);
    csv::write_row(s, fields);
  }
  return s.str();
}

inline Json plan_json(const BandwidthPlan& p)
{
  return { { "h_g", p.h_g }, { "h_f", p.h_f }, { "h_r", p.h_r } };
}

/// Manual bandwidths; h_r follows h_f unless given.
struct BandwidthOverrides
{
  std::optional<double> h_g, h_f, h_r;

  void add_to(OptionSet& o)
  {
    o.add("--h-g", h_g, "First-step bid bandwidth (default: rule of thumb)");
    o.add("--h-f", h_f, "Second-step value bandwidth (default: rule of thumb)");
    o.add("--h-r", h_r, "Rearrangement bandwidth (default: h_f)");
  }

  bool any() const { return h_g || h_f || h_r; }

  BandwidthPlan apply(BandwidthPlan p) const
  {
    if (h_g)
      p.h_g = *h_g;
    if (h_f)
      p.h_f = *h_f;
    p.h_r = h_r ? *h_r : (h_f ? *h_f : p.h_r);
    p.validate();
    return p;
  }
};

/// Evaluation grid; unset ends default to the 5th and 95th percentiles of
/// the constrained pseudo-values, the step to 1/400 of the range.
struct GridOptions
{
  std::optional<double> v_lo, v_hi, step;

  void add_to(OptionSet& o)
  {
    o.add("--v-lo", v_lo, "Lower end of the evaluation grid");
    o.add("--v-hi", v_hi, "Upper end of the evaluation grid");
    o.add("--grid-step", step, "Grid spacing");
  }

  std::vector<double> resolve(std::vector<double> values) const
  {
    std::sort(values.begin(), values.end());
    auto pct = [&](double p) {
      const auto k = static_cast<std::size_t>(
        std::floor(p * static_cast<double>(values.size() - 1)));
      return values[k];
    };
    const double lo = v_lo ? *v_lo : pct(0.05);
    const double hi = v_hi ? *v_hi : pct(0.95);
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
      throw UsageError("grid: need v-lo < v-hi");
    const double h = step ? *step : (hi - lo) / 400.0;
    if (!(h > 0.0))
      throw UsageError("grid: step must be positive");
    const double count = std::round((hi - lo) / h);
    if (count > 1e6)
      throw UsageError("grid: more than a million points");
    const auto n = static_cast<std::size_t>(count);
    std::vector<double> g;
    for (std::size_t k = 0; k <= n; ++k)
      g.push_back(std::min(lo + static_cast<double>(k) * h, hi));
    if (g.size() > 1 && !(g.back() > g[g.size() - 2]))
      g.pop_back();
    return g;
  }
};

inline Json grid_json(const std::vector<double>& g)
{
  return { { "lo", g.front() }, { "hi", g.back() }, { "points", g.size() } };
}

inline InverseMethod parse_inverse(const std::string& s)
{
  if (s == "table")
    return InverseMethod::table;
  if (s == "bisection")
    return InverseMethod::bisection;
  throw UsageError("--inverse must be 'table' or 'bisection'");
}

inline kernels::EstimatorKind parse_method(const std::string& s)
{
  if (s == "gpv")
    return kernels::EstimatorKind::gpv;
  if (s == "rgpv")
    return kernels::EstimatorKind::rgpv;
  throw UsageError("--method must be 'gpv' or 'rgpv'");
}

inline BidSample load_fixed(const std::string& path)
{
  if (path.empty())
    throw UsageError("--input is required");
  BidSample s = load_bids(path);
  if (s.n_bidders() < 2)
    throw DataError(path + ": need at least two bidders per auction");
  return s;
}

inline Json header(const std::string& command, const OptionSet& options,
                   std::size_t threads)
{
  Json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["options"] = options.effective();
  j["threads"] = threads;
  return j;
}

} // namespace detail

/// Parsed command line for every subcommand.
struct RunConfig
{
  std::size_t threads = 0;
  std::string config_path;

  struct Common
  {
    std::string input, output;
    detail::BandwidthOverrides bandwidths;
    detail::GridOptions grid;
    std::size_t riemann_points = 0;
    std::string inverse = "table";
  };

  Common estimate;

  Common band;
  std::string method = "rgpv";
  double alpha = 0.05;
  std::size_t n_boot = 499;
  std::uint64_t band_seed = 0;
  bool hetero = false;
  std::vector<double> x0;

  double theta = 1.0;
  std::size_t sim_n = 5;
  std::size_t total_bids = 2100;
  std::size_t reps = 200;
  std::size_t sim_boot = 199;
  std::vector<double> sim_alphas = { 0.05 };
  double sim_lo = 0.3, sim_hi = 0.7, sim_step = 0.001;
  std::uint64_t sim_seed = 0;
  std::size_t sim_riemann = 1000;
  std::string sim_output, sim_records;
  bool timing = false;

  std::string hom_input, hom_output;
  std::vector<double> hom_x0;

  std::vector<double> ratio_thetas = { 1.0 };
  std::vector<std::size_t> ratio_ns = { 5 };
  std::string convention = "common";
  double ratio_v = 0.5;
  std::string ratio_output;
};

namespace detail {

inline void add_common(OptionSet& o, RunConfig::Common& c)
{
  o.add("-i,--input", c.input, "Bid CSV (auction_id,bidder_id,bid)");
  o.add("-o,--output", c.output, "Output CSV (default: stdout); metadata goes to <output>.json");
  c.bandwidths.add_to(o);
  c.grid.add_to(o);
  o.add("--riemann-points", c.riemann_points, "Riemann points for the rearrangement (0: automatic)");
  o.add("--inverse", c.inverse, "Pseudo-inverse method: table or bisection");
}

inline Fit fit_common(const RunConfig::Common& c, const BidSample& sample)
{
  FitOptions fo;
  fo.riemann_points = c.riemann_points;
  fo.inverse = parse_inverse(c.inverse);
  const BandwidthPlan plan = c.bandwidths.apply(rule_of_thumb_plan(sample));
  return fit(sample, plan, support_bounds(sample), fo);
}

inline void run_estimate(const RunConfig& rc, const OptionSet& opts, std::ostream& out)
{
  using Kind = kernels::EstimatorKind;
  const auto& c = rc.estimate;
  const BidSample sample = load_fixed(c.input);
  const Fit f = fit_common(c, sample);
  const auto grid = c.grid.resolve(f.constrained);
  const auto f_gpv = density_on_grid(f, Kind::gpv, grid);
  const auto f_rgpv = density_on_grid(f, Kind::rgpv, grid);
  const auto v_gpv = variance_on_grid(f, Kind::gpv, grid);
  const auto v_rgpv = variance_on_grid(f, Kind::rgpv, grid);
  emit(c.output,
       rows_to_csv({ "v", "f_gpv", "f_rgpv", "var_gpv", "var_rgpv" },
                   { grid, f_gpv, f_rgpv, v_gpv.value, v_rgpv.value }),
       out);

  Json meta = header("estimate", opts, resolve_threads(rc.threads));
  meta["sample"] = { { "n_bidders", sample.n_bidders() },
                     { "n_auctions", sample.n_auctions() } };
  meta["bandwidths"] = plan_json(f.plan);
  meta["support"] = { f.curve.support().lo, f.curve.support().hi };
  meta["riemann_points"] = f.riemann_points();
  meta["normalizer"] = variance_normalizer(f);
  meta["grid"] = grid_json(grid);
  emit_sidecar(c.output, meta);
}

inline void run_band_fixed(const RunConfig& rc, const OptionSet& opts, std::ostream& out)
{
  const auto& c = rc.band;
  const auto method = parse_method(rc.method);
  const BidSample sample = load_fixed(c.input);
  const Fit f = fit_common(c, sample);
  const auto grid = c.grid.resolve(f.constrained);
  const kernels::EstimatorKind methods[] = { method };
  if (rc.n_boot < 20)
    throw UsageError("--boot must be at least 20");
  const BootstrapRun run =
    bootstrap(f, grid, methods, { rc.n_boot, rc.band_seed, rc.threads, false });
  const BandResult band = make_band(run, method, rc.alpha);
  emit(c.output,
       rows_to_csv({ "v", "estimate", "variance", "lower", "upper" },
                   { band.grid, band.estimate, band.variance, band.lower, band.upper }),
       out);

  Json meta = header("band", opts, resolve_threads(rc.threads));
  meta["method"] = kernels::to_string(method);
  meta["critical_value"] = band.critical_value;
  meta["alpha"] = band.alpha;
  meta["n_boot"] = band.n_boot;
  meta["seed"] = band.seed;
  meta["bandwidths"] = plan_json(f.plan);
  meta["normalizer"] = band.normalizer;
  meta["sup_width"] = band.sup_width();
  meta["flagged_points"] = band.flagged_points;
  meta["sample"] = { { "n_bidders", sample.n_bidders() },
                     { "n_auctions", sample.n_auctions() } };
  meta["riemann_points"] = f.riemann_points();
  meta["grid"] = grid_json(grid);
  emit_sidecar(c.output, meta);
}

inline Json homogenization_json(const HomogenizationFit& fit,
                                const HeteroPanel& panel,
                                const std::vector<double>& x0)
{
  Json alpha = Json::object();
  for (std::size_t k = 0; k < fit.bidder_counts.size(); ++k)
    alpha[std::to_string(fit.bidder_counts[k])] = fit.alpha[k];
  Json beta = Json::object();
  for (std::size_t j = 0; j < panel.dimension(); ++j)
    beta[panel.covariate_names()[j]] = fit.beta(static_cast<Eigen::Index>(j));
  return { { "alpha_by_n", alpha }, { "beta", beta }, { "x0", x0 } };
}

inline std::vector<double> resolve_x0(const std::vector<double>& given,
                                      const HeteroPanel& panel)
{
  if (given.empty())
    return panel.covariate_mean();
  if (given.size() != panel.dimension())
    throw UsageError("--x0 needs " + std::to_string(panel.dimension()) + " values");
  return given;
}

inline void run_band_hetero(const RunConfig& rc, const OptionSet& opts, std::ostream& out)
{
  const auto& c = rc.band;
  if (parse_method(rc.method) != kernels::EstimatorKind::rgpv)
    throw UsageError("--hetero bands use the rgpv estimator");
  if (c.input.empty())
    throw UsageError("--input is required");
  if (rc.n_boot < 20)
    throw UsageError("--boot must be at least 20");
  const HeteroPanel panel = load_panel(c.input);
  const std::vector<double> x0 = resolve_x0(rc.x0, panel);

  HeteroOptions ho;
  ho.fit.riemann_points = c.riemann_points;
  ho.fit.inverse = parse_inverse(c.inverse);
  if (c.bandwidths.any()) {
    if (!c.bandwidths.h_g || !c.bandwidths.h_f)
      throw UsageError("--hetero with manual bandwidths needs --h-g and --h-f");
    ho.plan = c.bandwidths.apply({ 1.0, 1.0, 1.0 });
  }
  // Default grid from the pooled constrained values.
  const HomogenizationFit hfit = fit_homogenization(panel);
  const auto groups = homogenize(panel, hfit, x0);
  const HeteroEstimate est = estimate_groups(groups, panel.n_auctions(), ho);
  std::vector<double> pooled;
  for (const auto& g : est.groups)
    pooled.insert(pooled.end(), g.fit.constrained.begin(), g.fit.constrained.end());
  const auto grid = c.grid.resolve(pooled);

  const HeteroBand hb =
    hetero_band(panel, x0, grid, rc.alpha, ho, { rc.n_boot, rc.band_seed, rc.threads, false });
  const BandResult& band = hb.band;
  emit(c.output,
       rows_to_csv({ "v", "estimate", "variance", "lower", "upper" },
                   { band.grid, band.estimate, band.variance, band.lower, band.upper }),
       out);

  Json meta = header("band", opts, resolve_threads(rc.threads));
  meta["method"] = "rgpv";
  meta["hetero"] = true;
  meta["critical_value"] = band.critical_value;
  meta["alpha"] = band.alpha;
  meta["n_boot"] = band.n_boot;
  meta["seed"] = band.seed;
  meta["normalizer"] = std::isfinite(band.normalizer) ? Json(band.normalizer) : Json(nullptr);
  meta["sup_width"] = band.sup_width();
  meta["flagged_points"] = band.flagged_points;
  meta["homogenization"] = homogenization_json(hb.homogenization, panel, x0);
  Json by_n = Json::array();
  for (std::size_t k = 0; k < hb.variance.terms.size(); ++k) {
    const auto& t = hb.variance.terms[k];
    const GroupFit* g = est.group(t.n_bidders);
    by_n.push_back({ { "n", t.n_bidders },
                     { "auctions", t.n_auctions },
                     { "bandwidths", plan_json(g->fit.plan) },
                     { "normalizer", t.normalizer },
                     { "skipped", t.skipped } });
  }
  meta["by_n"] = by_n;
  meta["grid"] = grid_json(grid);
  emit_sidecar(c.output, meta);
}

inline void run_simulate(const RunConfig& rc, const OptionSet& opts, std::ostream& out)
{
  SimConfig sc;
  sc.theta = rc.theta;
  sc.n_bidders = rc.sim_n;
  sc.total_bids = rc.total_bids;
  sc.mc_reps = rc.reps;
  sc.n_boot = rc.sim_boot;
  sc.alphas = rc.sim_alphas;
  sc.v_lo = rc.sim_lo;
  sc.v_hi = rc.sim_hi;
  sc.grid_step = rc.sim_step;
  sc.seed = rc.sim_seed;
  sc.riemann_points = rc.sim_riemann;
  sc.threads = rc.threads;
  const SimReport report = coverage_experiment(sc);
  write_table(out, report);
  if (rc.timing)
    out << "runtime " << report.runtime_seconds << " s\n";
  if (!rc.sim_output.empty()) {
    Json j = header("simulate", opts, resolve_threads(rc.threads));
    j["report"] = to_json(report, rc.timing);
    emit(rc.sim_output, j.dump(2) + "\n", out);
  }
  if (!rc.sim_records.empty()) {
    std::ostringstream s;
    write_records_csv(s, report);
    emit(rc.sim_records, s.str(), out);
  }
}

inline void run_homogenize(const RunConfig& rc, const OptionSet& opts, std::ostream& out)
{
  if (rc.hom_input.empty())
    throw UsageError("--input is required");
  const HeteroPanel panel = load_panel(rc.hom_input);
  const std::vector<double> x0 = resolve_x0(rc.hom_x0, panel);
  const HomogenizationFit fit = fit_homogenization(panel);
  const HeteroPanel h = homogenized_panel(panel, fit, x0);
  std::ostringstream s;
  csv::write_row(s, { "auction_id", "bidder_index", "n_bidders", "bid", "homogenized_bid" });
  for (std::size_t l = 0; l < panel.n_auctions(); ++l) {
    const auto& a = panel.auction(l);
    for (std::size_t i = 0; i < a.bids.size(); ++i)
      csv::write_row(s, { a.id, std::to_string(i + 1), std::to_string(a.bids.size()),
                          csv::format(a.bids[i]), csv::format(h.auction(l).bids[i]) });
  }
  emit(rc.hom_output, s.str(), out);
  Json meta = header("homogenize", opts, resolve_threads(rc.threads));
  meta["n_auctions"] = panel.n_auctions();
  meta["total_bids"] = panel.total_bids();
  meta["homogenization"] = homogenization_json(fit, panel, x0);
  emit_sidecar(rc.hom_output, meta);
}

inline void run_variance_ratio(const RunConfig& rc, const OptionSet& opts, std::ostream& out)
{
  std::vector<RatioConvention> conventions;
  if (rc.convention == "common" || rc.convention == "both")
    conventions.push_back(RatioConvention::common_kernel);
  if (rc.convention == "rule-of-thumb" || rc.convention == "both")
    conventions.push_back(RatioConvention::rule_of_thumb);
  if (conventions.empty())
    throw UsageError("--convention must be common, rule-of-thumb or both");
  std::ostringstream s;
  csv::write_row(s, { "theta", "n", "convention", "v_gpv", "v_rgpv", "ratio" });
  for (double theta : rc.ratio_thetas)
    for (std::size_t n : rc.ratio_ns)
      for (auto conv : conventions) {
        const AsymptoticPrimitives p = theta_primitives(theta, n, conv);
        const double g = asymptotic_variance(kernels::EstimatorKind::gpv, p, rc.ratio_v);
        const double r = asymptotic_variance(kernels::EstimatorKind::rgpv, p, rc.ratio_v);
        csv::write_row(s, { csv::format(theta), std::to_string(n), to_string(conv),
                            csv::format(g), csv::format(r), csv::format(g / r) });
      }
  emit(rc.ratio_output, s.str(), out);
  emit_sidecar(rc.ratio_output, header("variance-ratio", opts, resolve_threads(rc.threads)));
}

} // namespace detail

/// Runs the command line; returns the process exit status.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err)
{
  RunConfig rc;
  CLI::App app{ "Nonparametric first-price auction estimation and inference", "fpa" };
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.add_option("--threads", rc.threads, "Worker threads (0: all cores)");
  app.add_option("--config", rc.config_path, "JSON file of option values; flags override it");

  using detail::OptionSet;
  CLI::App* est = app.add_subcommand("estimate", "GPV and RGPV densities with variance estimates");
  OptionSet est_opts(est);
  detail::add_common(est_opts, rc.estimate);

  CLI::App* band = app.add_subcommand("band", "Uniform confidence band by bootstrap");
  OptionSet band_opts(band);
  detail::add_common(band_opts, rc.band);
  band_opts.add("--method", rc.method, "gpv or rgpv");
  band_opts.add("--alpha", rc.alpha, "One minus the confidence level");
  band_opts.add("--boot", rc.n_boot, "Bootstrap replications");
  band_opts.add("--seed", rc.band_seed, "Master seed");
  band_opts.flag("--hetero", rc.hetero, "Input is a panel with covariates and varying bidder counts");
  band_opts.add("--x0", rc.x0, "Covariate value for the conditional density (default: sample mean)");

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo coverage of the uniform bands");
  OptionSet sim_opts(sim);
  sim_opts.add("--theta", rc.theta, "Shape of F(v) = v^theta");
  sim_opts.add("--n", rc.sim_n, "Bidders per auction");
  sim_opts.add("--total-bids", rc.total_bids, "N times L");
  sim_opts.add("--reps", rc.reps, "Monte Carlo replications");
  sim_opts.add("--boot", rc.sim_boot, "Bootstrap replications per band");
  sim_opts.add("--alpha", rc.sim_alphas, "One minus the confidence level (repeatable)");
  sim_opts.add("--v-lo", rc.sim_lo, "Lower end of the interval");
  sim_opts.add("--v-hi", rc.sim_hi, "Upper end of the interval");
  sim_opts.add("--grid-step", rc.sim_step, "Grid spacing");
  sim_opts.add("--seed", rc.sim_seed, "Master seed");
  sim_opts.add("--riemann-points", rc.sim_riemann, "Riemann points for the rearrangement");
  sim_opts.add("-o,--output", rc.sim_output, "JSON report path");
  sim_opts.add("--records", rc.sim_records, "Per-replication CSV path");
  sim_opts.flag("--timing", rc.timing, "Report wall-clock time");

  CLI::App* hom = app.add_subcommand("homogenize", "Homogenize bids to a reference covariate value");
  OptionSet hom_opts(hom);
  hom_opts.add("-i,--input", rc.hom_input, "Panel CSV (auction_id,bidder_id,bid,n_bidders,x...)");
  hom_opts.add("-o,--output", rc.hom_output, "Output CSV (default: stdout)");
  hom_opts.add("--x0", rc.hom_x0, "Reference covariates (default: sample mean)");

  CLI::App* ratio = app.add_subcommand("variance-ratio", "Asymptotic V_GPV / V_RGPV for the theta family");
  OptionSet ratio_opts(ratio);
  ratio_opts.add("--theta", rc.ratio_thetas, "Shape parameters (repeatable)");
  ratio_opts.add("--n", rc.ratio_ns, "Bidder counts (repeatable)");
  ratio_opts.add("--convention", rc.convention, "common, rule-of-thumb or both");
  ratio_opts.add("--v", rc.ratio_v, "Evaluation point");
  ratio_opts.add("-o,--output", rc.ratio_output, "Output CSV (default: stdout)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    CLI::App* chosen = app.get_subcommands().front();
    if (!rc.config_path.empty())
      detail::apply_config(app, *chosen, detail::read_json(rc.config_path));
    if (chosen == est)
      detail::run_estimate(rc, est_opts, out);
    else if (chosen == band && rc.hetero)
      detail::run_band_hetero(rc, band_opts, out);
    else if (chosen == band)
      detail::run_band_fixed(rc, band_opts, out);
    else if (chosen == sim)
      detail::run_simulate(rc, sim_opts, out);
    else if (chosen == hom)
      detail::run_homogenize(rc, hom_opts, out);
    else
      detail::run_variance_ratio(rc, ratio_opts, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const InvalidArgument& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const OutOfDomain& e) {
    err << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
  return exit_ok;
}

inline int run(int argc, char** argv, std::ostream& out, std::ostream& err)
{
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

} // namespace fpa::cli
