#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpa/bootstrap.hpp"
#include "fpa/csv.hpp"
#include "fpa/error.hpp"
#include "fpa/fit.hpp"
#include "fpa/rng.hpp"
#include "fpa/theta_family.hpp"

namespace fpa {

/// Bids and the values behind them.
struct DgpDraw
{
  BidSample sample;
  std::vector<double> values;
};

//! V = U^{1/θ}, B = (1 - 1/(θ(N-1)+1))·V; N·L draws, auction-major.
inline DgpDraw dgp_draw(double theta, std::size_t n_bidders,
                        std::size_t n_auctions, std::uint64_t seed)
{
  const double factor = theta_bid_factor(theta, n_bidders);
  if (n_auctions < 1)
    throw InvalidArgument("dgp_draw: need at least one auction");
  Engine rng = make_engine(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values(n_bidders * n_auctions);
  std::vector<double> bids(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = theta == 1.0 ? unif(rng) : std::pow(unif(rng), 1.0 / theta);
    bids[i] = factor * values[i];
  }
  return { BidSample(std::move(bids), n_bidders, n_auctions), std::move(values) };
}

struct SimConfig
{
  double theta = 1.0;
  std::size_t n_bidders = 5;
  std::size_t total_bids = 2100;
  std::size_t mc_reps = 200;
  std::size_t n_boot = 199;
  std::vector<double> alphas = { 0.05 };
  double v_lo = 0.3;
  double v_hi = 0.7;
  double grid_step = 0.001;
  std::uint64_t seed = 0;
  //! Riemann points for ξ̂; 0 means the library default.
  std::size_t riemann_points = 1000;
  std::size_t threads = 0;

  std::size_t n_auctions() const { return total_bids / n_bidders; }

  void validate() const
  {
    if (!(theta > 0.0) || !std::isfinite(theta))
      throw InvalidArgument("simulate: theta must be positive");
    if (n_bidders < 2)
      throw InvalidArgument("simulate: need at least two bidders");
    if (total_bids == 0 || total_bids % n_bidders != 0)
      throw InvalidArgument("simulate: total_bids must be a positive multiple of N");
    if (mc_reps < 1)
      throw InvalidArgument("simulate: mc_reps must be at least 1");
    if (n_boot < 20)
      throw InvalidArgument("simulate: n_boot must be at least 20");
    if (alphas.empty())
      throw InvalidArgument("simulate: no alpha given");
    for (double a : alphas)
      if (!(a > 0.0 && a < 1.0))
        throw InvalidArgument("simulate: alpha must lie in (0, 1)");
    if (!(v_lo >= 0.0 && v_lo < v_hi && v_hi <= 1.0))
      throw InvalidArgument("simulate: need 0 <= v_lo < v_hi <= 1");
    if (!(grid_step > 0.0) || grid_step > v_hi - v_lo)
      throw InvalidArgument("simulate: grid step must lie in (0, v_hi - v_lo]");
  }

  //! v_lo, v_lo + step, ..., v_hi (the last point snapped to v_hi).
  std::vector<double> grid() const
  {
    const auto steps =
      static_cast<std::size_t>(std::llround((v_hi - v_lo) / grid_step));
    std::vector<double> g(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
      g[k] = v_lo + static_cast<double>(k) * grid_step;
    g.back() = std::min(g.back(), v_hi);
    if (steps > 0 && !(g[steps] > g[steps - 1]))
      g.pop_back();
    return g;
  }
};

/// Outcome of one band in one replication.
struct BandOutcome
{
  bool covered = false;
  double width = 0.0;          // sup over the grid of the band width
  double critical_value = 0.0;
  std::size_t flagged_points = 0;
};

struct SimRecord
{
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  //! [alpha index][0 = gpv, 1 = rgpv]
  std::vector<std::array<BandOutcome, 2>> bands;
};

struct SimCell
{
  kernels::EstimatorKind method = kernels::EstimatorKind::gpv;
  double alpha = 0.05;
  std::size_t covered = 0;
  std::size_t valid = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
};

struct WidthRatio
{
  double alpha = 0.05;
  double mean_of_ratios = 0.0;  // average of W_GPV/W_RGPV over replications
  double ratio_of_means = 0.0;  // mean W_GPV / mean W_RGPV
};

struct SimReport
{
  SimConfig config;
  std::vector<SimCell> cells;
  std::vector<WidthRatio> ratios;
  std::size_t failures = 0;
  std::vector<SimRecord> records;
  double runtime_seconds = 0.0;

  const SimCell& cell(kernels::EstimatorKind method, double alpha) const
  {
    for (const auto& c : cells)
      if (c.method == method && c.alpha == alpha)
        return c;
    throw InvalidArgument("SimReport: no such cell");
  }
  const WidthRatio& ratio(double alpha) const
  {
    for (const auto& r : ratios)
      if (r.alpha == alpha)
        return r;
    throw InvalidArgument("SimReport: no such alpha");
  }
};

//! One Monte Carlo replication: both bands for every alpha.
inline SimRecord simulate_replication(const SimConfig& config,
                                      std::span<const double> grid,
                                      std::size_t rep)
{
  using Kind = kernels::EstimatorKind;
  SimRecord rec;
  rec.rep = rep;
  rec.seed = derive_seed(config.seed, rep);
  try {
    const DgpDraw draw =
      dgp_draw(config.theta, config.n_bidders, config.n_auctions(),
               derive_seed(rec.seed, 0));
    FitOptions fo;
    fo.riemann_points = config.riemann_points;
    const Fit f = fit(draw.sample, fo);
    const Kind methods[] = { Kind::gpv, Kind::rgpv };
    const BootstrapRun run =
      bootstrap(f, grid, methods, { config.n_boot, derive_seed(rec.seed, 1), 1, false });
    for (double alpha : config.alphas) {
      std::array<BandOutcome, 2> out;
      for (std::size_t m = 0; m < 2; ++m) {
        const BandResult band = make_band(run, methods[m], alpha);
        out[m].covered =
          band.covers([&](double v) { return true_density(config.theta, v); });
        out[m].width = band.sup_width();
        out[m].critical_value = band.critical_value;
        out[m].flagged_points = band.flagged_points;
      }
      rec.bands.push_back(out);
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.bands.clear();
  }
  return rec;
}

//! Coverage rates and width ratios from replication records; failed
//! replications are counted and left out of the rates.
inline SimReport summarize(const SimConfig& config, std::vector<SimRecord> records)
{
  using Kind = kernels::EstimatorKind;
  SimReport report;
  report.config = config;
  report.records = std::move(records);
  for (std::size_t a = 0; a < config.alphas.size(); ++a) {
    SimCell cells[2] = { { Kind::gpv, config.alphas[a] },
                         { Kind::rgpv, config.alphas[a] } };
    double ratio_sum = 0.0;
    std::size_t ratio_count = 0;
    for (const auto& rec : report.records) {
      if (rec.failed)
        continue;
      for (std::size_t m = 0; m < 2; ++m) {
        ++cells[m].valid;
        cells[m].covered += rec.bands[a][m].covered ? 1 : 0;
        cells[m].mean_width += rec.bands[a][m].width;
      }
      if (rec.bands[a][1].width > 0.0) {
        ratio_sum += rec.bands[a][0].width / rec.bands[a][1].width;
        ++ratio_count;
      }
    }
    for (auto& c : cells) {
      if (c.valid > 0) {
        c.coverage = static_cast<double>(c.covered) / static_cast<double>(c.valid);
        c.mean_width /= static_cast<double>(c.valid);
      } else {
        c.coverage = NAN;
        c.mean_width = NAN;
      }
      report.cells.push_back(c);
    }
    WidthRatio r;
    r.alpha = config.alphas[a];
    r.mean_of_ratios = ratio_count > 0 ? ratio_sum / static_cast<double>(ratio_count) : NAN;
    r.ratio_of_means = cells[0].mean_width / cells[1].mean_width;
    report.ratios.push_back(r);
  }
  for (const auto& rec : report.records)
    report.failures += rec.failed ? 1 : 0;
  return report;
}

/**
 * Coverage of the GPV and RGPV uniform bands over Monte Carlo draws.
 * Replication r draws from derive_seed(seed, r).
 */
inline SimReport coverage_experiment(const SimConfig& config)
{
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> grid = config.grid();
  std::vector<SimRecord> records(config.mc_reps);
  parallel_for(config.mc_reps, config.threads, [&](std::size_t rep) {
    records[rep] = simulate_replication(config, grid, rep);
  });
  SimReport report = summarize(config, std::move(records));
  report.runtime_seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline nlohmann::ordered_json to_json(const SimConfig& c)
{
  return { { "theta", c.theta },
           { "n_bidders", c.n_bidders },
           { "total_bids", c.total_bids },
           { "n_auctions", c.n_auctions() },
           { "mc_reps", c.mc_reps },
           { "n_boot", c.n_boot },
           { "alphas", c.alphas },
           { "v_lo", c.v_lo },
           { "v_hi", c.v_hi },
           { "grid_step", c.grid_step },
           { "seed", c.seed },
           { "riemann_points", c.riemann_points } };
}

//! Report as JSON. Timing is left out unless asked for, so equal
//! configurations give identical documents.
inline nlohmann::ordered_json to_json(const SimReport& r, bool with_timing = false)
{
  nlohmann::ordered_json j;
  j["config"] = to_json(r.config);
  j["failures"] = r.failures;
  auto& cells = j["coverage"] = nlohmann::ordered_json::array();
  for (const auto& c : r.cells)
    cells.push_back({ { "method", to_string(c.method) },
                      { "alpha", c.alpha },
                      { "nominal", 1.0 - c.alpha },
                      { "covered", c.covered },
                      { "valid", c.valid },
                      { "coverage", c.coverage },
                      { "mean_sup_width", c.mean_width } });
  auto& ratios = j["width_ratio"] = nlohmann::ordered_json::array();
  for (const auto& w : r.ratios)
    ratios.push_back({ { "alpha", w.alpha },
                       { "mean_of_ratios", w.mean_of_ratios },
                       { "ratio_of_means", w.ratio_of_means } });
  auto& errors = j["errors"] = nlohmann::ordered_json::array();
  for (const auto& rec : r.records)
    if (rec.failed)
      errors.push_back({ { "rep", rec.rep }, { "message", rec.error } });
  if (with_timing)
    j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

//! Table laid out as rows of nominal level, coverage by method, width ratio.
inline void write_table(std::ostream& out, const SimReport& r)
{
  using Kind = kernels::EstimatorKind;
  std::ostringstream s;
  s << std::fixed;
  s << "theta=" << std::setprecision(2) << r.config.theta
    << "  N=" << r.config.n_bidders << "  NL=" << r.config.total_bids
    << "  reps=" << r.config.mc_reps << "  n_boot=" << r.config.n_boot
    << "  I=[" << std::setprecision(3) << r.config.v_lo << ", " << r.config.v_hi
    << "]  failures=" << r.failures << '\n';
  s << std::left << std::setw(9) << "nominal" << std::right << std::setw(10)
    << "GPV" << std::setw(10) << "RGPV" << std::setw(16) << "W_GPV/W_RGPV"
    << std::setw(16) << "ratio of means" << '\n';
  for (const auto& w : r.ratios) {
    s << std::left << std::setw(9) << std::setprecision(2) << 1.0 - w.alpha
      << std::right << std::setprecision(3) << std::setw(10)
      << r.cell(Kind::gpv, w.alpha).coverage << std::setw(10)
      << r.cell(Kind::rgpv, w.alpha).coverage << std::setw(16)
      << w.mean_of_ratios << std::setw(16) << w.ratio_of_means << '\n';
  }
  out << s.str();
}

//! Per-replication records, one row per (replication, alpha, method).
inline void write_records_csv(std::ostream& out, const SimReport& r)
{
  csv::write_row(out, { "rep", "seed", "alpha", "method", "covered", "sup_width",
                        "critical_value", "flagged_points", "error" });
  const char* names[] = { "gpv", "rgpv" };
  for (const auto& rec : r.records) {
    if (rec.failed) {
      csv::write_row(out, { std::to_string(rec.rep), std::to_string(rec.seed),
                            "", "", "", "", "", "", rec.error });
      continue;
    }
    for (std::size_t a = 0; a < r.config.alphas.size(); ++a)
      for (std::size_t m = 0; m < 2; ++m) {
        const auto& b = rec.bands[a][m];
        csv::write_row(out, { std::to_string(rec.rep), std::to_string(rec.seed),
                              csv::format(r.config.alphas[a]), names[m],
                              b.covered ? "1" : "0", csv::format(b.width),
                              csv::format(b.critical_value),
                              std::to_string(b.flagged_points), "" });
      }
  }
}

} // namespace fpa
