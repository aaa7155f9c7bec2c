#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "fpa/error.hpp"
#include "fpa/fit.hpp"
#include "fpa/kernels.hpp"
#include "fpa/panel.hpp"
#include "fpa/parallel.hpp"
#include "fpa/rng.hpp"
#include "fpa/sample.hpp"

namespace fpa {

//! NL draws with replacement from the pooled bids, laid out as N×L.
inline BidSample resample(const BidSample& sample, std::uint64_t seed)
{
  const auto bids = sample.bids();
  Engine rng = make_engine(seed);
  std::uniform_int_distribution<std::size_t> pick(0, bids.size() - 1);
  std::vector<double> out(bids.size());
  for (auto& b : out)
    b = bids[pick(rng)];
  return BidSample(std::move(out), sample.n_bidders(), sample.n_auctions());
}

/**
 * Heterogeneous panel resample: each auction draws N*_l from the empirical
 * bidder counts (taking that auction's covariates), then N*_l bids with
 * replacement from the pooled bids of auctions with N_l = N*_l.
 */
inline HeteroPanel two_step_resample(const HeteroPanel& panel,
                                     std::uint64_t seed)
{
  const auto ns = panel.bidder_counts();
  std::vector<std::vector<double>> pools(ns.size());
  for (const auto& a : panel.auctions()) {
    const auto k = static_cast<std::size_t>(
      std::lower_bound(ns.begin(), ns.end(), a.bids.size()) - ns.begin());
    pools[k].insert(pools[k].end(), a.bids.begin(), a.bids.end());
  }
  Engine rng = make_engine(seed);
  std::uniform_int_distribution<std::size_t> pick_auction(0, panel.n_auctions() - 1);
  std::vector<AuctionRecord> out;
  out.reserve(panel.n_auctions());
  for (std::size_t l = 0; l < panel.n_auctions(); ++l) {
    const AuctionRecord& src = panel.auction(pick_auction(rng));
    const auto k = static_cast<std::size_t>(
      std::lower_bound(ns.begin(), ns.end(), src.bids.size()) - ns.begin());
    const auto& pool = pools[k];
    std::uniform_int_distribution<std::size_t> pick_bid(0, pool.size() - 1);
    AuctionRecord rec{ panel.auction(l).id, {}, src.covariates };
    rec.bids.resize(src.bids.size());
    for (auto& b : rec.bids)
      b = pool[pick_bid(rng)];
    out.push_back(std::move(rec));
  }
  return HeteroPanel(std::move(out), panel.covariate_names());
}

//! Order statistic of rank ⌈(1-α)B⌉ of the sup values (inf-quantile).
inline double sup_quantile(std::span<const double> sups, double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("sup_quantile: alpha must lie in (0, 1)");
  if (sups.empty())
    throw InvalidArgument("sup_quantile: no bootstrap values");
  std::vector<double> sorted(sups.begin(), sups.end());
  std::sort(sorted.begin(), sorted.end());
  const double target = (1.0 - alpha) * static_cast<double>(sorted.size());
  // Guard against (1-α)B landing a rounding error above an integer.
  auto rank = static_cast<std::size_t>(std::ceil(target * (1.0 - 1e-12)));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

struct BootstrapOptions
{
  std::size_t n_boot = 499;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  //! Keep every replicate f̂* (needed for percentile intervals).
  bool keep_replicates = false;
};

/// Original-sample quantities and bootstrap sup statistics for one method.
struct BootstrapSeries
{
  kernels::EstimatorKind method = kernels::EstimatorKind::rgpv;
  std::vector<double> estimate;
  std::vector<double> variance;
  std::vector<double> std_error; // √(V̂/(L h_f² h_g)); NaN where V̂ ≤ 0
  std::size_t flagged_points = 0;
  std::vector<double> sups;
  std::vector<std::vector<double>> replicates; // [replication][grid point]
};

struct BootstrapRun
{
  std::vector<double> grid;
  double normalizer = 0.0;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
  std::vector<BootstrapSeries> series;

  const BootstrapSeries& get(kernels::EstimatorKind method) const
  {
    for (const auto& s : series)
      if (s.method == method)
        return s;
    throw InvalidArgument("BootstrapRun: method was not bootstrapped");
  }
};

namespace detail {

inline void check_grid(std::span<const double> grid)
{
  if (grid.empty())
    throw InvalidArgument("bootstrap: empty grid");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!std::isfinite(grid[k]))
      throw InvalidArgument("bootstrap: non-finite grid point");
    if (k > 0 && !(grid[k] > grid[k - 1]))
      throw InvalidArgument("bootstrap: grid must be strictly increasing");
  }
}

} // namespace detail

/**
 * Bootstraps the listed estimators jointly: every replication resamples the
 * bids, re-runs the pipeline with the original bandwidths and support, and
 * records sup_v |f̂*(v) - f̂(v)| / se(v) with se from the original sample.
 * Replication m uses derive_seed(seed, m), so results do not depend on the
 * thread count.
 */
inline BootstrapRun bootstrap(const Fit& original, std::span<const double> grid,
                              std::span<const kernels::EstimatorKind> methods,
                              const BootstrapOptions& options)
{
  detail::check_grid(grid);
  if (options.n_boot < 1)
    throw InvalidArgument("bootstrap: need at least one replication");
  if (methods.empty())
    throw InvalidArgument("bootstrap: no estimator requested");
  if (!original.strategy)
    throw InvalidArgument("bootstrap: original fit has no rearrangement");
  const auto [vmin, vmax] = std::minmax_element(original.constrained.begin(),
                                                original.constrained.end());
  if (grid.front() < *vmin || grid.back() > *vmax)
    throw OutOfDomain("bootstrap: grid outside the estimated value support");

  BootstrapRun run;
  run.grid.assign(grid.begin(), grid.end());
  run.normalizer = variance_normalizer(original);
  run.n_boot = options.n_boot;
  run.seed = options.seed;

  bool need_rgpv = false;
  for (auto m : methods) {
    BootstrapSeries s;
    s.method = m;
    s.estimate = density_on_grid(original, m, grid);
    VarianceCurve vc = variance_on_grid(original, m, grid);
    s.variance = std::move(vc.value);
    s.std_error.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double var = s.variance[k];
      if (var > 0.0 && std::isfinite(var)) {
        s.std_error[k] = std::sqrt(var / run.normalizer);
      } else {
        s.std_error[k] = NAN;
        ++s.flagged_points;
      }
    }
    if (s.flagged_points == grid.size())
      throw NumericalFailure("bootstrap: no grid point has a usable variance");
    s.sups.resize(options.n_boot);
    if (options.keep_replicates)
      s.replicates.resize(options.n_boot);
    need_rgpv = need_rgpv || m == kernels::EstimatorKind::rgpv;
    run.series.push_back(std::move(s));
  }

  FitOptions fit_options = original.options;
  fit_options.riemann_points = original.riemann_points();
  fit_options.unconstrained_only = !need_rgpv;
  const SupportBounds support = original.curve.support();

  parallel_for(options.n_boot, options.threads, [&](std::size_t rep) {
    const BidSample star = resample(original.sample, derive_seed(options.seed, rep));
    const Fit f = fit(star, original.plan, support, fit_options);
    for (auto& s : run.series) {
      auto est = density_on_grid(f, s.method, grid);
      double sup = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k)
        if (std::isfinite(s.std_error[k]))
          sup = std::max(sup, std::abs(est[k] - s.estimate[k]) / s.std_error[k]);
      if (!std::isfinite(sup))
        throw NumericalFailure("bootstrap: non-finite sup statistic");
      s.sups[rep] = sup;
      if (options.keep_replicates)
        s.replicates[rep] = std::move(est);
    }
  });
  return run;
}

/// A uniform confidence band f̂ ± ζ·se over a grid.
struct BandResult
{
  kernels::EstimatorKind method = kernels::EstimatorKind::rgpv;
  std::vector<double> grid;
  std::vector<double> estimate;
  std::vector<double> variance;
  std::vector<double> lower;
  std::vector<double> upper;
  double critical_value = 0.0;
  double alpha = 0.05;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
  //! L·h_f²·h_g.
  double normalizer = 0.0;
  //! Grid points without a positive variance (band is NaN there).
  std::size_t flagged_points = 0;

  //! sup over the grid of upper - lower.
  double sup_width() const
  {
    double w = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (std::isfinite(upper[k] - lower[k]))
        w = std::max(w, upper[k] - lower[k]);
    return w;
  }

  //! True when every usable grid point of `truth` lies inside the band.
  template <class F>
  bool covers(F&& truth) const
  {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (!std::isfinite(lower[k]))
        continue;
      const double t = truth(grid[k]);
      if (t < lower[k] || t > upper[k])
        return false;
    }
    return true;
  }
};

inline BandResult make_band(const BootstrapRun& run,
                            kernels::EstimatorKind method, double alpha)
{
  const BootstrapSeries& s = run.get(method);
  BandResult band;
  band.method = method;
  band.grid = run.grid;
  band.estimate = s.estimate;
  band.variance = s.variance;
  band.critical_value = sup_quantile(s.sups, alpha);
  band.alpha = alpha;
  band.n_boot = run.n_boot;
  band.seed = run.seed;
  band.normalizer = run.normalizer;
  band.flagged_points = s.flagged_points;
  band.lower.resize(run.grid.size());
  band.upper.resize(run.grid.size());
  for (std::size_t k = 0; k < run.grid.size(); ++k) {
    const double half = band.critical_value * s.std_error[k];
    band.lower[k] = s.estimate[k] - half;
    band.upper[k] = s.estimate[k] + half;
  }
  return band;
}

//! Uniform band for one estimator on a sample with rule-of-thumb bandwidths.
inline BandResult uniform_band(const BidSample& sample,
                               std::span<const double> grid, double alpha,
                               kernels::EstimatorKind method,
                               const BootstrapOptions& options,
                               const FitOptions& fit_options = {})
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("uniform_band: alpha must lie in (0, 1)");
  if (options.n_boot < 20)
    throw InvalidArgument("uniform_band: need at least 20 replications");
  const Fit f = fit(sample, fit_options);
  const kernels::EstimatorKind methods[] = { method };
  return make_band(bootstrap(f, grid, methods, options), method, alpha);
}

enum class IntervalMethod
{
  normal,
  percentile
};

inline const char* to_string(IntervalMethod m)
{
  return m == IntervalMethod::normal ? "normal" : "percentile";
}

//! z_{1-α/2}.
inline double normal_critical_value(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(),
                               1.0 - alpha / 2.0);
}

//! f̂ ± z_{1-α/2} √(V̂/normalizer); zero width when V̂ = 0.
inline std::pair<double, double>
normal_interval(double estimate, double variance, double normalizer,
                double alpha)
{
  const double z = normal_critical_value(alpha);
  const double half = z * std::sqrt(std::max(variance, 0.0) / normalizer);
  return { estimate - half, estimate + half };
}

/**
 * Pointwise interval for f(v). The normal interval uses V̂ of the chosen
 * estimator; the percentile interval takes the α/2 and 1-α/2 inf-quantiles
 * of the bootstrap distribution of f̂*(v).
 */
inline std::pair<double, double>
pointwise_ci(const Fit& f, double v, double alpha,
             kernels::EstimatorKind estimator, IntervalMethod method,
             const BootstrapOptions& options = {})
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("pointwise_ci: alpha must lie in (0, 1)");
  const double grid[] = { v };
  if (method == IntervalMethod::normal) {
    const double est = density_on_grid(f, estimator, grid).front();
    const double var = variance_on_grid(f, estimator, grid).value.front();
    return normal_interval(est, var, variance_normalizer(f), alpha);
  }
  if (options.n_boot < 2)
    throw InvalidArgument("pointwise_ci: percentile needs n_boot >= 2");
  BootstrapOptions opts = options;
  opts.keep_replicates = true;
  const kernels::EstimatorKind methods[] = { estimator };
  const BootstrapRun run = bootstrap(f, grid, methods, opts);
  std::vector<double> draws;
  draws.reserve(opts.n_boot);
  for (const auto& r : run.series.front().replicates)
    draws.push_back(r.front());
  std::sort(draws.begin(), draws.end());
  auto quantile = [&](double p) {
    auto rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(draws.size()) * (1.0 - 1e-12)));
    rank = std::clamp<std::size_t>(rank, 1, draws.size());
    return draws[rank - 1];
  };
  return { quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0) };
}

} // namespace fpa
