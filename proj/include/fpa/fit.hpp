#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fpa/error.hpp"
#include "fpa/kernels.hpp"
#include "fpa/rearrange.hpp"
#include "fpa/sample.hpp"
#include "fpa/strategy.hpp"
#include "fpa/variance.hpp"

namespace fpa {

/// Numerical settings shared by every estimation on a sample.
struct FitOptions
{
  //! Riemann points M for ŝ; 0 selects default_riemann_points(NL).
  std::size_t riemann_points = 0;
  InverseMethod inverse = InverseMethod::table;
  //! Composite Gauss-Legendre rule for the u-integral of V̂_RGPV.
  std::size_t quad_panels = 40;
  std::size_t quad_nodes = 5;
  //! Skip the rearrangement (enough for f̂_GPV alone).
  bool unconstrained_only = false;
};

/**
 * One pass of the estimation pipeline on a sample: ξ̂, the unconstrained
 * pseudo-values, the smooth rearrangement ŝ and the constrained values V̂†.
 */
struct Fit
{
  BidSample sample;
  BandwidthPlan plan;
  InverseBidCurve curve;
  std::vector<double> pseudo;
  std::optional<RearrangedStrategy> strategy;
  std::vector<double> constrained;
  FitOptions options;

  std::size_t riemann_points() const noexcept { return curve.grid_points(); }
};

//! Runs the pipeline with fixed bandwidths on a given support.
inline Fit fit(const BidSample& sample, const BandwidthPlan& plan,
               SupportBounds support, const FitOptions& options = {})
{
  plan.validate();
  const std::size_t m = options.riemann_points == 0
                          ? default_riemann_points(sample.size())
                          : options.riemann_points;
  InverseBidCurve curve = inverse_bid_curve(sample, plan, m, support);
  std::vector<double> pseudo;
  pseudo.reserve(sample.size());
  for (double b : sample.bids())
    pseudo.push_back(curve(b));
  Fit out{ sample, plan, std::move(curve), std::move(pseudo), std::nullopt,
           {}, options };
  if (!options.unconstrained_only) {
    out.strategy.emplace(smooth_strategy(out.curve, plan.h_r));
    out.constrained = out.strategy->pseudo_inverse(sample.bids(), options.inverse);
  }
  return out;
}

//! Runs the pipeline with rule-of-thumb bandwidths on the observed support.
inline Fit fit(const BidSample& sample, const FitOptions& options = {})
{
  if (sample.n_bidders() < 2)
    throw InvalidArgument("fit: need at least two bidders per auction");
  return fit(sample, rule_of_thumb_plan(sample), support_bounds(sample), options);
}

//! f̂(v) on a grid from the unconstrained or the constrained values.
inline std::vector<double> density_on_grid(const Fit& f,
                                           kernels::EstimatorKind kind,
                                           std::span<const double> grid)
{
  if (kind == kernels::EstimatorKind::rgpv && !f.strategy)
    throw InvalidArgument("density_on_grid: fit has no rearrangement");
  const auto& values =
    kind == kernels::EstimatorKind::gpv ? f.pseudo : f.constrained;
  return ValueDensity(values, f.plan.h_f)(grid);
}

/// Pointwise variance estimates with the number of flagged grid points.
struct VarianceCurve
{
  std::vector<double> value;
  std::size_t flagged = 0;
};

/**
 * V̂ on a grid. For rgpv this is the U-statistic estimator; for gpv the
 * plug-in of the asymptotic formula with f̂ the constrained estimate.
 */
inline VarianceCurve variance_on_grid(const Fit& f, kernels::EstimatorKind kind,
                                      std::span<const double> grid)
{
  if (!f.strategy)
    throw InvalidArgument("variance_on_grid: fit has no rearrangement");
  VarianceCurve out;
  if (kind == kernels::EstimatorKind::rgpv) {
    const VarianceInputs in =
      variance_inputs(f.sample, f.plan, f.curve, *f.strategy, f.constrained,
                      f.options.quad_panels, f.options.quad_nodes);
    out.value = rgpv_variance_hat(in, grid);
    for (double v : out.value)
      if (!(v > 0.0))
        ++out.flagged;
    return out;
  }
  const auto f_hat = density_on_grid(f, kernels::EstimatorKind::rgpv, grid);
  out.value.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const VarianceEstimate e =
      gpv_variance_hat(f.curve, *f.strategy, f.plan, f_hat[k], grid[k]);
    out.value.push_back(e.value);
    if (e.flagged || !(e.value > 0.0))
      ++out.flagged;
  }
  return out;
}

//! L·h_f²·h_g: V̂ divided by this is the squared standard error of f̂(v).
inline double variance_normalizer(const Fit& f)
{
  return static_cast<double>(f.sample.n_auctions()) * f.plan.h_f * f.plan.h_f *
         f.plan.h_g;
}

} // namespace fpa
