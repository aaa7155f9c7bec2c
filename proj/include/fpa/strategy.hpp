#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fpa/boundary_density.hpp"
#include "fpa/error.hpp"
#include "fpa/kernels.hpp"
#include "fpa/sample.hpp"

namespace fpa {

//! Riemann resolution used when none is given: max(2000, 10·NL).
inline std::size_t default_riemann_points(std::size_t total_bids)
{
  return std::max<std::size_t>(2000, 10 * total_bids);
}

/**
 * ξ̂(b) = b + Ĝ(b) / ((N - 1) ĝ(b)) on [b_lo, b_hi].
 *
 * Built either from a bid sample (empirical CDF and the boundary-adapted
 * density) or from an injected (CDF, PDF) pair. Values at the right-endpoint
 * grid b_lo + i·d, i = 1..M, are cached for the rearrangement.
 */
class InverseBidCurve
{
public:
  using Function = std::function<double(double)>;

  InverseBidCurve(Function cdf, Function pdf, SupportBounds support,
                  std::size_t bidder_count, std::size_t grid_points)
    : cdf_(std::move(cdf))
    , pdf_(std::move(pdf))
    , support_(support)
    , bidder_count_(bidder_count)
  {
    if (bidder_count_ < 2)
      throw InvalidArgument("InverseBidCurve: need at least two bidders");
    if (!(support_.hi > support_.lo))
      throw DegenerateSample("InverseBidCurve: degenerate bid support");
    if (grid_points < 1)
      throw InvalidArgument("InverseBidCurve: need at least one grid point");
    build_grid(grid_points);
  }

  double operator()(double b) const
  {
    if (!std::isfinite(b) || b < support_.lo || b > support_.hi)
      throw OutOfDomain("inverse_bid: point outside the bid support");
    return evaluate(b);
  }

  //! Ĝ(b).
  double cdf(double b) const { return cdf_(b); }
  //! ĝ(b) after flooring.
  double pdf(double b) const { return pdf_(b); }

  SupportBounds support() const noexcept { return support_; }
  std::size_t bidder_count() const noexcept { return bidder_count_; }
  std::size_t grid_points() const noexcept { return grid_.size(); }
  //! ξ̂(b_lo + i·d) for i = 1..M.
  std::span<const double> grid_values() const noexcept { return grid_; }
  double xi_min() const noexcept { return xi_min_; }
  double xi_max() const noexcept { return xi_max_; }

  //! Bandwidths used to build a sample-based curve, if any.
  const std::optional<BandwidthPlan>& bandwidths() const noexcept
  {
    return plan_;
  }
  //! The bid density of a sample-based curve (null for injected curves).
  const BidDensity* density() const noexcept { return density_.get(); }

  //! ξ̂ on the right-endpoint grid of resolution m (cached when m = M).
  std::vector<double> grid_values(std::size_t m) const
  {
    if (m == grid_.size())
      return grid_;
    std::vector<double> out(m);
    const double d = support_.width() / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      out[i] = evaluate(grid_point(i + 1, m, d));
    return out;
  }

private:
  friend InverseBidCurve inverse_bid_curve(const BidSample&,
                                           const BandwidthPlan&, std::size_t,
                                           SupportBounds);

  double grid_point(std::size_t i, std::size_t m, double d) const
  {
    return i == m ? support_.hi : support_.lo + static_cast<double>(i) * d;
  }

  double evaluate(double b) const
  {
    return b + cdf_(b) / (static_cast<double>(bidder_count_ - 1) * pdf_(b));
  }

  void build_grid(std::size_t m)
  {
    const double d = support_.width() / static_cast<double>(m);
    grid_.resize(m);
    xi_min_ = xi_max_ = evaluate(support_.lo);
    for (std::size_t i = 0; i < m; ++i) {
      grid_[i] = evaluate(grid_point(i + 1, m, d));
      xi_min_ = std::min(xi_min_, grid_[i]);
      xi_max_ = std::max(xi_max_, grid_[i]);
    }
  }

  Function cdf_;
  Function pdf_;
  SupportBounds support_;
  std::size_t bidder_count_;
  std::vector<double> grid_;
  double xi_min_ = 0.0;
  double xi_max_ = 0.0;
  std::optional<BandwidthPlan> plan_;
  std::shared_ptr<const BidDensity> density_;
};

/**
 * Sample-based ξ̂ with Ĝ the empirical CDF and ĝ the boundary-adapted
 * density (floored), on a given support that must contain every bid.
 */
inline InverseBidCurve inverse_bid_curve(const BidSample& sample,
                                         const BandwidthPlan& plan,
                                         std::size_t grid_points,
                                         SupportBounds support)
{
  if (sample.sorted().front() < support.lo || sample.sorted().back() > support.hi)
    throw InvalidArgument("inverse_bid_curve: bids outside the given support");
  auto sorted = std::make_shared<const std::vector<double>>(
    sample.sorted().begin(), sample.sorted().end());
  auto density =
    std::make_shared<const BidDensity>(sample.sorted(), support, plan.h_g);
  auto cdf = [sorted](double b) {
    const auto count =
      std::upper_bound(sorted->begin(), sorted->end(), b) - sorted->begin();
    return static_cast<double>(count) / static_cast<double>(sorted->size());
  };
  auto pdf = [density](double b) { return density->floored(b); };
  InverseBidCurve curve(cdf, pdf, support, sample.n_bidders(), grid_points);
  curve.plan_ = plan;
  curve.density_ = density;
  return curve;
}

//! ξ̂ on the observed support [min B, max B].
inline InverseBidCurve inverse_bid_curve(const BidSample& sample,
                                         const BandwidthPlan& plan,
                                         std::size_t grid_points)
{
  return inverse_bid_curve(sample, plan, grid_points, support_bounds(sample));
}

inline InverseBidCurve inverse_bid_curve(const BidSample& sample,
                                         const BandwidthPlan& plan)
{
  return inverse_bid_curve(sample, plan, default_riemann_points(sample.size()));
}

//! ξ̂(b) for a single bid.
inline double inverse_bid(const BidSample& sample, double b,
                          const BandwidthPlan& plan)
{
  if (sample.n_bidders() < 2)
    throw InvalidArgument("inverse_bid: need at least two bidders");
  const SupportBounds support = support_bounds(sample);
  if (!std::isfinite(b) || b < support.lo || b > support.hi)
    throw OutOfDomain("inverse_bid: point outside the bid support");
  const BidDensity density(sample, plan.h_g);
  return b + empirical_cdf(sample, b) /
               (static_cast<double>(sample.n_bidders() - 1) *
                density.floored(b));
}

//! V̂_il = ξ̂(B_il), aligned with sample.bids().
inline std::vector<double> pseudo_values(const BidSample& sample, double h_g)
{
  if (sample.n_bidders() < 2)
    throw InvalidArgument("pseudo_values: need at least two bidders");
  const BidDensity density(sample, h_g);
  const auto sorted = sample.sorted();
  const double scale = 1.0 / static_cast<double>(sample.n_bidders() - 1);
  const double n = static_cast<double>(sample.size());
  std::vector<double> out;
  out.reserve(sample.size());
  for (double b : sample.bids()) {
    const auto count =
      std::upper_bound(sorted.begin(), sorted.end(), b) - sorted.begin();
    out.push_back(b + scale * (static_cast<double>(count) / n) /
                        density.floored(b));
  }
  return out;
}

inline std::vector<double> pseudo_values(const BidSample& sample,
                                         const BandwidthPlan& plan)
{
  return pseudo_values(sample, plan.h_g);
}

/**
 * Rule-of-thumb bandwidths. σ̂_v skips pseudo-values whose ĝ hit the density
 * floor, since their size is set by the floor constant rather than the data;
 * the count in (NL)^{-1/5} is still NL.
 */
inline BandwidthPlan rule_of_thumb_plan(const BidSample& sample)
{
  const double h_g = bid_bandwidth(sample);
  const auto pseudo = pseudo_values(sample, h_g);
  const BidDensity density(sample, h_g);
  std::vector<double> kept;
  kept.reserve(pseudo.size());
  const auto bids = sample.bids();
  for (std::size_t i = 0; i < bids.size(); ++i)
    if (density(bids[i]) >= kDensityFloor)
      kept.push_back(pseudo[i]);
  if (kept.size() < 2)
    throw DegenerateSample("rule_of_thumb_plan: bid density floored almost everywhere");
  const double h_f = value_bandwidth(kept, sample.size());
  return { h_g, h_f, h_f };
}

/// Triweight kernel density estimate of values: (1/(n h))Σ K((V - v)/h).
class ValueDensity
{
public:
  ValueDensity(std::span<const double> values, double h)
    : sorted_(values.begin(), values.end())
    , h_(h)
  {
    if (!(h > 0.0) || !std::isfinite(h))
      throw InvalidArgument("ValueDensity: bandwidth must be positive");
    if (sorted_.empty())
      throw EmptyInput("ValueDensity: no values");
    std::sort(sorted_.begin(), sorted_.end());
  }

  double operator()(double v) const
  {
    const auto first = std::upper_bound(sorted_.begin(), sorted_.end(), v - h_);
    const auto last = std::lower_bound(first, sorted_.end(), v + h_);
    const double inv_h = 1.0 / h_;
    double sum = 0.0;
    for (auto it = first; it != last; ++it)
      sum += kernels::detail::triweight((*it - v) * inv_h);
    return sum * inv_h / static_cast<double>(sorted_.size());
  }

  std::vector<double> operator()(std::span<const double> grid) const
  {
    std::vector<double> out;
    out.reserve(grid.size());
    for (double v : grid)
      out.push_back((*this)(v));
    return out;
  }

  double bandwidth() const noexcept { return h_; }

private:
  std::vector<double> sorted_;
  double h_;
};

//! f̂_GPV(v) from unconstrained pseudo-values.
inline double gpv_density(const BidSample& sample, double v,
                          const BandwidthPlan& plan)
{
  if (!(plan.h_f > 0.0))
    throw InvalidArgument("gpv_density: h_f must be positive");
  return ValueDensity(pseudo_values(sample, plan), plan.h_f)(v);
}

} // namespace fpa
