#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fpa/error.hpp"
#include "fpa/kernels.hpp"
#include "fpa/sample.hpp"

namespace fpa {

/// Lower bound applied to the bid density wherever it is divided by.
inline constexpr double kDensityFloor = 1e-10;

/// Coefficients (a0, a1, a2) of a local-quadratic equivalent kernel
/// (a0 + a1 u + a2 u²) K(u) on a truncated range.
using BoundaryCoefficients = std::array<double, 3>;

//! Solves ∫_lo^hi u^j (a0 + a1u + a2u²) K(u) du = δ_j0, j = 0, 1, 2.
inline BoundaryCoefficients boundary_coefficients(double lo_u, double hi_u)
{
  lo_u = std::max(lo_u, -1.0);
  hi_u = std::min(hi_u, 1.0);
  if (!(hi_u > lo_u))
    throw InvalidArgument("boundary_coefficients: empty kernel range");
  std::array<double, 5> m{};
  for (int k = 0; k < 5; ++k)
    m[k] = kernels::triweight_partial_moment(k, lo_u, hi_u);
  Eigen::Matrix3d a;
  a << m[0], m[1], m[2], m[1], m[2], m[3], m[2], m[3], m[4];
  const Eigen::Vector3d x = a.fullPivLu().solve(Eigen::Vector3d(1.0, 0.0, 0.0));
  return { x(0), x(1), x(2) };
}

/// Equivalent-kernel coefficients at the lower boundary, tabulated over the
/// relative distance ρ = (b - b_lo)/h ∈ [0, 1]. The kernel range there is
/// [-ρ, 1]; the upper boundary follows by reflection (a1 changes sign).
struct BoundaryKernelTable
{
  std::vector<double> rho_grid;
  std::vector<BoundaryCoefficients> coeffs;

  explicit BoundaryKernelTable(std::size_t points = 101)
  {
    if (points < 2)
      throw InvalidArgument("BoundaryKernelTable: need at least two points");
    rho_grid.resize(points);
    coeffs.resize(points);
    for (std::size_t i = 0; i < points; ++i) {
      rho_grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
      coeffs[i] = boundary_coefficients(-rho_grid[i], 1.0);
    }
  }
};

/**
 * Bid density with a fourth-order triweight in the interior and
 * moment-matched local-quadratic kernels within h of either support end.
 *
 * Floor events of `floored()` are counted; copies share the counter.
 */
class BidDensity
{
public:
  BidDensity(std::span<const double> sorted_bids, SupportBounds support,
             double h)
    : sorted_(sorted_bids.begin(), sorted_bids.end())
    , support_(support)
    , h_(h)
    , floor_events_(std::make_shared<std::atomic<std::size_t>>(0))
  {
    if (!(h > 0.0) || !std::isfinite(h))
      throw InvalidArgument("BidDensity: bandwidth must be positive");
    if (sorted_.empty())
      throw EmptyInput("BidDensity: empty sample");
    if (!std::is_sorted(sorted_.begin(), sorted_.end()))
      std::sort(sorted_.begin(), sorted_.end());
  }

  BidDensity(const BidSample& sample, double h)
    : BidDensity(sample.sorted(), support_bounds(sample), h)
  {
  }

  double bandwidth() const noexcept { return h_; }
  SupportBounds support() const noexcept { return support_; }

  //! Kernel coefficients used at b (interior points give the fourth-order
  //! factor (27/16, 0, -99/16)).
  BoundaryCoefficients coefficients(double b) const
  {
    const double lo_u = (support_.lo - b) / h_;
    const double hi_u = (support_.hi - b) / h_;
    if (lo_u <= -1.0 && hi_u >= 1.0)
      return { 27.0 / 16.0, 0.0, -99.0 / 16.0 };
    return boundary_coefficients(lo_u, hi_u);
  }

  //! Raw estimate; may be negative.
  double operator()(double b) const
  {
    if (!std::isfinite(b) || b < support_.lo || b > support_.hi)
      throw OutOfDomain("bid_density: point outside the bid support");
    return evaluate(b);
  }

  //! max(ĝ(b), kDensityFloor), counting floor events.
  double floored(double b) const
  {
    const double g = (*this)(b);
    if (g < kDensityFloor) {
      floor_events_->fetch_add(1, std::memory_order_relaxed);
      return kDensityFloor;
    }
    return g;
  }

  std::size_t floor_events() const noexcept
  {
    return floor_events_->load(std::memory_order_relaxed);
  }

private:
  double evaluate(double b) const
  {
    const auto [a0, a1, a2] = coefficients(b);
    const auto first =
      std::lower_bound(sorted_.begin(), sorted_.end(), b - h_);
    const auto last = std::upper_bound(first, sorted_.end(), b + h_);
    const double inv_h = 1.0 / h_;
    double sum = 0.0;
    for (auto it = first; it != last; ++it) {
      const double u = (*it - b) * inv_h;
      sum += (a0 + u * (a1 + u * a2)) * kernels::detail::triweight(u);
    }
    return sum * inv_h / static_cast<double>(sorted_.size());
  }

  std::vector<double> sorted_;
  SupportBounds support_;
  double h_;
  std::shared_ptr<std::atomic<std::size_t>> floor_events_;
};

//! ĝ(b) on the observed support of `sample`.
inline double bid_density(const BidSample& sample, double b, double h_g)
{
  return BidDensity(sample, h_g)(b);
}

} // namespace fpa
