#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fpa/error.hpp"
#include "fpa/kernels.hpp"
#include "fpa/sample.hpp"
#include "fpa/strategy.hpp"

namespace fpa {

/// How a batch of bids is mapped through ŝ⁻¹.
enum class InverseMethod
{
  bisection, //!< one bisection per bid on the exact evaluator
  table      //!< cubic Hermite table of (ŝ, ŝ') with spacing h_r/64
};

/**
 * Smooth monotone rearrangement
 *
 *   ŝ(t) = b_lo + d Σ_{i=1..M} K̃((t - ξ̂(b_lo + i d)) / h_r),  d = (b_hi - b_lo)/M.
 *
 * Grid values are sorted once; an evaluation counts the points left of the
 * kernel window and sums K̃ only inside it.
 */
class RearrangedStrategy
{
public:
  RearrangedStrategy(std::vector<double> xi_grid, SupportBounds support,
                     double h_r)
    : xi_(std::move(xi_grid))
    , support_(support)
    , h_(h_r)
  {
    if (!(h_ > 0.0) || !std::isfinite(h_))
      throw InvalidArgument("smooth_strategy: h_r must be positive");
    if (xi_.empty())
      throw InvalidArgument("smooth_strategy: empty grid");
    if (!(support_.hi > support_.lo))
      throw DegenerateSample("smooth_strategy: degenerate bid support");
    for (double x : xi_)
      if (!std::isfinite(x))
        throw NumericalFailure("smooth_strategy: non-finite inverse bid");
    std::sort(xi_.begin(), xi_.end());
    d_ = support_.width() / static_cast<double>(xi_.size());
  }

  double operator()(double t) const
  {
    const auto first = std::upper_bound(xi_.begin(), xi_.end(), t - h_);
    const auto last = std::lower_bound(first, xi_.end(), t + h_);
    if (last == xi_.begin())
      return support_.lo;
    if (first == xi_.end())
      return support_.hi;
    const double inv_h = 1.0 / h_;
    double sum = static_cast<double>(first - xi_.begin());
    for (auto it = first; it != last; ++it)
      sum += kernels::detail::triweight_integral((t - *it) * inv_h);
    return std::clamp(support_.lo + d_ * sum, support_.lo, support_.hi);
  }

  //! ŝ'(t) = (d/h_r) Σ K((ξ̂_i - t)/h_r).
  double derivative(double t) const
  {
    const auto first = std::upper_bound(xi_.begin(), xi_.end(), t - h_);
    const auto last = std::lower_bound(first, xi_.end(), t + h_);
    const double inv_h = 1.0 / h_;
    double sum = 0.0;
    for (auto it = first; it != last; ++it)
      sum += kernels::detail::triweight((*it - t) * inv_h);
    return d_ * inv_h * sum;
  }

  //! inf{u : ŝ(u) ≥ b} by bisection on [xi_min - h_r, xi_max + h_r].
  double pseudo_inverse(double b) const
  {
    check_level(b);
    double lo = bracket_lo();
    double hi = bracket_hi();
    if ((*this)(lo) >= b)
      return lo;
    const double tol = 1e-10 * (hi - lo);
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      if ((*this)(mid) >= b)
        hi = mid;
      else
        lo = mid;
    }
    return hi;
  }

  //! ŝ⁻¹ for many bids.
  std::vector<double> pseudo_inverse(std::span<const double> bids,
                                     InverseMethod method) const
  {
    std::vector<double> out(bids.size());
    if (method == InverseMethod::bisection) {
      for (std::size_t i = 0; i < bids.size(); ++i)
        out[i] = pseudo_inverse(bids[i]);
      return out;
    }
    // Floored densities can push ξ̂ far out; the table would then be huge.
    if ((bracket_hi() - bracket_lo()) / (h_ / 64.0) > kMaxTableNodes)
      return pseudo_inverse(bids, InverseMethod::bisection);
    const HermiteTable table = build_table();
    for (std::size_t i = 0; i < bids.size(); ++i)
      out[i] = invert(table, bids[i]);
    return out;
  }

  std::span<const double> sorted_grid() const noexcept { return xi_; }
  std::size_t riemann_points() const noexcept { return xi_.size(); }
  double bandwidth() const noexcept { return h_; }
  double step() const noexcept { return d_; }
  SupportBounds support() const noexcept { return support_; }
  double xi_min() const noexcept { return xi_.front(); }
  double xi_max() const noexcept { return xi_.back(); }
  double bracket_lo() const noexcept { return xi_.front() - h_; }
  double bracket_hi() const noexcept { return xi_.back() + h_; }

private:
  static constexpr double kMaxTableNodes = 1 << 20;

  struct HermiteTable
  {
    std::vector<double> t;
    std::vector<double> s;
    std::vector<double> ds;
  };

  void check_level(double b) const
  {
    if (!std::isfinite(b) || b < support_.lo || b > support_.hi)
      throw OutOfDomain("pseudo_inverse: bid outside [b_lo, b_hi]");
  }

  HermiteTable build_table() const
  {
    const double lo = bracket_lo();
    const double hi = bracket_hi();
    const std::size_t n = static_cast<std::size_t>(
                            std::ceil((hi - lo) / (h_ / 64.0))) +
                          1;
    HermiteTable table;
    table.t.resize(n + 1);
    table.s.resize(n + 1);
    table.ds.resize(n + 1);
    const double step = (hi - lo) / static_cast<double>(n);
    for (std::size_t k = 0; k <= n; ++k) {
      const double t = k == n ? hi : lo + static_cast<double>(k) * step;
      table.t[k] = t;
      table.s[k] = (*this)(t);
      table.ds[k] = derivative(t);
    }
    // Clamp roundoff so that the table stays monotone.
    for (std::size_t k = 1; k <= n; ++k)
      table.s[k] = std::max(table.s[k], table.s[k - 1]);
    return table;
  }

  double invert(const HermiteTable& table, double b) const
  {
    check_level(b);
    if (table.s.front() >= b)
      return table.t.front();
    const auto it = std::lower_bound(table.s.begin(), table.s.end(), b);
    if (it == table.s.end())
      return table.t.back();
    const std::size_t k = static_cast<std::size_t>(it - table.s.begin());
    const double t0 = table.t[k - 1];
    const double t1 = table.t[k];
    const double w = t1 - t0;
    const double s0 = table.s[k - 1];
    const double s1 = table.s[k];
    const double m0 = table.ds[k - 1] * w;
    const double m1 = table.ds[k] * w;
    // Hermite cubic in x ∈ [0, 1].
    auto h = [&](double x) {
      const double x2 = x * x;
      const double x3 = x2 * x;
      return (2 * x3 - 3 * x2 + 1) * s0 + (x3 - 2 * x2 + x) * m0 +
             (-2 * x3 + 3 * x2) * s1 + (x3 - x2) * m1;
    };
    auto dh = [&](double x) {
      const double x2 = x * x;
      return (6 * x2 - 6 * x) * s0 + (3 * x2 - 4 * x + 1) * m0 +
             (-6 * x2 + 6 * x) * s1 + (3 * x2 - 2 * x) * m1;
    };
    double lo = 0.0;
    double hi = 1.0;
    double x = s1 > s0 ? (b - s0) / (s1 - s0) : 1.0;
    for (int iter = 0; iter < 60; ++iter) {
      const double f = h(x) - b;
      if (f >= 0.0)
        hi = x;
      else
        lo = x;
      if (hi - lo < 1e-14)
        break;
      const double slope = dh(x);
      double next = slope > 0.0 ? x - f / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi))
        next = 0.5 * (lo + hi);
      const bool done = std::abs(next - x) < 1e-15;
      x = next;
      if (done)
        break;
    }
    return t0 + std::clamp(x, lo, hi) * w;
  }

  std::vector<double> xi_;
  SupportBounds support_;
  double h_;
  double d_ = 0.0;
};

//! ŝ from the right-endpoint grid of ξ̂ at resolution M.
inline RearrangedStrategy smooth_strategy(const InverseBidCurve& base,
                                          double h_r, std::size_t m)
{
  if (m < 100)
    throw InvalidArgument("smooth_strategy: Riemann resolution must be >= 100");
  return RearrangedStrategy(base.grid_values(m), base.support(), h_r);
}

inline RearrangedStrategy smooth_strategy(const InverseBidCurve& base,
                                          double h_r)
{
  return smooth_strategy(base, h_r, base.grid_points());
}

//! V̂†_il = ŝ⁻¹(B_il), aligned with sample.bids().
inline std::vector<double>
constrained_pseudo_values(const BidSample& sample,
                          const RearrangedStrategy& strategy,
                          InverseMethod method = InverseMethod::table)
{
  return strategy.pseudo_inverse(sample.bids(), method);
}

//! f̂_RGPV(v) from constrained pseudo-values.
inline double rgpv_density(const BidSample& sample, double v,
                           const BandwidthPlan& plan,
                           const RearrangedStrategy& strategy)
{
  if (!(plan.h_f > 0.0))
    throw InvalidArgument("rgpv_density: h_f must be positive");
  return ValueDensity(constrained_pseudo_values(sample, strategy), plan.h_f)(v);
}

/// Non-smooth rearrangement ŝ₀(t) = b_lo + d·#{ξ̂(b_lo + i d) ≤ t}.
class NonsmoothStrategy
{
public:
  NonsmoothStrategy(std::vector<double> xi_grid, SupportBounds support)
    : xi_(std::move(xi_grid))
    , support_(support)
  {
    if (xi_.empty())
      throw InvalidArgument("nonsmooth_strategy: empty grid");
    std::sort(xi_.begin(), xi_.end());
    d_ = support_.width() / static_cast<double>(xi_.size());
  }

  double operator()(double t) const
  {
    const auto count = std::upper_bound(xi_.begin(), xi_.end(), t) - xi_.begin();
    if (static_cast<std::size_t>(count) == xi_.size())
      return support_.hi;
    return support_.lo + d_ * static_cast<double>(count);
  }

  //! inf{u : ŝ₀(u) ≥ b}: the k-th smallest grid value for the least k with
  //! b_lo + k d ≥ b; xi_min when b ≤ b_lo.
  double pseudo_inverse(double b) const
  {
    if (!std::isfinite(b) || b < support_.lo || b > support_.hi)
      throw OutOfDomain("pseudo_inverse: bid outside [b_lo, b_hi]");
    const auto m = static_cast<long long>(xi_.size());
    long long k = static_cast<long long>(std::ceil((b - support_.lo) / d_));
    k = std::clamp(k, 0LL, m);
    auto level = [&](long long j) {
      return j >= m ? support_.hi : support_.lo + d_ * static_cast<double>(j);
    };
    while (k > 0 && level(k - 1) >= b)
      --k;
    while (k < m && level(k) < b)
      ++k;
    if (k == 0)
      return xi_.front();
    return xi_[static_cast<std::size_t>(k - 1)];
  }

  std::span<const double> sorted_grid() const noexcept { return xi_; }
  double step() const noexcept { return d_; }

private:
  std::vector<double> xi_;
  SupportBounds support_;
  double d_ = 0.0;
};

inline NonsmoothStrategy nonsmooth_strategy(const InverseBidCurve& base,
                                            std::size_t m)
{
  if (m < 100)
    throw InvalidArgument(
      "nonsmooth_strategy: Riemann resolution must be >= 100");
  return NonsmoothStrategy(base.grid_values(m), base.support());
}

} // namespace fpa
