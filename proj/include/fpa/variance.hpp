#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fpa/boundary_density.hpp"
#include "fpa/error.hpp"
#include "fpa/kernels.hpp"
#include "fpa/quadrature.hpp"
#include "fpa/rearrange.hpp"
#include "fpa/sample.hpp"
#include "fpa/strategy.hpp"

namespace fpa {

/// Lower bound for ŝ' where it is divided by.
inline constexpr double kSlopeFloor = 1e-10;

/**
 * Everything the sample variance estimator needs, precomputed once per
 * sample. With u_q, w_q the quadrature nodes and weights on [b_lo, b_hi]:
 *
 *   weighted_r(j, q) = (1/h_r) K_r((V†_j - ξ̂(u_q))/h_r) · w_q Ĝ(u_q)/ĝ(u_q)²
 *   bid_kernel(i, q) = K_g((B_i - u_q)/h_g), boundary-adapted at u_q
 *
 * so the u-integral in η_{i,j} is row j of weighted_r dotted with row i of
 * bid_kernel.
 */
struct VarianceInputs
{
  std::size_t n_bidders = 0;
  BandwidthPlan plan{};
  std::vector<double> bids;
  std::vector<double> constrained;
  std::vector<double> inv_slope; // 1/ŝ'(V†_j)
  quadrature::Rule grid;
  Eigen::MatrixXd weighted_r;
  Eigen::MatrixXd bid_kernel;
  Eigen::VectorXd self_weight; // u-integral of η_{i,i}
  std::size_t slope_floor_events = 0;

  std::size_t size() const noexcept { return bids.size(); }
};

namespace detail {

// Rows of the bid-kernel table: K_g((b_i - u_q)/h_g) with the boundary
// coefficients of the density estimate at u_q.
inline Eigen::MatrixXd bid_kernel_table(std::span<const double> bids,
                                        const quadrature::Rule& grid,
                                        const BidDensity& density)
{
  const double h = density.bandwidth();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(bids.size()),
                      static_cast<Eigen::Index>(grid.nodes.size()));
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    const double u = grid.nodes[q];
    const auto [a0, a1, a2] = density.coefficients(u);
    for (std::size_t i = 0; i < bids.size(); ++i) {
      const double x = (bids[i] - u) / h;
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) =
        (a0 + x * (a1 + x * a2)) * kernels::detail::triweight(x);
    }
  }
  return out;
}

// Rows of the rearrangement-kernel table weighted by w_q Ĝ/ĝ².
inline Eigen::MatrixXd weighted_r_table(std::span<const double> constrained,
                                        const quadrature::Rule& grid,
                                        const InverseBidCurve& curve,
                                        double h_r)
{
  const std::size_t nq = grid.nodes.size();
  std::vector<double> xi_u(nq), weight(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const double u = grid.nodes[q];
    const double g = curve.pdf(u);
    xi_u[q] = curve(u);
    weight[q] = grid.weights[q] * curve.cdf(u) / (g * g);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(constrained.size()),
                      static_cast<Eigen::Index>(nq));
  const double inv_h = 1.0 / h_r;
  for (std::size_t q = 0; q < nq; ++q)
    for (std::size_t j = 0; j < constrained.size(); ++j)
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q)) =
        inv_h * kernels::detail::triweight((constrained[j] - xi_u[q]) * inv_h) *
        weight[q];
  return out;
}

// a_j(v) = K_f'((V†_j - v)/h_f) / ŝ'(V†_j) for every grid v (columns).
inline Eigen::MatrixXd derivative_weights(const VarianceInputs& in,
                                          std::span<const double> v_grid)
{
  const auto n = static_cast<Eigen::Index>(in.size());
  Eigen::MatrixXd a(n, static_cast<Eigen::Index>(v_grid.size()));
  const double inv_h = 1.0 / in.plan.h_f;
  for (std::size_t g = 0; g < v_grid.size(); ++g)
    for (Eigen::Index j = 0; j < n; ++j)
      a(j, static_cast<Eigen::Index>(g)) =
        kernels::detail::triweight_derivative(
          (in.constrained[static_cast<std::size_t>(j)] - v_grid[g]) * inv_h) *
        in.inv_slope[static_cast<std::size_t>(j)];
  return a;
}

} // namespace detail

/**
 * Precomputes the tables for V̂_RGPV. `constrained` are the V† aligned with
 * sample.bids(); the u-integral uses `panels` Gauss-Legendre panels of
 * `per_panel` nodes on the observed support.
 */
inline VarianceInputs variance_inputs(const BidSample& sample,
                                      const BandwidthPlan& plan,
                                      const InverseBidCurve& curve,
                                      const RearrangedStrategy& strategy,
                                      std::span<const double> constrained,
                                      std::size_t panels = 40,
                                      std::size_t per_panel = 5)
{
  plan.validate();
  if (constrained.size() != sample.size())
    throw InvalidArgument("variance_inputs: constrained values do not match "
                          "the sample");
  const BidDensity* density = curve.density();
  if (density == nullptr)
    throw InvalidArgument("variance_inputs: curve must be sample-based");
  const SupportBounds sb = curve.support();

  VarianceInputs in;
  in.n_bidders = curve.bidder_count();
  in.plan = plan;
  in.bids.assign(sample.bids().begin(), sample.bids().end());
  in.constrained.assign(constrained.begin(), constrained.end());
  in.grid = quadrature::composite(sb.lo, sb.hi, panels, per_panel);
  in.inv_slope.resize(constrained.size());
  for (std::size_t j = 0; j < constrained.size(); ++j) {
    double slope = strategy.derivative(constrained[j]);
    if (slope < kSlopeFloor) {
      slope = kSlopeFloor;
      ++in.slope_floor_events;
    }
    in.inv_slope[j] = 1.0 / slope;
  }
  in.weighted_r =
    detail::weighted_r_table(in.constrained, in.grid, curve, plan.h_r);
  in.bid_kernel = detail::bid_kernel_table(in.bids, in.grid, *density);
  in.self_weight = in.weighted_r.cwiseProduct(in.bid_kernel).rowwise().sum();
  return in;
}

//! η_{i,j}(v) for a single pair (indices into sample.bids()).
inline double eta(const VarianceInputs& in, std::size_t i, std::size_t j,
                  double v)
{
  const double a =
    kernels::detail::triweight_derivative((in.constrained[j] - v) /
                                          in.plan.h_f) *
    in.inv_slope[j];
  return a * in.weighted_r.row(static_cast<Eigen::Index>(j))
               .dot(in.bid_kernel.row(static_cast<Eigen::Index>(i)));
}

//! 1/(N(N-1)² h_f² h_g) · 1/(n(n-1)(n-2)).
inline double variance_prefactor(std::size_t n_bidders, std::size_t count,
                                 const BandwidthPlan& plan)
{
  const double big_n = static_cast<double>(n_bidders);
  const double n = static_cast<double>(count);
  return 1.0 /
         (big_n * (big_n - 1.0) * (big_n - 1.0) * plan.h_f * plan.h_f *
          plan.h_g) /
         (n * (n - 1.0) * (n - 2.0));
}

/**
 * V̂_RGPV on a grid of values, via
 *
 *   Σ_{distinct i,j,j'} η_ij η_ij' = Σ_i [S_i² - Σ_{j≠i} η_ij²],  S_i = Σ_{j≠i} η_ij.
 *
 * S uses the factored form K_g·(W_rᵀ a); the squares are accumulated over
 * row blocks of the n×n integral matrix so memory stays O(block·n).
 */
inline std::vector<double> rgpv_variance_hat(const VarianceInputs& in,
                                             std::span<const double> v_grid)
{
  const std::size_t count = in.size();
  if (count < 3)
    throw InsufficientSample("rgpv_variance_hat: need at least three bids");
  if (v_grid.empty())
    return {};
  const auto n = static_cast<Eigen::Index>(count);
  const auto ng = static_cast<Eigen::Index>(v_grid.size());

  const Eigen::MatrixXd a = detail::derivative_weights(in, v_grid);
  // Full sums over j, then drop j = i.
  Eigen::MatrixXd s = in.bid_kernel * (in.weighted_r.transpose() * a);
  s -= (a.array().colwise() * in.self_weight.array()).matrix();

  const Eigen::MatrixXd a2 = a.array().square().matrix();
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(n, ng);
  constexpr Eigen::Index block = 256;
  for (Eigen::Index j0 = 0; j0 < n; j0 += block) {
    const Eigen::Index rows = std::min(block, n - j0);
    Eigen::MatrixXd blk =
      in.weighted_r.middleRows(j0, rows) * in.bid_kernel.transpose();
    blk = blk.array().square().matrix();
    sq.noalias() += blk.transpose() * a2.middleRows(j0, rows);
  }
  sq -= (a2.array().colwise() * in.self_weight.array().square()).matrix();

  const double pre = variance_prefactor(in.n_bidders, count, in.plan);
  const Eigen::VectorXd total =
    (s.array().square() - sq.array()).colwise().sum().transpose();
  std::vector<double> out(v_grid.size());
  for (Eigen::Index g = 0; g < ng; ++g)
    out[static_cast<std::size_t>(g)] = pre * total(g);
  return out;
}

inline double rgpv_variance_hat(const VarianceInputs& in, double v)
{
  const double grid[] = { v };
  return rgpv_variance_hat(in, std::span<const double>(grid, 1)).front();
}

/// A variance estimate with a flag for floored denominators.
struct VarianceEstimate
{
  double value = 0.0;
  bool flagged = false;
};

//! [1/(N(N-1)²)] G² f² / g³ · C_gpv(s' λ_f/λ_g), the GPV variance formula at
//! given primitive values.
inline double gpv_variance_formula(double cdf_at_bid, double bid_pdf,
                                   double density, double slope,
                                   std::size_t n_bidders, double lambda_ratio,
                                   kernels::BidKernel bid,
                                   kernels::EstimatorKind kind =
                                     kernels::EstimatorKind::gpv)
{
  const double big_n = static_cast<double>(n_bidders);
  return cdf_at_bid * cdf_at_bid * density * density /
         (bid_pdf * bid_pdf * bid_pdf) /
         (big_n * (big_n - 1.0) * (big_n - 1.0)) *
         kernels::asymptotic_kernel_constant(kind, slope * lambda_ratio, bid);
}

/**
 * Plug-in of the GPV asymptotic variance:
 *
 *   [1/(N(N-1)²)] Ĝ(ŝ(v))² f̂(v)² / ĝ(ŝ(v))³ · C_gpv(ŝ'(v) h_f/h_g)
 *
 * with f̂ the supplied density estimate.
 */
inline VarianceEstimate
gpv_variance_hat(const InverseBidCurve& curve,
                 const RearrangedStrategy& strategy, const BandwidthPlan& plan,
                 double density_estimate, double v,
                 kernels::BidKernel bid = kernels::BidKernel::fourth_order)
{
  const BidDensity* density = curve.density();
  if (density == nullptr)
    throw InvalidArgument("gpv_variance_hat: curve must be sample-based");
  const double b = strategy(v);
  const double slope = strategy.derivative(v);
  VarianceEstimate out;
  if (!(slope > 0.0)) {
    out.flagged = true;
    return out;
  }
  double g = (*density)(b);
  if (g < kDensityFloor) {
    g = kDensityFloor;
    out.flagged = true;
  }
  out.value = gpv_variance_formula(curve.cdf(b), g, density_estimate, slope,
                                   curve.bidder_count(), plan.h_f / plan.h_g,
                                   bid);
  return out;
}

inline VarianceEstimate gpv_variance_hat(const VarianceInputs& in,
                                         const InverseBidCurve& curve,
                                         const RearrangedStrategy& strategy,
                                         double v)
{
  const double f = ValueDensity(in.constrained, in.plan.h_f)(v);
  return gpv_variance_hat(curve, strategy, in.plan, f, v);
}

/// Population quantities entering the asymptotic variances and the bias.
struct AsymptoticPrimitives
{
  std::function<double(double)> cdf;        // F
  std::function<double(double)> pdf;        // f
  std::function<double(double)> pdf_d1;     // f'
  std::function<double(double)> pdf_d2;     // f''
  std::function<double(double)> strategy;   // s
  std::function<double(double)> strategy_d1;
  std::function<double(double)> strategy_d2;
  std::function<double(double)> strategy_d3;
  std::function<double(double)> bid_pdf;    // g
  std::size_t n_bidders = 2;
  double lambda_ratio = 1.0;                // λ_f/λ_g
  double lambda_r_ratio = 1.0;              // λ_r/λ_f
  kernels::BidKernel bid_kernel = kernels::BidKernel::fourth_order;
};

//! V_GPV(v) or V_RGPV(v) from population primitives.
inline double asymptotic_variance(kernels::EstimatorKind kind,
                                  const AsymptoticPrimitives& prim, double v)
{
  if (prim.n_bidders < 2)
    throw InvalidArgument("asymptotic_variance: need at least two bidders");
  const double g = prim.bid_pdf(prim.strategy(v));
  if (!(g > 0.0))
    throw InvalidArgument("asymptotic_variance: bid density must be positive");
  return gpv_variance_formula(prim.cdf(v), g, prim.pdf(v), prim.strategy_d1(v),
                              prim.n_bidders, prim.lambda_ratio,
                              prim.bid_kernel, kind);
}

//! ι(v): leading bias of the rearrangement-based estimator.
inline double asymptotic_bias(const AsymptoticPrimitives& prim, double v,
                              double h_f, double h_r)
{
  const double mu2 = kernels::kTriweightMu2;
  const double f = prim.pdf(v);
  const double f1 = prim.pdf_d1(v);
  const double f2 = prim.pdf_d2(v);
  const double s1 = prim.strategy_d1(v);
  const double s2 = prim.strategy_d2(v);
  const double s3 = prim.strategy_d3(v);
  const double curvature = ((s3 * f + s2 * f1) * s1 - s2 * s2 * f) / (s1 * s1);
  return 0.5 * f2 * mu2 * h_f * h_f + 0.5 * curvature * mu2 * h_r * h_r;
}

} // namespace fpa
