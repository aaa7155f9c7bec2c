#pragma once

#include <cmath>
#include <cstddef>

#include "fpa/error.hpp"
#include "fpa/kernels.hpp"
#include "fpa/sample.hpp"
#include "fpa/variance.hpp"

namespace fpa {

//! Equilibrium bid factor: s(v) = (1 - 1/(θ(N-1)+1)) v for F(v) = v^θ.
inline double theta_bid_factor(double theta, std::size_t n_bidders)
{
  if (!(theta > 0.0) || !std::isfinite(theta))
    throw InvalidArgument("theta must be positive");
  if (n_bidders < 2)
    throw InvalidArgument("need at least two bidders");
  return 1.0 - 1.0 / (theta * static_cast<double>(n_bidders - 1) + 1.0);
}

//! f(v) = θ v^{θ-1} on [0, 1].
inline double true_density(double theta, double v)
{
  if (!(theta > 0.0))
    throw InvalidArgument("true_density: theta must be positive");
  if (!(v >= 0.0 && v <= 1.0))
    throw OutOfDomain("true_density: v outside [0, 1]");
  if (v == 0.0)
    return theta < 1.0 ? INFINITY : (theta == 1.0 ? 1.0 : 0.0);
  return theta * std::pow(v, theta - 1.0);
}

/// s, s', s'', s''' of the linear equilibrium strategy.
struct StrategyDerivatives
{
  double factor; // s(v) = factor·v
  double d1;
  double d2;
  double d3;
};

inline StrategyDerivatives true_strategy_derivs(double theta,
                                                std::size_t n_bidders)
{
  const double k = theta_bid_factor(theta, n_bidders);
  return { k, k, 0.0, 0.0 };
}

/// How the bandwidth-constant ratio and the bid kernel enter the asymptotic
/// constants.
enum class RatioConvention
{
  //! Triweight in every kernel role and λ_f = λ_g.
  common_kernel,
  //! Fourth-order bid kernel and λ_f/λ_g from the rule-of-thumb constants
  //! and the design's σ_v/σ_b.
  rule_of_thumb
};

inline const char* to_string(RatioConvention c)
{
  return c == RatioConvention::common_kernel ? "common_kernel"
                                             : "rule_of_thumb";
}

//! Population primitives of the θ-family with N bidders.
inline AsymptoticPrimitives
theta_primitives(double theta, std::size_t n_bidders,
                 RatioConvention convention = RatioConvention::common_kernel)
{
  const double k = theta_bid_factor(theta, n_bidders);
  AsymptoticPrimitives p;
  p.cdf = [theta](double v) { return std::pow(v, theta); };
  p.pdf = [theta](double v) { return theta * std::pow(v, theta - 1.0); };
  p.pdf_d1 = [theta](double v) {
    return theta * (theta - 1.0) * std::pow(v, theta - 2.0);
  };
  p.pdf_d2 = [theta](double v) {
    return theta * (theta - 1.0) * (theta - 2.0) * std::pow(v, theta - 3.0);
  };
  p.strategy = [k](double v) { return k * v; };
  p.strategy_d1 = [k](double) { return k; };
  p.strategy_d2 = [](double) { return 0.0; };
  p.strategy_d3 = [](double) { return 0.0; };
  p.bid_pdf = [theta, k](double b) {
    return theta * std::pow(b / k, theta - 1.0) / k;
  };
  p.n_bidders = n_bidders;
  if (convention == RatioConvention::common_kernel) {
    p.lambda_ratio = 1.0;
    p.bid_kernel = kernels::BidKernel::second_order;
  } else {
    // σ_b = k σ_v, so λ_f/λ_g = (3.15 σ_v)/(3.72 σ_b).
    p.lambda_ratio = kValueBandwidthConstant / (kBidBandwidthConstant * k);
    p.bid_kernel = kernels::BidKernel::fourth_order;
  }
  return p;
}

//! V_GPV/V_RGPV for the θ-family (independent of v).
inline double theta_variance_ratio(
  double theta, std::size_t n_bidders,
  RatioConvention convention = RatioConvention::common_kernel,
  double v = 0.5)
{
  const AsymptoticPrimitives p = theta_primitives(theta, n_bidders, convention);
  return asymptotic_variance(kernels::EstimatorKind::gpv, p, v) /
         asymptotic_variance(kernels::EstimatorKind::rgpv, p, v);
}

} // namespace fpa
