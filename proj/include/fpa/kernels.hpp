#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fpa/error.hpp"
#include "fpa/quadrature.hpp"

namespace fpa::kernels {

/// Second moment of the triweight kernel, ∫u²K(u)du.
inline constexpr double kTriweightMu2 = 1.0 / 9.0;
/// Fourth moment of the triweight kernel, ∫u⁴K(u)du.
inline constexpr double kTriweightMu4 = 1.0 / 33.0;

namespace detail {

inline constexpr double kNorm = 35.0 / 32.0;

// Unchecked evaluators for hot loops; callers guarantee finite input.
inline double triweight(double u) noexcept
{
  const double t = 1.0 - u * u;
  return t > 0.0 ? kNorm * t * t * t : 0.0;
}

inline double triweight_integral(double u) noexcept
{
  if (u <= -1.0)
    return 0.0;
  if (u >= 1.0)
    return 1.0;
  const double u2 = u * u;
  // 1/2 + (35/32)(u - u³ + 3u⁵/5 - u⁷/7)
  return 0.5 + kNorm * u * (1.0 + u2 * (-1.0 + u2 * (0.6 - u2 / 7.0)));
}

inline double triweight_derivative(double u) noexcept
{
  const double t = 1.0 - u * u;
  return t > 0.0 ? -6.0 * kNorm * u * t * t : 0.0;
}

inline double fourth_order_triweight(double u) noexcept
{
  return (27.0 - 99.0 * u * u) / 16.0 * triweight(u);
}

} // namespace detail

inline void require_finite(double u, const char* what)
{
  if (!std::isfinite(u))
    throw InvalidArgument(std::string(what) + ": non-finite argument");
}

//! Triweight kernel (35/32)(1-u²)³ on [-1, 1].
inline double triweight(double u)
{
  require_finite(u, "triweight");
  return detail::triweight(u);
}

//! Exact antiderivative ∫_{-∞}^u K(t)dt of the triweight kernel.
inline double triweight_integral(double u)
{
  require_finite(u, "triweight_integral");
  return detail::triweight_integral(u);
}

inline double triweight_derivative(double u)
{
  require_finite(u, "triweight_derivative");
  return detail::triweight_derivative(u);
}

//! Fourth-order kernel ((μ₄ - μ₂u²)/(μ₄ - μ₂²))K(u) = ((27 - 99u²)/16)K(u).
inline double fourth_order_triweight(double u)
{
  require_finite(u, "fourth_order_triweight");
  return detail::fourth_order_triweight(u);
}

//! ∫_a^b u^k K(u) du for the triweight, limits clipped to [-1, 1].
inline double triweight_partial_moment(int k, double a, double b)
{
  a = std::max(a, -1.0);
  b = std::min(b, 1.0);
  if (!(b > a))
    return 0.0;
  // K(u)u^k = (35/32)(u^k - 3u^{k+2} + 3u^{k+4} - u^{k+6})
  auto prim = [k](double x) {
    double total = 0.0;
    constexpr std::array<double, 4> coef{ 1.0, -3.0, 3.0, -1.0 };
    for (int j = 0; j < 4; ++j) {
      const int p = k + 2 * j + 1;
      total += coef[j] * std::pow(x, p) / p;
    }
    return total;
  };
  return detail::kNorm * (prim(b) - prim(a));
}

/// The kernel roles used by the estimators: K_f = K_r = triweight, its
/// antiderivative and derivative, and the fourth-order K_g used in the
/// interior of the bid support.
struct KernelSet
{
  double (*order2)(double) = &triweight;
  double (*order2_integral)(double) = &triweight_integral;
  double (*order2_deriv)(double) = &triweight_derivative;
  double (*order4)(double) = &fourth_order_triweight;
  double support_radius = 1.0;
};

enum class EstimatorKind
{
  gpv,
  rgpv
};

/// Kernel used for the bid density inside the asymptotic constants.
enum class BidKernel
{
  second_order,
  fourth_order
};

inline const char* to_string(EstimatorKind k)
{
  return k == EstimatorKind::gpv ? "gpv" : "rgpv";
}

inline const char* to_string(BidKernel k)
{
  return k == BidKernel::second_order ? "order2" : "order4";
}

namespace detail {

inline double bid_kernel(BidKernel k, double u) noexcept
{
  return k == BidKernel::fourth_order ? fourth_order_triweight(u)
                                      : triweight(u);
}

// φ(z) = ∫K'(u)K(u - z)du, a piecewise polynomial with breaks at z ∈ {-2,0,2}.
inline double derivative_autoconvolution(const quadrature::Rule& rule, double z)
{
  const double lo = std::max(-1.0, z - 1.0);
  const double hi = std::min(1.0, z + 1.0);
  return quadrature::integrate(rule, lo, hi, [z](double u) {
    return triweight_derivative(u) * triweight(u - z);
  });
}

} // namespace detail

/**
 * Kernel convolution constant in the asymptotic variance of the density
 * estimators.
 *
 *   gpv:  ∫{∫K_f'(u)K_g(w - cu)du}²dw
 *   rgpv: ∫{∫∫K_f'(u)K_r(u - z)K_g(w - cz)dz du}²dw
 *
 * Every integrand is a polynomial between kernel-support breakpoints, so the
 * integration is split at those points and each piece is handled by a
 * `nodes`-point Gauss-Legendre rule.
 */
inline double asymptotic_kernel_constant(EstimatorKind kind, double c,
                                         BidKernel bid = BidKernel::fourth_order,
                                         std::size_t nodes = 64)
{
  if (!(c > 0.0) || !std::isfinite(c))
    throw InvalidArgument("asymptotic_kernel_constant: slope c must be > 0");
  const quadrature::Rule rule = quadrature::gauss_legendre(nodes);

  if (kind == EstimatorKind::gpv) {
    auto inner = [&](double w) {
      const double lo = std::max(-1.0, (w - 1.0) / c);
      const double hi = std::min(1.0, (w + 1.0) / c);
      return quadrature::integrate(rule, lo, hi, [&](double u) {
        return detail::triweight_derivative(u) *
               detail::bid_kernel(bid, w - c * u);
      });
    };
    const std::vector<double> breaks{ -1.0 - c, -1.0 + c, 1.0 - c, 1.0 + c };
    return quadrature::integrate_pieces(rule, -1.0 - c, 1.0 + c, breaks,
                                        [&](double w) {
                                          const double v = inner(w);
                                          return v * v;
                                        });
  }

  auto inner = [&](double w) {
    const double lo = std::max(-2.0, (w - 1.0) / c);
    const double hi = std::min(2.0, (w + 1.0) / c);
    return quadrature::integrate_pieces(rule, lo, hi, { 0.0 }, [&](double z) {
      return detail::derivative_autoconvolution(rule, z) *
             detail::bid_kernel(bid, w - c * z);
    });
  };
  const double reach = 1.0 + 2.0 * c;
  const std::vector<double> breaks{ -reach, -1.0, 1.0, reach,
                                    -1.0 + 2.0 * c, 1.0 - 2.0 * c };
  return quadrature::integrate_pieces(rule, -reach, reach, breaks,
                                      [&](double w) {
                                        const double v = inner(w);
                                        return v * v;
                                      });
}

} // namespace fpa::kernels
