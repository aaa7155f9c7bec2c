#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "fpa/error.hpp"

namespace fpa::quadrature {

struct Rule
{
  std::vector<double> nodes;
  std::vector<double> weights;
};

//! Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
inline Rule gauss_legendre(std::size_t n)
{
  if (n == 0)
    throw InvalidArgument("gauss_legendre: need at least one node");
  Rule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  if (n == 1) {
    rule.weights[0] = 2.0;
    return rule;
  }
  // P_n(x) and P_n'(x) by the three-term recurrence.
  auto legendre = [n](double x, double& dp) {
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (std::size_t i = 0; i < n / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      const double dx = legendre(x, dp) / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    legendre(x, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.weights[i] = w;
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) {
    double dp = 0.0;
    legendre(0.0, dp);
    rule.weights[n / 2] = 2.0 / (dp * dp);
  }
  return rule;
}

//! Integrates f over [a, b] with a fixed Gauss-Legendre rule.
template <class F>
double integrate(const Rule& rule, double a, double b, F&& f)
{
  if (!(b > a))
    return 0.0;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return sum * half;
}

//! Integrates f over [a, b] split at the given breakpoints (those outside
//! (a, b) are ignored). Exact for piecewise polynomials of degree < 2n.
template <class F>
double integrate_pieces(const Rule& rule, double a, double b,
                        std::vector<double> breaks, F&& f)
{
  if (!(b > a))
    return 0.0;
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (hi > lo)
      total += integrate(rule, lo, hi, f);
  }
  return total;
}

//! Composite rule: `panels` equal panels on [a, b], `per_panel` nodes each.
inline Rule composite(double a, double b, std::size_t panels,
                      std::size_t per_panel)
{
  if (panels == 0 || !(b > a))
    throw InvalidArgument("composite: need b > a and at least one panel");
  const Rule base = gauss_legendre(per_panel);
  Rule out;
  out.nodes.reserve(panels * per_panel);
  out.weights.reserve(panels * per_panel);
  const double width = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double mid = lo + 0.5 * width;
    for (std::size_t i = 0; i < per_panel; ++i) {
      out.nodes.push_back(mid + 0.5 * width * base.nodes[i]);
      out.weights.push_back(0.5 * width * base.weights[i]);
    }
  }
  return out;
}

} // namespace fpa::quadrature
