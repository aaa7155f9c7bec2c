#include <catch_amalgamated.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "fpa/theta_family.hpp"
#include "fpa/variance.hpp"
#include "support.hpp"

using Catch::Approx;
using namespace fpa;

namespace {

struct Fit
{
  BidSample sample;
  BandwidthPlan plan;
  InverseBidCurve curve;
  RearrangedStrategy strategy;
  std::vector<double> constrained;
};

Fit fit(BidSample sample, std::size_t m = 0)
{
  const BandwidthPlan plan =
    bandwidth_plan(sample, pseudo_values(sample, bid_bandwidth(sample)));
  InverseBidCurve curve = m == 0 ? inverse_bid_curve(sample, plan)
                                 : inverse_bid_curve(sample, plan, m);
  RearrangedStrategy strategy = smooth_strategy(curve, plan.h_r);
  auto constrained = constrained_pseudo_values(sample, strategy);
  return { std::move(sample), plan, std::move(curve), std::move(strategy),
           std::move(constrained) };
}

// η recomputed from the estimator's evaluators, one quadrature node at a time.
double eta_direct(const Fit& f, const quadrature::Rule& grid, std::size_t i,
                  std::size_t j, double v)
{
  const auto bids = f.sample.bids();
  const double vj = f.constrained[j];
  const double slope = std::max(f.strategy.derivative(vj), kSlopeFloor);
  const double a = kernels::triweight_derivative((vj - v) / f.plan.h_f) / slope;
  double integral = 0.0;
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    const double u = grid.nodes[q];
    const double g = f.curve.pdf(u);
    const double kr =
      kernels::triweight((vj - f.curve(u)) / f.plan.h_r) / f.plan.h_r;
    const auto c = f.curve.density()->coefficients(u);
    const double x = (bids[i] - u) / f.plan.h_g;
    const double kg = (c[0] + c[1] * x + c[2] * x * x) * kernels::triweight(x);
    integral += grid.weights[q] * kr * f.curve.cdf(u) / (g * g) * kg;
  }
  return a * integral;
}

// Returns the distinct-triple sum and the sum of |η_ij η_ik| over all
// (i, j, k), diagonal included: the factorized form subtracts those diagonal
// terms, so that sum bounds its rounding error.
std::pair<double, double> brute_force(const Fit& f,
                                      const quadrature::Rule& grid, double v)
{
  const std::size_t n = f.sample.size();
  std::vector<double> eta(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      eta[i * n + j] = eta_direct(f, grid, i, j, v);
  double total = 0.0;
  double magnitude = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
      {
        const double term = eta[i * n + j] * eta[i * n + k];
        magnitude += std::abs(term);
        if (i != j && i != k && j != k)
          total += term;
      }
  const double big_n = static_cast<double>(f.curve.bidder_count());
  const double nn = static_cast<double>(n);
  const double pre = 1.0 /
                     (big_n * (big_n - 1) * (big_n - 1) * f.plan.h_f *
                      f.plan.h_f * f.plan.h_g) /
                     (nn * (nn - 1) * (nn - 2));
  return { pre * total, pre * magnitude };
}

AsymptoticPrimitives uniform_truth(const BandwidthPlan& plan)
{
  AsymptoticPrimitives p =
    theta_primitives(1.0, 5, RatioConvention::rule_of_thumb);
  p.lambda_ratio = plan.h_f / plan.h_g;
  return p;
}

} // namespace

TEST_CASE("factorized variance matches the distinct-triple sum")
{
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n_bidders = 2 + rep % 3;
    const std::size_t n_auctions = (rep % 4 == 0 ? 12 : 10) / n_bidders;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> bids(n_bidders * n_auctions);
    for (auto& b : bids)
      b = 0.6 * std::pow(unif(rng), 0.5 + rep * 0.05);
    const Fit f = fit(BidSample(bids, n_bidders, n_auctions), 2000);
    const VarianceInputs in =
      variance_inputs(f.sample, f.plan, f.curve, f.strategy, f.constrained);
    REQUIRE(in.size() <= 12);

    std::vector<double> vs = f.constrained;
    std::sort(vs.begin(), vs.end());
    for (double v : { vs[vs.size() / 2], vs.front() + 0.3 * f.plan.h_f }) {
      const auto [want, magnitude] = brute_force(f, in.grid, v);
      const double got = rgpv_variance_hat(in, v);
      CHECK(std::abs(got - want) <= 1e-10 * std::max(std::abs(want), magnitude));
    }
    for (std::size_t i = 0; i < in.size(); ++i)
      CHECK(eta(in, i, (i + 1) % in.size(), vs[1]) ==
            Approx(eta_direct(f, in.grid, i, (i + 1) % in.size(), vs[1]))
              .epsilon(1e-10)
              .margin(1e-300));
  }
}

TEST_CASE("grid and pointwise evaluation agree")
{
  const Fit f = fit(testing::uniform_design(4, 30, 5));
  const VarianceInputs in =
    variance_inputs(f.sample, f.plan, f.curve, f.strategy, f.constrained);
  const std::vector<double> grid{ 0.2, 0.35, 0.5, 0.65, 0.8 };
  const auto all = rgpv_variance_hat(in, grid);
  REQUIRE(all.size() == grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    CHECK(all[k] == Approx(rgpv_variance_hat(in, grid[k])).epsilon(1e-12));
    CHECK(all[k] > 0.0);
  }
}

TEST_CASE("variance vanishes away from the values")
{
  const Fit f = fit(testing::uniform_design(4, 30, 6));
  const VarianceInputs in =
    variance_inputs(f.sample, f.plan, f.curve, f.strategy, f.constrained);
  const double far = *std::max_element(f.constrained.begin(),
                                       f.constrained.end()) +
                     2.0 * f.plan.h_f;
  CHECK(rgpv_variance_hat(in, far) == 0.0);
  CHECK(rgpv_variance_hat(in, -5.0) == 0.0);
}

TEST_CASE("too few bids")
{
  const Fit f = fit(BidSample({ 0.1, 0.3, 0.2, 0.5 }, 2, 2), 2000);
  VarianceInputs in =
    variance_inputs(f.sample, f.plan, f.curve, f.strategy, f.constrained);
  in.bids.resize(2);
  in.constrained.resize(2);
  CHECK_THROWS_AS(rgpv_variance_hat(in, 0.3), InsufficientSample);
  CHECK_THROWS_AS(variance_inputs(f.sample, f.plan, f.curve, f.strategy,
                                  std::vector<double>{ 0.1 }),
                  InvalidArgument);
}

TEST_CASE("sample variance on the uniform design")
{
  const Fit f = fit(testing::uniform_design(5, 420, 77));
  const auto start = std::chrono::steady_clock::now();
  const VarianceInputs in =
    variance_inputs(f.sample, f.plan, f.curve, f.strategy, f.constrained);
  std::vector<double> grid(401);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = 0.3 + 0.4 * static_cast<double>(k) / 400.0;
  const auto all = rgpv_variance_hat(in, grid);
  const double seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
  WARN("V_RGPV on 401 points at NL = 2100: " << seconds << " s");

  const AsymptoticPrimitives truth = uniform_truth(f.plan);
  const double v_rgpv =
    asymptotic_variance(kernels::EstimatorKind::rgpv, truth, 0.5);
  const double v_gpv =
    asymptotic_variance(kernels::EstimatorKind::gpv, truth, 0.5);
  const double at_half = all[200];
  CHECK(at_half == Approx(v_rgpv).epsilon(0.3));
  CHECK(std::all_of(all.begin(), all.end(), [](double x) { return x > 0.0; }));

  const VarianceEstimate gpv = gpv_variance_hat(in, f.curve, f.strategy, 0.5);
  CHECK_FALSE(gpv.flagged);
  CHECK(gpv.value == Approx(v_gpv).epsilon(0.3));
  CHECK(f.curve.density()->floor_events() == 0);
  // Only the extreme bids land on the flat ends of ŝ.
  CHECK(in.slope_floor_events <= 2);
}

TEST_CASE("plug-in GPV variance")
{
  SECTION("true primitives reproduce the asymptotic formula")
  {
    const AsymptoticPrimitives p =
      theta_primitives(1.0, 5, RatioConvention::rule_of_thumb);
    const double v = 0.5;
    const double b = p.strategy(v);
    const double plug = gpv_variance_formula(
      p.cdf(v), p.bid_pdf(b), p.pdf(v), p.strategy_d1(v), 5, p.lambda_ratio,
      kernels::BidKernel::fourth_order);
    CHECK(plug == asymptotic_variance(kernels::EstimatorKind::gpv, p, v));
  }

  SECTION("dominates the matched RGPV plug-in")
  {
    const Fit f = fit(testing::uniform_design(5, 200, 9));
    for (double v : { 0.3, 0.45, 0.6, 0.7 }) {
      const double b = f.strategy(v);
      const double g = (*f.curve.density())(b);
      const double fv = rgpv_density(f.sample, v, f.plan, f.strategy);
      const double slope = f.strategy.derivative(v);
      const VarianceEstimate gpv =
        gpv_variance_hat(f.curve, f.strategy, f.plan, fv, v);
      const double rgpv = gpv_variance_formula(
        f.curve.cdf(b), g, fv, slope, 5, f.plan.h_f / f.plan.h_g,
        kernels::BidKernel::fourth_order, kernels::EstimatorKind::rgpv);
      CHECK_FALSE(gpv.flagged);
      CHECK(gpv.value > rgpv);
    }
  }

  SECTION("flat strategy is flagged")
  {
    const Fit f = fit(testing::uniform_design(5, 200, 10));
    const VarianceEstimate out = gpv_variance_hat(
      f.curve, f.strategy, f.plan, 1.0, f.strategy.bracket_lo() - 1.0);
    CHECK(out.flagged);
  }
}

TEST_CASE("asymptotic variances of the power family")
{
  SECTION("ratio near 1.587 for the uniform design with a common kernel")
  {
    CHECK(theta_variance_ratio(1.0, 5) == Approx(1.587).margin(0.005));
  }

  SECTION("ratio does not depend on v")
  {
    for (double theta : { 1.0, 2.0, 0.7 })
      for (std::size_t n : { 3u, 5u }) {
        for (auto conv :
             { RatioConvention::common_kernel, RatioConvention::rule_of_thumb }) {
          double lo = INFINITY, hi = 0.0;
          for (int k = 0; k < 10; ++k) {
            const double r =
              theta_variance_ratio(theta, n, conv, 0.1 + 0.08 * k);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
          }
          CHECK(hi / lo < 1.0 + 1e-9);
        }
      }
  }

  SECTION("rgpv never exceeds gpv")
  {
    for (double theta : { 0.5, 1.0, 2.0, 3.0 })
      for (std::size_t n : { 2u, 3u, 5u, 8u })
        for (double v : { 0.2, 0.5, 0.8 }) {
          const auto p = theta_primitives(theta, n);
          CHECK(asymptotic_variance(kernels::EstimatorKind::rgpv, p, v) <
                asymptotic_variance(kernels::EstimatorKind::gpv, p, v));
        }
  }

  SECTION("closed-form prefactor for the uniform design")
  {
    // F = v, f = 1, g(s(v)) = 1/0.8.
    const auto p = theta_primitives(1.0, 5);
    const double v = 0.4;
    const double want = v * v * 0.8 * 0.8 * 0.8 / (5.0 * 16.0) *
                        kernels::asymptotic_kernel_constant(
                          kernels::EstimatorKind::rgpv, 0.8,
                          kernels::BidKernel::second_order);
    CHECK(asymptotic_variance(kernels::EstimatorKind::rgpv, p, v) ==
          Approx(want).epsilon(1e-12));
  }

  SECTION("invalid primitives")
  {
    auto p = theta_primitives(1.0, 5);
    p.bid_pdf = [](double) { return 0.0; };
    CHECK_THROWS_AS(asymptotic_variance(kernels::EstimatorKind::gpv, p, 0.5),
                    InvalidArgument);
    CHECK_THROWS_AS(theta_primitives(1.0, 1), InvalidArgument);
  }
}

TEST_CASE("rearrangement bias")
{
  SECTION("vanishes on the uniform design")
  {
    const auto p = theta_primitives(1.0, 5);
    for (int k = 0; k <= 10; ++k)
      CHECK(asymptotic_bias(p, 0.05 + 0.09 * k, 0.2, 0.2) == 0.0);
  }

  SECTION("triweight second moment")
  {
    const auto rule = quadrature::gauss_legendre(20);
    const double mu2 = quadrature::integrate(
      rule, -1.0, 1.0, [](double u) { return u * u * kernels::triweight(u); });
    CHECK(mu2 == Approx(kernels::kTriweightMu2).epsilon(1e-12));
  }

  SECTION("each term scales with its own bandwidth squared")
  {
    AsymptoticPrimitives p;
    p.pdf = [](double v) { return 1.0 + 0.5 * std::sin(v); };
    p.pdf_d1 = [](double v) { return 0.5 * std::cos(v); };
    p.pdf_d2 = [](double v) { return -0.5 * std::sin(v); };
    p.strategy_d1 = [](double v) { return 0.8 + 0.1 * v * v; };
    p.strategy_d2 = [](double v) { return 0.2 * v; };
    p.strategy_d3 = [](double) { return 0.2; };
    const double v = 0.6;
    const double h = 0.1;
    const double first = asymptotic_bias(p, v, h, 0.0);
    const double second = asymptotic_bias(p, v, 0.0, h);
    CHECK(first == Approx(0.5 * p.pdf_d2(v) / 9.0 * h * h).epsilon(1e-14));
    CHECK(asymptotic_bias(p, v, 2 * h, 0.0) == Approx(4 * first).epsilon(1e-14));
    CHECK(asymptotic_bias(p, v, 2 * h, h) ==
          Approx(4 * first + second).epsilon(1e-14));
    const double s1 = p.strategy_d1(v), s2 = p.strategy_d2(v);
    const double curv =
      ((0.2 * p.pdf(v) + s2 * p.pdf_d1(v)) * s1 - s2 * s2 * p.pdf(v)) / (s1 * s1);
    CHECK(second == Approx(0.5 * curv / 9.0 * h * h).epsilon(1e-14));
  }

  SECTION("finite and quadratic in h for steeper families")
  {
    for (double theta : { 2.0, 3.0 }) {
      const auto p = theta_primitives(theta, 5);
      const double full = asymptotic_bias(p, 0.5, 0.2, 0.2);
      const double half = asymptotic_bias(p, 0.5, 0.1, 0.1);
      CHECK(std::isfinite(full));
      CHECK(half == Approx(full / 4.0).margin(1e-15));
    }
  }
}
