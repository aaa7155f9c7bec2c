// Acceptance checks 1-9. Prints one PASS/FAIL line per check; exit status is
// the number of failures not listed with --allow-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fpa/fpa.hpp"

using namespace fpa;
using Kind = kernels::EstimatorKind;
using kernels::BidKernel;
using boost::math::quadrature::gauss_kronrod;

namespace {

struct Outcome
{
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what)
  {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
double gk(F f, double a, double b)
{
  auto piece = [&](double lo, double hi) {
    return gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-14);
  };
  return a < 0.0 && b > 0.0 ? piece(a, 0.0) + piece(0.0, b) : piece(a, b);
}

double kernel_ratio(double c, BidKernel bid, std::size_t nodes)
{
  return kernels::asymptotic_kernel_constant(Kind::gpv, c, bid, nodes) /
         kernels::asymptotic_kernel_constant(Kind::rgpv, c, bid, nodes);
}

// ---------------------------------------------------------------- 1
void variance_ratio(Outcome& o)
{
  const auto t0 = std::chrono::steady_clock::now();
  const double common = theta_variance_ratio(1.0, 5, RatioConvention::common_kernel);
  const double rot = theta_variance_ratio(1.0, 5, RatioConvention::rule_of_thumb);
  const double elapsed = seconds_since(t0);

  struct Setting
  {
    double value;
    double c;
    BidKernel bid;
  };
  const Setting settings[] = { { common, 0.8, BidKernel::second_order },
                               { rot, 3.15 / 3.72, BidKernel::fourth_order } };
  double drift = 0.0;
  double mismatch = 0.0;
  for (const auto& s : settings) {
    const double r64 = kernel_ratio(s.c, s.bid, 64);
    const double r256 = kernel_ratio(s.c, s.bid, 256);
    drift = std::max(drift, std::abs(r64 - r256) / r256);
    mismatch = std::max(mismatch, std::abs(r64 - s.value) / s.value);
  }
  o.detail << "common kernel " << common << " (target 1.587 +/- 0.05); "
           << "rule-of-thumb lambda, order-4 bid kernel " << rot
           << "; refinement drift " << drift << "; " << elapsed << " s";
  o.require(std::abs(common - 1.587) <= 0.05, "common-kernel ratio");
  o.require(drift <= 1e-6, "refinement stability");
  o.require(mismatch <= 1e-9, "ratio equals kernel-constant ratio");
  o.require(elapsed < 1.0, "runtime");
}

// ---------------------------------------------------------------- 2, 3
struct CoverageRuns
{
  std::size_t reps = 200;
  std::size_t n_boot = 199;
  std::size_t threads = 0;
  std::uint64_t seed = 20240601;
  bool done = false;
  SimReport five, three;

  void ensure()
  {
    if (done)
      return;
    for (std::size_t n : { 5u, 3u }) {
      SimConfig c;
      c.n_bidders = n;
      c.total_bids = 2100;
      c.mc_reps = reps;
      c.n_boot = n_boot;
      c.seed = seed + n;
      c.threads = threads;
      const auto t0 = std::chrono::steady_clock::now();
      SimReport r = coverage_experiment(c);
      std::cerr << "  coverage run N=" << n << ": " << seconds_since(t0) << " s\n";
      (n == 5 ? five : three) = std::move(r);
    }
    done = true;
  }
};

void coverage(Outcome& o, CoverageRuns& runs)
{
  runs.ensure();
  const auto& g = runs.five.cell(Kind::gpv, 0.05);
  const auto& r = runs.five.cell(Kind::rgpv, 0.05);
  o.detail << "N=5, " << runs.reps << " reps x " << runs.n_boot << " boot: GPV "
           << g.coverage << " (target 0.940), RGPV " << r.coverage << " (target 0.936); "
           << runs.five.failures << " failed reps";
  o.require(std::abs(g.coverage - 0.940) <= 0.05, "GPV coverage");
  o.require(std::abs(r.coverage - 0.936) <= 0.05, "RGPV coverage");
}

void width_ratio(Outcome& o, CoverageRuns& runs)
{
  runs.ensure();
  const auto five = runs.five.ratio(0.05);
  const auto three = runs.three.ratio(0.05);
  o.detail << "N=5 mean W_GPV/W_RGPV " << five.mean_of_ratios
           << " (ratio of means " << five.ratio_of_means << "; target 1.094 +/- 0.08); N=3 "
           << three.mean_of_ratios << " (ratio of means " << three.ratio_of_means
           << "; target 1.326 +/- 0.12)";
  o.require(std::abs(five.mean_of_ratios - 1.094) <= 0.08, "N=5 width ratio");
  o.require(std::abs(three.mean_of_ratios - 1.326) <= 0.12, "N=3 width ratio");
}

// ---------------------------------------------------------------- 4
void variance_inequality(Outcome& o)
{
  double worst = 0.0; // largest rgpv/gpv
  for (BidKernel bid : { BidKernel::second_order, BidKernel::fourth_order })
    for (int i = 1; i <= 30; ++i) {
      const double c = 0.1 * i;
      const double gpv = kernels::asymptotic_kernel_constant(Kind::gpv, c, bid);
      const double rgpv = kernels::asymptotic_kernel_constant(Kind::rgpv, c, bid);
      worst = std::max(worst, rgpv / gpv);
      o.require(rgpv <= gpv, "weak inequality");
      if (bid == BidKernel::second_order)
        o.require(rgpv < gpv, "strict inequality for the triweight");
    }
  o.detail << "max rgpv/gpv kernel constant over c in {0.1,...,3.0}: " << worst;
}

// ---------------------------------------------------------------- 5
double eta_direct(const Fit& f, const quadrature::Rule& grid, std::size_t i,
                  std::size_t j, double v)
{
  const auto bids = f.sample.bids();
  const double vj = f.constrained[j];
  const double slope = std::max(f.strategy->derivative(vj), kSlopeFloor);
  const double a = kernels::triweight_derivative((vj - v) / f.plan.h_f) / slope;
  double integral = 0.0;
  for (std::size_t q = 0; q < grid.nodes.size(); ++q) {
    const double u = grid.nodes[q];
    const double g = f.curve.pdf(u);
    const double kr = kernels::triweight((vj - f.curve(u)) / f.plan.h_r) / f.plan.h_r;
    const auto c = f.curve.density()->coefficients(u);
    const double x = (bids[i] - u) / f.plan.h_g;
    const double kg = (c[0] + c[1] * x + c[2] * x * x) * kernels::triweight(x);
    integral += grid.weights[q] * kr * f.curve.cdf(u) / (g * g) * kg;
  }
  return a * integral;
}

void u_statistic(Outcome& o)
{
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n_bidders = 2 + rep % 3;
    const std::size_t n_auctions = (rep % 4 == 0 ? 12 : 10) / n_bidders;
    std::vector<double> bids(n_bidders * n_auctions);
    for (auto& b : bids)
      b = 0.6 * std::pow(unif(rng), 0.5 + rep * 0.05);
    const BidSample sample(bids, n_bidders, n_auctions);
    const BandwidthPlan plan =
      bandwidth_plan(sample, pseudo_values(sample, bid_bandwidth(sample)));
    FitOptions fo;
    fo.riemann_points = 2000;
    const Fit f = fit(sample, plan, support_bounds(sample), fo);
    const VarianceInputs in =
      variance_inputs(f.sample, f.plan, f.curve, *f.strategy, f.constrained);
    const std::size_t n = in.size();

    std::vector<double> vs = f.constrained;
    std::sort(vs.begin(), vs.end());
    for (double v : { vs[n / 2], vs.front() + 0.3 * f.plan.h_f }) {
      std::vector<double> eta(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          eta[i * n + j] = eta_direct(f, in.grid, i, j, v);
      double total = 0.0, magnitude = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k) {
            const double term = eta[i * n + j] * eta[i * n + k];
            magnitude += std::abs(term);
            if (i != j && i != k && j != k)
              total += term;
          }
      const double big_n = static_cast<double>(n_bidders);
      const double nn = static_cast<double>(n);
      const double pre = 1.0 / (big_n * (big_n - 1) * (big_n - 1) * plan.h_f * plan.h_f * plan.h_g) /
                         (nn * (nn - 1) * (nn - 2));
      const double want = pre * total;
      const double scale = std::max(std::abs(want), pre * magnitude);
      const double got = rgpv_variance_hat(in, v);
      worst = std::max(worst, scale > 0.0 ? std::abs(got - want) / scale : std::abs(got));
      ++checked;
    }
  }
  const double elapsed = seconds_since(t0);
  o.detail << checked << " evaluations on 20 samples (NL <= 12): max relative gap " << worst
           << "; " << elapsed << " s";
  o.require(worst <= 1e-10, "factorized vs brute force");
  o.require(elapsed < 10.0, "runtime");
}

// ---------------------------------------------------------------- 6
BidSample linear_design(std::size_t n, std::size_t l, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> bids(n * l);
  for (auto& b : bids)
    b = theta_bid_factor(1.0, n) * unif(rng);
  return BidSample(std::move(bids), n, l);
}

void rearrangement(Outcome& o)
{
  // Monotonicity and plateaus.
  std::size_t pairs = 0, violations = 0, plateau_misses = 0;
  for (int s = 0; s < 50; ++s) {
    const BidSample sample = linear_design(5, 60 + 4 * s, 500 + s);
    const Fit f = fit(sample);
    const RearrangedStrategy& st = *f.strategy;
    const SupportBounds sb = f.curve.support();
    std::mt19937_64 rng(900 + s);
    std::uniform_real_distribution<double> unif(st.bracket_lo() - 0.2, st.bracket_hi() + 0.2);
    for (int k = 0; k < 200; ++k) {
      double a = unif(rng), b = unif(rng);
      if (a > b)
        std::swap(a, b);
      ++pairs;
      violations += st(a) > st(b);
    }
    for (double t : { st.bracket_lo() - 1.0, st.bracket_lo() - 0.01 })
      plateau_misses += st(t) != sb.lo;
    for (double t : { st.bracket_hi() + 1.0, st.bracket_hi() + 0.01 })
      plateau_misses += st(t) != sb.hi;
  }
  o.detail << pairs << " ordered pairs, " << violations << " violations; "
           << plateau_misses << " plateau misses;";
  o.require(violations == 0, "monotone");
  o.require(plateau_misses == 0, "plateaus");

  // Uniform error against s(v) = 0.8 v on an interior window.
  const std::size_t sizes[] = { 500, 2000, 8000 };
  double err_s[3] = {}, err_d[3] = {}, err_inv[3] = {};
  const int seeds = 8;
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < seeds; ++r) {
      const BidSample sample = linear_design(5, sizes[k] / 5, 7000 + 31 * r + k);
      const Fit f = fit(sample);
      const RearrangedStrategy& st = *f.strategy;
      double es = 0.0, ed = 0.0, ei = 0.0;
      for (int i = 0; i <= 100; ++i) {
        const double t = 0.2 + 0.6 * i / 100.0;
        es = std::max(es, std::abs(st(t) - 0.8 * t));
        ed = std::max(ed, std::abs(st.derivative(t) - 0.8));
        const double b = 0.8 * t;
        ei = std::max(ei, std::abs(st.pseudo_inverse(b) - t));
      }
      err_s[k] += es / seeds;
      err_d[k] += ed / seeds;
      err_inv[k] += ei / seeds;
    }
  }
  o.detail << " mean sup errors at NL=500/2000/8000: s " << err_s[0] << "/" << err_s[1]
           << "/" << err_s[2] << ", s' " << err_d[0] << "/" << err_d[1] << "/" << err_d[2]
           << ", inverse " << err_inv[0] << "/" << err_inv[1] << "/" << err_inv[2];
  for (const double* e : { err_s, err_d, err_inv })
    o.require(e[0] > e[1] && e[1] > e[2], "error decreases with NL");
}

// ---------------------------------------------------------------- 7
void kernel_calculus(Outcome& o)
{
  double worst = 0.0;
  auto moment = [](auto k, int p, double a, double b) {
    return gk([&](double u) { return std::pow(u, p) * k(u); }, a, b);
  };
  auto tri = [](double u) { return kernels::triweight(u); };
  auto tri4 = [](double u) { return kernels::fourth_order_triweight(u); };
  const double want2[] = { 1.0, 0.0, kernels::kTriweightMu2 };
  for (int p = 0; p < 3; ++p)
    worst = std::max(worst, std::abs(moment(tri, p, -1.0, 1.0) - want2[p]));
  for (int p = 0; p < 4; ++p)
    worst = std::max(worst, std::abs(moment(tri4, p, -1.0, 1.0) - (p == 0 ? 1.0 : 0.0)));
  const BoundaryKernelTable table(101);
  o.require(table.rho_grid.size() == 101, "101-point rho grid");
  for (std::size_t i = 0; i < table.rho_grid.size(); ++i) {
    const auto& a = table.coeffs[i];
    auto kb = [&](double u) { return (a[0] + a[1] * u + a[2] * u * u) * kernels::triweight(u); };
    for (int p = 0; p < 3; ++p)
      worst = std::max(worst, std::abs(moment(kb, p, -table.rho_grid[i], 1.0) - (p == 0 ? 1.0 : 0.0)));
  }

  const double step = 1e-5;
  double fd_kernel = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double u = -0.98 + 1.96 * i / 40.0;
    const double d_int = (kernels::triweight_integral(u + step) - kernels::triweight_integral(u - step)) / (2 * step);
    const double d_ker = (kernels::triweight(u + step) - kernels::triweight(u - step)) / (2 * step);
    fd_kernel = std::max(fd_kernel, std::abs(d_int - kernels::triweight(u)));
    fd_kernel = std::max(fd_kernel, std::abs(d_ker - kernels::triweight_derivative(u)));
  }

  const BidSample sample = linear_design(5, 420, 61);
  const Fit f = fit(sample);
  const RearrangedStrategy& st = *f.strategy;
  double fd_strategy = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double t = st.xi_min() + (i + 0.5) * (st.xi_max() - st.xi_min()) / 50;
    const double fd = (st(t + step) - st(t - step)) / (2 * step);
    fd_strategy = std::max(fd_strategy, std::abs(st.derivative(t) - fd));
  }
  o.detail << "max moment error " << worst << " (tol 1e-10); kernel finite differences "
           << fd_kernel << " (tol 1e-8); s' finite differences " << fd_strategy << " (tol 1e-6)";
  o.require(worst <= 1e-10, "moments");
  o.require(fd_kernel <= 1e-8, "kernel derivatives");
  o.require(fd_strategy <= 1e-6, "strategy derivative");
}

// ---------------------------------------------------------------- 8
void bias(Outcome& o)
{
  const auto uniform = theta_primitives(1.0, 5);
  double largest = 0.0;
  for (int k = 0; k <= 10; ++k)
    largest = std::max(largest, std::abs(asymptotic_bias(uniform, 0.05 + 0.09 * k, 0.2, 0.2)));
  // theta=2 has linear f and s, so every curvature term is zero as well;
  // theta=3 gives a nonzero value that exercises the h^2 scaling.
  double worst_scaling = 0.0;
  bool finite = true;
  double theta3 = 0.0;
  for (double theta : { 2.0, 3.0 }) {
    const auto p = theta_primitives(theta, 5);
    for (double v : { 0.3, 0.5, 0.7 }) {
      const double full = asymptotic_bias(p, v, 0.2, 0.2);
      const double half = asymptotic_bias(p, v, 0.1, 0.1);
      finite = finite && std::isfinite(full) && std::isfinite(half);
      worst_scaling = std::max(worst_scaling, std::abs(half - full / 4.0) /
                                                std::max(std::abs(full), 1e-300));
      if (theta == 3.0)
        theta3 = std::max(theta3, std::abs(full));
    }
  }
  o.detail << "theta=1 max |bias| " << largest << "; theta=2,3 finite " << finite
           << ", relative deviation from h^2 scaling " << worst_scaling
           << "; theta=3 max |bias| at h=0.2: " << theta3;
  o.require(largest == 0.0, "zero bias on the linear design");
  o.require(finite, "finite bias");
  o.require(theta3 > 0.0, "nonzero bias for theta=3");
  o.require(worst_scaling <= 1e-12, "h^2 scaling");
}

// ---------------------------------------------------------------- 9
HeteroPanel log_linear_panel(std::size_t per_n, const std::vector<std::size_t>& ns,
                             const std::vector<double>& beta, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> cov(-1.0, 1.0);
  std::vector<AuctionRecord> out;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < beta.size(); ++j)
    names.push_back("x" + std::to_string(j + 1));
  for (std::size_t n : ns)
    for (std::size_t l = 0; l < per_n; ++l) {
      AuctionRecord rec;
      rec.id = std::to_string(out.size());
      double index = 0.0;
      for (double b : beta) {
        rec.covariates.push_back(cov(rng));
        index += b * rec.covariates.back();
      }
      const double scale = std::exp(index) * (n - 1.0) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        rec.bids.push_back(scale * unif(rng));
      out.push_back(std::move(rec));
    }
  return HeteroPanel(std::move(out), names);
}

void homogenization(Outcome& o)
{
  // Noiseless log-linear bids.
  const std::vector<double> alpha = { -0.4, 0.1, 0.35 };
  const std::vector<double> beta = { 0.7, -1.2 };
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> cov(-2.0, 2.0);
  std::vector<AuctionRecord> recs;
  for (int l = 0; l < 30; ++l) {
    const std::size_t n = 2 + static_cast<std::size_t>(l % 3);
    AuctionRecord r{ std::to_string(l), {}, { cov(rng), cov(rng) } };
    r.bids.assign(n, std::exp(alpha[n - 2] + beta[0] * r.covariates[0] + beta[1] * r.covariates[1]));
    recs.push_back(std::move(r));
  }
  const HomogenizationFit exact = fit_homogenization(HeteroPanel(std::move(recs), { "x1", "x2" }));
  double coef_err = 0.0;
  for (std::size_t k = 0; k < 3; ++k)
    coef_err = std::max(coef_err, std::abs(exact.alpha[k] - alpha[k]));
  for (Eigen::Index j = 0; j < 2; ++j)
    coef_err = std::max(coef_err, std::abs(exact.beta(j) - beta[static_cast<std::size_t>(j)]));

  // Identity at the auction's own covariates.
  const HeteroPanel panel = log_linear_panel(80, { 2, 3, 5 }, { 0.5, 0.2 }, 12);
  const HomogenizationFit hfit = fit_homogenization(panel);
  std::size_t identity_misses = 0;
  for (const auto& a : panel.auctions()) {
    const HeteroPanel one({ a }, panel.covariate_names());
    identity_misses += homogenized_panel(one, hfit, a.covariates).auction(0).bids != a.bids;
  }

  // Homogenize-then-estimate equals estimating pre-homogenized bids.
  const std::vector<double> x0 = { 0.2, -0.1 };
  std::vector<AuctionRecord> shifted;
  for (const auto& a : panel.auctions()) {
    const double shift = (x0[0] - a.covariates[0]) * hfit.beta(0) + (x0[1] - a.covariates[1]) * hfit.beta(1);
    AuctionRecord r{ a.id, {}, x0 };
    for (double b : a.bids)
      r.bids.push_back(b * std::exp(shift));
    shifted.push_back(std::move(r));
  }
  const HeteroPanel already(std::move(shifted), panel.covariate_names());
  const HeteroEstimate est = estimate_groups(group_by_bidders(already), already.n_auctions());
  const std::vector<double> grid = { 0.2, 0.4, 0.6 };
  const auto direct = conditional_density(est, grid);
  double compose = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    compose = std::max(compose, std::abs(conditional_density(panel, hfit, x0, grid[k]) - direct[k]) /
                                  std::abs(direct[k]));
  o.detail << "coefficient error " << coef_err << "; identity misses " << identity_misses
           << "; composition relative gap " << compose;
  o.require(coef_err <= 1e-10, "exact recovery");
  o.require(identity_misses == 0, "B0 = B at x0 = X_l");
  o.require(compose <= 1e-9, "composition");
}

} // namespace

int main(int argc, char** argv)
{
  CoverageRuns runs;
  std::vector<int> only;
  std::vector<int> allowed;
  CLI::App app{ "Acceptance checks" };
  app.add_option("--only", only, "Run only these checks");
  app.add_option("--allow-fail", allowed, "Checks whose failure does not affect the exit status");
  app.add_option("--reps", runs.reps, "Monte Carlo replications for checks 2 and 3");
  app.add_option("--boot", runs.n_boot, "Bootstrap replications for checks 2 and 3");
  app.add_option("--threads", runs.threads, "Worker threads");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> checks = {
    { "asymptotic variance ratio at theta=1, N=5", variance_ratio },
    { "uniform band coverage, N=5", [&](Outcome& o) { coverage(o, runs); } },
    { "band width ratio, N=5 and N=3", [&](Outcome& o) { width_ratio(o, runs); } },
    { "kernel-constant variance inequality", variance_inequality },
    { "factorized variance vs distinct-triple enumeration", u_statistic },
    { "rearrangement properties", rearrangement },
    { "kernel calculus", kernel_calculus },
    { "bias formula", bias },
    { "homogenization", homogenization },
  };

  const std::set<int> allow(allowed.begin(), allowed.end());
  int failures = 0;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end())
      continue;
    Outcome o;
    try {
      checks[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const bool excused = !o.pass && allow.count(id) > 0;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << checks[k].first << ": "
              << o.detail.str() << (excused ? " (allowed)" : "") << std::endl;
    failures += !o.pass && !excused;
  }
  return failures;
}
