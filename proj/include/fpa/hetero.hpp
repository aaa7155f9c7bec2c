#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fpa/bootstrap.hpp"
#include "fpa/error.hpp"
#include "fpa/fit.hpp"
#include "fpa/panel.hpp"
#include "fpa/sample.hpp"
#include "fpa/variance.hpp"

namespace fpa {

/// log B_il = Σ_n α_n 𝟙(N_l = n) + X_l'β + U_il.
struct HomogenizationFit
{
  std::vector<std::size_t> bidder_counts; // ascending
  std::vector<double> alpha;              // aligned with bidder_counts
  Eigen::VectorXd beta;

  double alpha_for(std::size_t n) const
  {
    for (std::size_t k = 0; k < bidder_counts.size(); ++k)
      if (bidder_counts[k] == n)
        return alpha[k];
    throw InvalidArgument("HomogenizationFit: bidder count " +
                          std::to_string(n) + " was not observed");
  }
};

namespace detail {

inline Eigen::MatrixXd homogenization_design(const HeteroPanel& panel,
                                             std::span<const std::size_t> ns)
{
  const auto rows = static_cast<Eigen::Index>(panel.total_bids());
  const auto n_dummies = static_cast<Eigen::Index>(ns.size());
  const auto d = static_cast<Eigen::Index>(panel.dimension());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, n_dummies + d);
  Eigen::Index r = 0;
  for (const auto& a : panel.auctions()) {
    const auto col = static_cast<Eigen::Index>(
      std::lower_bound(ns.begin(), ns.end(), a.bids.size()) - ns.begin());
    for (std::size_t i = 0; i < a.bids.size(); ++i, ++r) {
      x(r, col) = 1.0;
      for (Eigen::Index j = 0; j < d; ++j)
        x(r, n_dummies + j) = a.covariates[static_cast<std::size_t>(j)];
    }
  }
  return x;
}

inline Eigen::VectorXd log_bids(const HeteroPanel& panel)
{
  Eigen::VectorXd y(static_cast<Eigen::Index>(panel.total_bids()));
  Eigen::Index r = 0;
  for (const auto& a : panel.auctions())
    for (double b : a.bids) {
      if (!(b > 0.0))
        throw DataError("fit_homogenization: bids must be positive (auction '" +
                        a.id + "')");
      y(r++) = std::log(b);
    }
  return y;
}

} // namespace detail

/**
 * Least squares of log-bids on bidder-count dummies and covariates, without
 * a separate intercept, by column-pivoting Householder QR.
 */
inline HomogenizationFit fit_homogenization(const HeteroPanel& panel)
{
  HomogenizationFit out;
  out.bidder_counts = panel.bidder_counts();
  const Eigen::MatrixXd x =
    detail::homogenization_design(panel, out.bidder_counts);
  const Eigen::VectorXd y = detail::log_bids(panel);

  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x.col(j).isZero(0.0)) {
      const auto k = static_cast<std::size_t>(j) - out.bidder_counts.size();
      throw RankDeficient("fit_homogenization: covariate '" +
                          panel.covariate_names()[k] + "' is identically zero");
    }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols())
    throw RankDeficient("fit_homogenization: design has rank " +
                        std::to_string(qr.rank()) + " < " +
                        std::to_string(x.cols()) + " columns");
  const Eigen::VectorXd coef = qr.solve(y);
  const auto n_dummies = static_cast<Eigen::Index>(out.bidder_counts.size());
  out.alpha.assign(coef.data(), coef.data() + n_dummies);
  out.beta = coef.tail(x.cols() - n_dummies);
  if (!coef.allFinite())
    throw NumericalFailure("fit_homogenization: non-finite coefficients");
  return out;
}

//! Residuals Û_il in panel order.
inline Eigen::VectorXd homogenization_residuals(const HeteroPanel& panel,
                                                const HomogenizationFit& fit)
{
  const Eigen::MatrixXd x = detail::homogenization_design(panel, fit.bidder_counts);
  Eigen::VectorXd coef(x.cols());
  const auto n_dummies = static_cast<Eigen::Index>(fit.alpha.size());
  for (Eigen::Index k = 0; k < n_dummies; ++k)
    coef(k) = fit.alpha[static_cast<std::size_t>(k)];
  coef.tail(fit.beta.size()) = fit.beta;
  return detail::log_bids(panel) - x * coef;
}

/**
 * B⁰_il = exp(log B_il + x0'β̂ - X_l'β̂); the returned panel carries x0 as
 * every auction's covariates.
 */
inline HeteroPanel homogenized_panel(const HeteroPanel& panel,
                                     const HomogenizationFit& fit,
                                     std::span<const double> x0)
{
  if (x0.size() != panel.dimension() ||
      static_cast<std::size_t>(fit.beta.size()) != panel.dimension())
    throw InvalidArgument("homogenize: covariate dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> target(x0.data(),
                                                 static_cast<Eigen::Index>(x0.size()));
  const double level = target.dot(fit.beta);
  std::vector<AuctionRecord> out;
  out.reserve(panel.n_auctions());
  for (const auto& a : panel.auctions()) {
    const Eigen::Map<const Eigen::VectorXd> x(
      a.covariates.data(), static_cast<Eigen::Index>(a.covariates.size()));
    const double shift = level - x.dot(fit.beta);
    AuctionRecord rec{ a.id, {}, std::vector<double>(x0.begin(), x0.end()) };
    rec.bids.reserve(a.bids.size());
    for (double b : a.bids)
      rec.bids.push_back(shift == 0.0 ? b : std::exp(std::log(b) + shift));
    out.push_back(std::move(rec));
  }
  return HeteroPanel(std::move(out), panel.covariate_names());
}

/// The auctions with a given bidder count, as a fixed-N sample.
struct BidderGroup
{
  std::size_t n_bidders = 0;
  BidSample sample;
  std::vector<std::size_t> auctions; // indices into the panel
};

//! Partitions the panel by bidder count (ascending).
inline std::vector<BidderGroup> group_by_bidders(const HeteroPanel& panel)
{
  std::vector<BidderGroup> groups;
  for (std::size_t n : panel.bidder_counts()) {
    std::vector<double> bids;
    std::vector<std::size_t> ids;
    for (std::size_t l = 0; l < panel.n_auctions(); ++l) {
      const auto& a = panel.auction(l);
      if (a.bids.size() != n)
        continue;
      bids.insert(bids.end(), a.bids.begin(), a.bids.end());
      ids.push_back(l);
    }
    groups.push_back({ n, BidSample(std::move(bids), n, ids.size()), std::move(ids) });
  }
  return groups;
}

//! Homogenized bids grouped by bidder count.
inline std::vector<BidderGroup> homogenize(const HeteroPanel& panel,
                                           const HomogenizationFit& fit,
                                           std::span<const double> x0)
{
  return group_by_bidders(homogenized_panel(panel, fit, x0));
}

struct HeteroOptions
{
  //! Common bandwidths for every group; by default each group gets its own
  //! rule-of-thumb plan.
  std::optional<BandwidthPlan> plan;
  FitOptions fit;
};

struct GroupFit
{
  std::size_t n_bidders = 0;
  std::size_t n_auctions = 0;
  Fit fit;
};

/// Per-n fits over a panel of L auctions.
struct HeteroEstimate
{
  std::size_t total_auctions = 0;
  std::vector<GroupFit> groups;

  const GroupFit* group(std::size_t n) const
  {
    for (const auto& g : groups)
      if (g.n_bidders == n)
        return &g;
    return nullptr;
  }
};

/**
 * Fits every group. With `reference`, each group reuses the reference
 * group's bandwidths, support and Riemann resolution (bootstrap replicates).
 */
inline HeteroEstimate estimate_groups(std::span<const BidderGroup> groups,
                                      std::size_t total_auctions,
                                      const HeteroOptions& options = {},
                                      const HeteroEstimate* reference = nullptr)
{
  HeteroEstimate out;
  out.total_auctions = total_auctions;
  for (const auto& g : groups) {
    if (reference != nullptr) {
      const GroupFit* ref = reference->group(g.n_bidders);
      if (ref == nullptr)
        throw InvalidArgument("estimate_groups: bidder count missing from reference");
      FitOptions fo = ref->fit.options;
      fo.riemann_points = ref->fit.riemann_points();
      out.groups.push_back({ g.n_bidders, g.sample.n_auctions(),
                             fit(g.sample, ref->fit.plan, ref->fit.curve.support(), fo) });
      continue;
    }
    if (g.sample.size() < 3)
      throw InsufficientSample("estimate_groups: group with " +
                               std::to_string(g.n_bidders) +
                               " bidders has fewer than three bids");
    if (options.plan)
      out.groups.push_back({ g.n_bidders, g.sample.n_auctions(),
                             fit(g.sample, *options.plan,
                                 support_bounds(g.sample), options.fit) });
    else
      out.groups.push_back(
        { g.n_bidders, g.sample.n_auctions(), fit(g.sample, options.fit) });
  }
  return out;
}

/**
 * f̂(v|x0) = (1/L)Σ_l (1/N_l)Σ_i K_f((V⁰†_il - v)/h_f)/h_f, i.e. the per-n
 * constrained estimates weighted by L_n/L.
 */
inline std::vector<double> conditional_density(const HeteroEstimate& est,
                                               std::span<const double> grid)
{
  std::vector<double> out(grid.size(), 0.0);
  for (const auto& g : est.groups) {
    const double share = static_cast<double>(g.n_auctions) /
                         static_cast<double>(est.total_auctions);
    const auto f = density_on_grid(g.fit, kernels::EstimatorKind::rgpv, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
      out[k] += share * f[k];
  }
  return out;
}

inline double conditional_density(const HeteroPanel& panel,
                                  const HomogenizationFit& fit,
                                  std::span<const double> x0, double v,
                                  const HeteroOptions& options = {})
{
  const auto groups = homogenize(panel, fit, x0);
  const HeteroEstimate est = estimate_groups(groups, panel.n_auctions(), options);
  const double grid[] = { v };
  return conditional_density(est, grid).front();
}

/**
 * Triple sum over distinct records (l, k, k') of
 *   (1/N_l) Σ_{i∈l} η_{il,k} η_{il,k'},   η_{il,k} = (1/N_k) Σ_{j∈k} η_{il,jk},
 * times 1/(n(n-1)² h_f² h_g) / (L(L-1)(L-2)), with η's Ĝ/ĝ² scaled by
 * `share_scale` (L/L_n when Ĝ and ĝ are normalized by all L auctions).
 *
 * `record_of[i]` is the record of bid i. With one bid per record and
 * share_scale = 1 this is rgpv_variance_hat.
 */
inline std::vector<double>
grouped_variance_hat(const VarianceInputs& in,
                     std::span<const std::size_t> record_of,
                     std::size_t records, std::size_t total_records,
                     double share_scale, std::span<const double> v_grid)
{
  const std::size_t count = in.size();
  if (record_of.size() != count)
    throw InvalidArgument("grouped_variance_hat: record map does not match");
  if (records < 3 || total_records < 3)
    throw InsufficientSample("grouped_variance_hat: need at least three records");
  const auto n = static_cast<Eigen::Index>(count);
  const auto ng = static_cast<Eigen::Index>(v_grid.size());

  std::vector<std::vector<std::size_t>> members(records);
  for (std::size_t i = 0; i < count; ++i) {
    if (record_of[i] >= records)
      throw InvalidArgument("grouped_variance_hat: record index out of range");
    members[record_of[i]].push_back(i);
  }
  std::vector<double> inv_size(records);
  for (std::size_t k = 0; k < records; ++k) {
    if (members[k].empty())
      throw InvalidArgument("grouped_variance_hat: empty record");
    inv_size[k] = 1.0 / static_cast<double>(members[k].size());
  }

  // ã_j(v) = a_j(v)/N_{k(j)}.
  Eigen::MatrixXd a = detail::derivative_weights(in, v_grid);
  for (Eigen::Index j = 0; j < n; ++j)
    a.row(j) *= inv_size[record_of[static_cast<std::size_t>(j)]];

  // Σ_k H_ik for all i.
  const Eigen::MatrixXd full = in.bid_kernel * (in.weighted_r.transpose() * a);

  // Pairs (j ≤ j') within a record, weight 2 off the diagonal.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (const auto& m : members)
    for (std::size_t p = 0; p < m.size(); ++p)
      for (std::size_t q = p; q < m.size(); ++q)
        pairs.emplace_back(static_cast<Eigen::Index>(m[p]),
                           static_cast<Eigen::Index>(m[q]));
  const auto np = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd pair_weight(np, ng);
  for (Eigen::Index p = 0; p < np; ++p) {
    const auto [j, jj] = pairs[static_cast<std::size_t>(p)];
    const double mult = j == jj ? 1.0 : 2.0;
    pair_weight.row(p) = mult * a.row(j).cwiseProduct(a.row(jj));
  }

  Eigen::VectorXd total = Eigen::VectorXd::Zero(ng);
  constexpr Eigen::Index block = 256;
  for (Eigen::Index i0 = 0; i0 < n; i0 += block) {
    const Eigen::Index rows = std::min(block, n - i0);
    const Eigen::MatrixXd m_blk =
      in.bid_kernel.middleRows(i0, rows) * in.weighted_r.transpose();
    Eigen::MatrixXd c_blk(rows, np);
    for (Eigen::Index p = 0; p < np; ++p) {
      const auto [j, jj] = pairs[static_cast<std::size_t>(p)];
      c_blk.col(p) = m_blk.col(j).cwiseProduct(m_blk.col(jj));
    }
    const Eigen::MatrixXd sq = c_blk * pair_weight; // Σ_k H_ik²
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto i = static_cast<std::size_t>(i0 + r);
      const std::size_t l = record_of[i];
      Eigen::RowVectorXd own = Eigen::RowVectorXd::Zero(ng);
      for (std::size_t j : members[l])
        own += m_blk(r, static_cast<Eigen::Index>(j)) *
               a.row(static_cast<Eigen::Index>(j));
      const Eigen::RowVectorXd s = full.row(i0 + r) - own;
      const Eigen::RowVectorXd inner = sq.row(r) - own.cwiseProduct(own);
      total += inv_size[l] * (s.cwiseProduct(s) - inner).transpose();
    }
  }

  const double big_n = static_cast<double>(in.n_bidders);
  const double big_l = static_cast<double>(total_records);
  const double pre = share_scale * share_scale /
                     (big_n * (big_n - 1.0) * (big_n - 1.0) * in.plan.h_f *
                      in.plan.h_f * in.plan.h_g) /
                     (big_l * (big_l - 1.0) * (big_l - 2.0));
  std::vector<double> out(v_grid.size());
  for (Eigen::Index g = 0; g < ng; ++g)
    out[static_cast<std::size_t>(g)] = pre * total(g);
  return out;
}

/// One bidder count's contribution to V̂.
struct HeteroVarianceTerm
{
  std::size_t n_bidders = 0;
  std::size_t n_auctions = 0;
  std::vector<double> value; // empty when skipped
  bool skipped = false;      // fewer than three auctions
  double normalizer = 0.0;   // L h_f² h_g with this group's bandwidths
};

struct HeteroVariance
{
  std::vector<HeteroVarianceTerm> terms;
  std::vector<double> total;     // Σ_n terms
  std::vector<double> std_error; // √(Σ_n term_n / normalizer_n)

  std::size_t skipped_groups() const
  {
    return static_cast<std::size_t>(
      std::count_if(terms.begin(), terms.end(),
                    [](const auto& t) { return t.skipped; }));
  }
};

//! V̂_RGPV for the homogenized panel, term by bidder count.
inline HeteroVariance hetero_variance_hat(const HeteroEstimate& est,
                                          std::span<const double> grid)
{
  HeteroVariance out;
  out.total.assign(grid.size(), 0.0);
  std::vector<double> se2(grid.size(), 0.0);
  const double big_l = static_cast<double>(est.total_auctions);
  for (const auto& g : est.groups) {
    HeteroVarianceTerm term;
    term.n_bidders = g.n_bidders;
    term.n_auctions = g.n_auctions;
    const Fit& f = g.fit;
    term.normalizer = big_l * f.plan.h_f * f.plan.h_f * f.plan.h_g;
    if (g.n_auctions < 3) {
      term.skipped = true;
      out.terms.push_back(std::move(term));
      continue;
    }
    const VarianceInputs in =
      variance_inputs(f.sample, f.plan, f.curve, *f.strategy, f.constrained,
                      f.options.quad_panels, f.options.quad_nodes);
    std::vector<std::size_t> record_of(f.sample.size());
    for (std::size_t i = 0; i < record_of.size(); ++i)
      record_of[i] = i / g.n_bidders;
    term.value = grouped_variance_hat(in, record_of, g.n_auctions,
                                      est.total_auctions,
                                      big_l / static_cast<double>(g.n_auctions),
                                      grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      out.total[k] += term.value[k];
      se2[k] += term.value[k] / term.normalizer;
    }
    out.terms.push_back(std::move(term));
  }
  out.std_error.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    out.std_error[k] = se2[k] > 0.0 ? std::sqrt(se2[k]) : NAN;
  return out;
}

inline HeteroVariance hetero_variance_hat(const HeteroPanel& panel,
                                          const HomogenizationFit& fit,
                                          std::span<const double> x0,
                                          std::span<const double> grid,
                                          const HeteroOptions& options = {})
{
  const auto groups = homogenize(panel, fit, x0);
  return hetero_variance_hat(estimate_groups(groups, panel.n_auctions(), options),
                             grid);
}

/// Uniform band for f(·|x0) with the per-n breakdown of V̂.
struct HeteroBand
{
  BandResult band;
  HeteroVariance variance;
  std::vector<double> x0;
  HomogenizationFit homogenization;
};

/**
 * Bootstraps the homogenized panel by two-step resampling. The regression is
 * fitted once; bandwidths, supports and Riemann resolution stay at the
 * original per-n values. band.normalizer is L h_f² h_g when every group
 * shares bandwidths and NaN otherwise (the standard error is per-n).
 */
inline HeteroBand hetero_band(const HeteroPanel& panel,
                              std::span<const double> x0,
                              std::span<const double> grid, double alpha,
                              const HeteroOptions& options,
                              const BootstrapOptions& boot)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("hetero_band: alpha must lie in (0, 1)");
  if (boot.n_boot < 20)
    throw InvalidArgument("hetero_band: need at least 20 replications");
  detail::check_grid(grid);

  HeteroBand out;
  out.x0.assign(x0.begin(), x0.end());
  out.homogenization = fit_homogenization(panel);
  const HeteroPanel base = homogenized_panel(panel, out.homogenization, x0);
  const auto groups = group_by_bidders(base);
  const HeteroEstimate est = estimate_groups(groups, base.n_auctions(), options);

  double vmin = INFINITY, vmax = -INFINITY;
  for (const auto& g : est.groups)
    for (double v : g.fit.constrained) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  if (grid.front() < vmin || grid.back() > vmax)
    throw OutOfDomain("hetero_band: grid outside the estimated value support");

  out.variance = hetero_variance_hat(est, grid);
  const auto& se = out.variance.std_error;
  BandResult& band = out.band;
  band.method = kernels::EstimatorKind::rgpv;
  band.grid.assign(grid.begin(), grid.end());
  band.estimate = conditional_density(est, grid);
  band.variance = out.variance.total;
  band.alpha = alpha;
  band.n_boot = boot.n_boot;
  band.seed = boot.seed;
  band.normalizer = out.variance.terms.front().normalizer;
  for (const auto& t : out.variance.terms)
    if (t.normalizer != band.normalizer)
      band.normalizer = NAN;
  for (double s : se)
    if (!std::isfinite(s))
      ++band.flagged_points;
  if (band.flagged_points == grid.size())
    throw NumericalFailure("hetero_band: no grid point has a usable variance");

  std::vector<double> sups(boot.n_boot);
  parallel_for(boot.n_boot, boot.threads, [&](std::size_t rep) {
    const HeteroPanel star = two_step_resample(base, derive_seed(boot.seed, rep));
    const auto star_groups = group_by_bidders(star);
    const HeteroEstimate e = estimate_groups(star_groups, star.n_auctions(), options, &est);
    const auto f = conditional_density(e, grid);
    double sup = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (std::isfinite(se[k]))
        sup = std::max(sup, std::abs(f[k] - band.estimate[k]) / se[k]);
    if (!std::isfinite(sup))
      throw NumericalFailure("hetero_band: non-finite sup statistic");
    sups[rep] = sup;
  });
  band.critical_value = sup_quantile(sups, alpha);
  band.lower.resize(grid.size());
  band.upper.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    band.lower[k] = band.estimate[k] - band.critical_value * se[k];
    band.upper[k] = band.estimate[k] + band.critical_value * se[k];
  }
  return out;
}

} // namespace fpa
