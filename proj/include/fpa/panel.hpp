#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fpa/csv.hpp"
#include "fpa/error.hpp"
#include "fpa/sample.hpp"

namespace fpa {

/// One auction of a heterogeneous panel.
struct AuctionRecord
{
  std::string id;
  std::vector<double> bids;       // one per bidder
  std::vector<double> covariates; // X_l
};

/**
 * Auctions with their own bidder counts and covariates. Every auction has at
 * least two bids and a covariate vector of the common dimension.
 */
class HeteroPanel
{
public:
  HeteroPanel() = default;

  HeteroPanel(std::vector<AuctionRecord> auctions,
              std::vector<std::string> covariate_names)
    : auctions_(std::move(auctions))
    , names_(std::move(covariate_names))
  {
    if (auctions_.empty())
      throw EmptyInput("HeteroPanel: no auctions");
    for (const auto& a : auctions_) {
      if (a.bids.size() < 2)
        throw DataError("HeteroPanel: auction '" + a.id +
                        "' has fewer than two bidders");
      if (a.covariates.size() != names_.size())
        throw RaggedPanel("HeteroPanel: auction '" + a.id +
                          "' has the wrong number of covariates");
      for (double x : a.covariates)
        if (!std::isfinite(x))
          throw DataError("HeteroPanel: non-finite covariate in auction '" +
                          a.id + "'");
      for (double b : a.bids)
        if (!std::isfinite(b) || b < 0.0)
          throw DataError("HeteroPanel: invalid bid in auction '" + a.id + "'");
    }
  }

  std::size_t n_auctions() const noexcept { return auctions_.size(); }
  std::size_t dimension() const noexcept { return names_.size(); }
  const std::vector<AuctionRecord>& auctions() const noexcept
  {
    return auctions_;
  }
  const AuctionRecord& auction(std::size_t l) const { return auctions_.at(l); }
  const std::vector<std::string>& covariate_names() const noexcept
  {
    return names_;
  }

  std::size_t total_bids() const noexcept
  {
    std::size_t n = 0;
    for (const auto& a : auctions_)
      n += a.bids.size();
    return n;
  }

  //! Observed bidder counts, ascending.
  std::vector<std::size_t> bidder_counts() const
  {
    std::vector<std::size_t> ns;
    for (const auto& a : auctions_)
      ns.push_back(a.bids.size());
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    return ns;
  }

  //! L⁻¹ Σ_l X_l.
  std::vector<double> covariate_mean() const
  {
    std::vector<double> mean(dimension(), 0.0);
    for (const auto& a : auctions_)
      for (std::size_t j = 0; j < mean.size(); ++j)
        mean[j] += a.covariates[j];
    for (auto& m : mean)
      m /= static_cast<double>(auctions_.size());
    return mean;
  }

private:
  std::vector<AuctionRecord> auctions_;
  std::vector<std::string> names_;
};

/**
 * Reads `auction_id,bidder_id,bid,n_bidders,<covariates...>`. Every column
 * after the first four is a covariate; covariates and n_bidders must be
 * constant within an auction and n_bidders must equal its number of rows.
 */
inline HeteroPanel load_panel(const std::string& path)
{
  const csv::Table table = csv::read(path);
  const auto c_auction = table.column("auction_id");
  const auto c_bidder = table.column("bidder_id");
  const auto c_bid = table.column("bid");
  const auto c_n = table.column("n_bidders");
  if (!c_auction || !c_bidder || !c_bid || !c_n)
    throw ParseError(path +
                     ": header must contain auction_id,bidder_id,bid,n_bidders");
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != *c_auction && c != *c_bidder && c != *c_bid && c != *c_n) {
      cov_cols.push_back(c);
      names.push_back(table.header[c]);
    }
  if (table.rows.empty())
    throw EmptyInput(path + ": no bid rows");

  struct Pending
  {
    std::vector<std::pair<std::string, double>> bids;
    std::vector<double> covariates;
    long long n = 0;
  };
  std::map<std::string, Pending> byid;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(table.line_numbers[r]);
    if (row.size() != table.header.size())
      throw ParseError(where + ": wrong number of fields");
    const double bid = csv::parse_double(row[*c_bid], where);
    if (!(bid > 0.0))
      throw DataError(where + ": bids must be positive");
    const long long n = csv::parse_int(row[*c_n], where);
    std::vector<double> x;
    for (auto c : cov_cols)
      x.push_back(csv::parse_double(row[c], where));
    auto [it, fresh] = byid.try_emplace(row[*c_auction]);
    Pending& p = it->second;
    if (fresh) {
      p.covariates = std::move(x);
      p.n = n;
    } else if (p.n != n || p.covariates != x) {
      throw DataError(where + ": covariates or n_bidders vary within auction '" +
                      row[*c_auction] + "'");
    }
    p.bids.emplace_back(row[*c_bidder], bid);
  }

  std::vector<std::string> ids;
  for (const auto& [id, _] : byid)
    ids.push_back(id);
  detail::sort_ids(ids);
  std::vector<AuctionRecord> auctions;
  auctions.reserve(ids.size());
  for (const auto& id : ids) {
    Pending& p = byid[id];
    if (p.n != static_cast<long long>(p.bids.size()))
      throw RaggedPanel(path + ": auction '" + id + "' declares " +
                        std::to_string(p.n) + " bidders but has " +
                        std::to_string(p.bids.size()) + " bids");
    std::vector<std::string> bidder_ids;
    for (const auto& [b, _] : p.bids)
      bidder_ids.push_back(b);
    detail::sort_ids(bidder_ids);
    std::stable_sort(p.bids.begin(), p.bids.end(), [&](const auto& a, const auto& b) {
      return std::find(bidder_ids.begin(), bidder_ids.end(), a.first) <
             std::find(bidder_ids.begin(), bidder_ids.end(), b.first);
    });
    AuctionRecord rec{ id, {}, std::move(p.covariates) };
    for (const auto& [_, b] : p.bids)
      rec.bids.push_back(b);
    auctions.push_back(std::move(rec));
  }
  return HeteroPanel(std::move(auctions), std::move(names));
}

} // namespace fpa
