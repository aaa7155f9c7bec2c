#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpa/csv.hpp"
#include "fpa/error.hpp"

namespace fpa {

/// Rectangular bid panel: N bidders in each of L auctions. Bids are stored
/// auction-major, bid(i, l) = bids()[l * N + i]. Immutable after construction.
class BidSample
{
public:
  BidSample(std::vector<double> bids, std::size_t n_bidders,
            std::size_t n_auctions)
    : bids_(std::move(bids))
    , n_bidders_(n_bidders)
    , n_auctions_(n_auctions)
  {
    if (n_bidders_ < 1 || n_auctions_ < 1)
      throw InvalidArgument("BidSample: need N >= 1 and L >= 1");
    if (bids_.size() != n_bidders_ * n_auctions_)
      throw RaggedPanel("BidSample: bid count does not equal N * L");
    for (double b : bids_)
      if (!std::isfinite(b) || b < 0.0)
        throw DataError("BidSample: bids must be finite and nonnegative");
    sorted_ = bids_;
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::size_t n_bidders() const noexcept { return n_bidders_; }
  std::size_t n_auctions() const noexcept { return n_auctions_; }
  std::size_t size() const noexcept { return bids_.size(); }
  double bid(std::size_t i, std::size_t l) const
  {
    return bids_.at(l * n_bidders_ + i);
  }
  std::span<const double> bids() const noexcept { return bids_; }
  std::span<const double> sorted() const noexcept { return sorted_; }

private:
  std::vector<double> bids_;
  std::vector<double> sorted_;
  std::size_t n_bidders_;
  std::size_t n_auctions_;
};

struct SupportBounds
{
  double lo;
  double hi;

  double width() const noexcept { return hi - lo; }
  bool contains(double b) const noexcept { return b >= lo && b <= hi; }
};

/// First-step bid bandwidth, second-step value bandwidth, and rearrangement
/// bandwidth.
struct BandwidthPlan
{
  double h_g;
  double h_f;
  double h_r;

  void validate() const
  {
    if (!(h_g > 0.0) || !(h_f > 0.0) || !(h_r > 0.0) || !std::isfinite(h_g) ||
        !std::isfinite(h_f) || !std::isfinite(h_r))
      throw InvalidArgument("BandwidthPlan: bandwidths must be positive");
  }
};

/// Rule-of-thumb constant for the bid bandwidth (fourth-order triweight).
inline constexpr double kBidBandwidthConstant = 3.72;
/// Rule-of-thumb constant for the value bandwidth (second-order triweight).
inline constexpr double kValueBandwidthConstant = 3.15;

//! Right-continuous empirical CDF: #{B ≤ b} / (N·L).
inline double empirical_cdf(const BidSample& sample, double b)
{
  const auto s = sample.sorted();
  const auto count = std::upper_bound(s.begin(), s.end(), b) - s.begin();
  return static_cast<double>(count) / static_cast<double>(s.size());
}

inline SupportBounds support_bounds(std::span<const double> values)
{
  if (values.empty())
    throw EmptyInput("support_bounds: empty sample");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return { *mn, *mx };
}

inline SupportBounds support_bounds(const BidSample& sample)
{
  return { sample.sorted().front(), sample.sorted().back() };
}

//! Sample standard deviation with the (n-1) denominator.
inline double sample_sd(std::span<const double> x)
{
  if (x.size() < 2)
    return 0.0;
  const double mean =
    std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x)
    ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

//! h_g = 3.72·σ̂_b·(NL)^{-1/5}.
inline double bid_bandwidth(std::span<const double> bids)
{
  if (bids.empty())
    throw EmptyInput("bid_bandwidth: empty sample");
  const double sd = sample_sd(bids);
  if (!(sd > 0.0))
    throw DegenerateSample("bid_bandwidth: bids have zero variance");
  return kBidBandwidthConstant * sd *
         std::pow(static_cast<double>(bids.size()), -0.2);
}

inline double bid_bandwidth(const BidSample& sample)
{
  return bid_bandwidth(sample.bids());
}

//! h_f = 3.15·σ̂_v·(NL)^{-1/5} from unconstrained pseudo-values.
inline double value_bandwidth(std::span<const double> pseudo_values,
                              std::size_t count)
{
  if (pseudo_values.empty() || count == 0)
    throw EmptyInput("value_bandwidth: empty pseudo-values");
  const double sd = sample_sd(pseudo_values);
  if (!(sd > 0.0) || !std::isfinite(sd))
    throw DegenerateSample("value_bandwidth: pseudo-values have zero variance");
  return kValueBandwidthConstant * sd *
         std::pow(static_cast<double>(count), -0.2);
}

//! Default plan: both rules of thumb, h_r = h_f.
inline BandwidthPlan bandwidth_plan(const BidSample& sample,
                                    std::span<const double> pseudo_values)
{
  const double h_g = bid_bandwidth(sample);
  const double h_f = value_bandwidth(pseudo_values, sample.size());
  return { h_g, h_f, h_f };
}

namespace detail {

// Orders ids numerically when every id is an integer, lexicographically
// otherwise.
inline bool all_integers(const std::vector<std::string>& ids)
{
  for (const auto& id : ids) {
    if (id.empty())
      return false;
    std::size_t start = (id[0] == '-' || id[0] == '+') ? 1 : 0;
    if (start == id.size())
      return false;
    for (std::size_t i = start; i < id.size(); ++i)
      if (id[i] < '0' || id[i] > '9')
        return false;
  }
  return true;
}

inline void sort_ids(std::vector<std::string>& ids)
{
  if (all_integers(ids))
    std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) {
      return std::stoll(a) < std::stoll(b);
    });
  else
    std::sort(ids.begin(), ids.end());
}

} // namespace detail

/**
 * Loads a fixed-N bid panel from CSV with header `auction_id,bidder_id,bid`
 * (extra columns are ignored). Row order is irrelevant: auctions and bidders
 * are ordered by id.
 */
inline BidSample load_bids(const std::string& path)
{
  const csv::Table table = csv::read(path);
  const auto c_auction = table.column("auction_id");
  const auto c_bidder = table.column("bidder_id");
  const auto c_bid = table.column("bid");
  if (!c_auction || !c_bidder || !c_bid)
    throw ParseError(path + ": header must contain auction_id,bidder_id,bid");
  if (table.rows.empty())
    throw EmptyInput(path + ": no bid rows");

  std::map<std::string, std::vector<std::pair<std::string, double>>> auctions;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ":" + std::to_string(table.line_numbers[r]);
    if (row.size() != table.header.size())
      throw ParseError(where + ": wrong number of fields");
    const double bid = csv::parse_double(row[*c_bid], where);
    if (bid < 0.0)
      throw DataError(where + ": negative bid");
    auctions[row[*c_auction]].emplace_back(row[*c_bidder], bid);
  }

  std::vector<std::string> ids;
  for (const auto& [id, _] : auctions)
    ids.push_back(id);
  detail::sort_ids(ids);

  const std::size_t n = auctions.begin()->second.size();
  std::vector<double> bids;
  bids.reserve(n * ids.size());
  for (const auto& id : ids) {
    auto rows = auctions[id];
    if (rows.size() != n)
      throw RaggedPanel(path + ": auction '" + id + "' has " +
                        std::to_string(rows.size()) + " bidders, expected " +
                        std::to_string(n));
    std::vector<std::string> bidder_ids;
    for (const auto& [bidder, _] : rows)
      bidder_ids.push_back(bidder);
    detail::sort_ids(bidder_ids);
    std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      return std::find(bidder_ids.begin(), bidder_ids.end(), a.first) <
             std::find(bidder_ids.begin(), bidder_ids.end(), b.first);
    });
    for (const auto& [_, bid] : rows)
      bids.push_back(bid);
  }
  return BidSample(std::move(bids), n, ids.size());
}

} // namespace fpa
