#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "fpa/sample.hpp"

namespace testing {

// Writes `content` to a fresh file under the system temp directory.
inline std::string write_temp(const std::string& name, const std::string& content)
{
  const auto dir = std::filesystem::temp_directory_path() / "fpa_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path, std::ios::binary) << content;
  return path.string();
}

// Bids 0.8·U for U uniform: the linear design with N = 5.
inline fpa::BidSample uniform_design(std::size_t n, std::size_t l,
                                     std::uint64_t seed, double theta = 1.0)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double factor = 1.0 - 1.0 / (theta * static_cast<double>(n - 1) + 1.0);
  std::vector<double> bids(n * l);
  for (auto& b : bids)
    b = factor * std::pow(unif(rng), 1.0 / theta);
  return fpa::BidSample(std::move(bids), n, l);
}

inline std::vector<double> uniform_values(std::size_t count, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out(count);
  for (auto& v : out)
    v = unif(rng);
  return out;
}

} // namespace testing
