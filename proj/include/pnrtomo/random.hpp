#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pnrtomo/errors.hpp"

namespace pnrtomo {

// splitmix64 step; used to derive decorrelated per-point seeds from a master
// seed so results do not depend on scan order or thread count.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= (a + 1) * 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(s);
  s ^= (b + 1) * 0xc2b2ae3d27d4eb4fULL;
  h ^= splitmix64(s);
  return h;
}

// Multinomial draw via a chain of conditional binomials. Probabilities must
// be nonnegative; they are normalized internally. Returns one count per bin.
inline std::vector<std::uint64_t> multinomial_sample(
    std::mt19937_64& rng, const std::vector<double>& probabilities,
    std::uint64_t shots) {
  double total = 0.0;
  for (double p : probabilities) {
    if (p < 0.0 || !std::isfinite(p))
      throw InvalidArgument("multinomial_sample: invalid probability");
    total += p;
  }
  if (total <= 0.0)
    throw InvalidArgument("multinomial_sample: probabilities sum to zero");

  std::vector<std::uint64_t> counts(probabilities.size(), 0);
  std::uint64_t remaining = shots;
  double mass_left = total;
  for (std::size_t i = 0; i + 1 < probabilities.size(); ++i) {
    if (remaining == 0) break;
    double p = probabilities[i] / mass_left;
    if (p >= 1.0) {
      counts[i] = remaining;
      remaining = 0;
      break;
    }
    if (p > 0.0) {
      std::binomial_distribution<std::uint64_t> bin(remaining, p);
      counts[i] = bin(rng);
      remaining -= counts[i];
    }
    mass_left -= probabilities[i];
  }
  if (!probabilities.empty()) counts.back() += remaining;
  return counts;
}

}  // namespace pnrtomo
