#include "qloss/rng.hpp"

#include <cmath>

namespace qloss {

double SplitMix64::exponential(double mean) { return -mean * std::log(uniform_open0()); }

std::uint64_t replica_seed(std::uint64_t base, std::uint64_t index) {
  return SplitMix64::mix(base ^ SplitMix64::mix(index + 0x632be59bd9b4e019ULL));
}

}  // namespace qloss
