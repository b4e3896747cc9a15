#pragma once

#include <array>
#include <cstdint>

namespace bsde {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// Every output word is a pure function of (key, counter), so any draw is
// reproducible in isolation under any parallel schedule.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Stateless draws keyed by a 64-bit seed and a 128-bit counter.
// uniform01 is in the open interval (0, 1); normal is standard Gaussian
// via Box-Muller on two uniforms from the same counter block.
double counter_uniform01(std::uint64_t seed, std::uint64_t c0, std::uint64_t c1 = 0);
double counter_normal(std::uint64_t seed, std::uint64_t c0, std::uint64_t c1 = 0);

// splitmix64 step; used to derive disjoint seed streams (per step, per
// purpose) from one run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Sequential convenience wrapper over the counter draws.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(mix_seed(seed, stream)) {}

  double uniform01() { return counter_uniform01(seed_, next_++); }
  // uniform on [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal() { return counter_normal(seed_, next_++); }

 private:
  std::uint64_t seed_;
  std::uint64_t next_ = 0;
};

}  // namespace bsde
