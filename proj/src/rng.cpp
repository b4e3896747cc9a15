#include "bsde/rng.hpp"

#include <cmath>

namespace bsde {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit_interval(std::uint32_t hi, std::uint32_t lo) {
  // 53 random bits -> (0, 1): (x + 0.5) / 2^53 never returns 0 or 1.
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(hi) << 21) ^ (static_cast<std::uint64_t>(lo) >> 11);
  const std::uint64_t x = bits & ((1ull << 53) - 1);
  return (static_cast<double>(x) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mul_hi_lo(kPhiloxM0, ctr[0], hi0, lo0);
    mul_hi_lo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

double counter_uniform01(std::uint64_t seed, std::uint64_t c0, std::uint64_t c1) {
  const auto w = philox4x32(
      {static_cast<std::uint32_t>(c0), static_cast<std::uint32_t>(c0 >> 32),
       static_cast<std::uint32_t>(c1), static_cast<std::uint32_t>(c1 >> 32)},
      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  return to_unit_interval(w[0], w[1]);
}

double counter_normal(std::uint64_t seed, std::uint64_t c0, std::uint64_t c1) {
  const auto w = philox4x32(
      {static_cast<std::uint32_t>(c0), static_cast<std::uint32_t>(c0 >> 32),
       static_cast<std::uint32_t>(c1), static_cast<std::uint32_t>(c1 >> 32)},
      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  const double u1 = to_unit_interval(w[0], w[1]);
  const double u2 = to_unit_interval(w[2], w[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace bsde
