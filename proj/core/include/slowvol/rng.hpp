#pragma once

#include <array>
#include <cmath>
#include <cstdint>

// Counter-based generator: every draw is a pure function of
// (seed, path, step, lane), so parallel path batches reproduce
// bit-identically regardless of scheduling.

namespace slowvol {

struct Philox4x32 {
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::uint64_t key64,
                                            std::array<std::uint32_t, 4> ctr) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key64);
    std::uint32_t k1 = static_cast<std::uint32_t>(key64 >> 32);
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
      k0 += kW0;
      k1 += kW1;
    }
    return ctr;
  }
};

// Two standard normals per (seed, path, step) via one Philox block and
// Box-Muller. (x+0.5)/2^32 keeps uniforms strictly inside (0,1).
struct NormalPair {
  double z1, z2;
};

inline NormalPair normal_pair(std::uint64_t seed, std::uint64_t path,
                              std::uint32_t step, std::uint32_t stream = 0) {
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, stream};
  auto r = Philox4x32::block(seed, ctr);
  const double inv = 1.0 / 4294967296.0;
  double u = (r[0] + 0.5) * inv;
  double v = (r[1] + 0.5) * inv;
  double rad = std::sqrt(-2.0 * std::log(u));
  double ang = 6.283185307179586476925286766559 * v;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

}  // namespace slowvol
