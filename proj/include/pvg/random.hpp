#pragma once

#include <cstdint>
#include <utility>

namespace pvg {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Two uniforms in [0, 1) that depend only on the (seed, stream, counter) key.
inline std::pair<double, double> counter_uniform2(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t h0 = splitmix64(seed ^ splitmix64(stream ^ splitmix64(counter)));
  const std::uint64_t h1 = splitmix64(h0);
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  return {static_cast<double>(h0 >> 11) * scale, static_cast<double>(h1 >> 11) * scale};
}

}  // namespace pvg
