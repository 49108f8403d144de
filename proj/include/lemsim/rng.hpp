#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lemsim {

// splitmix64 finalizer; used to derive well-separated seeds for independent
// generator streams from a (base_seed, stream_id) pair.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream ^ 0x632be59bd9b4e019ULL));
}

// Uniform double in [0,1) from the top 53 bits. Used instead of
// std::uniform_real_distribution so draws are identical across library
// implementations (determinism is part of the environment contract).
inline double rand_u01(std::mt19937_64& g) { return (g() >> 11) * 0x1.0p-53; }

// Uniform integer in [0, n). n must be > 0.
inline int rand_below(std::mt19937_64& g, int n) {
  int k = static_cast<int>(rand_u01(g) * n);
  return k >= n ? n - 1 : k;
}

// Standard normal via Box-Muller on the portable uniforms (two draws per
// sample; std::normal_distribution is implementation-defined).
inline double rand_normal(std::mt19937_64& g) {
  double u1 = 1.0 - rand_u01(g);  // (0,1], keeps log finite
  double u2 = rand_u01(g);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace lemsim
