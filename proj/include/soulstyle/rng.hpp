#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

// Counter-based deterministic randomness. Every random quantity in the
// project is a pure function of (seed, key), so any consumer -- the
// optimizer, the patch sampler, an external oracle -- can reproduce the
// exact stream without threading generator state around.
namespace soulstyle::rng {

inline constexpr uint64_t kTextTag = 0x545854;   // text embedding stream
inline constexpr uint64_t kImageTag = 0x494D47;  // image projection matrix
inline constexpr uint64_t kPatchTag = 0x50420000; // patch box sampling
inline constexpr uint64_t kAugTag = 0x415547;    // per-patch augmentation
inline constexpr uint64_t kStepTag = 0x53544550; // per-iteration stream

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a seed with a stream key into a new seed.
inline uint64_t mix(uint64_t seed, uint64_t key) {
  return splitmix64(seed ^ splitmix64(key));
}

// Uniform in [0, 1).
inline double uniform01(uint64_t key) {
  return static_cast<double>(splitmix64(key) >> 11) * (1.0 / 9007199254740992.0);
}

// Standard normal via Box-Muller; one value per key.
inline double normal(uint64_t key) {
  double u1 = 1.0 - uniform01(mix(key, 1));
  double u2 = uniform01(mix(key, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace soulstyle::rng
