#pragma once

// Content digests for exact deduplication: 128-bit MurmurHash3 (x64 variant)
// as the primary key and 64-bit FNV-1a as an independent check digest, so a
// primary collision can never drop a non-duplicate.

#include <cstdint>
#include <cstring>
#include <string_view>

namespace lahja::digest {

struct U128 {
  uint64_t h1 = 0, h2 = 0;
  friend bool operator==(const U128& a, const U128& b) {
    return a.h1 == b.h1 && a.h2 == b.h2;
  }
};

namespace detail {

inline uint64_t rotl64(uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline uint64_t fmix64(uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

inline uint64_t load64(const unsigned char* p) {
  uint64_t v;
  std::memcpy(&v, p, 8);
  return v;  // little-endian hosts only, which this project targets
}

}  // namespace detail

inline U128 murmur3_x64_128(std::string_view data, uint64_t seed = 0) {
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  const size_t len = data.size();
  const size_t nblocks = len / 16;

  uint64_t h1 = seed, h2 = seed;
  const uint64_t c1 = 0x87c37b91114253d5ULL;
  const uint64_t c2 = 0x4cf5ad432745937fULL;

  for (size_t i = 0; i < nblocks; ++i) {
    uint64_t k1 = detail::load64(p + i * 16);
    uint64_t k2 = detail::load64(p + i * 16 + 8);
    k1 *= c1;
    k1 = detail::rotl64(k1, 31);
    k1 *= c2;
    h1 ^= k1;
    h1 = detail::rotl64(h1, 27);
    h1 += h2;
    h1 = h1 * 5 + 0x52dce729;
    k2 *= c2;
    k2 = detail::rotl64(k2, 33);
    k2 *= c1;
    h2 ^= k2;
    h2 = detail::rotl64(h2, 31);
    h2 += h1;
    h2 = h2 * 5 + 0x38495ab5;
  }

  const unsigned char* tail = p + nblocks * 16;
  const size_t tail_len = len & 15;
  uint64_t k1 = 0, k2 = 0;
  for (size_t i = tail_len; i > 8; --i) {
    k2 |= static_cast<uint64_t>(tail[i - 1]) << ((i - 9) * 8);
  }
  if (tail_len > 8) {
    k2 *= c2;
    k2 = detail::rotl64(k2, 33);
    k2 *= c1;
    h2 ^= k2;
  }
  for (size_t i = tail_len > 8 ? 8 : tail_len; i > 0; --i) {
    k1 |= static_cast<uint64_t>(tail[i - 1]) << ((i - 1) * 8);
  }
  if (tail_len > 0) {
    k1 *= c1;
    k1 = detail::rotl64(k1, 31);
    k1 *= c2;
    h1 ^= k1;
  }

  h1 ^= static_cast<uint64_t>(len);
  h2 ^= static_cast<uint64_t>(len);
  h1 += h2;
  h2 += h1;
  h1 = detail::fmix64(h1);
  h2 = detail::fmix64(h2);
  h1 += h2;
  h2 += h1;
  return {h1, h2};
}

inline uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer, used wherever a per-index deterministic value is
// needed (sampling, shuffling keys).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic uniform double in [0, 1) keyed by (seed, index).
inline double keyed_uniform(uint64_t seed, uint64_t index) {
  uint64_t x = splitmix64(seed ^ splitmix64(index));
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace lahja::digest
