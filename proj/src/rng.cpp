// SPDX-License-Identifier: Apache-2.0
#include "dvp/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dvp {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    return splitmix64(s);
}

Rng::Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : s_) w = splitmix64(s);
}

static inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

uint64_t Rng::next_u64() {
    // xoshiro256**
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

float Rng::uniform() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    // rejection sampling for an unbiased draw
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

float Rng::normal() {
    // Box-Muller; u1 nudged away from zero so log() stays finite
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    const float r = std::sqrt(-2.0f * std::log(u1));
    return r * std::cos(6.2831853071795864769f * u2);
}

Rng Rng::derive(uint64_t seed, uint64_t a, uint64_t b) {
    return Rng(mix64(mix64(seed, a), b));
}

} // namespace dvp
