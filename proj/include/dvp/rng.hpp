// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace dvp {

// Deterministic RNG used everywhere in the project. We cannot use the
// <random> distributions because their output is implementation-defined;
// bytewise reproducibility of datasets, checkpoints and logs is part of
// the contract, so we ship our own xoshiro256** stream plus float helpers.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // uniform float in [0, 1), 24 bits of mantissa
    float uniform();

    // uniform integer in [0, n), n > 0
    uint64_t uniform_int(uint64_t n);

    // standard normal via Box-Muller (deterministic, no cached spare)
    float normal();
    float normal(float mean, float sd) { return mean + sd * normal(); }

    // derive an independent stream from (seed, a, b); used for per-case
    // and per-parameter streams so results do not depend on scheduling
    static Rng derive(uint64_t seed, uint64_t a, uint64_t b = 0);

private:
    uint64_t s_[4];
};

// splitmix64 step, also handy as a stateless hash/mixer
uint64_t splitmix64(uint64_t& state);
uint64_t mix64(uint64_t a, uint64_t b);

} // namespace dvp
