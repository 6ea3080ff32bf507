#pragma once

#include <cstdint>

namespace absde {

// Deterministic stream generator (xoshiro256++), seeded via splitmix64.
// Hand-rolled so that draws are identical across platforms and library
// versions: reproducibility of results tables is part of the tool contract.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double next_uniform();

    // Standard normal via Box-Muller; the pair partner is cached.
    double next_normal();

    // Poisson count by Knuth's product method. Requires mean < ~700; the
    // per-step jump means in scope are O(1).
    int next_poisson(double mean);

private:
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

// Stream seed for one path: mixes the master seed with the path index so that
// path p's draws never depend on how many paths run or on thread scheduling.
std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t stream_index);

} // namespace absde
