#include "absde/rng.hpp"

#include "absde/errors.hpp"

#include <cmath>

namespace absde {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    // Box-Muller on (0,1] x [0,1): u1 = 1 - uniform avoids log(0).
    const double u1 = 1.0 - next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
}

int Rng::next_poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean))
        throw InvalidArgument("Rng::next_poisson: mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    if (mean > 700.0)
        throw InvalidArgument("Rng::next_poisson: mean too large for product method");
    const double threshold = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= next_uniform();
    } while (p > threshold);
    return k - 1;
}

std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t stream_index) {
    // Feed both words through splitmix64 twice; avoids low-entropy collisions
    // between (seed, index) and (seed + 1, index - 1).
    std::uint64_t state = master_seed ^ (0x9e3779b97f4a7c15ULL + stream_index * 0xbf58476d1ce4e5b9ULL);
    (void)splitmix64(state);
    return splitmix64(state);
}

} // namespace absde
