#pragma once

#include <cmath>
#include <cstdint>

namespace meue {

/// Counter-based pseudo-random generator (splitmix64 keyed by seed/stream).
/// The n-th draw depends only on (seed, stream, n), so runs are reproducible
/// across platforms and independent streams can be split off cheaply.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ull))), counter_(0) {}

    std::uint64_t next_u64() {
        return mix(seed_ + 0x9e3779b97f4a7c15ull * ++counter_);
    }

    /// Uniform double in (0, 1).
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    /// Standard normal via Box-Muller; two uniforms per draw, no cached spare,
    /// so the draw count stays counter-aligned.
    double next_gaussian() {
        const double u1 = next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    CounterRng split(std::uint64_t stream) const { return CounterRng(seed_, stream + 1); }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace meue
