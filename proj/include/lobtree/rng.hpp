#pragma once

// Counter-based random streams.
//
// Every stream is a pair (key, counter); output i of a stream is a strong
// 64-bit mix of (key, i). Streams for replicas are derived from
// (master seed, replica index) so results never depend on thread schedule,
// and tree nodes derive their own keys from their parent's key, which makes
// tree generation independent of the order in which nodes are visited.

#include <cmath>
#include <cstdint>
#include <limits>

namespace lobtree {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Hash of an ordered pair; used for key derivation.
constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(mix64(a) ^ (b * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

/// Maps 64 random bits to a double in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class Stream {
public:
    using result_type = std::uint64_t;

    constexpr Stream() noexcept = default;
    constexpr explicit Stream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    constexpr result_type operator()() noexcept { return mix64(key_, counter_++); }

    double uniform() noexcept { return to_unit((*this)()); }

    /// Uniform on (0, 1]; safe as a log argument.
    double uniform_pos() noexcept { return 1.0 - uniform(); }

    double exponential(double rate) noexcept { return -std::log(uniform_pos()) / rate; }

    bool coin() noexcept { return ((*this)() >> 63) != 0; }

    /// Independent child stream; the parent's counter is untouched.
    constexpr Stream split(std::uint64_t index) const noexcept {
        return Stream(mix64(key_ ^ 0x5851f42d4c957f2dULL, index));
    }

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

/// Stream for replica `replica_index` of an experiment seeded by `master_seed`.
constexpr Stream seed_streams(std::uint64_t master_seed, std::uint64_t replica_index) noexcept {
    return Stream(mix64(mix64(master_seed), replica_index));
}

}  // namespace lobtree
