#pragma once

#include <cstdint>
#include <random>

namespace dimdm {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace detail

/// Seeded random stream. Streams are never shared between consumers; call
/// fork() to obtain a child whose sequence depends only on the parent's key
/// and the child index, never on how many draws the parent has made.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : Rng(detail::splitmix64(seed), Key{}) {}

    Rng fork(std::uint64_t child) const { return Rng(detail::splitmix64(key_ ^ detail::splitmix64(child + 1)), Key{}); }

    std::uint64_t key() const noexcept { return key_; }

    // UniformRandomBitGenerator
    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return std::generate_canonical<double, 64>(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_(engine_); }
    double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

private:
    struct Key {};
    Rng(std::uint64_t key, Key) : key_(key), engine_(key) {}

    std::uint64_t key_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

} // namespace dimdm
