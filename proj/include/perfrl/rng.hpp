#pragma once

#include <cstdint>
#include <random>

namespace perfrl {

/// Seeded pseudo-random source. All randomness in the library flows through
/// explicit instances of this type; there is no global state.
///
/// `stream(i)` derives an independent child generator from the current seed and
/// an index, which lets parallel loops draw per-item randomness without sharing
/// a generator and without depending on scheduling order.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    SeededRng stream(std::uint64_t index) const;

    std::uint64_t next_u64() { return engine_(); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return normal_(engine_); }
    double exponential() { return std::exponential_distribution<double>(1.0)(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

} // namespace perfrl
