#pragma once
#include <cstdint>
#include <random>

namespace wcalc {

// splitmix64 finalizer; used only to derive independent seeds
std::uint64_t mix64(std::uint64_t x);

// Seed of sub-stream `stream` under root `seed`. Distinct (seed, stream)
// pairs give unrelated mt19937_64 states.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Named stream ids so no two modules draw from the same sequence.
namespace stream {
inline constexpr std::uint64_t paths = 1;
inline constexpr std::uint64_t bridge = 2;
inline constexpr std::uint64_t inner_mc = 3;
inline constexpr std::uint64_t instances = 4;
inline constexpr std::uint64_t mollifier = 5;
}  // namespace stream

class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream_id) : eng_(derive_seed(seed, stream_id)) {}
    double normal() { return norm_(eng_); }
    double uniform() { return unif_(eng_); }
    double uniform(double a, double b) { return a + (b - a) * unif_(eng_); }
    std::uint64_t bits() { return eng_(); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> norm_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace wcalc
