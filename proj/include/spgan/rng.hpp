#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spgan {

// SplitMix64 finalizer; used to derive independent stream seeds from (seed, stream, counter).
constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t counter = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ counter);
}

constexpr uint64_t derive_seed(uint64_t seed, std::string_view stream, uint64_t counter = 0) {
    return derive_seed(seed, fnv1a(stream), counter);
}

// Seeded generator. Every random stream in the project is one of these, built from a derived
// seed, so replaying a step only needs (seed, step).
class Rng {
   public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    uint64_t below(uint64_t n) { return std::uniform_int_distribution<uint64_t>(0, n - 1)(engine_); }
    std::mt19937_64& engine() { return engine_; }

   private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace spgan
