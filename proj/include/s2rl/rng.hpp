#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace s2rl {

// Deterministic RNG wrapper. All randomness in the project flows through
// named streams derived from a master seed, so runs are reproducible and
// independent subsystems (episodes, rollout branches, ensemble members)
// can draw without perturbing each other's sequences.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

    std::uint64_t seed() const { return seed_; }

    // Child stream keyed by up to three ids. Used for per-episode and
    // per-(rollout,step) draws so results do not depend on batching. The
    // parent seed is finalized before any key is folded in; otherwise the
    // key would cancel against raw seed bits and nearby master seeds would
    // share child streams (seed 777 key 0 vs seed 778 key 3).
    RandomStream split(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        std::uint64_t s = mix(seed_);
        s = mix(s ^ 0x9e3779b97f4a7c15ULL ^ a);
        s = mix(s ^ 0xbf58476d1ce4e5b9ULL ^ b);
        s = mix(s ^ 0x94d049bb133111ebULL ^ c);
        return RandomStream(s, tag{});
    }

    std::uint64_t raw() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
    }

    // Standard normal via Box-Muller with cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    struct tag {};
    RandomStream(std::uint64_t derived, tag) : seed_(derived), gen_(mix(derived)) {}

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace s2rl
