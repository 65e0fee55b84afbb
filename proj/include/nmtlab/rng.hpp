#pragma once

#include <cmath>
#include <cstdint>

namespace nmtlab {

// Deterministic splittable RNG (splitmix64 core). Every stochastic routine
// takes one of these explicitly; nothing in the library seeds from the clock,
// so a run is a pure function of its configured seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Box-Muller, one fresh draw per call. No cached second sample: the
    // stream consumed must not depend on which call sites ran before.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.28318530717958647692 * u2);
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) return 0;
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    // Independent child stream; advancing the child never touches the parent.
    Rng split() { return Rng(next_u64() ^ 0x0a02bdbf7bb3c0a7ull); }

  private:
    std::uint64_t state_;
};

} // namespace nmtlab
