#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace protoot {

// Deterministic random source. The generator is std::mt19937_64, whose output
// sequence is fixed by the standard, and all distributions are derived here by
// explicit arithmetic rather than std:: distribution objects (those are
// implementation-defined). Identical seeds therefore produce identical draw
// sequences on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1): top 53 bits of one engine draw.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two engine draws.
    double gaussian() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Uniform index in [0, n) without modulo bias (rejection sampling).
    std::size_t uniform_index(std::size_t n);

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        if (values.size() < 2) return;
        for (std::size_t i = values.size() - 1; i > 0; --i) {
            std::swap(values[i], values[uniform_index(i + 1)]);
        }
    }

    // Index chosen proportionally to the given nonnegative weights.
    std::size_t weighted_index(const std::vector<double>& weights);

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 engine_;
};

}  // namespace protoot
