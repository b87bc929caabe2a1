#include "protoot/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace protoot {

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const std::uint64_t span = n;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return static_cast<std::size_t>(draw % span);
}

std::size_t Rng::weighted_index(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw std::invalid_argument("weighted_index: weights must be finite and >= 0");
        }
        total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("weighted_index: total weight is zero");
    const double target = uniform() * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        cumulative += weights[i];
        if (target < cumulative) return i;
    }
    return weights.size() - 1;
}

}  // namespace protoot
