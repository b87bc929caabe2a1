#include "protoot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "protoot/errors.hpp"
#include "protoot/rng.hpp"

namespace protoot {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (double& x : v) {
            x = rng.gaussian();
            norm_sq += x * x;
        }
    } while (norm_sq < 1e-24);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
    return v;
}

// Class means drawn on the sphere, rejecting candidates closer than
// min_angle to any accepted mean.
DenseMatrix draw_class_means(const SyntheticSpec& spec, Rng& rng) {
    const double cos_limit = std::cos(spec.min_angle_deg * kPi / 180.0);
    DenseMatrix means(spec.classes, spec.dim, 0.0);
    constexpr std::size_t kMaxAttempts = 10000;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            const std::vector<double> candidate = random_unit_vector(spec.dim, rng);
            bool ok = true;
            for (std::size_t prev = 0; prev < c && ok; ++prev) {
                if (dot(candidate, means.row(prev)) > cos_limit) ok = false;
            }
            if (ok) {
                auto dst = means.row(c);
                std::copy(candidate.begin(), candidate.end(), dst.begin());
                placed = true;
            }
        }
        if (!placed) {
            throw RejectionExhaustedError(
                "generate_synthetic_domains: cannot place " + std::to_string(spec.classes) +
                " class means with min angle " + std::to_string(spec.min_angle_deg) + " deg");
        }
    }
    return means;
}

// Near-identity random rotation: orthonormalize I + (s/sqrt(d)) G column by
// column (modified Gram-Schmidt, run twice), signs fixed toward +diagonal.
DenseMatrix draw_rotation(std::size_t dim, double strength, Rng& rng) {
    DenseMatrix m(dim, dim, 0.0);
    const double scale = strength / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            m(i, j) = (i == j ? 1.0 : 0.0) + (strength > 0.0 ? scale * rng.gaussian() : 0.0);
        }
    }
    for (std::size_t pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < dim; ++j) {
            for (std::size_t prev = 0; prev < j; ++prev) {
                double proj = 0.0;
                for (std::size_t i = 0; i < dim; ++i) proj += m(i, j) * m(i, prev);
                for (std::size_t i = 0; i < dim; ++i) m(i, j) -= proj * m(i, prev);
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < dim; ++i) norm += m(i, j) * m(i, j);
            norm = std::sqrt(norm);
            if (norm < 1e-12) throw Error("draw_rotation: degenerate column");
            const double sign = m(j, j) < 0.0 ? -1.0 : 1.0;
            for (std::size_t i = 0; i < dim; ++i) m(i, j) *= sign / norm;
        }
    }
    return m;
}

DomainData sample_domain(const DenseMatrix& means, const std::vector<std::size_t>& counts,
                         double noise_sigma, Rng& rng) {
    const std::size_t dim = means.cols();
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;

    DenseMatrix features(total, dim, 0.0);
    std::vector<int> labels(total);
    std::size_t row = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t s = 0; s < counts[c]; ++s) {
            auto dst = features.row(row);
            const auto mean = means.row(c);
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] = mean[j] + (noise_sigma > 0.0 ? noise_sigma * rng.gaussian() : 0.0);
            }
            labels[row] = static_cast<int>(c);
            ++row;
        }
    }
    DomainData out;
    out.features = l2_normalize_rows(features);
    out.labels = std::move(labels);
    out.class_means = l2_normalize_rows(means);
    return out;
}

}  // namespace

std::vector<std::size_t> zipf_counts(std::size_t total, std::size_t classes, double exponent) {
    if (classes == 0) throw EmptyInputError("zipf_counts: classes must be >= 1");
    if (total < classes) throw Error("zipf_counts: need at least one sample per class");
    if (exponent < 0.0) throw Error("zipf_counts: exponent must be >= 0");

    std::vector<double> weights(classes);
    double weight_sum = 0.0;
    for (std::size_t r = 0; r < classes; ++r) {
        weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
        weight_sum += weights[r];
    }

    // Largest-remainder rounding of total * w_r / sum(w).
    std::vector<std::size_t> counts(classes);
    std::vector<std::pair<double, std::size_t>> remainders(classes);
    std::size_t assigned = 0;
    for (std::size_t r = 0; r < classes; ++r) {
        const double share = static_cast<double>(total) * weights[r] / weight_sum;
        counts[r] = static_cast<std::size_t>(std::floor(share));
        remainders[r] = {share - std::floor(share), r};
        assigned += counts[r];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
        counts[remainders[i % classes].second] += 1;
    }
    // Keep every class populated; steal from the largest class when needed.
    for (std::size_t r = 0; r < classes; ++r) {
        while (counts[r] == 0) {
            const std::size_t largest =
                std::max_element(counts.begin(), counts.end()) - counts.begin();
            if (counts[largest] <= 1) throw Error("zipf_counts: cannot populate every class");
            --counts[largest];
            ++counts[r];
        }
    }
    return counts;
}

SyntheticPair generate_synthetic_domains(const SyntheticSpec& spec) {
    if (spec.classes == 0 || spec.dim == 0) {
        throw Error("generate_synthetic_domains: classes and dim must be >= 1");
    }
    if (spec.noise_sigma < 0.0 || spec.rotation_strength < 0.0 || spec.offset_scale < 0.0) {
        throw Error("generate_synthetic_domains: noise, rotation and offset must be >= 0");
    }
    std::vector<std::size_t> counts = spec.class_counts;
    if (counts.empty()) {
        counts = zipf_counts(spec.samples, spec.classes, spec.zipf_exponent);
    } else {
        if (counts.size() != spec.classes) {
            throw DimMismatchError("generate_synthetic_domains: class_counts length != classes");
        }
        for (std::size_t c : counts) {
            if (c == 0) throw Error("generate_synthetic_domains: class counts must be >= 1");
        }
    }

    Rng rng(spec.seed);
    DenseMatrix means_a = draw_class_means(spec, rng);
    const DenseMatrix rotation = draw_rotation(spec.dim, spec.rotation_strength, rng);

    // Domain B means: rotate, add a per-class offset, renormalize.
    DenseMatrix means_b(spec.classes, spec.dim, 0.0);
    const double offset_coord = spec.offset_scale / std::sqrt(static_cast<double>(spec.dim));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const auto src = means_a.row(c);
        for (std::size_t i = 0; i < spec.dim; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < spec.dim; ++j) acc += rotation(i, j) * src[j];
            means_b(c, i) = acc;
        }
        if (spec.offset_scale > 0.0) {
            for (std::size_t i = 0; i < spec.dim; ++i) {
                means_b(c, i) += offset_coord * rng.gaussian();
            }
        }
        const double norm = std::sqrt(dot(means_b.row(c), means_b.row(c)));
        if (norm < 1e-12) throw Error("generate_synthetic_domains: offset cancelled a mean");
        for (std::size_t i = 0; i < spec.dim; ++i) means_b(c, i) /= norm;
    }

    SyntheticPair pair;
    pair.a = sample_domain(means_a, counts, spec.noise_sigma, rng);
    pair.b = sample_domain(means_b, counts, spec.noise_sigma, rng);
    return pair;
}

}  // namespace protoot
