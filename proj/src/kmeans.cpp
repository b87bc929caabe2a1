#include "protoot/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

namespace {

// Nearest centroid by squared Euclidean distance; ties to the smaller index.
std::size_t nearest_centroid(std::span<const double> point, const DenseMatrix& centroids) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centroids.rows(); ++j) {
        const double d = squared_distance(point, centroids.row(j));
        if (d < best_dist) {
            best_dist = d;
            best = j;
        }
    }
    return best;
}

DenseMatrix seed_plus_plus(const UnitRowMatrix& features, std::size_t k, Rng& rng) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    DenseMatrix centroids(k, d, 0.0);

    std::size_t first = rng.uniform_index(n);
    for (std::size_t j = 0; j < d; ++j) centroids(0, j) = features(first, j);

    std::vector<double> dist_sq(n);
    for (std::size_t c = 1; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t cc = 0; cc < c; ++cc) {
                best = std::min(best, squared_distance(features.row(i), centroids.row(cc)));
            }
            dist_sq[i] = best;
        }
        double total = 0.0;
        for (double v : dist_sq) total += v;
        std::size_t pick;
        if (total > 0.0) {
            pick = rng.weighted_index(dist_sq);
        } else {
            pick = rng.uniform_index(n);  // all points coincide with a centroid
        }
        for (std::size_t j = 0; j < d; ++j) centroids(c, j) = features(pick, j);
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const UnitRowMatrix& features, std::size_t k, Rng& rng,
                    std::size_t max_iter) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    if (k == 0) throw TooFewPointsError("kmeans: k must be >= 1");
    if (n < k) {
        throw TooFewPointsError("kmeans: " + std::to_string(n) + " points for k = " +
                                std::to_string(k));
    }

    DenseMatrix centroids = seed_plus_plus(features, k, rng);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = nearest_centroid(features.row(i), centroids);

    auto compute_inertia = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += squared_distance(features.row(i), centroids.row(labels[i]));
        }
        return acc;
    };

    KMeansResult result;
    std::size_t iterations = 0;
    for (std::size_t t = 0; t < max_iter; ++t) {
        // Update step: centroid = renormalized mean of its members. On the
        // sphere that direction minimizes within-cluster squared distance.
        DenseMatrix sums(k, d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = features.row(i);
            auto acc = sums.row(labels[i]);
            for (std::size_t j = 0; j < d; ++j) acc[j] += p[j];
            ++counts[labels[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            const double norm = std::sqrt(dot(sums.row(c), sums.row(c)));
            if (norm < 1e-12) {
                // Antipodal members cancelled out; keep the previous centroid.
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / norm;
        }

        // Reseed empty clusters to the point farthest from its own centroid
        // and hand that point over, so inertia cannot go up.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t worst = 0;
            double worst_dist = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[labels[i]] <= 1) continue;  // don't empty another cluster
                const double dist = squared_distance(features.row(i), centroids.row(labels[i]));
                if (dist > worst_dist) {
                    worst_dist = dist;
                    worst = i;
                }
            }
            if (worst_dist < 0.0) continue;  // every cluster is a singleton
            --counts[labels[worst]];
            for (std::size_t j = 0; j < d; ++j) centroids(c, j) = features(worst, j);
            labels[worst] = c;
            counts[c] = 1;
        }

        // Assignment step.
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t next = nearest_centroid(features.row(i), centroids);
            if (next != labels[i]) {
                labels[i] = next;
                changed = true;
            }
        }
        iterations = t + 1;
        result.inertia_history.push_back(compute_inertia());
        if (!changed) break;
    }

    result.centroids = l2_normalize_rows(centroids);
    result.labels = std::move(labels);
    result.inertia = result.inertia_history.empty() ? compute_inertia()
                                                    : result.inertia_history.back();
    result.iterations = iterations;
    return result;
}

Marginal marginal_from_labels(std::span<const std::size_t> labels, std::size_t k) {
    if (labels.empty()) throw EmptyInputError("marginal_from_labels: no labels");
    if (k == 0) throw EmptyInputError("marginal_from_labels: k must be >= 1");
    std::vector<double> counts(k, 0.0);
    for (std::size_t label : labels) {
        if (label >= k) {
            throw IndexOutOfRangeError("marginal_from_labels: label " + std::to_string(label) +
                                       " out of range for k = " + std::to_string(k));
        }
        counts[label] += 1.0;
    }
    return Marginal::from_weights(std::move(counts));
}

}  // namespace protoot
