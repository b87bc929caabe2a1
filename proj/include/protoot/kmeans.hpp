#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protoot/matrix.hpp"
#include "protoot/ot.hpp"
#include "protoot/rng.hpp"

namespace protoot {

struct KMeansResult {
    UnitRowMatrix centroids;            // k x d, unit rows
    std::vector<std::size_t> labels;    // length N, values in [0, k)
    double inertia = 0.0;               // sum of squared point-to-centroid distances
    std::size_t iterations = 0;
    std::vector<double> inertia_history;  // inertia after each Lloyd iteration
};

// Lloyd's algorithm with k-means++ seeding on unit-norm features. Distances
// are squared Euclidean, which is monotone in cosine distance here, and
// centroids are renormalized to the sphere after every update. Empty clusters
// are reseeded to the point currently farthest from its centroid. Stops at an
// assignment fixpoint or after max_iter iterations.
KMeansResult kmeans(const UnitRowMatrix& features, std::size_t k, Rng& rng,
                    std::size_t max_iter = 100);

// Cluster-size distribution: beta_j = |{i : labels_i = j}| / N, floored and
// renormalized like every Marginal.
Marginal marginal_from_labels(std::span<const std::size_t> labels, std::size_t k);

}  // namespace protoot
