#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "protoot/errors.hpp"
#include "protoot/kmeans.hpp"
#include "protoot/rng.hpp"

using namespace protoot;

namespace {

// Lloyd iterations from a fixed centroid pair, sharing the library's update
// rules, used as the exhaustive 2-means reference.
double lloyd_from_pair(const UnitRowMatrix& features, std::size_t seed_a, std::size_t seed_b,
                       std::vector<std::size_t>& labels_out) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    DenseMatrix centroids(2, d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        centroids(0, j) = features(seed_a, j);
        centroids(1, j) = features(seed_b, j);
    }
    std::vector<std::size_t> labels(n, 0);
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const double d0 = squared_distance(features.row(i), centroids.row(0));
            const double d1 = squared_distance(features.row(i), centroids.row(1));
            const std::size_t next = d1 < d0 ? 1 : 0;
            if (next != labels[i]) {
                labels[i] = next;
                changed = true;
            }
        }
        DenseMatrix sums(2, d, 0.0);
        std::size_t counts[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) sums(labels[i], j) += features(i, j);
            ++counts[labels[i]];
        }
        for (std::size_t c = 0; c < 2; ++c) {
            if (counts[c] == 0) continue;
            const double norm = std::sqrt(dot(sums.row(c), sums.row(c)));
            if (norm < 1e-12) continue;
            for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / norm;
        }
        if (!changed && iter > 0) break;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        inertia += squared_distance(features.row(i), centroids.row(labels[i]));
    }
    labels_out = labels;
    return inertia;
}

}  // namespace

TEST_CASE("k equals N puts every point in its own cluster") {
    const auto pts = l2_normalize_rows(
        DenseMatrix::from_rows({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}));
    Rng rng(1);
    const auto res = kmeans(pts, 4, rng);
    CHECK(res.inertia == doctest::Approx(0.0).epsilon(1e-12));
    std::set<std::size_t> distinct(res.labels.begin(), res.labels.end());
    CHECK(distinct.size() == 4);
}

TEST_CASE("duplicated points split into the two locations") {
    const auto pts = l2_normalize_rows(
        DenseMatrix::from_rows({{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}));
    Rng rng(2);
    const auto res = kmeans(pts, 2, rng);
    CHECK(res.inertia == doctest::Approx(0.0).epsilon(1e-12));
    std::size_t counts[2] = {0, 0};
    for (std::size_t l : res.labels) ++counts[l];
    CHECK(std::max(counts[0], counts[1]) == 3);
    CHECK(std::min(counts[0], counts[1]) == 1);
    CHECK(res.labels[0] == res.labels[1]);
    CHECK(res.labels[1] == res.labels[2]);
    CHECK(res.labels[2] != res.labels[3]);
}

TEST_CASE("well-separated gaussians are recovered and match exhaustive 2-means") {
    // Two clusters around orthogonal unit means, noise sigma 0.05 per
    // coordinate (separation far above 10 sigma after normalization).
    Rng data_rng(123);
    const std::size_t n = 200, d = 8;
    DenseMatrix raw(n, d, 0.0);
    std::vector<std::size_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t comp = i < n / 2 ? 0 : 1;
        truth[i] = comp;
        for (std::size_t j = 0; j < d; ++j) {
            const double mean = (comp == 0 && j == 0) || (comp == 1 && j == 1) ? 1.0 : 0.0;
            raw(i, j) = mean + 0.05 * data_rng.gaussian();
        }
    }
    const auto features = l2_normalize_rows(raw);

    Rng rng(7);
    const auto res = kmeans(features, 2, rng);

    // Map cluster ids to components by majority and count agreement.
    std::size_t votes[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < n; ++i) ++votes[res.labels[i]][truth[i]];
    std::size_t agree = std::max(votes[0][0] + votes[1][1], votes[0][1] + votes[1][0]);
    CHECK(static_cast<double>(agree) / n >= 0.99);

    // Exhaustive 2-means: best Lloyd run over every pair of distinct seeds.
    double best_inertia = 1e100;
    std::vector<std::size_t> scratch;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            best_inertia = std::min(best_inertia, lloyd_from_pair(features, a, b, scratch));
        }
    }
    CHECK(res.inertia == doctest::Approx(best_inertia).epsilon(1e-6));
}

TEST_CASE("kmeans inertia history is non-increasing and deterministic") {
    Rng data_rng(9);
    DenseMatrix raw(60, 6, 0.0);
    for (double& v : raw.data()) v = data_rng.gaussian();
    const auto features = l2_normalize_rows(raw);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto res = kmeans(features, 4, rng);
        for (std::size_t t = 1; t < res.inertia_history.size(); ++t) {
            CHECK(res.inertia_history[t] <= res.inertia_history[t - 1] + 1e-9);
        }
        const auto beta = marginal_from_labels(res.labels, 4);
        double sum = 0.0;
        for (std::size_t j = 0; j < beta.size(); ++j) {
            CHECK(beta[j] >= 1e-6 - 1e-15);
            sum += beta[j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

        Rng rng2(seed);
        const auto res2 = kmeans(features, 4, rng2);
        CHECK(res.labels == res2.labels);
        CHECK(res.inertia == res2.inertia);
    }
}

TEST_CASE("inertia matches its definition") {
    Rng data_rng(33);
    DenseMatrix raw(40, 5, 0.0);
    for (double& v : raw.data()) v = data_rng.gaussian();
    const auto features = l2_normalize_rows(raw);
    Rng rng(4);
    const auto res = kmeans(features, 3, rng);
    double manual = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        manual += squared_distance(features.row(i), res.centroids.row(res.labels[i]));
    }
    CHECK(res.inertia == doctest::Approx(manual).epsilon(1e-6));
}

TEST_CASE("marginal_from_labels counts") {
    const std::vector<std::size_t> labels{0, 0, 0, 1};
    const auto beta = marginal_from_labels(labels, 2);
    CHECK(beta[0] == doctest::Approx(0.75));
    CHECK(beta[1] == doctest::Approx(0.25));

    const std::vector<std::size_t> unif{0, 1, 2};
    const auto beta3 = marginal_from_labels(unif, 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(beta3[j] == doctest::Approx(1.0 / 3.0));

    const std::vector<std::size_t> lopsided{0, 0};
    const auto floored = marginal_from_labels(lopsided, 2);
    CHECK(floored[0] == doctest::Approx(1.0 - 1e-6));
    CHECK(floored[1] == doctest::Approx(1e-6));

    CHECK_THROWS_AS(marginal_from_labels(std::vector<std::size_t>{}, 2), EmptyInputError);
    CHECK_THROWS_AS(marginal_from_labels(std::vector<std::size_t>{5}, 2),
                    IndexOutOfRangeError);
}

TEST_CASE("too few points is an error") {
    const auto pts = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    Rng rng(1);
    CHECK_THROWS_AS(kmeans(pts, 3, rng), TooFewPointsError);
    CHECK_THROWS_AS(kmeans(pts, 0, rng), TooFewPointsError);
}
