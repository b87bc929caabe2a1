#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "protoot/errors.hpp"
#include "protoot/eval.hpp"
#include "protoot/rng.hpp"

using namespace protoot;

namespace {

UnitRowMatrix random_unit(std::size_t n, std::size_t d, Rng& rng) {
    DenseMatrix raw(n, d, 0.0);
    for (double& v : raw.data()) v = rng.gaussian();
    return l2_normalize_rows(raw);
}

}  // namespace

TEST_CASE("ranking basics") {
    const auto gallery = l2_normalize_rows(DenseMatrix::from_rows({{0.0, 1.0}, {1.0, 0.0}}));
    const auto query = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}}));
    const auto ranks = rank_retrieval(query, gallery);
    CHECK(ranks[0] == std::vector<std::size_t>{1, 0});

    // All-equal gallery: tie rule gives ascending indices.
    DenseMatrix same_raw(4, 2, 0.0);
    for (std::size_t i = 0; i < 4; ++i) same_raw(i, 0) = 1.0;
    const auto same = l2_normalize_rows(same_raw);
    const auto tie_ranks = rank_retrieval(query, same);
    CHECK(tie_ranks[0] == std::vector<std::size_t>{0, 1, 2, 3});

    const auto wide = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0, 0.0}}));
    CHECK_THROWS_AS(rank_retrieval(query, wide), DimMismatchError);
}

TEST_CASE("ranking matches an exhaustive sort oracle") {
    Rng rng(7);
    const auto queries = random_unit(20, 8, rng);
    const auto gallery = random_unit(20, 8, rng);
    const auto ranks = rank_retrieval(queries, gallery);
    for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t j = 0; j < gallery.rows(); ++j) {
            scored.emplace_back(dot(queries.row(qi), gallery.row(j)), j);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t j = 0; j < gallery.rows(); ++j) {
            CHECK(ranks[qi][j] == scored[j].second);
        }
    }
}

TEST_CASE("ranking ignores an appended zero dimension") {
    Rng rng(13);
    const auto queries = random_unit(6, 5, rng);
    const auto gallery = random_unit(9, 5, rng);
    auto widen = [](const UnitRowMatrix& m) {
        DenseMatrix wide(m.rows(), m.cols() + 1, 0.0);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) wide(i, j) = m(i, j);
        }
        return UnitRowMatrix(wide);
    };
    const auto base = rank_retrieval(queries, gallery);
    const auto padded = rank_retrieval(widen(queries), widen(gallery));
    CHECK(base == padded);
}

TEST_CASE("precision at k counting") {
    const std::vector<std::size_t> ranking{0, 1, 2};
    const std::vector<int> labels{7, 7, 8};
    CHECK(precision_at_k(ranking, 7, labels, 3) == doctest::Approx(2.0 / 3.0));
    CHECK(precision_at_k(ranking, 7, labels, 2) == doctest::Approx(1.0));
    // k = gallery size gives the class prevalence.
    CHECK(precision_at_k(ranking, 8, labels, 3) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(precision_at_k(ranking, 7, labels, 4), KTooLargeError);
    CHECK_THROWS_AS(precision_at_k(ranking, 7, labels, 0), KTooLargeError);
}

TEST_CASE("precision invariances") {
    Rng rng(21);
    const std::size_t g = 30;
    std::vector<std::size_t> ranking(g);
    std::iota(ranking.begin(), ranking.end(), std::size_t{0});
    rng.shuffle(ranking);
    std::vector<int> labels(g);
    for (int& l : labels) l = static_cast<int>(rng.uniform_index(3));
    const std::size_t k = 10;
    const double base = precision_at_k(ranking, 1, labels, k);

    // Permuting within the top k and within the tail changes nothing.
    auto shuffled = ranking;
    Rng perm_rng(22);
    std::vector<std::size_t> head(shuffled.begin(), shuffled.begin() + k);
    std::vector<std::size_t> tail(shuffled.begin() + k, shuffled.end());
    perm_rng.shuffle(head);
    perm_rng.shuffle(tail);
    std::copy(head.begin(), head.end(), shuffled.begin());
    std::copy(tail.begin(), tail.end(), shuffled.begin() + k);
    CHECK(precision_at_k(shuffled, 1, labels, k) == doctest::Approx(base));

    // Consistent relabeling leaves averaged precision unchanged.
    const auto queries = random_unit(8, 4, rng);
    const auto gallery = random_unit(g, 4, rng);
    std::vector<int> q_labels(8);
    for (int& l : q_labels) l = static_cast<int>(rng.uniform_index(3));
    const auto ranks = rank_retrieval(queries, gallery);
    const double before = mean_precision_at_k(ranks, q_labels, labels, k);
    auto remap = [](int l) { return 10 - l; };
    std::vector<int> q_re(q_labels), g_re(labels);
    std::transform(q_re.begin(), q_re.end(), q_re.begin(), remap);
    std::transform(g_re.begin(), g_re.end(), g_re.begin(), remap);
    CHECK(mean_precision_at_k(ranks, q_re, g_re, k) == doctest::Approx(before));
}

TEST_CASE("self exclusion drops the query's own index") {
    const auto feats = l2_normalize_rows(
        DenseMatrix::from_rows({{1.0, 0.0}, {0.9, std::sqrt(1.0 - 0.81)}, {0.0, 1.0}}));
    const std::vector<int> labels{0, 1, 2};
    const auto ranks = rank_retrieval(feats, feats);
    // With unique labels and self excluded, P@1 is 0 everywhere.
    CHECK(mean_precision_at_k(ranks, labels, labels, 1, true) == doctest::Approx(0.0));
    // Including self, every query finds itself first.
    CHECK(mean_precision_at_k(ranks, labels, labels, 1, false) == doctest::Approx(1.0));
}
