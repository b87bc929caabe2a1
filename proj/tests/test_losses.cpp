#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "protoot/errors.hpp"
#include "protoot/losses.hpp"
#include "protoot/rng.hpp"

using namespace protoot;

namespace {

UnitRowMatrix random_unit(std::size_t n, std::size_t d, Rng& rng) {
    DenseMatrix raw(n, d, 0.0);
    for (double& v : raw.data()) v = rng.gaussian();
    return l2_normalize_rows(raw);
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

// Finite differences of a scalar loss through the encoder parameters.
template <typename LossFn>
std::vector<double> fd_param_gradient(MlpEncoder enc, const DenseMatrix& x, LossFn loss_of,
                                      double step = 1e-5) {
    std::vector<double> grad(enc.param_count());
    for (std::size_t p = 0; p < enc.params.size(); ++p) {
        const double saved = enc.params[p];
        enc.params[p] = saved + step;
        const double plus = loss_of(encoder_forward(enc, x));
        enc.params[p] = saved - step;
        const double minus = loss_of(encoder_forward(enc, x));
        enc.params[p] = saved;
        grad[p] = (plus - minus) / (2.0 * step);
    }
    return grad;
}

}  // namespace

TEST_CASE("scalar value of one InfoNCE term") {
    // q.p = 1, one negative with q.n = 0, tau = 0.2: term = ln(1 + e^-5).
    const auto q = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}}));
    const auto protos = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    DenseMatrix matched(1, 2, 0.0);
    matched(0, 0) = 1.0;
    const std::vector<std::vector<std::size_t>> negatives{{1}};
    const auto out = loss_cross(q, matched, negatives, protos, 0.2);
    CHECK(out.value == doctest::Approx(std::log(1.0 + std::exp(-5.0))).epsilon(1e-12));
    CHECK(out.value == doctest::Approx(0.006715).epsilon(1e-3));

    // The same scalar through loss_intra with all three positives identical.
    std::vector<PositiveSetIntra> pos(1);
    pos[0].augmented = {1.0, 0.0};
    pos[0].neighbor = {1.0, 0.0};
    pos[0].prototype = {1.0, 0.0};
    const auto intra = loss_intra(q, pos, negatives, protos, 0.2);
    CHECK(intra.value == doctest::Approx(out.value).epsilon(1e-12));
}

TEST_CASE("empty negative set contributes zero") {
    const auto q = l2_normalize_rows(DenseMatrix::from_rows({{0.6, 0.8}}));
    const auto protos = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}}));
    std::vector<PositiveSetIntra> pos(1);
    pos[0].augmented = {0.0, 1.0};
    pos[0].neighbor = {1.0, 0.0};
    pos[0].prototype = {0.6, 0.8};
    const std::vector<std::vector<std::size_t>> negatives{{}};
    const auto out = loss_intra(q, pos, negatives, protos, 0.2);
    CHECK(out.value == 0.0);
    for (double g : out.feature_grad.data()) CHECK(g == 0.0);
}

TEST_CASE("uniform similarities give ln(K+1)") {
    // Matched similarity equal to all K negatives: softmax is uniform over
    // K+1 entries.
    const std::size_t k = 6;
    DenseMatrix proto_raw(k, 8, 0.0);
    for (std::size_t j = 0; j < k; ++j) proto_raw(j, j + 1) = 1.0;
    const auto protos = l2_normalize_rows(proto_raw);
    const auto q = l2_normalize_rows(DenseMatrix::from_rows({{1, 0, 0, 0, 0, 0, 0, 0}}));
    DenseMatrix matched(1, 8, 0.0);
    matched(0, 7) = 1.0;  // orthogonal to q, like every negative
    std::vector<std::vector<std::size_t>> negatives{{0, 1, 2, 3, 4, 5}};
    const auto out = loss_cross(q, matched, negatives, protos, 0.2);
    CHECK(out.value ==
          doctest::Approx(std::log(static_cast<double>(k + 1))).epsilon(1e-12));
}

TEST_CASE("pretraining loss scalar cases") {
    const auto q = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    const auto out = loss_pretrain(q, q, 0.2);
    // Each sample: positives at similarity 1, the other view at 0.
    CHECK(out.value == doctest::Approx(2.0 * std::log(1.0 + std::exp(-5.0))).epsilon(1e-12));

    // All views identical: every term is ln(batch_size).
    DenseMatrix same_raw(4, 3, 0.0);
    for (std::size_t i = 0; i < 4; ++i) same_raw(i, 0) = 1.0;
    const auto same = l2_normalize_rows(same_raw);
    const auto flat = loss_pretrain(same, same, 0.2);
    CHECK(flat.value == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-12));

    const auto single = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}}));
    CHECK_THROWS_AS(loss_pretrain(single, single, 0.2), BatchTooSmallError);
    CHECK_THROWS_AS(loss_pretrain(q, q, 0.0), NonPositiveTauError);
}

TEST_CASE("losses stay nonnegative and finite on random unit inputs") {
    Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 3 + rng.uniform_index(5);
        const std::size_t d = 4 + rng.uniform_index(4);
        const std::size_t k = 2 + rng.uniform_index(4);
        const auto q = random_unit(n, d, rng);
        const auto protos = random_unit(k, d, rng);
        std::vector<PositiveSetIntra> pos(n);
        std::vector<std::vector<std::size_t>> negs(n);
        DenseMatrix matched(n, d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t label = rng.uniform_index(k);
            pos[i].augmented = to_vec(random_unit(1, d, rng).row(0));
            pos[i].neighbor = to_vec(random_unit(1, d, rng).row(0));
            pos[i].prototype = to_vec(protos.row(label));
            auto dst = matched.row(i);
            const auto src = protos.row(label);
            std::copy(src.begin(), src.end(), dst.begin());
            for (std::size_t j = 0; j < k; ++j) {
                if (j != label) negs[i].push_back(j);
            }
        }
        const double tau = 0.05 + rng.uniform();
        const auto in = loss_intra(q, pos, negs, protos, tau);
        const auto cr = loss_cross(q, matched, negs, protos, tau);
        const auto pre = loss_pretrain(q, random_unit(n, d, rng), tau);
        for (double v : {in.value, cr.value, pre.value}) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
        }
    }
}

TEST_CASE("loss_intra is invariant under negative permutation") {
    Rng rng(101);
    const auto q = random_unit(3, 6, rng);
    const auto protos = random_unit(5, 6, rng);
    std::vector<PositiveSetIntra> pos(3);
    for (auto& p : pos) {
        p.augmented = to_vec(random_unit(1, 6, rng).row(0));
        p.neighbor = to_vec(random_unit(1, 6, rng).row(0));
        p.prototype = to_vec(random_unit(1, 6, rng).row(0));
    }
    std::vector<std::vector<std::size_t>> negs{{0, 1, 2, 3}, {1, 3, 4, 0}, {4, 2, 1, 0}};
    std::vector<std::vector<std::size_t>> shuffled{{3, 2, 1, 0}, {0, 1, 3, 4}, {0, 1, 2, 4}};
    const auto a = loss_intra(q, pos, negs, protos, 0.2);
    const auto b = loss_intra(q, pos, shuffled, protos, 0.2);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
}

TEST_CASE("raising the matched similarity strictly lowers loss_cross") {
    const auto protos = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
    const auto q = l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}}));
    const std::vector<std::vector<std::size_t>> negs{{1}};
    double prev = 1e100;
    for (double sim : {-0.5, 0.0, 0.4, 0.8, 0.99}) {
        DenseMatrix matched(1, 2, 0.0);
        matched(0, 0) = sim;
        matched(0, 1) = std::sqrt(1.0 - sim * sim);
        const auto out = loss_cross(q, matched, negs, protos, 0.2);
        CHECK(out.value < prev);
        prev = out.value;
    }
}

TEST_CASE("loss gradients match finite differences at 20 random draws") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 500);
        const std::size_t n = 3, d_in = 5, h = 7, d_out = 4, k = 3;
        MlpEncoder enc = MlpEncoder::random(d_in, h, d_out, rng);
        for (double& b : enc.b1()) b = 0.05 * rng.gaussian();
        for (double& b : enc.b2()) b = 0.05 * rng.gaussian();
        DenseMatrix x(n, d_in, 0.0);
        for (double& v : x.data()) v = rng.gaussian();

        const auto protos = random_unit(k, d_out, rng);
        const auto aug = random_unit(n, d_out, rng);
        std::vector<PositiveSetIntra> pos(n);
        std::vector<std::vector<std::size_t>> negs(n);
        DenseMatrix matched(n, d_out, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t label = rng.uniform_index(k);
            pos[i].augmented = to_vec(aug.row(i));
            pos[i].neighbor = to_vec(random_unit(1, d_out, rng).row(0));
            pos[i].prototype = to_vec(protos.row(label));
            auto dst = matched.row(i);
            const auto src = protos.row(label);
            std::copy(src.begin(), src.end(), dst.begin());
            for (std::size_t j = 0; j < k; ++j) {
                if (j != label) negs[i].push_back(j);
            }
        }
        const double tau = 0.2;

        ForwardCache cache;
        const auto q = encoder_forward(enc, x, &cache);

        SUBCASE("intra") {
            const auto analytic = backprop(loss_intra(q, pos, negs, protos, tau), enc, cache);
            const auto numeric = fd_param_gradient(enc, x, [&](const UnitRowMatrix& qq) {
                return loss_intra(qq, pos, negs, protos, tau).value;
            });
            CHECK(max_rel_error(analytic.param_grad, numeric) < 1e-4);
        }
        SUBCASE("cross") {
            const auto analytic = backprop(loss_cross(q, matched, negs, protos, tau), enc, cache);
            const auto numeric = fd_param_gradient(enc, x, [&](const UnitRowMatrix& qq) {
                return loss_cross(qq, matched, negs, protos, tau).value;
            });
            CHECK(max_rel_error(analytic.param_grad, numeric) < 1e-4);
        }
        SUBCASE("pretrain") {
            const auto analytic = backprop(loss_pretrain(q, aug, tau), enc, cache);
            const auto numeric = fd_param_gradient(enc, x, [&](const UnitRowMatrix& qq) {
                return loss_pretrain(qq, aug, tau).value;
            });
            CHECK(max_rel_error(analytic.param_grad, numeric) < 1e-4);
        }
    }
}

TEST_CASE("loss_total combines linearly") {
    LossValue in{1.5, {1.0, 2.0}};
    LossValue cr{0.5, {4.0, -2.0}};
    const auto zero = loss_total(in, cr, 0.0);
    CHECK(zero.value == doctest::Approx(in.value));
    CHECK(zero.param_grad == in.param_grad);

    const auto doubled = loss_total(in, in, 1.0);
    CHECK(doubled.value == doctest::Approx(3.0));
    CHECK(doubled.param_grad == std::vector<double>{2.0, 4.0});

    const auto paper_weight = loss_total(in, cr, 0.01);
    CHECK(paper_weight.value == doctest::Approx(1.5 + 0.01 * 0.5));
    CHECK(paper_weight.param_grad[0] == doctest::Approx(1.0 + 0.04));

    CHECK_THROWS_AS(loss_total(in, cr, -1.0), Error);
}
