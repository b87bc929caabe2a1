#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protoot/encoder.hpp"
#include "protoot/errors.hpp"
#include "protoot/rng.hpp"

using namespace protoot;

namespace {

// Central finite differences of f(theta) = sum_ij weight_ij * output_ij.
std::vector<double> fd_gradient(MlpEncoder enc, const DenseMatrix& x, const DenseMatrix& weight,
                                double step = 1e-5) {
    std::vector<double> grad(enc.param_count(), 0.0);
    for (std::size_t p = 0; p < enc.params.size(); ++p) {
        const double saved = enc.params[p];
        enc.params[p] = saved + step;
        const auto plus = encoder_forward(enc, x);
        enc.params[p] = saved - step;
        const auto minus = encoder_forward(enc, x);
        enc.params[p] = saved;
        double acc = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < weight.cols(); ++j) {
                acc += weight(i, j) * (plus(i, j) - minus(i, j));
            }
        }
        grad[p] = acc / (2.0 * step);
    }
    return grad;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("constant network maps everything to its bias direction") {
    MlpEncoder enc = MlpEncoder::zeros(3, 4, 2);
    enc.b2()[0] = 1.0;
    const auto out = encoder_forward(enc, DenseMatrix(5, 3, 0.7));
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(out(i, 0) == doctest::Approx(1.0));
        CHECK(out(i, 1) == doctest::Approx(0.0));
    }
}

TEST_CASE("identity-like network reduces to row normalization") {
    // w1 = I, w2 = I, zero bias, nonnegative input keeps relu inactive.
    MlpEncoder enc = MlpEncoder::zeros(2, 2, 2);
    auto w1 = enc.w1();
    auto w2 = enc.w2();
    w1[0] = w1[3] = 1.0;
    w2[0] = w2[3] = 1.0;
    const auto out = encoder_forward(enc, DenseMatrix::from_rows({{3.0, 4.0}}));
    CHECK(out(0, 0) == doctest::Approx(0.6));
    CHECK(out(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("zero pre-normalization row raises ZeroRow") {
    MlpEncoder enc = MlpEncoder::zeros(2, 3, 2);
    CHECK_THROWS_AS(encoder_forward(enc, DenseMatrix(1, 2, 1.0)), ZeroRowError);
}

TEST_CASE("analytic jacobian matches finite differences at 20 random draws") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 100);
        MlpEncoder enc = MlpEncoder::random(6, 8, 5, rng);
        for (double& b : enc.b1()) b = 0.1 * rng.gaussian();
        for (double& b : enc.b2()) b = 0.1 * rng.gaussian();
        DenseMatrix x(4, 6, 0.0);
        for (double& v : x.data()) v = rng.gaussian();
        DenseMatrix weight(4, 5, 0.0);
        for (double& v : weight.data()) v = rng.gaussian();

        ForwardCache cache;
        encoder_forward(enc, x, &cache);
        const auto analytic = encoder_backward(enc, cache, weight);
        const auto numeric = fd_gradient(enc, x, weight);
        CHECK(max_rel_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("momentum update limits") {
    Rng rng(3);
    const MlpEncoder online = MlpEncoder::random(3, 4, 3, rng);
    MomentumEncoder frozen{MlpEncoder::random(3, 4, 3, rng), 1.0};
    const auto before = frozen.net.params;
    momentum_update(online, frozen);
    CHECK(frozen.net.params == before);

    MomentumEncoder copy{MlpEncoder::random(3, 4, 3, rng), 0.0};
    momentum_update(online, copy);
    CHECK(copy.net.params == online.params);

    MomentumEncoder mid{MlpEncoder::zeros(3, 4, 3), 0.5};
    for (double& p : mid.net.params) p = 2.0;
    MlpEncoder zero_online = MlpEncoder::zeros(3, 4, 3);
    momentum_update(zero_online, mid);
    for (double p : mid.net.params) CHECK(p == doctest::Approx(1.0));

    MlpEncoder other_shape = MlpEncoder::zeros(3, 5, 3);
    CHECK_THROWS_AS(momentum_update(other_shape, mid), ShapeMismatchError);
}

TEST_CASE("repeated momentum updates contract toward the online encoder") {
    Rng rng(17);
    const MlpEncoder online = MlpEncoder::random(4, 6, 4, rng);
    MomentumEncoder target{MlpEncoder::random(4, 6, 4, rng), 0.9};
    auto distance = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < online.params.size(); ++i) {
            const double d = target.net.params[i] - online.params[i];
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    double prev = distance();
    for (int t = 0; t < 10; ++t) {
        momentum_update(online, target);
        const double now = distance();
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("memory bank writes are index-stable") {
    Rng rng(5);
    DenseMatrix raw(6, 4, 0.0);
    for (double& v : raw.data()) v = rng.gaussian();
    MemoryBank bank{l2_normalize_rows(raw), "a"};

    DenseMatrix update_raw(2, 4, 0.0);
    for (double& v : update_raw.data()) v = rng.gaussian();
    const auto rows = l2_normalize_rows(update_raw);

    const std::vector<std::size_t> idx{4, 1};
    memory_bank_write(bank, idx, rows);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(bank.features(4, j) == rows(0, j));
        CHECK(bank.features(1, j) == rows(1, j));
    }

    // Disjoint writes commute.
    MemoryBank bank_a{l2_normalize_rows(raw), "a"};
    MemoryBank bank_b{l2_normalize_rows(raw), "a"};
    DenseMatrix other_raw(2, 4, 0.0);
    for (double& v : other_raw.data()) v = rng.gaussian();
    const auto rows2 = l2_normalize_rows(other_raw);
    const std::vector<std::size_t> idx_a{0, 2}, idx_b{3, 5};
    memory_bank_write(bank_a, idx_a, rows);
    memory_bank_write(bank_a, idx_b, rows2);
    memory_bank_write(bank_b, idx_b, rows2);
    memory_bank_write(bank_b, idx_a, rows);
    CHECK(bank_a.features.matrix().data() == bank_b.features.matrix().data());

    // Full refresh replaces the bank.
    DenseMatrix full_raw(6, 4, 0.0);
    for (double& v : full_raw.data()) v = rng.gaussian();
    const auto full = l2_normalize_rows(full_raw);
    std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
    memory_bank_write(bank, all, full);
    CHECK(bank.features.matrix().data() == full.matrix().data());

    CHECK_THROWS_AS(memory_bank_write(bank, std::vector<std::size_t>{9}, rows),
                    DimMismatchError);
    const std::vector<std::size_t> bad{9, 0};
    CHECK_THROWS_AS(memory_bank_write(bank, bad, rows), IndexOutOfRangeError);
}

TEST_CASE("nearest neighbor scan") {
    const auto feats = l2_normalize_rows(
        DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}, {0.8, 0.6}}));
    MemoryBank bank{feats, "a"};
    const std::vector<double> e1{1.0, 0.0};

    SUBCASE("forced exclusion") {
        MemoryBank two{l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}, {0.0, 1.0}})), "a"};
        CHECK(nearest_neighbor(two, e1, 0).index == 1);
    }
    SUBCASE("picks the closest remaining row") {
        CHECK(nearest_neighbor(bank, e1, 0).index == 2);
    }
    SUBCASE("matches an independent re-scan on a random bank") {
        Rng rng(77);
        DenseMatrix raw(50, 8, 0.0);
        for (double& v : raw.data()) v = rng.gaussian();
        MemoryBank big{l2_normalize_rows(raw), "a"};
        for (std::size_t probe = 0; probe < 10; ++probe) {
            std::vector<double> q(8);
            for (double& v : q) v = rng.gaussian();
            double norm = std::sqrt(dot(q, q));
            for (double& v : q) v /= norm;
            const std::size_t exclude = rng.uniform_index(50);
            const auto got = nearest_neighbor(big, q, exclude);
            std::size_t best = 50;
            double best_sim = -2.0;
            for (std::size_t i = 0; i < 50; ++i) {
                if (i == exclude) continue;
                const double sim = dot(q, big.features.row(i));
                if (sim > best_sim) {
                    best_sim = sim;
                    best = i;
                }
            }
            CHECK(got.index == best);
        }
    }
    SUBCASE("bank of one row is too small") {
        MemoryBank tiny{l2_normalize_rows(DenseMatrix::from_rows({{1.0, 0.0}})), "a"};
        CHECK_THROWS_AS(nearest_neighbor(tiny, e1, 0), BankTooSmallError);
    }
}

TEST_CASE("augment identity and moments") {
    Rng rng(9);
    DenseMatrix x(3, 4, 0.5);
    const auto same = augment(x, rng, 0.0, 0.0);
    CHECK(same.data() == x.data());

    // Noise-only: sample variance of the perturbation is about sigma^2.
    DenseMatrix big(100, 100, 0.0);
    const double sigma = 0.3;
    const auto noisy = augment(big, rng, sigma, 0.0);
    double mean = 0.0;
    for (double v : noisy.data()) mean += v;
    mean /= static_cast<double>(noisy.size());
    double var = 0.0;
    for (double v : noisy.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(noisy.size() - 1);
    CHECK(std::abs(var - sigma * sigma) / (sigma * sigma) < 0.1);

    // Mask-only: about half of the coordinates are zeroed.
    DenseMatrix ones(100, 100, 1.0);
    const auto masked = augment(ones, rng, 0.0, 0.5);
    std::size_t zeros = 0;
    for (double v : masked.data()) {
        if (v == 0.0) ++zeros;
    }
    const double frac = static_cast<double>(zeros) / static_cast<double>(masked.size());
    CHECK(std::abs(frac - 0.5) < 0.02);
}

TEST_CASE("parameter count matches the declared formula") {
    const MlpEncoder enc = MlpEncoder::zeros(32, 64, 32);
    CHECK(enc.param_count() == 32 * 64 + 64 + 64 * 32 + 32);
    CHECK(enc.params.size() == enc.param_count());
}
