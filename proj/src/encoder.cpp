#include "protoot/encoder.hpp"

#include <cmath>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

MlpEncoder MlpEncoder::zeros(std::size_t d_in, std::size_t hidden, std::size_t d_out) {
    if (d_in == 0 || hidden == 0 || d_out == 0) {
        throw ShapeMismatchError("MlpEncoder: all layer sizes must be >= 1");
    }
    MlpEncoder enc;
    enc.d_in = d_in;
    enc.hidden = hidden;
    enc.d_out = d_out;
    enc.params.assign(enc.param_count(), 0.0);
    return enc;
}

MlpEncoder MlpEncoder::random(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng) {
    MlpEncoder enc = zeros(d_in, hidden, d_out);
    const double scale1 = std::sqrt(2.0 / static_cast<double>(d_in));
    const double scale2 = std::sqrt(1.0 / static_cast<double>(hidden));
    for (double& w : enc.w1()) w = scale1 * rng.gaussian();
    for (double& w : enc.w2()) w = scale2 * rng.gaussian();
    return enc;
}

UnitRowMatrix encoder_forward(const MlpEncoder& enc, const DenseMatrix& x, ForwardCache* cache) {
    if (x.cols() != enc.d_in) {
        throw DimMismatchError("encoder_forward: input has " + std::to_string(x.cols()) +
                               " columns, encoder expects " + std::to_string(enc.d_in));
    }
    const std::size_t n = x.rows();
    const auto w1 = enc.w1();
    const auto b1 = enc.b1();
    const auto w2 = enc.w2();
    const auto b2 = enc.b2();

    DenseMatrix pre_hidden(n, enc.hidden, 0.0);
    DenseMatrix hidden(n, enc.hidden, 0.0);
    DenseMatrix pre_norm(n, enc.d_out, 0.0);
    DenseMatrix output(n, enc.d_out, 0.0);
    std::vector<double> norms(n, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        for (std::size_t h = 0; h < enc.hidden; ++h) {
            double acc = b1[h];
            for (std::size_t j = 0; j < enc.d_in; ++j) acc += xi[j] * w1[j * enc.hidden + h];
            pre_hidden(i, h) = acc;
            hidden(i, h) = acc > 0.0 ? acc : 0.0;
        }
        for (std::size_t o = 0; o < enc.d_out; ++o) {
            double acc = b2[o];
            for (std::size_t h = 0; h < enc.hidden; ++h) {
                acc += hidden(i, h) * w2[h * enc.d_out + o];
            }
            pre_norm(i, o) = acc;
        }
        const double norm = std::sqrt(dot(pre_norm.row(i), pre_norm.row(i)));
        if (norm < 1e-12) {
            throw ZeroRowError("encoder_forward: pre-normalization row " + std::to_string(i) +
                               " is zero");
        }
        norms[i] = norm;
        for (std::size_t o = 0; o < enc.d_out; ++o) output(i, o) = pre_norm(i, o) / norm;
    }

    output.ensure_finite("encoder_forward");
    UnitRowMatrix result(output);
    if (cache) {
        cache->input = x;
        cache->pre_hidden = std::move(pre_hidden);
        cache->hidden = std::move(hidden);
        cache->pre_norm = std::move(pre_norm);
        cache->norms = std::move(norms);
        cache->output = std::move(output);
    }
    return result;
}

std::vector<double> encoder_backward(const MlpEncoder& enc, const ForwardCache& cache,
                                     const DenseMatrix& grad_output) {
    const std::size_t n = cache.input.rows();
    if (grad_output.rows() != n || grad_output.cols() != enc.d_out) {
        throw DimMismatchError("encoder_backward: grad_output shape mismatch");
    }
    MlpEncoder grads = MlpEncoder::zeros(enc.d_in, enc.hidden, enc.d_out);
    auto gw1 = grads.w1();
    auto gb1 = grads.b1();
    auto gw2 = grads.w2();
    auto gb2 = grads.b2();
    const auto w2 = enc.w2();

    std::vector<double> g_pre_norm(enc.d_out);
    std::vector<double> g_hidden(enc.hidden);

    for (std::size_t i = 0; i < n; ++i) {
        // Through y = z / |z|:  dz = (dy - <dy, y> y) / |z|.
        const auto y = cache.output.row(i);
        const auto gy = grad_output.row(i);
        const double gy_dot_y = dot(gy, y);
        const double inv_norm = 1.0 / cache.norms[i];
        for (std::size_t o = 0; o < enc.d_out; ++o) {
            g_pre_norm[o] = (gy[o] - gy_dot_y * y[o]) * inv_norm;
        }

        for (std::size_t o = 0; o < enc.d_out; ++o) gb2[o] += g_pre_norm[o];
        for (std::size_t h = 0; h < enc.hidden; ++h) {
            const double hid = cache.hidden(i, h);
            double acc = 0.0;
            for (std::size_t o = 0; o < enc.d_out; ++o) {
                gw2[h * enc.d_out + o] += hid * g_pre_norm[o];
                acc += w2[h * enc.d_out + o] * g_pre_norm[o];
            }
            g_hidden[h] = cache.pre_hidden(i, h) > 0.0 ? acc : 0.0;
        }
        for (std::size_t h = 0; h < enc.hidden; ++h) gb1[h] += g_hidden[h];
        const auto xi = cache.input.row(i);
        for (std::size_t j = 0; j < enc.d_in; ++j) {
            const double xij = xi[j];
            if (xij == 0.0) continue;
            for (std::size_t h = 0; h < enc.hidden; ++h) {
                gw1[j * enc.hidden + h] += xij * g_hidden[h];
            }
        }
    }
    return std::move(grads.params);
}

void momentum_update(const MlpEncoder& online, MomentumEncoder& target) {
    if (!online.same_shape(target.net)) {
        throw ShapeMismatchError("momentum_update: encoder shapes differ");
    }
    const double m = target.momentum;
    if (m < 0.0 || m > 1.0) throw Error("momentum_update: momentum must lie in [0, 1]");
    for (std::size_t i = 0; i < online.params.size(); ++i) {
        target.net.params[i] = m * target.net.params[i] + (1.0 - m) * online.params[i];
    }
}

void memory_bank_write(MemoryBank& bank, std::span<const std::size_t> indices,
                       const UnitRowMatrix& rows) {
    if (indices.size() != rows.rows()) {
        throw DimMismatchError("memory_bank_write: index count != row count");
    }
    if (rows.cols() != bank.features.cols()) {
        throw DimMismatchError("memory_bank_write: feature width mismatch");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= bank.features.rows()) {
            throw IndexOutOfRangeError("memory_bank_write: index " + std::to_string(indices[i]) +
                                       " out of range");
        }
        bank.features.set_row(indices[i], rows.row(i));
    }
}

NeighborResult nearest_neighbor(const MemoryBank& bank, std::span<const double> query,
                                std::size_t exclude_index) {
    const std::size_t n = bank.features.rows();
    if (n < 2) throw BankTooSmallError("nearest_neighbor: bank needs at least 2 rows");
    if (exclude_index >= n) throw IndexOutOfRangeError("nearest_neighbor: bad exclude_index");
    if (query.size() != bank.features.cols()) {
        throw DimMismatchError("nearest_neighbor: query width mismatch");
    }
    std::size_t best = n;
    double best_sim = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == exclude_index) continue;
        const double sim = dot(query, bank.features.row(i));
        if (best == n || sim > best_sim) {
            best = i;
            best_sim = sim;
        }
    }
    NeighborResult out;
    out.index = best;
    const auto row = bank.features.row(best);
    out.row.assign(row.begin(), row.end());
    return out;
}

DenseMatrix augment(const DenseMatrix& x, Rng& rng, double noise_sigma, double mask_prob) {
    if (noise_sigma < 0.0) throw Error("augment: noise_sigma must be >= 0");
    if (mask_prob < 0.0 || mask_prob >= 1.0) throw Error("augment: mask_prob must lie in [0, 1)");
    DenseMatrix out = x;
    for (double& v : out.data()) {
        if (noise_sigma > 0.0) v += noise_sigma * rng.gaussian();
        if (mask_prob > 0.0 && rng.uniform() < mask_prob) v = 0.0;
    }
    out.ensure_finite("augment");
    return out;
}

}  // namespace protoot
