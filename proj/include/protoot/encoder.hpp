#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protoot/matrix.hpp"
#include "protoot/rng.hpp"

namespace protoot {

// Two-layer perceptron with relu hidden activation and L2-normalized output
// rows. Parameters live in one flat vector laid out [w1 | b1 | w2 | b2] with
// the weight matrices row-major (w1 is d_in x hidden, w2 is hidden x d_out),
// so the optimizer and the momentum update can treat the network as a single
// parameter vector.
struct MlpEncoder {
    std::size_t d_in = 0;
    std::size_t hidden = 0;
    std::size_t d_out = 0;
    std::vector<double> params;

    static MlpEncoder zeros(std::size_t d_in, std::size_t hidden, std::size_t d_out);
    // He-scaled Gaussian weights for the relu layer, Xavier for the output
    // layer, zero biases.
    static MlpEncoder random(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng);

    std::size_t param_count() const { return d_in * hidden + hidden + hidden * d_out + d_out; }

    std::span<double> w1() { return {params.data(), d_in * hidden}; }
    std::span<double> b1() { return {params.data() + d_in * hidden, hidden}; }
    std::span<double> w2() { return {params.data() + d_in * hidden + hidden, hidden * d_out}; }
    std::span<double> b2() {
        return {params.data() + d_in * hidden + hidden + hidden * d_out, d_out};
    }
    std::span<const double> w1() const { return {params.data(), d_in * hidden}; }
    std::span<const double> b1() const { return {params.data() + d_in * hidden, hidden}; }
    std::span<const double> w2() const {
        return {params.data() + d_in * hidden + hidden, hidden * d_out};
    }
    std::span<const double> b2() const {
        return {params.data() + d_in * hidden + hidden + hidden * d_out, d_out};
    }

    bool same_shape(const MlpEncoder& other) const {
        return d_in == other.d_in && hidden == other.hidden && d_out == other.d_out;
    }
};

// Intermediate activations kept for the backward pass.
struct ForwardCache {
    DenseMatrix input;       // N x d_in
    DenseMatrix pre_hidden;  // N x hidden, before relu
    DenseMatrix hidden;      // N x hidden
    DenseMatrix pre_norm;    // N x d_out, before row normalization
    std::vector<double> norms;
    DenseMatrix output;      // N x d_out, unit rows
};

// rows = normalize(w2 * relu(w1 * x + b1) + b2). Throws ZeroRowError when a
// pre-normalization row vanishes. Pass a cache to enable encoder_backward.
UnitRowMatrix encoder_forward(const MlpEncoder& enc, const DenseMatrix& x,
                              ForwardCache* cache = nullptr);

// Parameter gradient of sum_i <grad_output_i, output_i>, i.e. backpropagation
// of grad_output through the row normalization, the linear layers and relu.
// Returns a flat vector in the encoder's parameter layout.
std::vector<double> encoder_backward(const MlpEncoder& enc, const ForwardCache& cache,
                                     const DenseMatrix& grad_output);

// Slow-moving copy of the online encoder; theta <- m*theta + (1-m)*theta_online.
struct MomentumEncoder {
    MlpEncoder net;
    double momentum = 0.999;
};

void momentum_update(const MlpEncoder& online, MomentumEncoder& target);

// Index-stable store of momentum-encoder features for one domain.
struct MemoryBank {
    UnitRowMatrix features;
    std::string domain;
};

void memory_bank_write(MemoryBank& bank, std::span<const std::size_t> indices,
                       const UnitRowMatrix& rows);

struct NeighborResult {
    std::size_t index = 0;
    std::vector<double> row;
};

// argmax cosine similarity over bank rows, skipping exclude_index; ties go to
// the smallest index.
NeighborResult nearest_neighbor(const MemoryBank& bank, std::span<const double> query,
                                std::size_t exclude_index);

// Adds i.i.d. Gaussian noise (sigma = noise_sigma), then zeroes each
// coordinate independently with probability mask_prob.
DenseMatrix augment(const DenseMatrix& x, Rng& rng, double noise_sigma, double mask_prob);

}  // namespace protoot
