#pragma once

#include <cstddef>
#include <vector>

#include "protoot/encoder.hpp"
#include "protoot/matrix.hpp"

namespace protoot {

// The intra-domain positive triplet of one sample: its augmented view (from
// the momentum encoder), its nearest bank neighbor, and its matched prototype.
struct PositiveSetIntra {
    std::vector<double> augmented;
    std::vector<double> neighbor;
    std::vector<double> prototype;
};

// Loss scalar together with its gradient with respect to the query feature
// rows. Positives and negatives are treated as constants; gradient flows only
// through q.
struct LossGrad {
    double value = 0.0;
    DenseMatrix feature_grad;
};

// Loss scalar with its flat parameter gradient for the online encoder.
struct LossValue {
    double value = 0.0;
    std::vector<double> param_grad;
};

// Contrastive loss over the positive triplet: for each sample and each of its
// three positives p, accumulate -log(exp(q^T p / tau) / (exp(q^T p / tau) +
// sum_neg exp(q^T n / tau))), average the three terms, sum over the batch.
// An empty negative set contributes zero.
LossGrad loss_intra(const UnitRowMatrix& q, const std::vector<PositiveSetIntra>& positives,
                    const std::vector<std::vector<std::size_t>>& negative_ids,
                    const UnitRowMatrix& prototypes, double tau);

// Single-positive variant for cross-domain alignment: the matched prototype
// of the other domain is the positive, all its other prototypes negatives.
LossGrad loss_cross(const UnitRowMatrix& q, const DenseMatrix& matched_rows,
                    const std::vector<std::vector<std::size_t>>& negative_ids,
                    const UnitRowMatrix& prototypes, double tau);

// Batch InfoNCE warm-up: sample i's positive is its own momentum-encoded
// augmented view, the negatives are every other sample's view; the softmax
// denominator runs over the whole batch.
LossGrad loss_pretrain(const UnitRowMatrix& q, const UnitRowMatrix& q_aug, double tau);

// Backpropagates a feature-space gradient through the encoder that produced
// the batch, yielding the flat parameter gradient.
LossValue backprop(const LossGrad& loss, const MlpEncoder& enc, const ForwardCache& cache);

// total = l_in + lambda * l_cr, scalar and gradient alike.
LossValue loss_total(const LossValue& l_in, const LossValue& l_cr, double lambda);

}  // namespace protoot
