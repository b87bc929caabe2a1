#include "protoot/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0)) throw NonPositiveTauError("loss: tau must be > 0");
}

// One InfoNCE term with a single positive and an explicit negative list:
//   value = -log(exp(sp) / (exp(sp) + sum_m exp(sn_m)))  with  s = q.x / tau.
// Accumulates d(value)/dq into grad_q. Zero negatives contribute zero loss.
double infonce_term(std::span<const double> q_row, std::span<const double> positive,
                    const std::vector<std::span<const double>>& negatives, double tau,
                    std::span<double> grad_q) {
    if (negatives.empty()) return 0.0;
    const double sp = dot(q_row, positive) / tau;
    double hi = sp;
    std::vector<double> sn(negatives.size());
    for (std::size_t m = 0; m < negatives.size(); ++m) {
        sn[m] = dot(q_row, negatives[m]) / tau;
        hi = std::max(hi, sn[m]);
    }
    double denom = std::exp(sp - hi);
    for (double s : sn) denom += std::exp(s - hi);
    const double log_denom = hi + std::log(denom);
    const double value = log_denom - sp;

    // d/dq = (1/tau) * [ (softmax_p - 1) * p + sum_m softmax_m * n_m ].
    const double soft_p = std::exp(sp - log_denom);
    const double wp = (soft_p - 1.0) / tau;
    for (std::size_t j = 0; j < q_row.size(); ++j) grad_q[j] += wp * positive[j];
    for (std::size_t m = 0; m < negatives.size(); ++m) {
        const double wm = std::exp(sn[m] - log_denom) / tau;
        for (std::size_t j = 0; j < q_row.size(); ++j) grad_q[j] += wm * negatives[m][j];
    }
    return value;
}

std::vector<std::span<const double>> gather_prototype_rows(
    const UnitRowMatrix& prototypes, const std::vector<std::size_t>& ids) {
    std::vector<std::span<const double>> rows;
    rows.reserve(ids.size());
    for (std::size_t id : ids) {
        if (id >= prototypes.rows()) {
            throw IndexOutOfRangeError("loss: negative prototype id out of range");
        }
        rows.push_back(prototypes.row(id));
    }
    return rows;
}

}  // namespace

LossGrad loss_intra(const UnitRowMatrix& q, const std::vector<PositiveSetIntra>& positives,
                    const std::vector<std::vector<std::size_t>>& negative_ids,
                    const UnitRowMatrix& prototypes, double tau) {
    check_tau(tau);
    const std::size_t n = q.rows();
    const std::size_t d = q.cols();
    if (positives.size() != n || negative_ids.size() != n) {
        throw DimMismatchError("loss_intra: per-sample lists must match the batch");
    }

    LossGrad out;
    out.feature_grad = DenseMatrix(n, d, 0.0);
    DenseMatrix scratch(1, d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& pos = positives[i];
        if (pos.augmented.size() != d || pos.neighbor.size() != d || pos.prototype.size() != d) {
            throw DimMismatchError("loss_intra: positive row width mismatch");
        }
        const auto negs = gather_prototype_rows(prototypes, negative_ids[i]);
        const std::span<const double> triplet[3] = {pos.augmented, pos.neighbor, pos.prototype};
        double sample_value = 0.0;
        auto dst = scratch.row(0);
        std::fill(dst.begin(), dst.end(), 0.0);
        for (const auto& p : triplet) {
            sample_value += infonce_term(q.row(i), p, negs, tau, dst);
        }
        // Average over the three positives so the intra and cross terms stay
        // on the same scale.
        out.value += sample_value / 3.0;
        auto gi = out.feature_grad.row(i);
        for (std::size_t j = 0; j < d; ++j) gi[j] = dst[j] / 3.0;
    }
    return out;
}

LossGrad loss_cross(const UnitRowMatrix& q, const DenseMatrix& matched_rows,
                    const std::vector<std::vector<std::size_t>>& negative_ids,
                    const UnitRowMatrix& prototypes, double tau) {
    check_tau(tau);
    const std::size_t n = q.rows();
    const std::size_t d = q.cols();
    if (matched_rows.rows() != n || matched_rows.cols() != d || negative_ids.size() != n) {
        throw DimMismatchError("loss_cross: per-sample inputs must match the batch");
    }

    LossGrad out;
    out.feature_grad = DenseMatrix(n, d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto negs = gather_prototype_rows(prototypes, negative_ids[i]);
        out.value += infonce_term(q.row(i), matched_rows.row(i), negs, tau,
                                  out.feature_grad.row(i));
    }
    return out;
}

LossGrad loss_pretrain(const UnitRowMatrix& q, const UnitRowMatrix& q_aug, double tau) {
    check_tau(tau);
    const std::size_t n = q.rows();
    const std::size_t d = q.cols();
    if (n < 2) throw BatchTooSmallError("loss_pretrain: batch must have at least 2 samples");
    if (q_aug.rows() != n || q_aug.cols() != d) {
        throw DimMismatchError("loss_pretrain: view batches must be aligned");
    }

    LossGrad out;
    out.feature_grad = DenseMatrix(n, d, 0.0);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        double hi = -1.0 / tau;
        for (std::size_t j = 0; j < n; ++j) {
            scores[j] = dot(q.row(i), q_aug.row(j)) / tau;
            hi = std::max(hi, scores[j]);
        }
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - hi);
        const double log_denom = hi + std::log(denom);
        out.value += log_denom - scores[i];

        auto gi = out.feature_grad.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (std::exp(scores[j] - log_denom) - (j == i ? 1.0 : 0.0)) / tau;
            const auto vj = q_aug.row(j);
            for (std::size_t c = 0; c < d; ++c) gi[c] += w * vj[c];
        }
    }
    return out;
}

LossValue backprop(const LossGrad& loss, const MlpEncoder& enc, const ForwardCache& cache) {
    LossValue out;
    out.value = loss.value;
    out.param_grad = encoder_backward(enc, cache, loss.feature_grad);
    return out;
}

LossValue loss_total(const LossValue& l_in, const LossValue& l_cr, double lambda) {
    if (lambda < 0.0) throw Error("loss_total: lambda must be >= 0");
    if (!l_in.param_grad.empty() && !l_cr.param_grad.empty() &&
        l_in.param_grad.size() != l_cr.param_grad.size()) {
        throw DimMismatchError("loss_total: gradient lengths differ");
    }
    LossValue out;
    out.value = l_in.value + lambda * l_cr.value;
    out.param_grad = l_in.param_grad.empty()
                         ? std::vector<double>(l_cr.param_grad.size(), 0.0)
                         : l_in.param_grad;
    if (!l_cr.param_grad.empty()) {
        for (std::size_t i = 0; i < out.param_grad.size(); ++i) {
            out.param_grad[i] += lambda * l_cr.param_grad[i];
        }
    }
    return out;
}

}  // namespace protoot
