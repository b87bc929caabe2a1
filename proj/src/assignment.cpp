#include "protoot/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

namespace {

std::vector<std::size_t> row_argmax(const DenseMatrix& q) {
    std::vector<std::size_t> labels(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        std::size_t best = 0;
        double best_val = q(i, 0);
        for (std::size_t j = 1; j < q.cols(); ++j) {
            if (q(i, j) > best_val) {
                best_val = q(i, j);
                best = j;
            }
        }
        labels[i] = best;
    }
    return labels;
}

TransportPlan run_variant(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                          const SolverConfig& cfg, const OtVariant& variant) {
    switch (variant.kind) {
        case OtVariant::Kind::Unbalanced:
            return solve_unbalanced_ot(s, row, col, cfg, variant.parameter);
        case OtVariant::Kind::Partial:
            return solve_partial_ot(s, row, col, cfg, variant.parameter);
        case OtVariant::Kind::Balanced:
        default:
            return solve_entropic_ot(s, row, col, cfg);
    }
}

AssignmentState assign(const MemoryBank& bank, const PrototypeSet& prototypes,
                       const Marginal& beta, const SolverConfig& cfg, const OtVariant& variant) {
    const std::size_t n = bank.features.rows();
    const std::size_t k = prototypes.count();
    if (n < k) {
        throw TooFewPointsError("assign: bank has " + std::to_string(n) + " rows for " +
                                std::to_string(k) + " prototypes");
    }
    if (beta.size() != k) throw DimMismatchError("assign: beta length != prototype count");

    const DenseMatrix sim = cosine_similarity(bank.features, prototypes.vectors);
    AssignmentState state;
    state.plan = run_variant(sim, Marginal::uniform(n), beta, cfg, variant);
    state.pseudo_labels = row_argmax(state.plan.q);
    state.prototypes = prototypes;
    state.beta = beta;
    return state;
}

}  // namespace

AssignmentState intra_assign(const MemoryBank& bank, const PrototypeSet& prototypes,
                             const Marginal& beta, const SolverConfig& cfg,
                             const OtVariant& variant) {
    return assign(bank, prototypes, beta, cfg, variant);
}

AssignmentState cross_assign(const MemoryBank& bank, const PrototypeSet& other_prototypes,
                             const Marginal& beta_cr, const SolverConfig& cfg,
                             const OtVariant& variant) {
    return assign(bank, other_prototypes, beta_cr, cfg, variant);
}

PrototypeSet update_prototypes(const TransportPlan& plan, const MemoryBank& bank) {
    if (plan.q.rows() != bank.features.rows()) {
        throw DimMismatchError("update_prototypes: plan rows != bank rows");
    }
    DenseMatrix raw = transpose_product(plan.q, bank.features.matrix());
    PrototypeSet out;
    out.vectors = l2_normalize_rows(raw);  // throws ZeroRowError on massless prototypes
    out.source = PrototypeSet::Source::SoftUpdate;
    return out;
}

Marginal cross_marginal_align(const KMeansResult& own_kmeans, const PrototypeSet& other_prototypes,
                              CrossMarginalOrder order) {
    const std::size_t k = own_kmeans.centroids.rows();
    if (k != other_prototypes.count()) {
        throw KMismatchError("cross_marginal_align: cluster count " + std::to_string(k) +
                             " != prototype count " + std::to_string(other_prototypes.count()));
    }
    std::vector<double> shares(k, 0.0);
    for (std::size_t label : own_kmeans.labels) shares[label] += 1.0;

    std::vector<double> permuted(k, 0.0);
    if (order == CrossMarginalOrder::IndexOrder) {
        permuted = shares;
    } else {
        const DenseMatrix sim =
            cosine_similarity(own_kmeans.centroids, other_prototypes.vectors);
        const std::vector<std::size_t> match = max_weight_matching(sim);
        for (std::size_t j = 0; j < k; ++j) permuted[match[j]] = shares[j];
    }
    return Marginal::from_weights(std::move(permuted));
}

std::vector<std::vector<std::size_t>> build_negative_sets(const AssignmentState& state) {
    const std::size_t k = state.prototypes.count();
    std::vector<std::vector<std::size_t>> negatives(state.pseudo_labels.size());
    for (std::size_t i = 0; i < state.pseudo_labels.size(); ++i) {
        negatives[i].reserve(k - 1);
        for (std::size_t j = 0; j < k; ++j) {
            if (j != state.pseudo_labels[i]) negatives[i].push_back(j);
        }
    }
    return negatives;
}

// Hungarian algorithm with potentials, O(n^3), minimizing -weight.
std::vector<std::size_t> max_weight_matching(const DenseMatrix& weight) {
    if (weight.rows() != weight.cols()) {
        throw DimMismatchError("max_weight_matching: matrix must be square");
    }
    const std::size_t n = weight.rows();
    const double inf = std::numeric_limits<double>::infinity();

    // 1-based arrays; match_col[j] = row currently assigned to column j.
    std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
    std::vector<std::size_t> match_col(n + 1, 0);
    std::vector<std::size_t> prev_col(n + 1, 0);

    for (std::size_t i = 1; i <= n; ++i) {
        match_col[0] = i;
        std::size_t j0 = 0;
        std::vector<double> min_slack(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match_col[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cost = -weight(i0 - 1, j - 1);
                const double cur = cost - row_pot[i0] - col_pot[j];
                if (cur < min_slack[j]) {
                    min_slack[j] = cur;
                    prev_col[j] = j0;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    row_pot[match_col[j]] += delta;
                    col_pot[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
        } while (match_col[j0] != 0);
        // Augment along the alternating path.
        do {
            const std::size_t j1 = prev_col[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j) {
        if (match_col[j] != 0) row_to_col[match_col[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace protoot
