#pragma once

#include <cstddef>
#include <vector>

#include "protoot/encoder.hpp"
#include "protoot/kmeans.hpp"
#include "protoot/matrix.hpp"
#include "protoot/ot.hpp"

namespace protoot {

struct PrototypeSet {
    enum class Source { KMeansInit, SoftUpdate };

    UnitRowMatrix vectors;  // K x d, unit rows
    Source source = Source::KMeansInit;

    std::size_t count() const { return vectors.rows(); }
};

// One full-bank transport solve: the plan, the per-row argmax pseudo-labels
// (ties to the smallest index), the prototypes it was computed against, and
// the column marginal used.
struct AssignmentState {
    TransportPlan plan;
    std::vector<std::size_t> pseudo_labels;
    PrototypeSet prototypes;
    Marginal beta;
};

// Solver family used for an assignment; Balanced covers both the uniform and
// the cluster-derived column marginal, the others are ablation baselines.
struct OtVariant {
    enum class Kind { Balanced, Unbalanced, Partial };
    Kind kind = Kind::Balanced;
    double parameter = 0.0;  // kl_strength or mass_fraction

    static OtVariant balanced() { return {}; }
    static OtVariant unbalanced(double kl_strength) { return {Kind::Unbalanced, kl_strength}; }
    static OtVariant partial(double mass_fraction) { return {Kind::Partial, mass_fraction}; }
};

// Transport the bank onto the given prototypes: similarity = cosine, row
// marginal uniform 1/N, column marginal beta. Pseudo-labels are row argmaxes.
AssignmentState intra_assign(const MemoryBank& bank, const PrototypeSet& prototypes,
                             const Marginal& beta, const SolverConfig& cfg,
                             const OtVariant& variant = OtVariant::balanced());

// C = Q^T M with rows renormalized; the plan-weighted feature averages.
PrototypeSet update_prototypes(const TransportPlan& plan, const MemoryBank& bank);

enum class CrossMarginalOrder {
    Matched,    // permute cluster shares onto prototypes via max-weight matching
    IndexOrder  // trust cluster index == prototype index as produced
};

// The column marginal for a cross-domain solve: this bank's cluster-size
// distribution expressed in the other domain's prototype order. The
// permutation comes from an exact maximum-weight one-to-one matching between
// own centroids and the other domain's prototypes under cosine similarity.
Marginal cross_marginal_align(const KMeansResult& own_kmeans, const PrototypeSet& other_prototypes,
                              CrossMarginalOrder order = CrossMarginalOrder::Matched);

// Same mechanics as intra_assign, against the other domain's prototypes.
AssignmentState cross_assign(const MemoryBank& bank, const PrototypeSet& other_prototypes,
                             const Marginal& beta_cr, const SolverConfig& cfg,
                             const OtVariant& variant = OtVariant::balanced());

// negatives[i] = every prototype index except pseudo_labels[i].
std::vector<std::vector<std::size_t>> build_negative_sets(const AssignmentState& state);

// Exact max-weight one-to-one matching (Hungarian algorithm on -weight);
// returns the column matched to each row. Square matrices only.
std::vector<std::size_t> max_weight_matching(const DenseMatrix& weight);

}  // namespace protoot
