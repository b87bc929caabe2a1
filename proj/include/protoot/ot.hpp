#pragma once

#include <cstddef>
#include <vector>

#include "protoot/matrix.hpp"

namespace protoot {

// Probability vector used as a row or column marginal. Entries below the
// floor are raised to it and the rest rescaled, so no coordinate is ever
// starved (an empty K-means cluster must not delete its prototype).
class Marginal {
public:
    static constexpr double kDefaultFloor = 1e-6;

    // Empty until assigned from one of the factories below.
    Marginal() = default;

    // Normalizes arbitrary nonnegative weights, then floors-and-rescales.
    static Marginal from_weights(std::vector<double> weights, double floor = kDefaultFloor);
    static Marginal uniform(std::size_t n);

    std::size_t size() const { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }
    const std::vector<double>& weights() const { return weights_; }

private:
    std::vector<double> weights_;
};

// Solver output: the plan plus the marginal violations it actually achieved.
// Row/column violations are max |sum - target| against the marginals the
// caller passed in; for the unbalanced and partial solvers those gaps are
// intentional and simply reported.
struct TransportPlan {
    DenseMatrix q;
    double achieved_row_violation = 0.0;
    double achieved_col_violation = 0.0;
    std::size_t iterations_used = 0;
    bool converged = true;  // tolerance mode only: violation <= tol was reached
    std::vector<double> violation_history;  // per-iteration, tolerance mode only

    double mass() const;
};

struct SolverConfig {
    enum class Mode { FixedIterations, Tolerance };

    double epsilon = 0.05;
    Mode mode = Mode::FixedIterations;
    std::size_t iterations = 3;    // FixedIterations
    double tol = 1e-8;             // Tolerance
    std::size_t max_iter = 10000;  // Tolerance
    bool log_domain = true;

    static SolverConfig fixed_iterations(std::size_t n, double epsilon = 0.05);
    static SolverConfig tolerance(double tol, std::size_t max_iter, double epsilon = 0.05);

    void validate() const;
};

// Entropically regularized OT in maximization form: scales the Gibbs kernel
// exp(s/epsilon) until the plan's row sums match `row` and column sums match
// `col`. Each iteration is a column scaling followed by a row scaling; a
// final row rescale makes the row sums exact in both modes.
TransportPlan solve_entropic_ot(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                                const SolverConfig& cfg);

// Both marginal constraints relaxed by a KL penalty of weight kl_strength;
// scalings are raised to the exponent kl_strength / (kl_strength + epsilon).
// Total mass is free to deviate from 1. No final rescale is applied.
TransportPlan solve_unbalanced_ot(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                                  const SolverConfig& cfg, double kl_strength);

// Transports mass_fraction of the total mass at maximum similarity. Built by
// adding one slack row and one slack column of zero similarity that absorb
// the untransported mass, solving the balanced problem, and truncating.
// mass_fraction = 1 delegates to solve_entropic_ot.
TransportPlan solve_partial_ot(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                               const SolverConfig& cfg, double mass_fraction);

// Exact maximizer of Tr(Q^T S) over the transportation polytope, found by
// enumerating spanning-tree basic feasible solutions. Ties are broken by the
// lexicographically smallest plan (row-major). Instances up to 5x5 only.
struct ExactOtResult {
    DenseMatrix q;
    double objective = 0.0;
};
ExactOtResult exact_ot_oracle(const DenseMatrix& s, const Marginal& row, const Marginal& col);

// Tr(Q^T S): total similarity collected by the plan.
double transport_objective(const DenseMatrix& q, const DenseMatrix& s);

}  // namespace protoot
