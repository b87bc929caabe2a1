#include "protoot/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

namespace {

// Similarity assigned to the slack-slack cell of the partial-OT augmentation.
// Slack mass must never route slack-to-slack or the retained fraction would
// drift above mass_fraction, so that cell is made strictly unprofitable.
constexpr double kSlackCornerSimilarity = -1e9;

double logsumexp(const std::vector<double>& terms) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double t : terms) hi = std::max(hi, t);
    if (!std::isfinite(hi)) return hi;  // all -inf
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - hi);
    return hi + std::log(acc);
}

void check_instance(const DenseMatrix& s, const Marginal& row, const Marginal& col) {
    if (s.rows() != row.size() || s.cols() != col.size()) {
        throw DimMismatchError("solve: similarity is " + std::to_string(s.rows()) + "x" +
                               std::to_string(s.cols()) + " but marginals have lengths " +
                               std::to_string(row.size()) + ", " + std::to_string(col.size()));
    }
    s.ensure_finite("solve: similarity");
}

struct Violations {
    double row = 0.0;
    double col = 0.0;
};

Violations measure_violations(const DenseMatrix& q, const Marginal& row, const Marginal& col) {
    Violations v;
    std::vector<double> col_sums(q.cols(), 0.0);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < q.cols(); ++j) {
            row_sum += q(i, j);
            col_sums[j] += q(i, j);
        }
        v.row = std::max(v.row, std::abs(row_sum - row[i]));
    }
    for (std::size_t j = 0; j < q.cols(); ++j) {
        v.col = std::max(v.col, std::abs(col_sums[j] - col[j]));
    }
    return v;
}

void rescale_rows_exact(DenseMatrix& q, const Marginal& row) {
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < q.cols(); ++j) sum += q(i, j);
        if (sum <= 0.0) throw NonFiniteKernelError("sinkhorn: a plan row collapsed to zero");
        const double scale = row[i] / sum;
        for (std::size_t j = 0; j < q.cols(); ++j) q(i, j) *= scale;
    }
}

// Shared Sinkhorn core. relax_exponent = 1 gives the balanced solver; values
// in (0,1) implement the KL-relaxed (unbalanced) update, where each scaling
// step is raised to kl/(kl+eps). One iteration = column step then row step.
TransportPlan sinkhorn(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                       const SolverConfig& cfg, double relax_exponent, bool rescale_rows) {
    cfg.validate();
    check_instance(s, row, col);
    const std::size_t r = s.rows();
    const std::size_t c = s.cols();
    const double eps = cfg.epsilon;
    const double lam = relax_exponent;
    const bool tolerance_mode = cfg.mode == SolverConfig::Mode::Tolerance;
    const std::size_t iter_budget = tolerance_mode ? cfg.max_iter : cfg.iterations;

    TransportPlan plan;
    plan.q = DenseMatrix(r, c, 0.0);

    // Potentials f, g with Q_ij = exp((s_ij + f_i + g_j)/eps). The linear
    // path carries u = exp(f/eps), v = exp(g/eps) directly.
    std::vector<double> f(r, 0.0), g(c, 0.0);
    std::vector<double> u(r, 1.0), v(c, 1.0);
    std::vector<double> log_row(r), log_col(c);
    for (std::size_t i = 0; i < r; ++i) log_row[i] = std::log(row[i]);
    for (std::size_t j = 0; j < c; ++j) log_col[j] = std::log(col[j]);

    DenseMatrix kernel(1, 1);
    if (!cfg.log_domain) {
        kernel = DenseMatrix(r, c, 0.0);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                const double k = std::exp(s(i, j) / eps);
                if (!std::isfinite(k)) {
                    throw NonFiniteKernelError(
                        "sinkhorn: exp(s/epsilon) overflowed; enable log_domain");
                }
                kernel(i, j) = k;
            }
        }
    }

    auto materialize = [&](DenseMatrix& q) {
        if (cfg.log_domain) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    q(i, j) = std::exp((s(i, j) + f[i] + g[j]) / eps);
                }
            }
        } else {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    q(i, j) = u[i] * kernel(i, j) * v[j];
                }
            }
        }
        q.ensure_finite("sinkhorn: transport plan");
    };

    std::vector<double> scratch(std::max(r, c));
    std::size_t iterations = 0;
    bool converged = !tolerance_mode;

    for (std::size_t t = 0; t < iter_budget; ++t) {
        if (cfg.log_domain) {
            // Column step: g_j = lam * (eps log b_j - eps lse_i((s_ij + f_i)/eps)).
            for (std::size_t j = 0; j < c; ++j) {
                scratch.resize(r);
                for (std::size_t i = 0; i < r; ++i) scratch[i] = (s(i, j) + f[i]) / eps;
                g[j] = lam * (eps * log_col[j] - eps * logsumexp(scratch));
            }
            // Row step: f_i = lam * (eps log a_i - eps lse_j((s_ij + g_j)/eps)).
            for (std::size_t i = 0; i < r; ++i) {
                scratch.resize(c);
                for (std::size_t j = 0; j < c; ++j) scratch[j] = (s(i, j) + g[j]) / eps;
                f[i] = lam * (eps * log_row[i] - eps * logsumexp(scratch));
            }
        } else {
            for (std::size_t j = 0; j < c; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < r; ++i) acc += kernel(i, j) * u[i];
                v[j] = std::pow(col[j] / acc, lam);
                if (!std::isfinite(v[j])) {
                    throw NonFiniteKernelError("sinkhorn: scaling overflowed; enable log_domain");
                }
            }
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += kernel(i, j) * v[j];
                u[i] = std::pow(row[i] / acc, lam);
                if (!std::isfinite(u[i])) {
                    throw NonFiniteKernelError("sinkhorn: scaling overflowed; enable log_domain");
                }
            }
        }
        iterations = t + 1;

        if (tolerance_mode) {
            materialize(plan.q);
            if (rescale_rows) rescale_rows_exact(plan.q, row);
            const Violations v_now = measure_violations(plan.q, row, col);
            const double worst = rescale_rows ? v_now.col : std::max(v_now.row, v_now.col);
            plan.violation_history.push_back(worst);
            if (worst <= cfg.tol) {
                converged = true;
                break;
            }
        }
    }

    materialize(plan.q);
    if (rescale_rows) rescale_rows_exact(plan.q, row);
    const Violations v_final = measure_violations(plan.q, row, col);
    plan.achieved_row_violation = v_final.row;
    plan.achieved_col_violation = v_final.col;
    plan.iterations_used = iterations;
    plan.converged = converged;
    return plan;
}

}  // namespace

Marginal Marginal::from_weights(std::vector<double> weights, double floor) {
    if (weights.empty()) throw EmptyInputError("Marginal: empty weight vector");
    if (floor <= 0.0 || floor * static_cast<double>(weights.size()) >= 1.0) {
        throw Error("Marginal: floor must lie in (0, 1/n)");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error("Marginal: weights must be finite and >= 0");
        }
        total += w;
    }
    if (total <= 0.0) throw Error("Marginal: total weight is zero");
    for (double& w : weights) w /= total;

    // Pin sub-floor entries at exactly `floor` and rescale the rest to the
    // remaining mass; repeat because the rescale may push new entries under.
    for (std::size_t pass = 0; pass < weights.size() + 1; ++pass) {
        double floored_mass = 0.0;
        double free_mass = 0.0;
        std::size_t floored = 0;
        for (double w : weights) {
            if (w <= floor) {
                floored_mass += floor;
                ++floored;
            } else {
                free_mass += w;
            }
        }
        if (floored == 0) break;
        const double target_free = 1.0 - floored_mass;
        if (target_free <= 0.0) throw Error("Marginal: floor leaves no free mass");
        const double scale = target_free / free_mass;
        bool changed = false;
        for (double& w : weights) {
            if (w <= floor) {
                if (w != floor) changed = true;
                w = floor;
            } else {
                const double nw = w * scale;
                if (nw <= floor) changed = true;
                w = nw;
            }
        }
        if (!changed) break;
    }

    Marginal m;
    m.weights_ = std::move(weights);
    return m;
}

Marginal Marginal::uniform(std::size_t n) {
    if (n == 0) throw EmptyInputError("Marginal: n must be >= 1");
    return from_weights(std::vector<double>(n, 1.0));
}

double TransportPlan::mass() const {
    double total = 0.0;
    for (double v : q.data()) total += v;
    return total;
}

SolverConfig SolverConfig::fixed_iterations(std::size_t n, double epsilon) {
    SolverConfig cfg;
    cfg.epsilon = epsilon;
    cfg.mode = Mode::FixedIterations;
    cfg.iterations = n;
    cfg.validate();
    return cfg;
}

SolverConfig SolverConfig::tolerance(double tol, std::size_t max_iter, double epsilon) {
    SolverConfig cfg;
    cfg.epsilon = epsilon;
    cfg.mode = Mode::Tolerance;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.validate();
    return cfg;
}

void SolverConfig::validate() const {
    if (!(epsilon > 0.0)) throw Error("SolverConfig: epsilon must be > 0");
    if (mode == Mode::FixedIterations && iterations == 0) {
        throw Error("SolverConfig: iteration count must be >= 1");
    }
    if (mode == Mode::Tolerance) {
        if (!(tol > 0.0)) throw Error("SolverConfig: tol must be > 0");
        if (max_iter == 0) throw Error("SolverConfig: max_iter must be >= 1");
    }
}

TransportPlan solve_entropic_ot(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                                const SolverConfig& cfg) {
    return sinkhorn(s, row, col, cfg, 1.0, /*rescale_rows=*/true);
}

TransportPlan solve_unbalanced_ot(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                                  const SolverConfig& cfg, double kl_strength) {
    if (!(kl_strength > 0.0)) throw Error("solve_unbalanced_ot: kl_strength must be > 0");
    const double lam = kl_strength / (kl_strength + cfg.epsilon);
    return sinkhorn(s, row, col, cfg, lam, /*rescale_rows=*/false);
}

TransportPlan solve_partial_ot(const DenseMatrix& s, const Marginal& row, const Marginal& col,
                               const SolverConfig& cfg, double mass_fraction) {
    if (!(mass_fraction > 0.0) || mass_fraction > 1.0) {
        throw Error("solve_partial_ot: mass_fraction must lie in (0, 1]");
    }
    if (mass_fraction == 1.0) return solve_entropic_ot(s, row, col, cfg);
    check_instance(s, row, col);

    const std::size_t r = s.rows();
    const std::size_t c = s.cols();
    const double slack = 1.0 - mass_fraction;

    DenseMatrix aug(r + 1, c + 1, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) aug(i, j) = s(i, j);
    }
    aug(r, c) = kSlackCornerSimilarity;

    std::vector<double> row_w(r + 1), col_w(c + 1);
    for (std::size_t i = 0; i < r; ++i) row_w[i] = row[i];
    row_w[r] = slack;
    for (std::size_t j = 0; j < c; ++j) col_w[j] = col[j];
    col_w[c] = slack;

    const TransportPlan inner = solve_entropic_ot(aug, Marginal::from_weights(row_w),
                                                  Marginal::from_weights(col_w), cfg);

    // Undo the 1/(2 - m) normalization of the augmented marginals, then keep
    // only the real block.
    const double scale = 2.0 - mass_fraction;
    TransportPlan plan;
    plan.q = DenseMatrix(r, c, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) plan.q(i, j) = inner.q(i, j) * scale;
    }
    const Violations v = measure_violations(plan.q, row, col);
    plan.achieved_row_violation = v.row;
    plan.achieved_col_violation = v.col;
    plan.iterations_used = inner.iterations_used;
    plan.converged = inner.converged;
    plan.violation_history = inner.violation_history;
    return plan;
}

double transport_objective(const DenseMatrix& q, const DenseMatrix& s) {
    if (!q.same_shape(s)) throw DimMismatchError("transport_objective: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += q.data()[i] * s.data()[i];
    return acc;
}

namespace {

// Union-find over the r+c node bipartite graph of a transportation instance.
struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

struct OracleSearch {
    std::size_t r, c;
    const DenseMatrix& s;
    const Marginal& row;
    const Marginal& col;

    std::vector<std::size_t> chosen;  // edge ids: edge e = i*c + j
    bool found_any = false;
    double best_objective = -std::numeric_limits<double>::infinity();
    DenseMatrix best_plan;

    static constexpr double kFeasTol = 1e-12;
    static constexpr double kObjTieTol = 1e-9;
    static constexpr double kLexTol = 1e-12;

    OracleSearch(const DenseMatrix& s_, const Marginal& row_, const Marginal& col_)
        : r(s_.rows()), c(s_.cols()), s(s_), row(row_), col(col_), best_plan(r, c, 0.0) {}

    // Solves the unique flow on a spanning tree by leaf elimination; returns
    // false when some flow is negative (infeasible vertex).
    bool solve_tree(DenseMatrix& plan) {
        const std::size_t n = r + c;
        std::vector<double> supply(n);
        for (std::size_t i = 0; i < r; ++i) supply[i] = row[i];
        for (std::size_t j = 0; j < c; ++j) supply[r + j] = -col[j];

        std::vector<std::vector<std::size_t>> incident(n);
        for (std::size_t e : chosen) {
            const std::size_t i = e / c;
            const std::size_t j = e % c;
            incident[i].push_back(e);
            incident[r + j].push_back(e);
        }
        std::vector<std::size_t> degree(n);
        for (std::size_t x = 0; x < n; ++x) degree[x] = incident[x].size();
        std::vector<bool> edge_done(r * c, false);
        std::vector<std::size_t> leaves;
        for (std::size_t x = 0; x < n; ++x) {
            if (degree[x] == 1) leaves.push_back(x);
        }

        for (std::size_t i = 0; i < plan.rows(); ++i) {
            for (std::size_t j = 0; j < plan.cols(); ++j) plan(i, j) = 0.0;
        }
        std::size_t processed = 0;
        while (!leaves.empty()) {
            const std::size_t x = leaves.back();
            leaves.pop_back();
            std::size_t edge = r * c;
            for (std::size_t e : incident[x]) {
                if (!edge_done[e]) {
                    edge = e;
                    break;
                }
            }
            if (edge == r * c) continue;  // last node of the tree
            const std::size_t i = edge / c;
            const std::size_t j = edge % c;
            const std::size_t other = (x == i) ? r + j : i;
            // Flow on the leaf edge equals the leaf's residual supply, signed
            // from the row side.
            const double flow = (x == i) ? supply[i] : -supply[r + j];
            if (flow < -kFeasTol) return false;
            plan(i, j) = std::max(flow, 0.0);
            supply[x] = 0.0;
            if (other < r) {
                supply[other] -= plan(i, j);
            } else {
                supply[other] += plan(i, j);
            }
            edge_done[edge] = true;
            ++processed;
            if (--degree[other] == 1) leaves.push_back(other);
            degree[x] = 0;
        }
        return processed == chosen.size();
    }

    bool lex_smaller(const DenseMatrix& a, const DenseMatrix& b) const {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double da = a.data()[i];
            const double db = b.data()[i];
            if (da < db - kLexTol) return true;
            if (da > db + kLexTol) return false;
        }
        return false;
    }

    void consider() {
        DenseMatrix plan(r, c, 0.0);
        if (!solve_tree(plan)) return;
        const double obj = transport_objective(plan, s);
        if (!found_any || obj > best_objective + kObjTieTol) {
            found_any = true;
            best_objective = obj;
            best_plan = plan;
        } else if (obj >= best_objective - kObjTieTol && lex_smaller(plan, best_plan)) {
            best_plan = plan;
            best_objective = std::max(best_objective, obj);
        }
    }

    // Enumerates all spanning trees as acyclic (r + c - 1)-edge subsets; the
    // union-find prunes cyclic branches early.
    void enumerate(std::size_t next_edge, DisjointSet dsu) {
        const std::size_t need = r + c - 1;
        if (chosen.size() == need) {
            consider();
            return;
        }
        const std::size_t total = r * c;
        if (total - next_edge < need - chosen.size()) return;
        for (std::size_t e = next_edge; e < total; ++e) {
            DisjointSet child = dsu;
            if (!child.unite(e / c, r + e % c)) continue;
            chosen.push_back(e);
            enumerate(e + 1, std::move(child));
            chosen.pop_back();
        }
    }
};

}  // namespace

ExactOtResult exact_ot_oracle(const DenseMatrix& s, const Marginal& row, const Marginal& col) {
    if (s.rows() > 5 || s.cols() > 5) {
        throw TooLargeError("exact_ot_oracle: instances are limited to 5x5");
    }
    check_instance(s, row, col);
    OracleSearch search(s, row, col);
    search.enumerate(0, DisjointSet(s.rows() + s.cols()));
    if (!search.found_any) throw Error("exact_ot_oracle: no feasible vertex found");
    return ExactOtResult{std::move(search.best_plan), search.best_objective};
}

}  // namespace protoot
