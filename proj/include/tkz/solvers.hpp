#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tkz/sampling.hpp"
#include "tkz/spectral.hpp"
#include "tkz/tensor.hpp"

namespace tkz {

struct SolverConfig {
    Index max_iters = 1000;
    std::uint64_t seed = 0;
    Index trace_every = 1;
    /// Reference solution for the relative-error trace. When absent the
    /// solver falls back to the system's cached reference, and failing that
    /// records the relative residual instead (flagged on the trace).
    std::optional<Tensor3> reference;
    std::optional<double> stop_tol;
    /// Warm starts for the X and Z iterates; zero (the algorithms' default)
    /// when absent. W always starts at the measurements.
    std::optional<Tensor3> x0;
    std::optional<Tensor3> z0;
    /// Deterministic row order instead of random sampling; unit tests only,
    /// carries none of the randomized guarantees.
    bool cyclic_debug = false;
    /// Optional weights over column indices for the extended solvers' l_t
    /// draw; uniform when empty.
    std::vector<double> column_weights;
};

struct TracePoint {
    Index t;
    double value;
};

struct SolveTrace {
    /// Primary channel: relative error |X_t - ref| / |ref| per traced
    /// iteration, or the relative residual when `metric_is_residual`.
    std::vector<TracePoint> iterations;
    bool metric_is_residual = false;

    /// Z iterate relative error vs the cached outer reference (factorized
    /// solvers only).
    std::vector<TracePoint> z_channel;
    /// |W_t - W_ref|_F for the extended solvers; W_ref is the measurement
    /// component orthogonal to the range when a reference exists, else 0.
    std::vector<TracePoint> w_channel;

    Tensor3 final_iterate;
    double residual_final = 0.0;
    Index iterations_run = 0;
    /// Sub-steps whose drawn block fell below the gram conditioning
    /// threshold and were skipped; only such blocks satisfy the
    /// invertibility assumption, so the draw restricts to them. Structurally
    /// zero slices still raise AssumptionViolation.
    Index skipped_steps = 0;
};

/// U * V * X = Y with cached references: Z_dag minimizes |U * Z - Y|_F and
/// X_dag is the least-norm solution of V * X = Z_dag.
struct FactorizedSystem {
    Tensor3 U, V, Y;
    std::optional<Tensor3> Z_dag, X_dag;

    double eps = 0.0;
    double y_perp_norm = 0.0;
    bool outer_consistent = true;
    bool inner_consistent = true;
    /// False for the experiment-table cases outside the theorems' regime.
    bool theory_holds = true;

    std::uint64_t seed = 0;
    std::string case_id;
    std::vector<Index> mu_menu, nu_menu;

    Index m() const { return U.rows(); }
    Index m1() const { return U.cols(); }
    Index n() const { return V.cols(); }
    Index l() const { return Y.cols(); }
    Index p() const { return U.depth(); }
};

/// Single-row tensor randomized Kaczmarz on A * X = B; rows drawn uniformly.
SolveTrace trk(const Tensor3& a, const Tensor3& b, const SolverConfig& cfg);

/// Block variant: projects onto the sampled block subsystem each iteration.
/// With singleton blocks it reproduces trk draw for draw under equal seeds.
SolveTrace tbrk(const Tensor3& u, const Tensor3& y, const BlockSet& blocks,
                const SolverConfig& cfg);

/// Extended block variant for inconsistent systems: a column-action W step
/// learns the measurement component orthogonal to the range, and the row
/// step solves against Y - W.
SolveTrace tbrek(const Tensor3& u, const Tensor3& y, const BlockSet& blocks,
                 const SolverConfig& cfg,
                 const std::optional<Tensor3>& w_reference = std::nullopt);

/// Interlaced solver for the factorized system: one outer Z step on (U, Y)
/// then one inner X step on (V, Z_t) per iteration.
SolveTrace factbrk(const FactorizedSystem& sys, const BlockSet& blocks_u,
                   const BlockSet& blocks_v, const SolverConfig& cfg);

/// Extended factorized solver: W column step on U, Z row step against
/// Y - W_t, X row step against Z_t.
SolveTrace factbrek(const FactorizedSystem& sys, const BlockSet& blocks_u,
                    const BlockSet& blocks_v, const SolverConfig& cfg);

/// The equivalent matricized system bcirc(U) bcirc(V) unfold(X) = unfold(Y)
/// wrapped as a depth-1 factorized system, references unfolded alongside.
/// Solve it with block sizes scaled by p to access the same amount of data
/// per iteration as the tensor path.
FactorizedSystem matricized_equivalents(const FactorizedSystem& sys,
                                        Index element_budget = kDefaultBcircBudget);

/// Relative residual |U * V * X - Y|_F / |Y|_F.
double factorized_residual(const FactorizedSystem& sys, const Tensor3& x);

// --- trace export --------------------------------------------------------

/// CSV with header `t,relative_error` (or `t,residual`), one row per traced
/// iteration, %.17g formatting.
void write_trace_csv(const SolveTrace& trace, const std::string& path);

/// Full metadata export: algorithm, seed, block sets, channels.
void write_trace_json(const SolveTrace& trace, const std::string& algorithm,
                      std::uint64_t seed, const std::string& blocks_desc,
                      const std::string& path);

} // namespace tkz
