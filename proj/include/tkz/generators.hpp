#pragma once

#include <string>

#include "tkz/solvers.hpp"

namespace tkz {

/// System generation failed its verification step (non-orthogonal
/// perturbation, vanishing Y-perp, ...).
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Consistent factorized system: U, V, X_gen standard normal (drawn in that
/// order, entries row-major), Y = U * V * X_gen. References cached:
/// Z_dag = least_norm_lsq(U, Y), X_dag = least_norm_lsq(V, Z_dag).
FactorizedSystem gen_consistent(Index m, Index m1, Index n, Index l, Index p,
                                std::uint64_t seed);

/// Inconsistent variant: Y = U * V * X_gen + eps * Y_perp where Y_perp is a
/// fresh Gaussian draw projected off the range of U. With eps = 0 this is
/// gen_consistent for matched seeds (U, V, X_gen come from the same draws).
FactorizedSystem gen_inconsistent(Index m, Index m1, Index n, Index l, Index p,
                                  std::uint64_t seed, double eps = 1e-4);

/// Matched pair sharing U, V and X_gen, one generator call emitting both.
struct MatchedPair {
    FactorizedSystem consistent;
    FactorizedSystem inconsistent;
};
MatchedPair gen_matched_pair(Index m, Index m1, Index n, Index l, Index p,
                             std::uint64_t seed, double eps = 1e-4);

/// Experiment-table case: X is 20 x 10 x 30 throughout, A = U * V is
/// 10 x 20 x 30 (cases 1a/1b/1c) or 30 x 20 x 30 (cases 2a/2b/2c), with the
/// inner dimension r and block-size menus from the table. Cases 1b, 1c and
/// 2c fall outside the convergence theory and carry theory_holds = false.
FactorizedSystem gen_case(const std::string& case_id, std::uint64_t seed);

/// The known case ids, in table order.
const std::vector<std::string>& experiment_case_ids();

/// Directory layout: U.t3d, V.t3d, Y.t3d, Z_dag.t3d, X_dag.t3d and a
/// manifest.json with dims, seed, eps, reference norms and flags.
void save_system(const FactorizedSystem& sys, const std::string& dir);
FactorizedSystem load_system(const std::string& dir);

} // namespace tkz
