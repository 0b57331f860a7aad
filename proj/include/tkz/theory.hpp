#pragma once

#include "tkz/sampling.hpp"
#include "tkz/spectral.hpp"

namespace tkz {

/// Spectral constants of the expected projectors that drive the convergence
/// bounds. alpha rates live in [0, 1]; the min fields hold the ratio
/// min(a/b, b/a) used by the geometric-series bounds and are zero (with
/// `degenerate_rates` set) when either rate vanishes.
struct ConvergenceConstants {
    double alpha_U = 0.0, alpha_V = 0.0, beta_U = 0.0;
    double alpha_max = 0.0, alpha_min = 0.0;
    double phi_max = 0.0, phi_min = 0.0;
    double theta_U = 0.0, theta_V = 0.0;
    double sigma_max_bcirc_U = 0.0, sigma_max_bcirc_V = 0.0;
    bool enumeration_exact = true;
    bool degenerate_rates = false;
    /// Full column rank of bcirc(U): the computable proxy for the theorems'
    /// unique-minimizer requirement on the outer system.
    bool outer_unique_minimizer = false;
};

/// Evaluates every constant for the given factors and block families.
/// `column_weights` is the l_t distribution of the extended solvers (uniform
/// when empty), keeping beta_U aligned with the solver configuration.
ConvergenceConstants compute_constants(const Tensor3& u, const Tensor3& v,
                                       const BlockSet& blocks_u, const BlockSet& blocks_v,
                                       const std::vector<double>& column_weights = {},
                                       const ExpectationOptions& opts = {});

/// Single-factor variant (TBRK / TBREK on U alone): alpha_V, theta_V and the
/// V spectrum are left zero.
ConvergenceConstants compute_constants_single(const Tensor3& u, const BlockSet& blocks_u,
                                              const std::vector<double>& column_weights = {},
                                              const ExpectationOptions& opts = {});

/// Expected-error bound for the interlaced solver on a consistent system at
/// iteration t. The geometric-series branch applies when alpha_U and alpha_V
/// are both nonzero and differ by more than 1e-12 relative; the t * a^t
/// branch covers equality (it dominates near the crossover).
double bound_factbrk(Index t, const ConvergenceConstants& k, double norm_xdag);

/// Expected-error bound for the extended interlaced solver; requires
/// alpha_V != 0 (throws ConfigError toward the exact-projection case).
double bound_factbrek(Index t, const ConvergenceConstants& k, double norm_xdag);

/// Expected-error bound for TBREK on a single-factor least-squares system.
double bound_tbrek(Index t, const ConvergenceConstants& k, double norm_xdag);

/// Fixed point of the TBRK one-step recursion on a system perturbed by E:
/// additive term / (1 - alpha_U), the asymptotic plateau of the expected
/// squared error. Returns +inf when alpha_U reaches 1.
double horizon_tbrk(const ConvergenceConstants& k, const Tensor3& u, const BlockSet& blocks,
                    const Tensor3& e, Index enum_limit = 10'000);

} // namespace tkz
