#include <doctest.h>

#include <cmath>

#include "tkz/generators.hpp"
#include "tkz/solvers.hpp"
#include "tkz/theory.hpp"

using namespace tkz;

namespace {

Tensor3 gaussian(Index n1, Index n2, Index n3, std::uint64_t seed) {
    SamplerState rng(seed);
    return Tensor3::from_generator(n1, n2, n3,
                                   [&](Index, Index, Index) { return rng.normal(); });
}

} // namespace

TEST_CASE("compute_constants basics") {
    SUBCASE("identity tensor with singleton blocks: alpha = 1 - 1/m") {
        const Index m = 4, p = 1;
        const Tensor3 id = identity_tensor(m, p);
        const ConvergenceConstants k =
            compute_constants_single(id, make_singletons(m));
        CHECK(k.alpha_U == doctest::Approx(1.0 - 1.0 / m).epsilon(1e-12));
        // dense enumeration oracle: mean of coordinate projectors is I/m
        CHECK(k.theta_U == doctest::Approx(static_cast<double>(p))); // d=1, sigma_min+ = 1
        CHECK(k.beta_U == doctest::Approx(1.0 - 1.0 / m).epsilon(1e-12));
    }
    SUBCASE("whole-row single block on a square invertible tensor: alpha = 0") {
        const Tensor3 u = gaussian(4, 4, 2, 5);
        BlockSet whole(4, ExplicitFamily{{{0, 1, 2, 3}}});
        const ConvergenceConstants k = compute_constants_single(u, whole);
        CHECK(k.alpha_U < 1e-9);
    }
    SUBCASE("sigma-weighted theta matches the closed formula") {
        const Tensor3 v = gaussian(3, 2, 2, 6);
        BlockSet bs(3, ExplicitFamily{{{0, 1}, {1, 2}}});
        const auto w = sigma_min_plus_sq_weights(bs, v);
        BlockSet weighted = bs;
        weighted.set_sigma_weights(w);
        const Tensor3 u = gaussian(5, 3, 2, 7);
        const ConvergenceConstants k =
            compute_constants(u, v, make_all_of_size(5, 2), weighted);
        CHECK(k.theta_V == doctest::Approx(2.0 * 2.0 * 2.0 / (w[0] + w[1])).epsilon(1e-9));
        CHECK(k.enumeration_exact);
    }
    SUBCASE("derived fields") {
        const FactorizedSystem sys = gen_consistent(8, 4, 3, 2, 3, 1);
        const ConvergenceConstants k = compute_constants(
            sys.U, sys.V, make_all_of_size(8, 2), make_all_of_size(4, 1));
        CHECK(k.alpha_U >= 0.0);
        CHECK(k.alpha_U <= 1.0);
        CHECK(k.alpha_V >= 0.0);
        CHECK(k.beta_U <= 1.0);
        CHECK(k.alpha_max == std::max(k.alpha_U, k.alpha_V));
        CHECK(k.alpha_min ==
              doctest::Approx(std::min(k.alpha_U / k.alpha_V, k.alpha_V / k.alpha_U)));
        CHECK(k.phi_max == std::max(k.alpha_U, k.beta_U));
        CHECK(k.outer_unique_minimizer);
        CHECK(k.sigma_max_bcirc_U == doctest::Approx(spectrum(sys.U).sigma_max));
    }
}

TEST_CASE("bound_factbrk") {
    const FactorizedSystem sys = gen_consistent(8, 4, 3, 2, 3, 2);
    const ConvergenceConstants k =
        compute_constants(sys.U, sys.V, make_all_of_size(8, 2), make_all_of_size(4, 1));
    const double nx = fro_norm(*sys.X_dag);

    SUBCASE("t = 0 bound covers the zero start") {
        CHECK(bound_factbrk(0, k, nx) >= nx * nx * (1.0 - 1e-12));
    }
    SUBCASE("both branches stay finite near rate equality") {
        ConvergenceConstants kk = k;
        kk.alpha_V = kk.alpha_U * (1.0 + 1e-6);
        kk.alpha_max = std::max(kk.alpha_U, kk.alpha_V);
        kk.alpha_min = std::min(kk.alpha_U / kk.alpha_V, kk.alpha_V / kk.alpha_U);
        CHECK(std::isfinite(bound_factbrk(10, kk, nx)));
        kk.alpha_V = kk.alpha_U;
        kk.alpha_min = 1.0;
        kk.alpha_max = kk.alpha_U;
        CHECK(std::isfinite(bound_factbrk(10, kk, nx)));
    }
    SUBCASE("remark: V = I with the whole inner block gives m1 p t alpha_U^t") {
        const Index m1 = 4, p = 3;
        FactorizedSystem sys2;
        sys2.U = sys.U;
        sys2.V = identity_tensor(m1, p);
        BlockSet whole(m1, ExplicitFamily{{{0, 1, 2, 3}}});
        const ConvergenceConstants kk =
            compute_constants(sys2.U, sys2.V, make_all_of_size(8, 1), whole);
        CHECK(kk.alpha_V == doctest::Approx(0.0));
        CHECK(kk.theta_V == doctest::Approx(static_cast<double>(m1 * p)));
        CHECK(kk.sigma_max_bcirc_V == doctest::Approx(1.0));
        for (Index t : {1, 5, 9}) {
            const double expect = static_cast<double>(m1 * p) * static_cast<double>(t) *
                                  std::pow(kk.alpha_U, static_cast<double>(t));
            CHECK(bound_factbrk(t, kk, 1.0) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("bound_factbrek") {
    const FactorizedSystem sys = gen_inconsistent(8, 4, 3, 2, 3, 3, 1e-4);
    const ConvergenceConstants k =
        compute_constants(sys.U, sys.V, make_all_of_size(8, 2), make_all_of_size(4, 1));
    const double nx = fro_norm(*sys.X_dag);

    SUBCASE("finite at t = 0") {
        const double b = bound_factbrek(0, k, nx);
        CHECK(std::isfinite(b));
        CHECK(b >= nx * nx);
    }
    SUBCASE("alpha_V = 0 is rejected toward the degenerate case") {
        ConvergenceConstants kk = k;
        kk.alpha_V = 0.0;
        CHECK_THROWS_AS(bound_factbrek(5, kk, nx), ConfigError);
    }
    SUBCASE("eventually nonincreasing in t") {
        // once the decay dominates the (t+1) factor the bound must shrink
        double prev = bound_factbrek(60, k, nx);
        bool decreasing = true;
        for (Index t = 62; t <= 120; t += 2) {
            const double cur = bound_factbrek(t, k, nx);
            if (cur > prev * (1.0 + 1e-12)) decreasing = false;
            prev = cur;
        }
        CHECK(decreasing);
    }
}

TEST_CASE("bound_tbrek") {
    const FactorizedSystem sys = gen_inconsistent(8, 4, 3, 2, 3, 4, 1e-4);
    const BlockSet blocks = make_all_of_size(8, 2);
    const ConvergenceConstants k = compute_constants_single(sys.U, blocks);
    const double nx = fro_norm(*sys.Z_dag); // single-factor solution is Z_dag

    SUBCASE("phi_min = 0 collapses the bound to alpha_U^t") {
        ConvergenceConstants kk = k;
        kk.beta_U = 0.0;
        kk.phi_min = 0.0;
        kk.phi_max = kk.alpha_U;
        for (Index t : {1, 4, 9})
            CHECK(bound_tbrek(t, kk, nx) ==
                  doctest::Approx(std::pow(kk.alpha_U, static_cast<double>(t)) * nx * nx));
    }
    SUBCASE("equal rates use the t phi_max^t factor") {
        ConvergenceConstants kk = k;
        kk.beta_U = kk.alpha_U;
        kk.phi_min = 1.0;
        kk.phi_max = kk.alpha_U;
        const Index t = 7;
        const double su2 = kk.sigma_max_bcirc_U * kk.sigma_max_bcirc_U;
        const double expect =
            (std::pow(kk.alpha_U, 7.0) + kk.theta_U * 7.0 * std::pow(kk.phi_max, 7.0) * su2) *
            nx * nx;
        CHECK(bound_tbrek(t, kk, nx) == doctest::Approx(expect));
    }
}

TEST_CASE("horizon_tbrk") {
    const Tensor3 u = gaussian(8, 4, 3, 10);
    const BlockSet blocks = make_all_of_size(8, 2);
    const ConvergenceConstants k = compute_constants_single(u, blocks);

    SUBCASE("zero perturbation gives zero horizon") {
        CHECK(horizon_tbrk(k, u, blocks, Tensor3(8, 2, 3)) == 0.0);
    }
    SUBCASE("horizon scales quadratically in the perturbation") {
        const Tensor3 e = gaussian(8, 2, 3, 11);
        const Tensor3 e2 = Tensor3::from_generator(
            8, 2, 3, [&](Index i, Index j, Index kk) { return 2.0 * e(i, j, kk); });
        const double h1 = horizon_tbrk(k, u, blocks, e);
        const double h2 = horizon_tbrk(k, u, blocks, e2);
        CHECK(h2 == doctest::Approx(4.0 * h1).epsilon(1e-12));
    }
    SUBCASE("alpha_U = 1 reports an infinite horizon") {
        ConvergenceConstants kk = k;
        kk.alpha_U = 1.0;
        CHECK(std::isinf(horizon_tbrk(kk, u, blocks, gaussian(8, 2, 3, 12))));
    }
}

TEST_CASE("alpha weakly decreases with block size for nested uniform families") {
    const Tensor3 u = gaussian(8, 6, 2, 13);
    double prev = 2.0;
    for (Index size : {1, 2, 4}) {
        const ConvergenceConstants k = compute_constants_single(u, make_all_of_size(8, size));
        CHECK(k.alpha_U <= prev + 1e-9);
        prev = k.alpha_U;
    }
}

TEST_CASE("empirical bound domination on a small system") {
    // compact version of the acceptance protocol: 60 trials, few checkpoints
    const MatchedPair pair = gen_matched_pair(8, 4, 3, 2, 3, 20, 1e-4);
    const BlockSet bu = make_all_of_size(8, 2);
    const BlockSet bv = make_all_of_size(4, 1);
    const ConvergenceConstants k = compute_constants(pair.consistent.U, pair.consistent.V, bu, bv);
    REQUIRE(k.enumeration_exact);
    const double nx = fro_norm(*pair.consistent.X_dag);

    const int trials = 60;
    const std::vector<Index> checkpoints = {1, 5, 10};
    std::vector<double> mean_sq(checkpoints.size(), 0.0);
    for (int trial = 0; trial < trials; ++trial) {
        SolverConfig cfg;
        cfg.max_iters = checkpoints.back();
        cfg.seed = 300 + static_cast<std::uint64_t>(trial);
        const SolveTrace tr = factbrk(pair.consistent, bu, bv, cfg);
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            const double abs_err =
                tr.iterations[static_cast<std::size_t>(checkpoints[c])].value * nx;
            mean_sq[c] += abs_err * abs_err / trials;
        }
    }
    for (std::size_t c = 0; c < checkpoints.size(); ++c)
        CHECK(mean_sq[c] <= bound_factbrk(checkpoints[c], k, nx) * (1.0 + 0.5));
}
