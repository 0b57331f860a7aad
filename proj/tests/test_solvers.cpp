#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tkz/generators.hpp"
#include "tkz/solvers.hpp"
#include "tkz/spectral.hpp"
#include "tkz/theory.hpp"

using namespace tkz;

namespace {

Tensor3 gaussian(Index n1, Index n2, Index n3, SamplerState& rng) {
    return Tensor3::from_generator(n1, n2, n3,
                                   [&](Index, Index, Index) { return rng.normal(); });
}

Tensor3 diff(const Tensor3& a, const Tensor3& b) {
    return Tensor3::from_generator(a.rows(), a.cols(), a.depth(), [&](Index i, Index j, Index k) {
        return a(i, j, k) - b(i, j, k);
    });
}

bool traces_equal(const SolveTrace& a, const SolveTrace& b) {
    if (a.iterations.size() != b.iterations.size()) return false;
    for (std::size_t i = 0; i < a.iterations.size(); ++i)
        if (a.iterations[i].t != b.iterations[i].t ||
            a.iterations[i].value != b.iterations[i].value)
            return false;
    return true;
}

} // namespace

TEST_CASE("trk solves a one-row consistent system in a single step") {
    SamplerState rng(40);
    const Tensor3 a = gaussian(1, 3, 4, rng);
    const Tensor3 xgen = gaussian(3, 2, 4, rng);
    const Tensor3 b = tprod(a, xgen);
    SolverConfig cfg;
    cfg.max_iters = 1;
    cfg.reference = least_norm_lsq(a, b); // least-norm solution of the single row
    const SolveTrace tr = trk(a, b, cfg);
    CHECK(tr.iterations.back().value < 1e-10);
    CHECK(tr.residual_final < 1e-10);
}

TEST_CASE("trk with the identity tensor converges row by row under cyclic order") {
    SamplerState rng(41);
    const Index m = 4, p = 3;
    const Tensor3 a = identity_tensor(m, p);
    const Tensor3 b = gaussian(m, 2, p, rng);
    SolverConfig cfg;
    cfg.max_iters = m;
    cfg.cyclic_debug = true;
    cfg.reference = b; // identity system: solution is B itself
    const SolveTrace tr = trk(a, b, cfg);
    CHECK(tr.iterations.back().value < 1e-12); // all rows covered once each
}

TEST_CASE("trk reaches 1e-6 on the 40x10x7 Gaussian consistent system") {
    std::vector<double> finals;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SamplerState rng(900 + seed);
        const Tensor3 a = gaussian(40, 10, 7, rng);
        const Tensor3 xgen = gaussian(10, 5, 7, rng);
        const Tensor3 b = tprod(a, xgen);
        SolverConfig cfg;
        cfg.max_iters = 2000;
        cfg.seed = seed;
        cfg.trace_every = 100;
        cfg.reference = least_norm_lsq(a, b);
        finals.push_back(trk(a, b, cfg).iterations.back().value);
    }
    std::sort(finals.begin(), finals.end());
    const double median = (finals[4] + finals[5]) / 2.0;
    CHECK(median < 1e-6);
}

TEST_CASE("tbrk with the whole row set solves a consistent system in one iteration") {
    SamplerState rng(42);
    const Tensor3 u = gaussian(3, 5, 2, rng); // wide: whole-block gram invertible
    const Tensor3 xgen = gaussian(5, 2, 2, rng);
    const Tensor3 y = tprod(u, xgen);
    BlockSet whole(3, ExplicitFamily{{{0, 1, 2}}});
    SolverConfig cfg;
    cfg.max_iters = 1;
    cfg.reference = least_norm_lsq(u, y);
    const SolveTrace tr = tbrk(u, y, whole, cfg);
    CHECK(tr.iterations.back().value < 1e-10);
}

TEST_CASE("tbrk with singleton blocks reproduces trk draw for draw") {
    SamplerState rng(43);
    const Tensor3 u = gaussian(6, 3, 3, rng);
    const Tensor3 y = tprod(u, gaussian(3, 2, 3, rng));
    SolverConfig cfg;
    cfg.max_iters = 40;
    cfg.seed = 77;
    cfg.reference = least_norm_lsq(u, y);
    const SolveTrace a = trk(u, y, cfg);
    const SolveTrace b = tbrk(u, y, make_all_of_size(6, 1), cfg);
    CHECK(traces_equal(a, b));
    // explicit singleton family in index order also matches
    const SolveTrace c = tbrk(u, y, make_singletons(6), cfg);
    CHECK(traces_equal(a, c));
}

TEST_CASE("tbrk per-step error follows the projector complement exactly") {
    SamplerState rng(44);
    const Tensor3 u = gaussian(5, 3, 2, rng);
    const Tensor3 xdag = gaussian(3, 2, 2, rng);
    const Tensor3 y = tprod(u, xdag);
    SolverConfig cfg;
    cfg.max_iters = 1;
    cfg.cyclic_debug = true; // first step projects onto row block {0}
    cfg.reference = xdag;
    const SolveTrace tr = tbrk(u, y, make_singletons(5), cfg);
    const Tensor3 x1 = tr.final_iterate;
    // oracle: X1 - Xdag = (I - P_{U_0})(X0 - Xdag) with X0 = 0
    const Tensor3 e0 = diff(Tensor3(3, 2, 2), xdag);
    const Tensor3 pe0 = projector_apply(row_slice(u, {0}), e0);
    const Tensor3 expect = diff(e0, pe0);
    CHECK(fro_norm(diff(diff(x1, xdag), expect)) < 1e-9 * std::max(1.0, fro_norm(expect)));
    // and the step never increases the error on a consistent system
    CHECK(fro_norm(diff(x1, xdag)) <= fro_norm(e0) * (1.0 + 1e-9));
}

TEST_CASE("tbrk plateau on a perturbed system stays under the horizon fixed point") {
    SamplerState rng(45);
    const Tensor3 u = gaussian(8, 4, 3, rng);
    const Tensor3 xdag = gaussian(4, 2, 3, rng);
    const Tensor3 y = tprod(u, xdag);
    const Tensor3 e = Tensor3::from_generator(8, 2, 3, [&](Index, Index, Index) {
        return 0.01 * rng.normal();
    });
    const Tensor3 y_pert = Tensor3::from_generator(
        8, 2, 3, [&](Index i, Index j, Index k) { return y(i, j, k) + e(i, j, k); });

    const BlockSet blocks = make_all_of_size(8, 2);
    const ConvergenceConstants k = compute_constants_single(u, blocks);
    const double horizon = horizon_tbrk(k, u, blocks, e);
    CHECK(horizon > 0.0);

    double mean_sq = 0.0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        SolverConfig cfg;
        cfg.max_iters = 400;
        cfg.seed = static_cast<std::uint64_t>(trial);
        cfg.trace_every = 400;
        cfg.reference = xdag;
        const SolveTrace tr = tbrk(u, y_pert, blocks, cfg);
        const double abs_err = tr.iterations.back().value * fro_norm(xdag);
        mean_sq += abs_err * abs_err;
    }
    mean_sq /= trials;
    CHECK(mean_sq <= horizon);
}

TEST_CASE("tbrek") {
    SamplerState rng(46);
    const Tensor3 u = gaussian(8, 4, 3, rng);

    SUBCASE("consistent system: W vanishes and X converges") {
        const Tensor3 xdag = gaussian(4, 2, 3, rng);
        const Tensor3 y = tprod(u, xdag);
        SolverConfig cfg;
        cfg.max_iters = 3000;
        cfg.seed = 5;
        cfg.trace_every = 100;
        cfg.reference = xdag;
        const SolveTrace tr = tbrek(u, y, make_all_of_size(8, 2), cfg);
        CHECK(tr.iterations.back().value < 1e-6);
        CHECK(tr.w_channel.back().value < 1e-6 * fro_norm(y));
    }

    SUBCASE("inconsistent system converges to the least-squares minimizer") {
        const FactorizedSystem sys = gen_inconsistent(8, 4, 4, 2, 3, 11, 1e-2);
        // single-factor view: solve U Z = Y for Z_dag
        SolverConfig cfg;
        cfg.max_iters = 4000;
        cfg.seed = 3;
        cfg.trace_every = 100;
        cfg.reference = sys.Z_dag;
        const SolveTrace tr = tbrek(sys.U, sys.Y, make_all_of_size(8, 2), cfg);
        CHECK(tr.iterations.back().value < 1e-4);
    }

    SUBCASE("W contraction ratio stays below beta_U on average") {
        // square U: the column projectors span everything, so beta_U < 1
        // strictly and Y_perp = 0
        SamplerState rng2(55);
        const Tensor3 us = gaussian(4, 4, 2, rng2);
        const Tensor3 y = gaussian(4, 2, 2, rng2);
        const BlockSet blocks = make_all_of_size(4, 2);
        const ConvergenceConstants k = compute_constants_single(us, blocks);
        REQUIRE(k.beta_U < 1.0);
        REQUIRE(k.beta_U > 0.0);
        const Tensor3 w_ref(4, 2, 2); // invertible system: nothing off the range
        const int trials = 100, steps = 12;
        std::vector<double> mean_sq(steps + 1, 0.0);
        for (int trial = 0; trial < trials; ++trial) {
            SolverConfig cfg;
            cfg.max_iters = steps;
            cfg.seed = 1000 + static_cast<std::uint64_t>(trial);
            cfg.reference = least_norm_lsq(us, y);
            const SolveTrace tr = tbrek(us, y, blocks, cfg, w_ref);
            REQUIRE(tr.w_channel.size() == static_cast<std::size_t>(steps + 1));
            for (int s = 0; s <= steps; ++s)
                mean_sq[static_cast<std::size_t>(s)] +=
                    tr.w_channel[static_cast<std::size_t>(s)].value *
                    tr.w_channel[static_cast<std::size_t>(s)].value / trials;
        }
        // E|W_t - Yperp|^2 <= beta_U * E|W_{t-1} - Yperp|^2, sampling slack 30%
        for (int s = 1; s <= steps; ++s)
            CHECK(mean_sq[static_cast<std::size_t>(s)] <=
                  k.beta_U * mean_sq[static_cast<std::size_t>(s - 1)] * (1.0 + 0.3) + 1e-15);
    }

    SUBCASE("tall U leaves beta_U at 1: the column projectors cannot span") {
        SamplerState rng2(56);
        const Tensor3 ut = gaussian(6, 3, 2, rng2);
        const ConvergenceConstants k = compute_constants_single(ut, make_all_of_size(6, 2));
        CHECK(k.beta_U == doctest::Approx(1.0));
    }

    SUBCASE("zero column makes the column gram singular") {
        Tensor3 u_bad = Tensor3::from_generator(4, 2, 2, [&](Index, Index j, Index) {
            return j == 1 ? 0.0 : 1.0;
        });
        const Tensor3 y = gaussian(4, 2, 2, rng);
        SolverConfig cfg;
        cfg.max_iters = 5;
        CHECK_THROWS_AS(tbrek(u_bad, y, make_singletons(4), cfg), AssumptionViolation);
    }
}

TEST_CASE("factbrk") {
    SUBCASE("V = identity with the whole inner block reduces to tbrk") {
        SamplerState rng(47);
        const Index m = 6, m1 = 3, l = 2, p = 2;
        FactorizedSystem sys;
        sys.U = gaussian(m, m1, p, rng);
        sys.V = identity_tensor(m1, p);
        sys.Y = tprod(sys.U, gaussian(m1, l, p, rng));
        sys.Z_dag = least_norm_lsq(sys.U, sys.Y);
        sys.X_dag = sys.Z_dag;
        BlockSet whole(m1, ExplicitFamily{{{0, 1, 2}}});
        SolverConfig cfg;
        cfg.max_iters = 50;
        cfg.seed = 9;
        cfg.reference = sys.X_dag;
        const SolveTrace fac = factbrk(sys, make_all_of_size(m, 1), whole, cfg);
        const SolveTrace plain = tbrk(sys.U, sys.Y, make_all_of_size(m, 1), cfg);
        CHECK(traces_equal(fac, plain));
    }

    SUBCASE("consistent system converges and larger outer blocks converge faster") {
        const FactorizedSystem sys = gen_consistent(20, 6, 4, 3, 3, 313);
        std::vector<double> finals;
        for (Index mu : {1, 3, 6}) {
            SolverConfig cfg;
            cfg.max_iters = 600;
            cfg.seed = 4;
            cfg.trace_every = 50;
            const SolveTrace tr =
                factbrk(sys, make_all_of_size(20, mu), make_all_of_size(6, 1), cfg);
            finals.push_back(tr.iterations.back().value);
            CHECK(tr.iterations.back().value < 1e-3);
        }
        CHECK(finals[2] <= finals[0] * (1.0 + 1e-9));
    }

    SUBCASE("inconsistent system stalls above 1e-3") {
        const FactorizedSystem sys = gen_inconsistent(40, 10, 5, 5, 7, 1, 1e-4);
        SolverConfig cfg;
        cfg.max_iters = 2000;
        cfg.seed = 2;
        cfg.trace_every = 200;
        const SolveTrace tr =
            factbrk(sys, make_all_of_size(40, 5), make_all_of_size(10, 1), cfg);
        CHECK(tr.iterations.back().value > 1e-3);
    }
}

TEST_CASE("factbrek") {
    SUBCASE("consistent: converges, but slower than factbrk") {
        const FactorizedSystem sys = gen_consistent(20, 6, 4, 3, 3, 99);
        SolverConfig cfg;
        cfg.max_iters = 800;
        cfg.seed = 8;
        cfg.trace_every = 80;
        const SolveTrace ext = factbrek(sys, make_all_of_size(20, 3), make_all_of_size(6, 1), cfg);
        const SolveTrace plain = factbrk(sys, make_all_of_size(20, 3), make_all_of_size(6, 1), cfg);
        CHECK(ext.iterations.back().value < 1e-2);
        CHECK(plain.iterations.back().value <= ext.iterations.back().value * (1.0 + 1e-9));
    }

    SUBCASE("inconsistent: converges to the least-norm solution") {
        const FactorizedSystem sys = gen_inconsistent(20, 6, 4, 3, 3, 100, 1e-4);
        SolverConfig cfg;
        cfg.max_iters = 2500;
        cfg.seed = 13;
        cfg.trace_every = 100;
        const SolveTrace tr =
            factbrek(sys, make_all_of_size(20, 3), make_all_of_size(6, 1), cfg);
        CHECK(tr.iterations.back().value < 1e-4);
    }

    SUBCASE("matched consistent/inconsistent traces nearly coincide") {
        const MatchedPair pair = gen_matched_pair(20, 6, 4, 3, 3, 101, 1e-4);
        SolverConfig cfg;
        cfg.max_iters = 1000;
        cfg.seed = 6;
        cfg.trace_every = 100;
        const SolveTrace c =
            factbrek(pair.consistent, make_all_of_size(20, 3), make_all_of_size(6, 1), cfg);
        const SolveTrace ic =
            factbrek(pair.inconsistent, make_all_of_size(20, 3), make_all_of_size(6, 1), cfg);
        REQUIRE(c.iterations.size() == ic.iterations.size());
        for (std::size_t i = 1; i < c.iterations.size(); ++i) {
            const double a = c.iterations[i].value, b = ic.iterations[i].value;
            CHECK(std::abs(a - b) <= 0.5 * std::max({a, b, 1e-4}));
        }
    }
}

TEST_CASE("solver invariants") {
    SUBCASE("seeded determinism is bitwise") {
        const FactorizedSystem sys = gen_consistent(10, 4, 3, 2, 3, 55);
        SolverConfig cfg;
        cfg.max_iters = 100;
        cfg.seed = 123;
        const SolveTrace a = factbrk(sys, make_all_of_size(10, 2), make_all_of_size(4, 1), cfg);
        const SolveTrace b = factbrk(sys, make_all_of_size(10, 2), make_all_of_size(4, 1), cfg);
        CHECK(traces_equal(a, b));
        for (std::size_t i = 0; i < a.final_iterate.data().size(); ++i)
            CHECK(a.final_iterate.data()[i] == b.final_iterate.data()[i]);
    }

    SUBCASE("consistency fixpoint: starting at the solution stays there") {
        const FactorizedSystem sys = gen_consistent(10, 4, 3, 2, 3, 56);
        SolverConfig cfg;
        cfg.max_iters = 200;
        cfg.seed = 7;
        cfg.trace_every = 20;
        cfg.x0 = sys.X_dag;
        cfg.z0 = sys.Z_dag; // both iterates at their fixed points
        const SolveTrace tr = factbrk(sys, make_all_of_size(10, 2), make_all_of_size(4, 1), cfg);
        for (const auto& pt : tr.iterations) CHECK(pt.value < 1e-10);
        // single-factor variant needs only x0
        SolverConfig cfg2;
        cfg2.max_iters = 100;
        cfg2.seed = 8;
        cfg2.trace_every = 10;
        cfg2.x0 = sys.Z_dag;
        cfg2.reference = sys.Z_dag;
        const SolveTrace tr2 = tbrk(sys.U, sys.Y, make_all_of_size(10, 2), cfg2);
        for (const auto& pt : tr2.iterations) CHECK(pt.value < 1e-10);
    }

    SUBCASE("mean squared error is nonincreasing on a consistent system") {
        SamplerState rng(48);
        const Tensor3 u = gaussian(6, 3, 2, rng);
        const Tensor3 xdag = gaussian(3, 2, 2, rng);
        const Tensor3 y = tprod(u, xdag);
        const int trials = 120, steps = 25;
        std::vector<double> mean_sq(steps + 1, 0.0);
        for (int trial = 0; trial < trials; ++trial) {
            SolverConfig cfg;
            cfg.max_iters = steps;
            cfg.seed = static_cast<std::uint64_t>(trial) * 31 + 1;
            cfg.reference = xdag;
            const SolveTrace tr = tbrk(u, y, make_singletons(6), cfg);
            for (int s = 0; s <= steps; ++s)
                mean_sq[static_cast<std::size_t>(s)] +=
                    tr.iterations[static_cast<std::size_t>(s)].value *
                    tr.iterations[static_cast<std::size_t>(s)].value / trials;
        }
        for (int s = 1; s <= steps; ++s)
            CHECK(mean_sq[static_cast<std::size_t>(s)] <=
                  mean_sq[static_cast<std::size_t>(s - 1)] + 1e-12);
    }

    SUBCASE("stop_tol halts early") {
        const FactorizedSystem sys = gen_consistent(10, 4, 3, 2, 3, 57);
        SolverConfig cfg;
        cfg.max_iters = 100000;
        cfg.seed = 1;
        cfg.trace_every = 10;
        cfg.stop_tol = 1e-6;
        const SolveTrace tr = factbrk(sys, make_all_of_size(10, 2), make_all_of_size(4, 1), cfg);
        CHECK(tr.iterations_run < 100000);
        CHECK(tr.iterations.back().value <= 1e-6);
    }

    SUBCASE("config validation") {
        const FactorizedSystem sys = gen_consistent(6, 3, 2, 2, 2, 58);
        SolverConfig bad;
        bad.max_iters = 0;
        CHECK_THROWS_AS(factbrk(sys, make_all_of_size(6, 1), make_all_of_size(3, 1), bad),
                        ConfigError);
        SolverConfig cfg;
        cfg.max_iters = 1;
        CHECK_THROWS_AS(factbrk(sys, make_all_of_size(5, 1), make_all_of_size(3, 1), cfg),
                        ShapeError);
        // blocks wider than the host width violate the invertibility assumption
        CHECK_THROWS_AS(factbrk(sys, make_all_of_size(6, 4), make_all_of_size(3, 1), cfg),
                        AssumptionViolation);
    }
}

TEST_CASE("matricized equivalents") {
    const FactorizedSystem sys = gen_consistent(10, 4, 3, 2, 3, 60);
    const FactorizedSystem mat = matricized_equivalents(sys);
    CHECK(mat.p() == 1);
    CHECK(mat.m() == 30);
    CHECK(mat.m1() == 12);

    SUBCASE("references agree after unfold") {
        const Tensor3 x_mat = least_norm_lsq(mat.V, *mat.Z_dag);
        const Eigen::MatrixXd lhs = unfold(*sys.X_dag);
        const Eigen::MatrixXd rhs = unfold(x_mat); // p = 1: unfold is the slice itself
        CHECK((lhs - rhs).norm() < 1e-9 * std::max(1.0, lhs.norm()));
    }

    SUBCASE("p = 1 wrap is the identity transformation") {
        const FactorizedSystem flat = gen_consistent(5, 3, 2, 2, 1, 61);
        const FactorizedSystem again = matricized_equivalents(flat);
        CHECK(fro_norm(diff(again.U, flat.U)) == 0.0);
        CHECK(fro_norm(diff(again.Y, flat.Y)) == 0.0);
    }

    SUBCASE("both paths converge with p-scaled blocks") {
        SolverConfig cfg;
        cfg.max_iters = 800;
        cfg.seed = 14;
        cfg.trace_every = 100;
        const SolveTrace tensor_tr =
            factbrk(sys, make_all_of_size(10, 2), make_all_of_size(4, 1), cfg);
        const SolveTrace mat_tr =
            factbrk(mat, make_all_of_size(30, 6), make_all_of_size(12, 3), cfg);
        CHECK(tensor_tr.iterations.back().value < 1e-3);
        CHECK(mat_tr.iterations.back().value < 1e-3);
    }

    SUBCASE("element budget is enforced") {
        CHECK_THROWS_AS(matricized_equivalents(sys, /*element_budget=*/10), ConfigError);
    }
}

TEST_CASE("trace export") {
    const FactorizedSystem sys = gen_consistent(6, 3, 2, 2, 2, 62);
    SolverConfig cfg;
    cfg.max_iters = 20;
    cfg.seed = 3;
    const SolveTrace tr = factbrk(sys, make_all_of_size(6, 1), make_all_of_size(3, 1), cfg);
    const auto dir = std::filesystem::temp_directory_path() / "tkz_trace_test";
    std::filesystem::create_directories(dir);
    const std::string csv = (dir / "t.csv").string();
    write_trace_csv(tr, csv);
    std::ifstream is(csv);
    std::string header;
    std::getline(is, header);
    CHECK(header == "t,relative_error");
    std::string first;
    std::getline(is, first);
    CHECK(first.substr(0, 2) == "0,");
    write_trace_json(tr, "factbrk", cfg.seed, "all-subsets(k=1)", (dir / "t.json").string());
    CHECK(std::filesystem::exists(dir / "t.json"));
    std::filesystem::remove_all(dir);
}
