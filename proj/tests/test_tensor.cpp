#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tkz/rng.hpp"
#include "tkz/tensor.hpp"

using namespace tkz;

namespace {

Tensor3 random_tensor(Index n1, Index n2, Index n3, SamplerState& rng) {
    return Tensor3::from_generator(n1, n2, n3,
                                   [&](Index, Index, Index) { return rng.normal(); });
}

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
    REQUIRE(a.same_dims(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

} // namespace

TEST_CASE("constructor validates size and finiteness") {
    CHECK_THROWS_AS(Tensor3(2, 2, 2, std::vector<double>(7, 0.0)), ShapeError);
    std::vector<double> bad(8, 0.0);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(Tensor3(2, 2, 2, std::move(bad)), InternalError);
    std::vector<double> inf(8, 0.0);
    inf[0] = INFINITY;
    CHECK_THROWS_AS(Tensor3(2, 2, 2, std::move(inf)), InternalError);
}

TEST_CASE("unfold stacks frontal slices, degenerate depth unchanged") {
    SamplerState rng(11);
    const Tensor3 a = random_tensor(3, 4, 1, rng);
    const auto u = unfold(a);
    CHECK(u.rows() == 3);
    CHECK((u - a.frontal_slice(0)).norm() == 0.0);

    // 2x2x2 with explicit slices: unfold is [S1; S2]
    const Tensor3 b = Tensor3::from_frontal_slices(
        {(Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished(),
         (Eigen::MatrixXd(2, 2) << 5, 6, 7, 8).finished()});
    const auto ub = unfold(b);
    CHECK(ub.rows() == 4);
    CHECK(ub(0, 0) == 1);
    CHECK(ub(1, 1) == 4);
    CHECK(ub(2, 0) == 5);
    CHECK(ub(3, 1) == 8);
}

TEST_CASE("fold inverts unfold exactly") {
    SamplerState rng(12);
    const Tensor3 b = random_tensor(3, 2, 4, rng);
    CHECK(max_abs_diff(fold(unfold(b), 4), b) == 0.0);

    Eigen::MatrixXd m(4, 2);
    m << 1, 2, 3, 4, 5, 6, 7, 8;
    const Tensor3 t = fold(m, 2);
    CHECK(t(0, 0, 0) == 1);
    CHECK(t(1, 1, 0) == 4);
    CHECK(t(0, 0, 1) == 5);
    CHECK(t(1, 1, 1) == 8);

    CHECK_THROWS_AS(fold(Eigen::MatrixXd::Zero(5, 2), 2), ShapeError);
}

TEST_CASE("bcirc layout follows the first block column top to bottom") {
    SUBCASE("p = 1 is the single slice") {
        SamplerState rng(13);
        const Tensor3 a = random_tensor(2, 3, 1, rng);
        CHECK((bcirc(a) - a.frontal_slice(0)).norm() == 0.0);
    }
    SUBCASE("1x1x3 gives the classic 3x3 circulant") {
        const Tensor3 a(1, 1, 3, {2.0, 5.0, 11.0});
        Eigen::MatrixXd expect(3, 3);
        expect << 2, 11, 5, 5, 2, 11, 11, 5, 2;
        CHECK((bcirc(a) - expect).norm() == 0.0);
    }
    SUBCASE("block columns are cyclic shifts of the first") {
        SamplerState rng(14);
        const Tensor3 a = random_tensor(2, 3, 4, rng);
        const auto m = bcirc(a);
        for (Index c = 0; c < 4; ++c)
            for (Index r = 0; r < 4; ++r) {
                const Index r0 = (r - c + 4) % 4;
                CHECK((m.block(r * 2, c * 3, 2, 3) - m.block(r0 * 2, 0, 2, 3)).norm() == 0.0);
            }
    }
    SUBCASE("element budget is enforced") {
        CHECK_THROWS_AS(bcirc(Tensor3(10, 10, 10), /*element_budget=*/999), ConfigError);
    }
}

TEST_CASE("tprod_reference against a hand-built block product") {
    // oracle: explicit 4x4 bcirc [[A1 A2],[A2 A1]] times 4x2 stack [B1; B2]
    const Eigen::MatrixXd a1 = (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished();
    const Eigen::MatrixXd a2 = (Eigen::MatrixXd(2, 2) << -1, 0, 2, 5).finished();
    const Eigen::MatrixXd b1 = (Eigen::MatrixXd(2, 2) << 2, 1, 0, -3).finished();
    const Eigen::MatrixXd b2 = (Eigen::MatrixXd(2, 2) << 4, -2, 1, 1).finished();
    Eigen::MatrixXd big(4, 4), stack(4, 2);
    big << a1, a2, a2, a1;
    stack << b1, b2;
    const Eigen::MatrixXd prod = big * stack;

    const Tensor3 a = Tensor3::from_frontal_slices({a1, a2});
    const Tensor3 b = Tensor3::from_frontal_slices({b1, b2});
    const Tensor3 c = tprod_reference(a, b);
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j)
            for (Index k = 0; k < 2; ++k) CHECK(c(i, j, k) == doctest::Approx(prod(k * 2 + i, j)));
}

TEST_CASE("tprod identity and p=1 reduction") {
    SamplerState rng(15);
    const Tensor3 a = random_tensor(3, 4, 5, rng);
    CHECK(max_abs_diff(tprod_reference(a, identity_tensor(4, 5)), a) < 1e-14);
    CHECK(max_abs_diff(tprod_reference(identity_tensor(3, 5), a), a) < 1e-14);

    const Tensor3 x = random_tensor(3, 2, 1, rng);
    const Tensor3 y = random_tensor(2, 4, 1, rng);
    const Eigen::MatrixXd direct = x.frontal_slice(0) * y.frontal_slice(0);
    CHECK((tprod_reference(x, y).frontal_slice(0) - direct).norm() < 1e-12);

    CHECK_THROWS_AS(tprod_reference(random_tensor(2, 3, 2, rng), random_tensor(2, 3, 2, rng)),
                    ShapeError);
}

TEST_CASE("matricized equivalence holds on random dims") {
    SamplerState rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n1 = 1 + static_cast<Index>(rng.uniform_below(5));
        const Index n2 = 1 + static_cast<Index>(rng.uniform_below(5));
        const Index l = 1 + static_cast<Index>(rng.uniform_below(5));
        const Index p = 1 + static_cast<Index>(rng.uniform_below(5));
        const Tensor3 a = random_tensor(n1, n2, p, rng);
        const Tensor3 b = random_tensor(n2, l, p, rng);
        const Eigen::MatrixXd lhs = unfold(tprod_reference(a, b));
        const Eigen::MatrixXd rhs = bcirc(a) * unfold(b);
        CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
    }
}

TEST_CASE("ttranspose properties") {
    SamplerState rng(17);
    SUBCASE("p = 1 is the matrix transpose") {
        const Tensor3 a = random_tensor(3, 2, 1, rng);
        CHECK((ttranspose(a).frontal_slice(0) - a.frontal_slice(0).transpose()).norm() == 0.0);
    }
    SUBCASE("bcirc of transpose is transposed bcirc") {
        for (int trial = 0; trial < 10; ++trial) {
            const Tensor3 a = random_tensor(3, 4, 5, rng);
            CHECK((bcirc(ttranspose(a)) - bcirc(a).transpose()).norm() < 1e-12);
        }
    }
    SUBCASE("contravariance over the t-product") {
        for (int trial = 0; trial < 10; ++trial) {
            const Tensor3 a = random_tensor(3, 2, 4, rng);
            const Tensor3 b = random_tensor(2, 5, 4, rng);
            const Tensor3 lhs = ttranspose(tprod_reference(a, b));
            const Tensor3 rhs = tprod_reference(ttranspose(b), ttranspose(a));
            CHECK(max_abs_diff(lhs, rhs) <= 1e-12 * std::max(1.0, fro_norm(rhs)));
        }
    }
    SUBCASE("involution") {
        const Tensor3 a = random_tensor(4, 3, 6, rng);
        CHECK(max_abs_diff(ttranspose(ttranspose(a)), a) == 0.0);
    }
}

TEST_CASE("identity tensor") {
    const Tensor3 id = identity_tensor(3, 4);
    CHECK((bcirc(id) - Eigen::MatrixXd::Identity(12, 12)).norm() == 0.0);
    CHECK(max_abs_diff(ttranspose(id), id) == 0.0);
    CHECK(fro_norm(id) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("inner product and norm") {
    SamplerState rng(18);
    const Tensor3 z(2, 3, 4);
    CHECK(fro_norm(z) == 0.0);
    const Tensor3 a = random_tensor(2, 3, 4, rng);
    const Tensor3 b = random_tensor(2, 3, 4, rng);
    CHECK(inner(a, b) == inner(b, a));
    CHECK(inner(a, a) == doctest::Approx(fro_norm(a) * fro_norm(a)));
    // flat-loop oracle
    double s = 0.0;
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 3; ++j)
            for (Index k = 0; k < 4; ++k) s += a(i, j, k) * b(i, j, k);
    CHECK(inner(a, b) == doctest::Approx(s));
    CHECK_THROWS_AS(inner(a, Tensor3(3, 2, 4)), ShapeError);
}

TEST_CASE("row and column slices") {
    SamplerState rng(19);
    const Tensor3 a = random_tensor(4, 3, 2, rng);
    const Tensor3 all = row_slice(a, {0, 1, 2, 3});
    CHECK(max_abs_diff(all, a) == 0.0);
    const Tensor3 one = row_slice(a, {2});
    CHECK(one.rows() == 1);
    CHECK(one(0, 1, 1) == a(2, 1, 1));
    CHECK_THROWS_AS(row_slice(a, {1, 1}), IndexError);
    CHECK_THROWS_AS(row_slice(a, {4}), IndexError);

    const Tensor3 c = col_slice(a, 1);
    CHECK(c.cols() == 1);
    CHECK(c(3, 0, 1) == a(3, 1, 1));
    CHECK_THROWS_AS(col_slice(a, 3), IndexError);
}

TEST_CASE("t3d round trip and format errors") {
    SamplerState rng(20);
    const Tensor3 a = random_tensor(3, 5, 2, rng);
    const auto dir = std::filesystem::temp_directory_path() / "tkz_tensor_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "a.t3d").string();
    write_t3d(a, path);
    const Tensor3 back = read_t3d(path);
    CHECK(back.same_dims(a));
    CHECK(max_abs_diff(back, a) == 0.0);
    CHECK_THROWS_AS(read_t3d((dir / "missing.t3d").string()), IoError);

    const std::string csv = (dir / "s.csv").string();
    write_slice_csv(a.frontal_slice(1), csv);
    CHECK((read_slice_csv(csv) - a.frontal_slice(1)).norm() == 0.0);
    std::filesystem::remove_all(dir);
}
