#include "tkz/generators.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tkz/spectral.hpp"

namespace tkz {

namespace {

constexpr double kConsistencyTol = 1e-9;
constexpr std::uint64_t kGenStreamBase = 16;
constexpr int kMaxAttempts = 8;

Tensor3 gaussian_tensor(Index n1, Index n2, Index n3, SamplerState& rng) {
    return Tensor3::from_generator(n1, n2, n3,
                                   [&](Index, Index, Index) { return rng.normal(); });
}

Tensor3 subtract(const Tensor3& a, const Tensor3& b) {
    return Tensor3::from_generator(a.rows(), a.cols(), a.depth(), [&](Index i, Index j, Index k) {
        return a(i, j, k) - b(i, j, k);
    });
}

Tensor3 add_scaled(const Tensor3& a, double s, const Tensor3& b) {
    return Tensor3::from_generator(a.rows(), a.cols(), a.depth(), [&](Index i, Index j, Index k) {
        return a(i, j, k) + s * b(i, j, k);
    });
}

void attach_references(FactorizedSystem& sys) {
    sys.Z_dag = least_norm_lsq(sys.U, sys.Y);
    sys.X_dag = least_norm_lsq(sys.V, *sys.Z_dag);
    const double y_norm = std::max(fro_norm(sys.Y), 1e-300);
    const Tensor3 outer_res = subtract(tprod(sys.U, *sys.Z_dag), sys.Y);
    sys.outer_consistent = fro_norm(outer_res) / y_norm < kConsistencyTol;
    const double z_norm = std::max(fro_norm(*sys.Z_dag), 1e-300);
    const Tensor3 inner_res = subtract(tprod(sys.V, *sys.X_dag), *sys.Z_dag);
    sys.inner_consistent = fro_norm(inner_res) / z_norm < kConsistencyTol;
}

bool bcirc_full_column_rank(const Tensor3& u) {
    const SpectrumSummary s = spectrum(u);
    return u.rows() >= u.cols() && s.sigma_min > 1e-10 * s.sigma_max;
}

MatchedPair gen_pair_attempt(Index m, Index m1, Index n, Index l, Index p,
                             std::uint64_t seed, double eps, int attempt) {
    if (m < 1 || m1 < 1 || n < 1 || l < 1 || p < 1)
        throw ConfigError("system dimensions must be positive");
    SamplerState rng(seed, kGenStreamBase + static_cast<std::uint64_t>(attempt));
    const Tensor3 u = gaussian_tensor(m, m1, p, rng);
    const Tensor3 v = gaussian_tensor(m1, n, p, rng);
    const Tensor3 x_gen = gaussian_tensor(n, l, p, rng);
    const Tensor3 y_clean = tprod(u, tprod(v, x_gen));

    MatchedPair pair;
    pair.consistent.U = u;
    pair.consistent.V = v;
    pair.consistent.Y = y_clean;
    pair.consistent.eps = 0.0;
    pair.consistent.seed = seed;
    attach_references(pair.consistent);
    pair.consistent.theory_holds =
        bcirc_full_column_rank(u) && pair.consistent.inner_consistent;
    if (!pair.consistent.outer_consistent)
        throw GenerationError("consistent system failed its residual verification");

    // perturbation drawn after X_gen so the clean draws match across eps;
    // scaled to the clean measurement norm so eps measures the relative
    // inconsistency of the system
    const Tensor3 y_tilde = gaussian_tensor(m, l, p, rng);
    const Tensor3 x_tilde = least_norm_lsq(u, y_tilde);
    Tensor3 y_perp = subtract(y_tilde, tprod(u, x_tilde));
    const double raw_norm = fro_norm(y_perp);
    if (eps != 0.0 && raw_norm < 1e-10)
        throw GenerationError(
            "Y-perp vanished: U is surjective after matricization, so no orthogonal "
            "perturbation exists (need m > m1)");
    if (raw_norm > 0.0) {
        const double scale = fro_norm(y_clean);
        y_perp = Tensor3::from_generator(m, l, p, [&](Index i, Index j, Index k) {
            return scale * y_perp(i, j, k);
        });
    }
    const double perp_norm = fro_norm(y_perp);
    const double ip = inner(y_perp, y_clean);
    if (eps != 0.0 &&
        std::abs(ip) > 1e-8 * std::max(1e-300, perp_norm * fro_norm(y_clean)))
        throw GenerationError("perturbation is not orthogonal to the clean measurements");

    pair.inconsistent.U = u;
    pair.inconsistent.V = v;
    pair.inconsistent.Y = add_scaled(y_clean, eps, y_perp);
    pair.inconsistent.eps = eps;
    pair.inconsistent.y_perp_norm = perp_norm;
    pair.inconsistent.seed = seed;
    attach_references(pair.inconsistent);
    pair.inconsistent.theory_holds =
        bcirc_full_column_rank(u) && pair.inconsistent.inner_consistent;
    return pair;
}

MatchedPair gen_pair(Index m, Index m1, Index n, Index l, Index p, std::uint64_t seed,
                     double eps) {
    for (int attempt = 0;; ++attempt) {
        try {
            return gen_pair_attempt(m, m1, n, l, p, seed, eps, attempt);
        } catch (const GenerationError&) {
            if (attempt + 1 >= kMaxAttempts) throw;
        }
    }
}

} // namespace

FactorizedSystem gen_consistent(Index m, Index m1, Index n, Index l, Index p,
                                std::uint64_t seed) {
    return gen_pair(m, m1, n, l, p, seed, 0.0).consistent;
}

FactorizedSystem gen_inconsistent(Index m, Index m1, Index n, Index l, Index p,
                                  std::uint64_t seed, double eps) {
    return gen_pair(m, m1, n, l, p, seed, eps).inconsistent;
}

MatchedPair gen_matched_pair(Index m, Index m1, Index n, Index l, Index p,
                             std::uint64_t seed, double eps) {
    return gen_pair(m, m1, n, l, p, seed, eps);
}

namespace {

struct CaseSpec {
    std::string id;
    Index m, r;
    bool theory_holds;
    std::vector<Index> mu_menu, nu_menu;
};

// X is 20 x 10 x 30 for every case; U is m x r x 30 and V is r x 20 x 30.
const std::vector<CaseSpec>& case_table() {
    static const std::vector<CaseSpec> table = {
        {"1a", 10, 5, true, {1, 3, 5}, {1, 3, 5}},
        {"1b", 10, 25, false, {1, 5, 10}, {1, 5, 10}},
        {"1c", 10, 15, false, {1, 5, 10}, {1, 5, 15}},
        {"2a", 30, 15, true, {1, 5, 10, 15}, {1, 5, 10, 15}},
        {"2b", 30, 25, true, {1, 5, 10, 20, 25}, {1, 5, 10, 20}},
        {"2c", 30, 35, false, {1, 10, 20}, {1, 10, 20}},
    };
    return table;
}

} // namespace

const std::vector<std::string>& experiment_case_ids() {
    static const std::vector<std::string> ids = [] {
        std::vector<std::string> v;
        for (const auto& c : case_table()) v.push_back(c.id);
        return v;
    }();
    return ids;
}

FactorizedSystem gen_case(const std::string& case_id, std::uint64_t seed) {
    for (const auto& c : case_table()) {
        if (c.id != case_id) continue;
        FactorizedSystem sys = gen_consistent(c.m, c.r, 20, 10, 30, seed);
        sys.case_id = c.id;
        sys.theory_holds = c.theory_holds;
        sys.mu_menu = c.mu_menu;
        sys.nu_menu = c.nu_menu;
        return sys;
    }
    throw ConfigError("unknown experiment case '" + case_id + "'");
}

void save_system(const FactorizedSystem& sys, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_t3d(sys.U, (fs::path(dir) / "U.t3d").string());
    write_t3d(sys.V, (fs::path(dir) / "V.t3d").string());
    write_t3d(sys.Y, (fs::path(dir) / "Y.t3d").string());
    if (sys.Z_dag) write_t3d(*sys.Z_dag, (fs::path(dir) / "Z_dag.t3d").string());
    if (sys.X_dag) write_t3d(*sys.X_dag, (fs::path(dir) / "X_dag.t3d").string());

    nlohmann::json j;
    j["dims"] = {{"m", sys.m()}, {"m1", sys.m1()}, {"n", sys.n()}, {"l", sys.l()}, {"p", sys.p()}};
    j["seed"] = sys.seed;
    j["eps"] = sys.eps;
    j["y_perp_norm"] = sys.y_perp_norm;
    j["outer_consistent"] = sys.outer_consistent;
    j["inner_consistent"] = sys.inner_consistent;
    j["theory_holds"] = sys.theory_holds;
    j["norms"] = {{"Y", fro_norm(sys.Y)},
                  {"Z_dag", sys.Z_dag ? fro_norm(*sys.Z_dag) : 0.0},
                  {"X_dag", sys.X_dag ? fro_norm(*sys.X_dag) : 0.0}};
    if (!sys.case_id.empty()) {
        j["case_id"] = sys.case_id;
        j["mu_menu"] = sys.mu_menu;
        j["nu_menu"] = sys.nu_menu;
    }
    std::ofstream os((fs::path(dir) / "manifest.json").string());
    if (!os) throw IoError("cannot write manifest in " + dir);
    os << j.dump(2) << '\n';
}

FactorizedSystem load_system(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream is(manifest_path.string());
    if (!is) throw IoError("no manifest.json in " + dir);
    nlohmann::json j;
    is >> j;

    FactorizedSystem sys;
    sys.U = read_t3d((fs::path(dir) / "U.t3d").string());
    sys.V = read_t3d((fs::path(dir) / "V.t3d").string());
    sys.Y = read_t3d((fs::path(dir) / "Y.t3d").string());
    if (fs::exists(fs::path(dir) / "Z_dag.t3d"))
        sys.Z_dag = read_t3d((fs::path(dir) / "Z_dag.t3d").string());
    if (fs::exists(fs::path(dir) / "X_dag.t3d"))
        sys.X_dag = read_t3d((fs::path(dir) / "X_dag.t3d").string());
    sys.seed = j.value("seed", std::uint64_t{0});
    sys.eps = j.value("eps", 0.0);
    sys.y_perp_norm = j.value("y_perp_norm", 0.0);
    sys.outer_consistent = j.value("outer_consistent", true);
    sys.inner_consistent = j.value("inner_consistent", true);
    sys.theory_holds = j.value("theory_holds", true);
    sys.case_id = j.value("case_id", std::string{});
    if (j.contains("mu_menu")) sys.mu_menu = j["mu_menu"].get<std::vector<Index>>();
    if (j.contains("nu_menu")) sys.nu_menu = j["nu_menu"].get<std::vector<Index>>();
    return sys;
}

} // namespace tkz
