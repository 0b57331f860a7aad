#include "tkz/theory.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

namespace tkz {

namespace {

constexpr double kRateEqualRelTol = 1e-12;
constexpr double kRateZeroTol = 1e-12;

// eigenvalues carry machine-precision noise; the bounds' case analysis needs
// exact-zero rates, so snap anything below tolerance
double clamp_rate(double a) {
    if (a < kRateZeroTol) return 0.0;
    return std::min(a, 1.0);
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

double ratio_min(double a, double b) {
    if (a == 0.0 || b == 0.0) return 0.0;
    return std::min(a / b, b / a);
}

bool rates_distinct(double a, double b) {
    return a != 0.0 && b != 0.0 && std::abs(a - b) > kRateEqualRelTol * std::max(a, b);
}

// E over the column distribution of bcirc(P_{(U_:l:)^*}), the projector the
// extended solvers' W step applies in expectation.
Eigen::MatrixXd expected_column_projector(const Tensor3& u,
                                          const std::vector<double>& column_weights) {
    const Index m1 = u.cols(), mp = u.rows() * u.depth();
    if (!column_weights.empty() && static_cast<Index>(column_weights.size()) != m1)
        throw ConfigError("need one column weight per column of U");
    double total = 0.0;
    for (double w : column_weights) {
        if (!(w > 0.0)) throw ConfigError("column weights must be positive");
        total += w;
    }
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(mp, mp);
    for (Index l = 0; l < m1; ++l) {
        const double prob = column_weights.empty()
                                ? 1.0 / static_cast<double>(m1)
                                : column_weights[static_cast<std::size_t>(l)] / total;
        const Tensor3 col_t = ttranspose(col_slice(u, l)); // 1 x m x p
        const SpectralTensor ch = to_spectral(col_t);
        acc += prob * bcirc(from_spectral(gram_solve(ch, ch)));
    }
    return acc;
}

// theta for a family too large to enumerate: Monte-Carlo mean of
// sigma_min+^-2 over sampled blocks.
double theta_monte_carlo(const BlockSet& bs, const Tensor3& m, Index samples,
                         std::uint64_t seed) {
    if (bs.distribution() == Distribution::SigmaWeighted)
        throw ConfigError("sigma-weighted theta requires an enumerable family");
    SamplerState rng(seed, 9);
    double mean_inv = 0.0;
    for (Index i = 0; i < samples; ++i) {
        const auto mu = bs.sample(rng);
        const SpectrumSummary s = spectrum(row_slice(m, std::span<const Index>(mu)));
        if (s.sigma_min_plus <= 0.0)
            throw AssumptionViolation("sampled block has zero spectrum");
        mean_inv += 1.0 / (s.sigma_min_plus * s.sigma_min_plus);
    }
    mean_inv /= static_cast<double>(samples);
    return static_cast<double>(bs.largest_block()) * static_cast<double>(m.depth()) * mean_inv;
}

struct RateAndTheta {
    double alpha = 0.0;
    double theta = 0.0;
    bool exact = true;
};

RateAndTheta rate_and_theta(const Tensor3& m, const BlockSet& blocks,
                            const ExpectationOptions& opts) {
    RateAndTheta out;
    const ExpectedProjector ep = expected_projector_bcirc(m, blocks, opts);
    out.alpha = clamp_rate(1.0 - min_eigenvalue(ep.matrix));
    out.exact = ep.exact;
    if (blocks.family_size() <= static_cast<double>(opts.enumeration_limit)) {
        out.theta = block_constants(blocks, m, opts.enumeration_limit).theta;
    } else {
        out.theta = theta_monte_carlo(blocks, m, *opts.monte_carlo_samples,
                                      opts.monte_carlo_seed);
        out.exact = false;
    }
    return out;
}

void fill_derived(ConvergenceConstants& k) {
    k.alpha_max = std::max(k.alpha_U, k.alpha_V);
    k.alpha_min = ratio_min(k.alpha_U, k.alpha_V);
    k.phi_max = std::max(k.alpha_U, k.beta_U);
    k.phi_min = ratio_min(k.alpha_U, k.beta_U);
    k.degenerate_rates = (k.alpha_U == 0.0) != (k.alpha_V == 0.0) ||
                         (k.alpha_U == 0.0) != (k.beta_U == 0.0);
}

} // namespace

ConvergenceConstants compute_constants(const Tensor3& u, const Tensor3& v,
                                       const BlockSet& blocks_u, const BlockSet& blocks_v,
                                       const std::vector<double>& column_weights,
                                       const ExpectationOptions& opts) {
    ConvergenceConstants k = compute_constants_single(u, blocks_u, column_weights, opts);
    const RateAndTheta rv = rate_and_theta(v, blocks_v, opts);
    k.alpha_V = rv.alpha;
    k.theta_V = rv.theta;
    k.enumeration_exact = k.enumeration_exact && rv.exact;
    k.sigma_max_bcirc_V = spectrum(v).sigma_max;
    fill_derived(k);
    return k;
}

ConvergenceConstants compute_constants_single(const Tensor3& u, const BlockSet& blocks_u,
                                              const std::vector<double>& column_weights,
                                              const ExpectationOptions& opts) {
    ConvergenceConstants k;
    const RateAndTheta ru = rate_and_theta(u, blocks_u, opts);
    k.alpha_U = ru.alpha;
    k.theta_U = ru.theta;
    k.enumeration_exact = ru.exact;
    k.beta_U = clamp_rate(1.0 - min_eigenvalue(expected_column_projector(u, column_weights)));
    const SpectrumSummary su = spectrum(u);
    k.sigma_max_bcirc_U = su.sigma_max;
    k.outer_unique_minimizer = u.rows() >= u.cols() && su.sigma_min > 1e-10 * su.sigma_max;
    fill_derived(k);
    return k;
}

double bound_factbrk(Index t, const ConvergenceConstants& k, double norm_xdag) {
    const double n2 = norm_xdag * norm_xdag;
    const double head = std::pow(k.alpha_V, static_cast<double>(t));
    const double sv2 = k.sigma_max_bcirc_V * k.sigma_max_bcirc_V;
    if (rates_distinct(k.alpha_U, k.alpha_V)) {
        const double tail = k.theta_V * std::pow(k.alpha_max, static_cast<double>(t)) *
                            k.alpha_min / (1.0 - k.alpha_min) * sv2;
        return (head + tail) * n2;
    }
    const double tail = k.theta_V * static_cast<double>(t) *
                        std::pow(k.alpha_max, static_cast<double>(t)) * sv2;
    return (head + tail) * n2;
}

namespace {

// gamma(t) of the TBREK analysis: the decayed outer error carried into the
// inner bound.
double tbrek_gamma(Index t, const ConvergenceConstants& k) {
    const double su2 = k.sigma_max_bcirc_U * k.sigma_max_bcirc_U;
    const double head = std::pow(k.alpha_U, static_cast<double>(t));
    if (rates_distinct(k.alpha_U, k.beta_U) || k.phi_min == 0.0) {
        return head + k.theta_U * std::pow(k.phi_max, static_cast<double>(t)) * k.phi_min /
                          (1.0 - k.phi_min) * su2;
    }
    return head +
           k.theta_U * static_cast<double>(t) * std::pow(k.phi_max, static_cast<double>(t)) * su2;
}

} // namespace

double bound_factbrek(Index t, const ConvergenceConstants& k, double norm_xdag) {
    if (k.alpha_V == 0.0)
        throw ConfigError(
            "bound_factbrek requires alpha_V != 0; the inner projection is exact, see the "
            "degenerate single-step case");
    const double n2 = norm_xdag * norm_xdag;
    const double sv2 = k.sigma_max_bcirc_V * k.sigma_max_bcirc_V;
    const Index ht = t / 2;
    const double head = std::pow(k.alpha_V, static_cast<double>(t));
    const double tail = k.theta_V * sv2 * static_cast<double>(t + 1) *
                        std::pow(k.alpha_V, static_cast<double>(ht)) * tbrek_gamma(ht, k);
    return (head + tail) * n2;
}

double bound_tbrek(Index t, const ConvergenceConstants& k, double norm_xdag) {
    return tbrek_gamma(t, k) * norm_xdag * norm_xdag;
}

double horizon_tbrk(const ConvergenceConstants& k, const Tensor3& u, const BlockSet& blocks,
                    const Tensor3& e, Index enum_limit) {
    if (e.rows() != u.rows() || e.depth() != u.depth())
        throw ShapeError("horizon_tbrk: E must share U's rows and depth");
    const EnumeratedFamily fam = enumerate_family(blocks, enum_limit);
    double additive = 0.0;
    for (std::size_t i = 0; i < fam.members.size(); ++i) {
        const auto& mu = fam.members[i];
        const SpectrumSummary s = spectrum(row_slice(u, std::span<const Index>(mu)));
        if (s.sigma_min_plus <= 0.0)
            throw AssumptionViolation("block has zero spectrum in horizon computation");
        const double e_norm = fro_norm(row_slice(e, std::span<const Index>(mu)));
        additive += fam.probabilities[i] * (e_norm * e_norm) /
                    (s.sigma_min_plus * s.sigma_min_plus);
    }
    additive *= static_cast<double>(blocks.largest_block()) * static_cast<double>(u.depth());
    const double denom = 1.0 - k.alpha_U;
    if (denom <= 1e-15) return std::numeric_limits<double>::infinity();
    return additive / denom;
}

} // namespace tkz
