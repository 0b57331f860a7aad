#include "tkz/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <numbers>

namespace tkz {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;

// Applies fn to frequencies 0..p/2 and mirrors the conjugate half, so the
// output stays exactly conjugate-symmetric for real-tensor inputs.
template <class Fn>
std::vector<MatrixXcd> half_frequency_map(Index p, Fn&& fn) {
    std::vector<MatrixXcd> out(static_cast<std::size_t>(p));
    const Index h = p / 2;
    for (Index k = 0; k <= h; ++k) out[static_cast<std::size_t>(k)] = fn(k);
    for (Index k = h + 1; k < p; ++k)
        out[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(p - k)].conjugate();
    return out;
}

void check_same_depth(const SpectralTensor& a, const SpectralTensor& b, const char* what) {
    if (a.depth() != b.depth())
        throw ShapeError(std::string(what) + ": depths differ (" + std::to_string(a.depth()) +
                         " vs " + std::to_string(b.depth()) + ")");
}

} // namespace

SpectralTensor::SpectralTensor(Index rows, Index cols, Index depth)
    : n1_(rows), n2_(cols),
      freqs_(static_cast<std::size_t>(depth), MatrixXcd::Zero(rows, cols)) {
    if (rows < 0 || cols < 0 || depth < 1) throw ShapeError("bad spectral dims");
}

SpectralTensor::SpectralTensor(Index rows, Index cols, std::vector<Eigen::MatrixXcd> freqs)
    : n1_(rows), n2_(cols), freqs_(std::move(freqs)) {
    if (freqs_.empty()) throw ShapeError("spectral tensor needs at least one frequency");
    for (const auto& f : freqs_)
        if (f.rows() != rows || f.cols() != cols)
            throw ShapeError("frequency block shape mismatch");
}

double SpectralTensor::tensor_fro_norm() const {
    double s = 0.0;
    for (const auto& f : freqs_) s += f.squaredNorm();
    return std::sqrt(s / static_cast<double>(depth()));
}

Eigen::MatrixXcd dft_matrix(Index p) {
    MatrixXcd f(p, p);
    const double w = -2.0 * std::numbers::pi / static_cast<double>(p);
    for (Index j = 0; j < p; ++j)
        for (Index k = 0; k < p; ++k) {
            const double a = w * static_cast<double>((j * k) % p);
            f(j, k) = std::complex<double>(std::cos(a), std::sin(a));
        }
    return f;
}

SpectralTensor to_spectral(const Tensor3& a) {
    const Index p = a.depth(), tubes = a.rows() * a.cols();
    // storage is row-major with k fastest: each tube is one contiguous row
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> t(
        a.data().data(), tubes, p);
    const MatrixXcd w = t.cast<std::complex<double>>() * dft_matrix(p); // F is symmetric
    std::vector<MatrixXcd> freqs(static_cast<std::size_t>(p), MatrixXcd(a.rows(), a.cols()));
    for (Index k = 0; k < p; ++k)
        for (Index i = 0; i < a.rows(); ++i)
            for (Index j = 0; j < a.cols(); ++j)
                freqs[static_cast<std::size_t>(k)](i, j) = w(i * a.cols() + j, k);
    return SpectralTensor(a.rows(), a.cols(), std::move(freqs));
}

Tensor3 from_spectral(const SpectralTensor& s) {
    const Index p = s.depth(), tubes = s.rows() * s.cols();
    MatrixXcd w(tubes, p);
    for (Index k = 0; k < p; ++k)
        for (Index i = 0; i < s.rows(); ++i)
            for (Index j = 0; j < s.cols(); ++j)
                w(i * s.cols() + j, k) = s.frequency(k)(i, j);
    const MatrixXcd back = w * dft_matrix(p).conjugate() / static_cast<double>(p);
    const double imag_norm = back.imag().norm();
    const double real_norm = back.real().norm();
    if (imag_norm > 1e-8 * std::max(real_norm, 1e-300))
        throw InternalError("from_spectral: imaginary residue " + std::to_string(imag_norm) +
                            " exceeds tolerance; spectrum is not conjugate-symmetric");
    std::vector<double> v(static_cast<std::size_t>(tubes * p));
    for (Index t = 0; t < tubes; ++t)
        for (Index k = 0; k < p; ++k)
            v[static_cast<std::size_t>(t * p + k)] = back(t, k).real();
    return Tensor3(s.rows(), s.cols(), p, std::move(v));
}

SpectralTensor tprod_fast(const SpectralTensor& a, const SpectralTensor& b) {
    if (a.cols() != b.rows()) throw ShapeError("tprod_fast: inner dims mismatch");
    check_same_depth(a, b, "tprod_fast");
    auto freqs = half_frequency_map(a.depth(), [&](Index k) -> MatrixXcd {
        return a.frequency(k) * b.frequency(k);
    });
    return SpectralTensor(a.rows(), b.cols(), std::move(freqs));
}

Tensor3 tprod(const Tensor3& a, const Tensor3& b) {
    if (a.cols() != b.rows() || a.depth() != b.depth())
        throw ShapeError("tprod: dims mismatch");
    return from_spectral(tprod_fast(to_spectral(a), to_spectral(b)));
}

namespace {

// Per-frequency singular values over the non-redundant half, with the
// multiplicity each frequency has in the full spectrum.
std::vector<std::pair<double, Index>> half_spectrum_values(const SpectralTensor& a) {
    std::vector<std::pair<double, Index>> vals;
    const Index p = a.depth(), h = p / 2;
    for (Index k = 0; k <= h; ++k) {
        const Index mult = (k == 0 || 2 * k == p) ? 1 : 2;
        Eigen::JacobiSVD<MatrixXcd> svd(a.frequency(k));
        for (Index i = 0; i < svd.singularValues().size(); ++i)
            vals.emplace_back(svd.singularValues()(i), mult);
    }
    return vals;
}

} // namespace

SpectrumSummary spectrum(const SpectralTensor& a) {
    SpectrumSummary out;
    const auto vals = half_spectrum_values(a);
    for (const auto& [v, mult] : vals) out.sigma_max = std::max(out.sigma_max, v);
    const double cutoff = kRankRelThreshold * out.sigma_max;
    out.sigma_min = out.sigma_max;
    double min_plus = 0.0;
    for (const auto& [v, mult] : vals) {
        out.sigma_min = std::min(out.sigma_min, v);
        if (v > cutoff) {
            out.rank += mult;
            min_plus = (min_plus == 0.0) ? v : std::min(min_plus, v);
        }
    }
    if (vals.empty()) out.sigma_min = 0.0;
    out.sigma_min_plus = min_plus;
    return out;
}

SpectrumSummary spectrum(const Tensor3& a) { return spectrum(to_spectral(a)); }

namespace {

struct GramFactors {
    // eigendecomposition of each half-frequency gram, plus the global scale
    std::vector<Eigen::SelfAdjointEigenSolver<MatrixXcd>> eig;
    double lambda_max_global = 0.0;
};

GramFactors factor_grams(const SpectralTensor& m) {
    GramFactors g;
    const Index h = m.depth() / 2;
    g.eig.reserve(static_cast<std::size_t>(h + 1));
    for (Index k = 0; k <= h; ++k) {
        const MatrixXcd gram = m.frequency(k) * m.frequency(k).adjoint();
        g.eig.emplace_back(gram);
        if (g.eig.back().info() != Eigen::Success)
            throw InternalError("gram eigendecomposition failed at frequency " + std::to_string(k));
        const auto& ev = g.eig.back().eigenvalues();
        if (ev.size() > 0) g.lambda_max_global = std::max(g.lambda_max_global, ev(ev.size() - 1));
    }
    return g;
}

void check_gram_conditioning(const GramFactors& g, Index depth) {
    const Index h = depth / 2;
    for (Index k = 0; k <= h; ++k) {
        const auto& ev = g.eig[static_cast<std::size_t>(k)].eigenvalues();
        const double lmin = ev.size() ? ev(0) : 0.0;
        if (g.lambda_max_global <= 0.0 || lmin < kGramConditionThreshold * g.lambda_max_global)
            throw AssumptionViolation(
                "block gram is numerically singular at frequency " + std::to_string(k) +
                " (eigenvalue " + std::to_string(lmin) + " vs scale " +
                std::to_string(g.lambda_max_global) + ")");
    }
}

} // namespace

SpectralTensor gram_solve(const SpectralTensor& m, const SpectralTensor& r) {
    if (r.rows() != m.rows()) throw ShapeError("gram_solve: row counts differ");
    check_same_depth(m, r, "gram_solve");
    const GramFactors g = factor_grams(m);
    check_gram_conditioning(g, m.depth());
    auto freqs = half_frequency_map(m.depth(), [&](Index k) -> MatrixXcd {
        const auto& eig = g.eig[static_cast<std::size_t>(k)];
        const MatrixXcd y = eig.eigenvectors() *
                            eig.eigenvalues().cwiseInverse().asDiagonal() *
                            (eig.eigenvectors().adjoint() * r.frequency(k));
        return m.frequency(k).adjoint() * y;
    });
    return SpectralTensor(m.cols(), r.cols(), std::move(freqs));
}

Tensor3 gram_solve(const Tensor3& m, const Tensor3& r) {
    return from_spectral(gram_solve(to_spectral(m), to_spectral(r)));
}

Tensor3 projector_apply(const Tensor3& m, const Tensor3& x) {
    const SpectralTensor mh = to_spectral(m);
    return from_spectral(gram_solve(mh, tprod_fast(mh, to_spectral(x))));
}

SpectralTensor least_norm_lsq(const SpectralTensor& a, const SpectralTensor& b) {
    if (a.rows() != b.rows()) throw ShapeError("least_norm_lsq: row counts differ");
    check_same_depth(a, b, "least_norm_lsq");
    const Index p = a.depth(), h = p / 2;
    std::vector<Eigen::JacobiSVD<MatrixXcd>> svds;
    svds.reserve(static_cast<std::size_t>(h + 1));
    double sigma_max = 0.0;
    for (Index k = 0; k <= h; ++k) {
        svds.emplace_back(a.frequency(k), Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svds.back().singularValues();
        if (sv.size() > 0) sigma_max = std::max(sigma_max, sv(0));
    }
    const double cutoff = kRankRelThreshold * sigma_max;
    auto freqs = half_frequency_map(p, [&](Index k) -> MatrixXcd {
        const auto& svd = svds[static_cast<std::size_t>(k)];
        const auto& sv = svd.singularValues();
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
        for (Index i = 0; i < sv.size(); ++i)
            if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
        return svd.matrixV() * inv.asDiagonal() *
               (svd.matrixU().adjoint() * b.frequency(k));
    });
    return SpectralTensor(a.cols(), b.cols(), std::move(freqs));
}

Tensor3 least_norm_lsq(const Tensor3& a, const Tensor3& b) {
    return from_spectral(least_norm_lsq(to_spectral(a), to_spectral(b)));
}

ExpectedProjector expected_projector_bcirc(const Tensor3& m, const BlockSet& blocks,
                                           const ExpectationOptions& opts) {
    const Index np = m.cols() * m.depth();
    auto projector_matrix = [&](const std::vector<Index>& mu) {
        const Tensor3 rows = row_slice(m, std::span<const Index>(mu));
        const SpectralTensor rh = to_spectral(rows);
        return bcirc(from_spectral(gram_solve(rh, rh)));
    };

    MatrixXd acc = MatrixXd::Zero(np, np);
    ExpectedProjector out;
    if (blocks.family_size() <= static_cast<double>(opts.enumeration_limit)) {
        const EnumeratedFamily fam = enumerate_family(blocks, opts.enumeration_limit);
        for (std::size_t i = 0; i < fam.members.size(); ++i)
            acc += fam.probabilities[i] * projector_matrix(fam.members[i]);
        out.exact = true;
        out.samples = static_cast<Index>(fam.members.size());
    } else if (opts.monte_carlo_samples) {
        const Index n = *opts.monte_carlo_samples;
        if (n < 1) throw ConfigError("monte_carlo_samples must be positive");
        SamplerState rng(opts.monte_carlo_seed, 7);
        for (Index i = 0; i < n; ++i) acc += projector_matrix(blocks.sample(rng));
        acc /= static_cast<double>(n);
        out.exact = false;
        out.samples = n;
    } else {
        throw ConfigError("block family too large to enumerate (" +
                          std::to_string(blocks.family_size()) +
                          " members, limit " + std::to_string(opts.enumeration_limit) +
                          "); opt in to Monte-Carlo to proceed");
    }

    acc = ((acc + acc.transpose()) / 2.0).eval(); // kill round-off asymmetry
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(acc, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    if (out.exact && (lo < -1e-9 || hi > 1.0 + 1e-9))
        throw InternalError("expected projector eigenvalues escape [0, 1]: [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out.matrix = std::move(acc);
    return out;
}

} // namespace tkz
