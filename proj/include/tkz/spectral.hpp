#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <vector>

#include "tkz/sampling.hpp"
#include "tkz/tensor.hpp"

namespace tkz {

/// Per-frequency block decomposition of a Tensor3: the DFT along the third
/// mode turns the block-circulant matrix of a tensor into a block diagonal
/// of complex matrices A_hat_k, so t-products, gram solves and singular
/// value queries run frequency by frequency without materializing bcirc.
///
/// Frequencies of a real source tensor are conjugate-symmetric,
/// A_hat_{(p-k) mod p} == conj(A_hat_k). Operations on spectra of real
/// tensors compute frequencies k <= p/2 and mirror the rest by conjugation,
/// which keeps the symmetry exact; from_spectral checks the resulting
/// imaginary residue rather than assuming it.
class SpectralTensor {
public:
    SpectralTensor(Index rows, Index cols, Index depth);
    SpectralTensor(Index rows, Index cols, std::vector<Eigen::MatrixXcd> freqs);

    Index rows() const { return n1_; }
    Index cols() const { return n2_; }
    Index depth() const { return static_cast<Index>(freqs_.size()); }

    const Eigen::MatrixXcd& frequency(Index k) const { return freqs_[static_cast<std::size_t>(k)]; }
    Eigen::MatrixXcd& frequency(Index k) { return freqs_[static_cast<std::size_t>(k)]; }

    const std::vector<Eigen::MatrixXcd>& frequencies() const { return freqs_; }

    /// Frobenius norm of the represented real tensor (Parseval: spectral
    /// norm squared is p times the tensor norm squared).
    double tensor_fro_norm() const;

private:
    Index n1_, n2_;
    std::vector<Eigen::MatrixXcd> freqs_;
};

/// Unnormalized forward DFT matrix of size p (entry (j, k) = exp(-2 pi i j k / p)).
Eigen::MatrixXcd dft_matrix(Index p);

SpectralTensor to_spectral(const Tensor3& a);

/// Inverse transform; throws InternalError when the imaginary residue
/// exceeds 1e-8 times the tensor norm.
Tensor3 from_spectral(const SpectralTensor& s);

/// Fast-path t-product; agrees with tprod_reference within 1e-10 relative.
SpectralTensor tprod_fast(const SpectralTensor& a, const SpectralTensor& b);
Tensor3 tprod(const Tensor3& a, const Tensor3& b);

/// Singular values of bcirc(A), computed as the union of the per-frequency
/// singular values. Rank counts values above 1e-12 * sigma_max.
struct SpectrumSummary {
    double sigma_max = 0.0;
    double sigma_min_plus = 0.0; // smallest value above the rank threshold, 0 if rank 0
    double sigma_min = 0.0;
    Index rank = 0;
};
SpectrumSummary spectrum(const Tensor3& a);
SpectrumSummary spectrum(const SpectralTensor& a);

inline constexpr double kGramConditionThreshold = 1e-12;
inline constexpr double kRankRelThreshold = 1e-12;

/// M^* (M M^*)^{-1} R, solved per frequency through the Hermitian
/// eigendecomposition of the gram M_hat_k M_hat_k^H; no explicit inverse is
/// formed. Throws AssumptionViolation, naming the frequency, when any gram
/// eigenvalue falls below 1e-12 times the largest gram eigenvalue across
/// frequencies.
SpectralTensor gram_solve(const SpectralTensor& m, const SpectralTensor& r);
Tensor3 gram_solve(const Tensor3& m, const Tensor3& r);

/// P_M X = M^* (M M^*)^{-1} M X, the orthogonal projection of X onto the
/// row space of M under the t-product.
Tensor3 projector_apply(const Tensor3& m, const Tensor3& x);

/// Minimum-Frobenius-norm minimizer of |A * X - B|_F via per-frequency
/// pseudoinverses sharing one global rank threshold.
SpectralTensor least_norm_lsq(const SpectralTensor& a, const SpectralTensor& b);
Tensor3 least_norm_lsq(const Tensor3& a, const Tensor3& b);

/// Options controlling expectation over a block family: exact enumeration up
/// to the limit, otherwise Monte-Carlo with a declared sample count.
struct ExpectationOptions {
    Index enumeration_limit = 10'000;
    std::optional<Index> monte_carlo_samples;
    std::uint64_t monte_carlo_seed = 0;
};

/// E over D(T) of bcirc(P_{M_mu::}): the expected projector matrix behind
/// the alpha convergence constants. Symmetric PSD with eigenvalues in
/// [0, 1]; `exact` is false for Monte-Carlo estimates.
struct ExpectedProjector {
    Eigen::MatrixXd matrix;
    bool exact = true;
    Index samples = 0; // enumerated members or Monte-Carlo draws
};
ExpectedProjector expected_projector_bcirc(const Tensor3& m, const BlockSet& blocks,
                                           const ExpectationOptions& opts = {});

} // namespace tkz
