#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tkz/rng.hpp"
#include "tkz/tensor.hpp"

namespace tkz {

/// All k-element subsets of the host rows; never materialized, sampled
/// directly and described by closed forms (d = k, c_max = C(m-1, k-1)).
struct AllSubsetsOfSize {
    Index k;
};

/// Arbitrary finite family of index sets.
struct ExplicitFamily {
    std::vector<std::vector<Index>> members;
};

/// Disjoint index sets covering all host rows.
struct Partition {
    std::vector<std::vector<Index>> members;
};

enum class Distribution { Uniform, SigmaWeighted };

/// Family T of allowable row blocks over a host dimension of m row slices,
/// plus its sampling distribution D(T). Immutable once built; members hold
/// sorted, distinct 0-based indices.
class BlockSet {
public:
    /// `max_block_width`, when given, rejects families whose largest block
    /// exceeds the host tensor's width (the sampled blocks must stay wide
    /// for the block grams to be invertible).
    BlockSet(Index host_rows, AllSubsetsOfSize family,
             std::optional<Index> max_block_width = std::nullopt);
    BlockSet(Index host_rows, ExplicitFamily family,
             std::optional<Index> max_block_width = std::nullopt);
    BlockSet(Index host_rows, Partition family,
             std::optional<Index> max_block_width = std::nullopt);

    Index host_rows() const { return host_rows_; }
    Distribution distribution() const { return dist_; }

    /// Switches to sigma-weighted sampling with the given per-member weights
    /// (one per family member, strictly positive). Not available for
    /// AllSubsetsOfSize, whose family is never enumerated for sampling.
    void set_sigma_weights(std::vector<double> weights);
    const std::vector<double>& sigma_weights() const;

    bool is_all_subsets() const { return std::holds_alternative<AllSubsetsOfSize>(family_); }
    const std::vector<std::vector<Index>>& members() const; // throws for AllSubsetsOfSize

    /// Number of members; for AllSubsetsOfSize this is C(m, k) and may
    /// exceed any practical enumeration limit.
    double family_size() const;

    Index largest_block() const;       // d_T
    Index max_row_multiplicity() const; // c_max

    std::vector<Index> sample(SamplerState& rng) const;

    std::string describe() const;

private:
    Index host_rows_;
    std::variant<AllSubsetsOfSize, ExplicitFamily, Partition> family_;
    Distribution dist_ = Distribution::Uniform;
    std::vector<double> weights_; // parallel to members(), SigmaWeighted only
};

/// T = all k-subsets of [m], uniform distribution.
BlockSet make_all_of_size(Index m, Index k, std::optional<Index> max_block_width = std::nullopt);

/// Random partition of [m] into m/k blocks of size exactly k (requires k | m).
BlockSet make_equal_partition(Index m, Index k, std::uint64_t seed,
                              std::optional<Index> max_block_width = std::nullopt);

/// Random partition with block sizes drawn uniformly from
/// [max(1, mean_k - spread), mean_k + spread]; the last block absorbs the
/// remainder so the sizes sum to m.
BlockSet make_variable_partition(Index m, Index mean_k, Index spread, std::uint64_t seed,
                                 std::optional<Index> max_block_width = std::nullopt);

/// Singleton family {{0}, {1}, ..., {m-1}} in index order.
BlockSet make_singletons(Index m);

/// Explicit family enumeration alongside the member probabilities under the
/// block set's distribution. AllSubsetsOfSize enumerates lexicographically
/// and fails when C(m, k) exceeds `limit`.
struct EnumeratedFamily {
    std::vector<std::vector<Index>> members;
    std::vector<double> probabilities;
};
EnumeratedFamily enumerate_family(const BlockSet& bs, Index limit = 10'000);

/// C(n, k) as double (exact for the sizes used here).
double binomial(Index n, Index k);

/// d_T, c_max and the theta convergence term for block set `bs` over the
/// rows of M. Theta follows the distribution branch: sigma-weighted uses
/// d * p * c_max / sum of sigma_min+^2 over members; anything else uses
/// d * p * E[sigma_min+^-2] under D(T). Uniform AllSubsetsOfSize requires
/// enumeration within `enum_limit`.
struct BlockConstants {
    Index d = 0;
    Index c_max = 0;
    double theta = 0.0;
    double sum_sigma_min_plus_sq = 0.0;     // sigma-weighted branch denominator
    double mean_inv_sigma_min_plus_sq = 0.0; // expectation branch term
};
BlockConstants block_constants(const BlockSet& bs, const Tensor3& m, Index enum_limit = 10'000);

/// sigma_min+^2(bcirc(M_tau::)) for every member, in member order; used to
/// build sigma-weighted distributions.
std::vector<double> sigma_min_plus_sq_weights(const BlockSet& bs, const Tensor3& m,
                                              Index enum_limit = 10'000);

} // namespace tkz
