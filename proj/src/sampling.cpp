#include "tkz/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tkz/spectral.hpp"

namespace tkz {

namespace {

void validate_member(std::vector<Index>& member, Index m) {
    std::sort(member.begin(), member.end());
    if (member.empty()) throw ConfigError("empty block in family");
    if (std::adjacent_find(member.begin(), member.end()) != member.end())
        throw ConfigError("block contains a repeated row index");
    if (member.front() < 0 || member.back() >= m)
        throw ConfigError("block index out of range [0, " + std::to_string(m) + ")");
}

void validate_width(Index block_size, std::optional<Index> max_width) {
    if (max_width && block_size > *max_width)
        throw ConfigError("block of size " + std::to_string(block_size) +
                          " is not wide against host width " + std::to_string(*max_width) +
                          "; block grams would be singular");
}

} // namespace

BlockSet::BlockSet(Index host_rows, AllSubsetsOfSize family, std::optional<Index> max_block_width)
    : host_rows_(host_rows), family_(family) {
    if (family.k < 1 || family.k > host_rows)
        throw ConfigError("subset size " + std::to_string(family.k) + " out of range for " +
                          std::to_string(host_rows) + " rows");
    validate_width(family.k, max_block_width);
}

BlockSet::BlockSet(Index host_rows, ExplicitFamily family, std::optional<Index> max_block_width)
    : host_rows_(host_rows), family_(std::move(family)) {
    auto& members = std::get<ExplicitFamily>(family_).members;
    if (members.empty()) throw ConfigError("explicit family is empty");
    for (auto& member : members) {
        validate_member(member, host_rows_);
        validate_width(static_cast<Index>(member.size()), max_block_width);
    }
}

BlockSet::BlockSet(Index host_rows, Partition family, std::optional<Index> max_block_width)
    : host_rows_(host_rows), family_(std::move(family)) {
    auto& members = std::get<Partition>(family_).members;
    if (members.empty()) throw ConfigError("partition is empty");
    std::set<Index> covered;
    Index total = 0;
    for (auto& member : members) {
        validate_member(member, host_rows_);
        validate_width(static_cast<Index>(member.size()), max_block_width);
        total += static_cast<Index>(member.size());
        covered.insert(member.begin(), member.end());
    }
    if (total != host_rows_ || static_cast<Index>(covered.size()) != host_rows_)
        throw ConfigError("partition members must be disjoint and cover all rows");
}

void BlockSet::set_sigma_weights(std::vector<double> weights) {
    if (is_all_subsets())
        throw ConfigError("sigma-weighted sampling needs an enumerable family");
    if (weights.size() != members().size())
        throw ConfigError("need one weight per family member");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw ConfigError("sigma weights must be strictly positive and finite");
    weights_ = std::move(weights);
    dist_ = Distribution::SigmaWeighted;
}

const std::vector<double>& BlockSet::sigma_weights() const {
    if (dist_ != Distribution::SigmaWeighted)
        throw ConfigError("block set is not sigma-weighted");
    return weights_;
}

const std::vector<std::vector<Index>>& BlockSet::members() const {
    if (const auto* f = std::get_if<ExplicitFamily>(&family_)) return f->members;
    if (const auto* f = std::get_if<Partition>(&family_)) return f->members;
    throw ConfigError("AllSubsetsOfSize family is not materialized");
}

double BlockSet::family_size() const {
    if (const auto* f = std::get_if<AllSubsetsOfSize>(&family_))
        return binomial(host_rows_, f->k);
    return static_cast<double>(members().size());
}

Index BlockSet::largest_block() const {
    if (const auto* f = std::get_if<AllSubsetsOfSize>(&family_)) return f->k;
    Index d = 0;
    for (const auto& m : members()) d = std::max(d, static_cast<Index>(m.size()));
    return d;
}

Index BlockSet::max_row_multiplicity() const {
    if (const auto* f = std::get_if<AllSubsetsOfSize>(&family_)) {
        // each row joins C(m-1, k-1) subsets
        const double c = binomial(host_rows_ - 1, f->k - 1);
        return static_cast<Index>(std::llround(c));
    }
    std::vector<Index> counts(static_cast<std::size_t>(host_rows_), 0);
    for (const auto& m : members())
        for (Index i : m) ++counts[static_cast<std::size_t>(i)];
    return *std::max_element(counts.begin(), counts.end());
}

std::vector<Index> BlockSet::sample(SamplerState& rng) const {
    if (const auto* f = std::get_if<AllSubsetsOfSize>(&family_)) {
        if (dist_ == Distribution::SigmaWeighted)
            throw ConfigError("sigma-weighted sampling needs an enumerable family");
        return rng.uniform_subset(host_rows_, f->k);
    }
    const auto& mem = members();
    std::size_t pick;
    if (dist_ == Distribution::Uniform) {
        pick = static_cast<std::size_t>(rng.uniform_below(mem.size()));
    } else {
        // cumulative scan in member order
        const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
        const double u = rng.uniform01() * total;
        double cum = 0.0;
        pick = mem.size() - 1;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            cum += weights_[i];
            if (u < cum) {
                pick = i;
                break;
            }
        }
    }
    return mem[pick];
}

std::string BlockSet::describe() const {
    std::string d;
    if (const auto* f = std::get_if<AllSubsetsOfSize>(&family_))
        d = "all-subsets(k=" + std::to_string(f->k) + ")";
    else if (std::holds_alternative<Partition>(family_))
        d = "partition(" + std::to_string(members().size()) + " blocks)";
    else
        d = "explicit(" + std::to_string(members().size()) + " blocks)";
    d += dist_ == Distribution::Uniform ? ", uniform" : ", sigma-weighted";
    return d;
}

BlockSet make_all_of_size(Index m, Index k, std::optional<Index> max_block_width) {
    return BlockSet(m, AllSubsetsOfSize{k}, max_block_width);
}

BlockSet make_singletons(Index m) {
    ExplicitFamily fam;
    for (Index i = 0; i < m; ++i) fam.members.push_back({i});
    return BlockSet(m, std::move(fam));
}

BlockSet make_equal_partition(Index m, Index k, std::uint64_t seed,
                              std::optional<Index> max_block_width) {
    if (k < 1 || k > m) throw ConfigError("partition block size out of range");
    if (m % k != 0)
        throw ConfigError("equal partition needs " + std::to_string(k) + " | " + std::to_string(m));
    std::vector<Index> rows(static_cast<std::size_t>(m));
    std::iota(rows.begin(), rows.end(), 0);
    SamplerState rng(seed, 3);
    rng.shuffle(rows);
    Partition part;
    for (Index start = 0; start < m; start += k)
        part.members.emplace_back(rows.begin() + start, rows.begin() + start + k);
    return BlockSet(m, std::move(part), max_block_width);
}

BlockSet make_variable_partition(Index m, Index mean_k, Index spread, std::uint64_t seed,
                                 std::optional<Index> max_block_width) {
    if (mean_k < 1 || mean_k > m) throw ConfigError("partition mean block size out of range");
    if (spread < 0) throw ConfigError("spread must be nonnegative");
    const Index lo = std::max<Index>(1, mean_k - spread);
    const Index hi = mean_k + spread;
    if (hi > m) throw ConfigError("mean_k + spread exceeds row count");
    std::vector<Index> rows(static_cast<std::size_t>(m));
    std::iota(rows.begin(), rows.end(), 0);
    SamplerState rng(seed, 3);
    rng.shuffle(rows);
    Partition part;
    Index start = 0;
    while (start < m) {
        Index size = lo + static_cast<Index>(rng.uniform_below(static_cast<std::uint64_t>(hi - lo + 1)));
        size = std::min(size, m - start); // last block absorbs the remainder
        part.members.emplace_back(rows.begin() + start, rows.begin() + start + size);
        start += size;
    }
    return BlockSet(m, std::move(part), max_block_width);
}

double binomial(Index n, Index k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (Index i = 1; i <= k; ++i)
        c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return c;
}

EnumeratedFamily enumerate_family(const BlockSet& bs, Index limit) {
    EnumeratedFamily out;
    if (bs.is_all_subsets()) {
        if (bs.family_size() > static_cast<double>(limit))
            throw ConfigError("family of " + std::to_string(bs.family_size()) +
                              " subsets exceeds enumeration limit " + std::to_string(limit));
        const Index m = bs.host_rows(), k = bs.largest_block();
        std::vector<Index> comb(static_cast<std::size_t>(k));
        std::iota(comb.begin(), comb.end(), 0);
        while (true) {
            out.members.push_back(comb);
            // next combination in lexicographic order
            Index i = k - 1;
            while (i >= 0 && comb[static_cast<std::size_t>(i)] == m - k + i) --i;
            if (i < 0) break;
            ++comb[static_cast<std::size_t>(i)];
            for (Index j = i + 1; j < k; ++j)
                comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
        }
        const double prob = 1.0 / static_cast<double>(out.members.size());
        out.probabilities.assign(out.members.size(), prob);
        return out;
    }
    out.members = bs.members();
    if (static_cast<Index>(out.members.size()) > limit)
        throw ConfigError("family exceeds enumeration limit");
    if (bs.distribution() == Distribution::SigmaWeighted) {
        const auto& w = bs.sigma_weights();
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        out.probabilities.reserve(w.size());
        for (double x : w) out.probabilities.push_back(x / total);
    } else {
        out.probabilities.assign(out.members.size(), 1.0 / static_cast<double>(out.members.size()));
    }
    return out;
}

std::vector<double> sigma_min_plus_sq_weights(const BlockSet& bs, const Tensor3& m,
                                              Index enum_limit) {
    const EnumeratedFamily fam = enumerate_family(bs, enum_limit);
    std::vector<double> w;
    w.reserve(fam.members.size());
    for (const auto& member : fam.members) {
        const SpectrumSummary s = spectrum(row_slice(m, std::span<const Index>(member)));
        w.push_back(s.sigma_min_plus * s.sigma_min_plus);
    }
    return w;
}

BlockConstants block_constants(const BlockSet& bs, const Tensor3& m, Index enum_limit) {
    if (bs.host_rows() != m.rows())
        throw ShapeError("block set host rows do not match tensor rows");
    BlockConstants out;
    out.d = bs.largest_block();
    out.c_max = bs.max_row_multiplicity();
    const double dp = static_cast<double>(out.d) * static_cast<double>(m.depth());

    const EnumeratedFamily fam = enumerate_family(bs, enum_limit);
    double sum_sq = 0.0, mean_inv = 0.0;
    for (std::size_t i = 0; i < fam.members.size(); ++i) {
        const SpectrumSummary s = spectrum(row_slice(m, std::span<const Index>(fam.members[i])));
        const double sq = s.sigma_min_plus * s.sigma_min_plus;
        if (sq <= 0.0)
            throw AssumptionViolation("block has zero spectrum; gram not invertible");
        sum_sq += sq;
        mean_inv += fam.probabilities[i] / sq;
    }
    out.sum_sigma_min_plus_sq = sum_sq;
    out.mean_inv_sigma_min_plus_sq = mean_inv;
    out.theta = bs.distribution() == Distribution::SigmaWeighted
                    ? dp * static_cast<double>(out.c_max) / sum_sq
                    : dp * mean_inv;
    return out;
}

} // namespace tkz
