#include "tkz/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace tkz {

double SamplerState::normal() {
    if (cached_normal_) {
        const double v = *cached_normal_;
        cached_normal_.reset();
        return v;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(a);
    return r * std::cos(a);
}

std::vector<std::int64_t> SamplerState::uniform_subset(std::int64_t m, std::int64_t k) {
    if (k < 0 || k > m) throw ConfigError("uniform_subset: k out of range");
    std::vector<std::int64_t> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    for (std::int64_t j = 0; j < k; ++j) {
        const auto r = j + static_cast<std::int64_t>(uniform_below(static_cast<std::uint64_t>(m - j)));
        std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(r)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

void SamplerState::shuffle(std::vector<std::int64_t>& v) {
    const auto n = static_cast<std::int64_t>(v.size());
    for (std::int64_t j = 0; j + 1 < n; ++j) {
        const auto r = j + static_cast<std::int64_t>(uniform_below(static_cast<std::uint64_t>(n - j)));
        std::swap(v[static_cast<std::size_t>(j)], v[static_cast<std::size_t>(r)]);
    }
}

} // namespace tkz
