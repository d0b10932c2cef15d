#pragma once

#include "cfsids/core.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfsids
{

struct CfsScore
{
    double merit = 0.0;
    std::size_t k = 0;
    double r_cf = 0.0;
    double r_ff = 0.0;
};

/// Sorted, distinct feature indices with optionally attached scores.
class FeatureSubset
{
public:
    FeatureSubset() = default;

    /// Accepts indices in any order; duplicates are rejected.
    explicit FeatureSubset(std::vector<std::size_t> indices) : indices_(std::move(indices))
    {
        std::sort(indices_.begin(), indices_.end());
        if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
            throw UsageError("feature subset contains duplicate indices");
    }

    static FeatureSubset all(std::size_t p)
    {
        std::vector<std::size_t> idx(p);
        for (std::size_t i = 0; i < p; ++i)
            idx[i] = i;
        return FeatureSubset(std::move(idx));
    }

    std::span<const std::size_t> indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    bool contains(std::size_t i) const { return std::binary_search(indices_.begin(), indices_.end(), i); }

    void check_bounds(std::size_t p) const
    {
        if (!indices_.empty() && indices_.back() >= p)
            throw UsageError("feature index " + std::to_string(indices_.back()) + " out of range for " +
                             std::to_string(p) + " features");
    }

    std::optional<CfsScore> cfs;
    std::optional<double> ig_sum;

    friend bool operator==(const FeatureSubset& a, const FeatureSubset& b) { return a.indices_ == b.indices_; }

private:
    std::vector<std::size_t> indices_;
};

} // namespace cfsids
