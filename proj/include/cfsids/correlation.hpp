#pragma once

#include "cfsids/core.hpp"
#include "cfsids/io.hpp"
#include "cfsids/parallel.hpp"
#include "cfsids/subset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfsids
{

/// Spearman matrix over feature columns followed by class indicator columns.
struct CorrelationMatrix
{
    Matrix values;
    std::vector<std::string> names;
    std::size_t class_boundary = 0;

    std::size_t num_features() const noexcept { return class_boundary; }
    std::size_t num_classes() const noexcept { return names.size() - class_boundary; }

    friend bool operator==(const CorrelationMatrix&, const CorrelationMatrix&) = default;
};

/// 1-based fractional ranks; tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> x)
{
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && x[order[j]] == x[order[i]])
            ++j;
        // positions i..j-1 (0-based) hold ranks i+1..j
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t)
            ranks[order[t]] = r;
        i = j;
    }
    return ranks;
}

namespace detail
{

struct CenteredColumn
{
    std::vector<double> dev;
    double norm = 0.0;
};

inline CenteredColumn center_ranks(std::span<const double> x)
{
    CenteredColumn c;
    c.dev = average_ranks(x);
    const double mean = std::accumulate(c.dev.begin(), c.dev.end(), 0.0) / static_cast<double>(c.dev.size());
    double ss = 0.0;
    for (auto& d : c.dev) {
        d -= mean;
        ss += d * d;
    }
    c.norm = std::sqrt(ss);
    return c;
}

inline double centered_corr(const CenteredColumn& a, const CenteredColumn& b)
{
    // A column without rank variation correlates with nothing.
    if (a.norm == 0.0 || b.norm == 0.0)
        return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.dev.size(); ++i)
        dot += a.dev[i] * b.dev[i];
    return std::clamp(dot / (a.norm * b.norm), -1.0, 1.0);
}

} // namespace detail

inline double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw UsageError("spearman: length mismatch");
    if (x.size() < 2)
        throw DataError("spearman: need at least 2 rows");
    return detail::centered_corr(detail::center_ranks(x), detail::center_ranks(y));
}

inline CorrelationMatrix spearman_matrix(const Matrix& features, const Matrix& class_indicators,
                                         std::vector<std::string> feature_names = {},
                                         std::vector<std::string> class_names = {}, std::size_t threads = 1)
{
    if (features.rows() != class_indicators.rows())
        throw UsageError("feature and class matrices differ in row count");
    if (features.rows() < 2)
        throw DataError("correlation needs at least 2 rows");
    const std::size_t p = features.cols();
    const std::size_t q = class_indicators.cols();
    const std::size_t n = p + q;
    if (feature_names.empty())
        for (std::size_t i = 0; i < p; ++i)
            feature_names.push_back("f" + std::to_string(i));
    if (class_names.empty())
        for (std::size_t i = 0; i < q; ++i)
            class_names.push_back("class" + std::to_string(i));
    if (feature_names.size() != p || class_names.size() != q)
        throw UsageError("name count does not match column count");

    std::vector<detail::CenteredColumn> cols(n);
    parallel_for(n, threads, [&](std::size_t c) {
        cols[c] = c < p ? detail::center_ranks(features.column(c)) : detail::center_ranks(class_indicators.column(c - p));
    });

    CorrelationMatrix cm;
    cm.values = Matrix(n, n);
    cm.class_boundary = p;
    cm.names = std::move(feature_names);
    cm.names.insert(cm.names.end(), class_names.begin(), class_names.end());
    parallel_for(n, threads, [&](std::size_t i) {
        cm.values(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j)
            cm.values(i, j) = detail::centered_corr(cols[i], cols[j]);
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            cm.values(j, i) = cm.values(i, j);
    return cm;
}

/// CFS merit from the averaged correlations.
inline double cfs_merit_formula(std::size_t k, double r_cf, double r_ff)
{
    if (k == 0)
        return 0.0;
    const double kd = static_cast<double>(k);
    return kd * r_cf / std::sqrt(kd + kd * (kd - 1.0) * r_ff);
}

/// Precomputed absolute correlations for repeated subset scoring. Holds a
/// reference-free copy so it can be shared read-only across threads.
class CfsEvaluator
{
public:
    explicit CfsEvaluator(const CorrelationMatrix& corr)
        : p_(corr.num_features()), abs_ff_(p_ * p_), class_mean_(p_, 0.0)
    {
        if (corr.class_boundary > corr.names.size())
            throw UsageError("class boundary beyond matrix size");
        const std::size_t q = corr.num_classes();
        for (std::size_t i = 0; i < p_; ++i) {
            for (std::size_t j = 0; j < p_; ++j)
                abs_ff_[i * p_ + j] = std::abs(corr.values(i, j));
            double s = 0.0;
            for (std::size_t c = 0; c < q; ++c)
                s += std::abs(corr.values(i, p_ + c));
            class_mean_[i] = q == 0 ? 0.0 : s / static_cast<double>(q);
        }
    }

    std::size_t num_features() const noexcept { return p_; }

    /// Mean absolute class correlation of a single feature.
    double class_correlation(std::size_t i) const { return class_mean_.at(i); }

    CfsScore score(std::span<const std::size_t> subset) const
    {
        CfsScore s;
        s.k = subset.size();
        if (s.k == 0)
            return s;
        double cf = 0.0;
        double ff = 0.0;
        for (std::size_t a = 0; a < subset.size(); ++a) {
            const auto i = subset[a];
            if (i >= p_)
                throw UsageError("subset index " + std::to_string(i) + " is not a feature column");
            cf += class_mean_[i];
            for (std::size_t b = a + 1; b < subset.size(); ++b)
                ff += abs_ff_[i * p_ + subset[b]];
        }
        const double kd = static_cast<double>(s.k);
        s.r_cf = cf / kd;
        s.r_ff = s.k > 1 ? ff / (kd * (kd - 1.0) / 2.0) : 0.0;
        s.merit = cfs_merit_formula(s.k, s.r_cf, s.r_ff);
        return s;
    }

    CfsScore score(const FeatureSubset& subset) const { return score(subset.indices()); }

private:
    std::size_t p_;
    std::vector<double> abs_ff_;
    std::vector<double> class_mean_;
};

inline CfsScore cfs_merit(const CorrelationMatrix& corr, const FeatureSubset& subset)
{
    return CfsEvaluator(corr).score(subset);
}

inline void check_importances(std::span<const double> importances)
{
    double total = 0.0;
    for (double v : importances) {
        if (!(v >= 0.0))
            throw DataError("importances must be nonnegative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw DataError("importances must sum to 1 (got " + io::format_double(total) + ")");
}

inline double ig_sum(std::span<const double> importances, const FeatureSubset& subset)
{
    check_importances(importances);
    subset.check_bounds(importances.size());
    double s = 0.0;
    for (auto i : subset.indices())
        s += importances[i];
    return s;
}

/// Writes the matrix as CSV (header = names) plus `<path>.meta.json` carrying
/// names and the feature/class boundary.
inline void export_heatmap(const CorrelationMatrix& corr, const std::filesystem::path& path)
{
    auto out = io::open_out(path);
    out << "name";
    for (const auto& n : corr.names)
        out << ',' << io::csv_escape(n);
    out << '\n';
    for (std::size_t i = 0; i < corr.names.size(); ++i) {
        out << io::csv_escape(corr.names[i]);
        for (std::size_t j = 0; j < corr.names.size(); ++j)
            out << ',' << io::format_double(corr.values(i, j));
        out << '\n';
    }
    if (!out)
        throw DataError("write failed for '" + path.string() + "'");

    nlohmann::ordered_json meta;
    meta["names"] = corr.names;
    meta["class_boundary"] = corr.class_boundary;
    meta["size"] = corr.names.size();
    auto side = io::open_out(path.string() + ".meta.json");
    side << meta.dump(2) << '\n';
}

inline CorrelationMatrix import_heatmap(const std::filesystem::path& path)
{
    auto meta_in = io::open_in(path.string() + ".meta.json");
    const auto meta = nlohmann::json::parse(meta_in);
    CorrelationMatrix corr;
    corr.names = meta.at("names").get<std::vector<std::string>>();
    corr.class_boundary = meta.at("class_boundary").get<std::size_t>();
    if (corr.class_boundary > corr.names.size())
        throw DataError("heatmap metadata: class boundary beyond matrix size");
    const std::size_t n = corr.names.size();
    corr.values = Matrix(n, n);

    auto in = io::open_in(path);
    std::string line;
    std::getline(in, line);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw DataError("'" + path.string() + "': truncated matrix");
        auto cells = io::split_csv_line(line);
        if (cells.size() != n + 1)
            throw DataError("'" + path.string() + "': row " + std::to_string(i) + " has wrong width");
        for (std::size_t j = 0; j < n; ++j)
            if (!io::parse_double(cells[j + 1], corr.values(i, j)))
                throw DataError("'" + path.string() + "': bad number in row " + std::to_string(i));
    }
    return corr;
}

} // namespace cfsids
