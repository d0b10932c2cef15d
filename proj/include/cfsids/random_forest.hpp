#pragma once

#include "cfsids/core.hpp"
#include "cfsids/io.hpp"
#include "cfsids/parallel.hpp"
#include "cfsids/rng.hpp"
#include "cfsids/subset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfsids
{

/// Gini index sum_k p_k (1 - p_k).
template <typename Count>
double gini(std::span<const Count> counts)
{
    double total = 0.0;
    for (auto c : counts)
        total += static_cast<double>(c);
    if (counts.empty() || !(total > 0.0))
        throw UsageError("gini of an empty node");
    double g = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / total;
        g += p * (1.0 - p);
    }
    return g;
}

/// Entropy -sum_k p_k ln p_k with 0 ln 0 = 0.
template <typename Count>
double entropy(std::span<const Count> counts)
{
    double total = 0.0;
    for (auto c : counts)
        total += static_cast<double>(c);
    if (counts.empty() || !(total > 0.0))
        throw UsageError("entropy of an empty node");
    double d = 0.0;
    for (auto c : counts) {
        if (c == 0)
            continue;
        const double p = static_cast<double>(c) / total;
        d -= p * std::log(p);
    }
    return d;
}

inline double gini(std::initializer_list<double> counts) { return gini(std::span<const double>(counts.begin(), counts.size())); }
inline double entropy(std::initializer_list<double> counts)
{
    return entropy(std::span<const double>(counts.begin(), counts.size()));
}

enum class ImportanceMode { weighted, unweighted };

struct ForestConfig
{
    std::size_t n_trees = 100;
    std::size_t max_depth = 20;
    std::size_t min_node_size = 2;
    /// Candidate features per split; floor(sqrt(p)) when unset.
    std::optional<std::size_t> features_per_split;
    bool bootstrap = true;
    ImportanceMode importance = ImportanceMode::weighted;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    std::size_t split_candidates(std::size_t p) const
    {
        const auto m = features_per_split.value_or(static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
        return std::clamp<std::size_t>(m, 1, p);
    }

    void validate(std::size_t p) const
    {
        if (n_trees < 1)
            throw UsageError("forest needs at least one tree");
        if (max_depth < 1)
            throw UsageError("max_depth must be at least 1");
        if (features_per_split && (*features_per_split < 1 || *features_per_split > p))
            throw UsageError("features_per_split must lie in [1, p]");
    }
};

struct TreeNode
{
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double gini = 0.0;
    double gini_decrease = 0.0;
    double entropy_gain = 0.0;
    double sample_fraction = 0.0;
    std::uint32_t majority = 0;
    std::vector<std::uint32_t> counts;

    bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree
{
    std::vector<TreeNode> nodes;

    const TreeNode& leaf_for(std::span<const double> row) const
    {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const auto& n = nodes[i];
            i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return nodes[i];
    }

    std::uint32_t predict(std::span<const double> row) const { return leaf_for(row).majority; }

    std::size_t depth() const
    {
        std::vector<std::size_t> d(nodes.size(), 0);
        std::size_t best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].is_leaf())
                continue;
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
            best = std::max(best, d[i] + 1);
        }
        return best;
    }

    std::size_t num_splits() const
    {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
    }
};

/// Labelled training view shared by the tree builders.
struct TrainingData
{
    const Matrix& x;
    std::span<const std::uint32_t> y;
    std::size_t num_classes;
};

struct Split
{
    std::size_t feature = 0;
    double threshold = 0.0;
    double weighted_gini = 0.0;
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
};

namespace detail
{

inline std::vector<std::uint32_t> class_counts(const TrainingData& d, std::span<const std::size_t> rows)
{
    std::vector<std::uint32_t> c(d.num_classes, 0);
    for (auto r : rows)
        ++c[d.y[r]];
    return c;
}

inline std::uint32_t argmax_count(std::span<const std::uint32_t> counts)
{
    return static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

/// Sum of squared counts over n; n*Gini = n - this.
inline double sq_over_n(std::span<const double> counts, double n)
{
    double s = 0.0;
    for (double c : counts)
        s += c * c;
    return s / n;
}

} // namespace detail

/// Minimizes the child-size-weighted Gini over the candidate features and the
/// midpoints between consecutive distinct values. Ties keep the lower feature
/// index, then the lower threshold; scores within kSplitTieTolerance count as
/// ties, since equal splits can differ in the last bit depending on which side
/// is summed first. Returns nothing unless impurity drops by more than that.
inline constexpr double kSplitTieTolerance = 1e-12;

inline std::optional<Split> best_split(const TrainingData& d, std::span<const std::size_t> rows,
                                       std::span<const std::size_t> candidates)
{
    const std::size_t n = rows.size();
    if (n < 2)
        return std::nullopt;
    const auto parent_counts = detail::class_counts(d, rows);
    const double parent = gini(std::span<const std::uint32_t>(parent_counts));
    if (parent <= 0.0)
        return std::nullopt;

    std::vector<std::size_t> sorted_candidates(candidates.begin(), candidates.end());
    std::sort(sorted_candidates.begin(), sorted_candidates.end());

    const double nd = static_cast<double>(n);
    std::optional<std::size_t> best_feature;
    double best_threshold = 0.0;
    double best_score = parent;

    std::vector<std::size_t> order(rows.begin(), rows.end());
    std::vector<double> left(d.num_classes);
    std::vector<double> right(d.num_classes);
    for (auto f : sorted_candidates) {
        std::copy(rows.begin(), rows.end(), order.begin());
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.x(a, f) < d.x(b, f); });
        std::fill(left.begin(), left.end(), 0.0);
        for (std::size_t k = 0; k < d.num_classes; ++k)
            right[k] = parent_counts[k];
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto cls = d.y[order[i]];
            left[cls] += 1.0;
            right[cls] -= 1.0;
            const double v = d.x(order[i], f);
            const double next = d.x(order[i + 1], f);
            if (!(next > v))
                continue;
            const double nl = static_cast<double>(i + 1);
            const double nr = nd - nl;
            // weighted Gini = (nl*Gl + nr*Gr)/n = (n - sum_l c^2/nl - sum_r c^2/nr)/n
            const double score = (nd - detail::sq_over_n(left, nl) - detail::sq_over_n(right, nr)) / nd;
            if (score < best_score - kSplitTieTolerance) {
                best_score = score;
                best_feature = f;
                best_threshold = v + (next - v) / 2.0;
                if (!(best_threshold < next))
                    best_threshold = v;
            }
        }
    }
    if (!best_feature)
        return std::nullopt;

    Split s;
    s.feature = *best_feature;
    s.threshold = best_threshold;
    s.weighted_gini = best_score;
    for (auto r : rows)
        (d.x(r, s.feature) <= s.threshold ? s.left : s.right).push_back(r);
    return s;
}

namespace detail
{

class TreeBuilder
{
public:
    TreeBuilder(const TrainingData& d, const ForestConfig& cfg, std::uint64_t tree_seed)
        : d_(d), cfg_(cfg), rng_(tree_seed), m_(cfg.split_candidates(d.x.cols()))
    {
    }

    Tree build(const std::vector<std::size_t>& sample)
    {
        root_size_ = static_cast<double>(sample.size());
        tree_.nodes.clear();
        grow(sample, 0);
        return std::move(tree_);
    }

private:
    std::size_t grow(const std::vector<std::size_t>& rows, std::size_t depth)
    {
        const std::size_t id = tree_.nodes.size();
        tree_.nodes.emplace_back();
        {
            auto& node = tree_.nodes[id];
            node.counts = class_counts(d_, rows);
            node.majority = argmax_count(node.counts);
            node.gini = gini(std::span<const std::uint32_t>(node.counts));
            node.sample_fraction = static_cast<double>(rows.size()) / root_size_;
        }
        const auto& cur = tree_.nodes[id];
        if (cur.gini <= 0.0 || depth >= cfg_.max_depth || rows.size() < cfg_.min_node_size)
            return id;

        auto split = best_split(d_, rows, draw_candidates(rows));
        if (!split)
            return id;

        const double parent_entropy = entropy(std::span<const std::uint32_t>(tree_.nodes[id].counts));
        const auto lc = class_counts(d_, split->left);
        const auto rc = class_counts(d_, split->right);
        const double nl = static_cast<double>(split->left.size());
        const double nr = static_cast<double>(split->right.size());
        const double child_entropy = (nl * entropy(std::span<const std::uint32_t>(lc)) +
                                      nr * entropy(std::span<const std::uint32_t>(rc))) /
                                     (nl + nr);
        {
            auto& node = tree_.nodes[id];
            node.feature = static_cast<std::int32_t>(split->feature);
            node.threshold = split->threshold;
            node.gini_decrease = node.gini - split->weighted_gini;
            node.entropy_gain = std::max(0.0, parent_entropy - child_entropy);
        }
        const auto l = grow(split->left, depth + 1);
        const auto r = grow(split->right, depth + 1);
        tree_.nodes[id].left = static_cast<std::int32_t>(l);
        tree_.nodes[id].right = static_cast<std::int32_t>(r);
        return id;
    }

    // m features in random order, skipping ones constant within the node.
    std::vector<std::size_t> draw_candidates(const std::vector<std::size_t>& rows)
    {
        const std::size_t p = d_.x.cols();
        std::vector<std::size_t> perm(p);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < p && out.size() < m_; ++i) {
            const auto j = i + static_cast<std::size_t>(rng_.below(p - i));
            std::swap(perm[i], perm[j]);
            const auto f = perm[i];
            const double first = d_.x(rows.front(), f);
            const bool varies = std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return d_.x(r, f) != first; });
            if (varies)
                out.push_back(f);
        }
        return out;
    }

    const TrainingData& d_;
    const ForestConfig& cfg_;
    Rng rng_;
    std::size_t m_;
    double root_size_ = 1.0;
    Tree tree_;
};

} // namespace detail

/// Grows one unpruned tree on the given (possibly repeated) row sample.
inline Tree grow_tree(const TrainingData& d, std::span<const std::size_t> sample, const ForestConfig& cfg,
                      std::uint64_t tree_seed)
{
    if (sample.empty())
        throw DataError("cannot grow a tree on an empty sample");
    detail::TreeBuilder b(d, cfg, tree_seed);
    return b.build({sample.begin(), sample.end()});
}

struct OobResult
{
    std::optional<double> accuracy;
    std::size_t scored = 0;
    std::size_t skipped = 0;
    std::string note;
};

struct TrainedForest
{
    std::vector<Tree> trees;
    /// Per tree, per training row: 1 when the row was drawn into the bootstrap.
    std::vector<std::vector<std::uint8_t>> inbag;
    std::vector<double> importances;
    OobResult oob;
    double build_seconds = 0.0;
    std::size_t num_features = 0;
    std::size_t num_classes = 0;
    ForestConfig config;
};

inline std::vector<double> vote_fractions(const TrainedForest& forest, std::span<const double> row)
{
    std::vector<double> v(forest.num_classes, 0.0);
    for (const auto& t : forest.trees)
        v[t.predict(row)] += 1.0;
    for (auto& x : v)
        x /= static_cast<double>(forest.trees.size());
    return v;
}

namespace detail
{

inline std::uint32_t majority_vote(std::span<const std::uint32_t> votes)
{
    return argmax_count(votes);
}

} // namespace detail

inline std::vector<std::uint32_t> predict(const TrainedForest& forest, const Matrix& rows, std::size_t threads = 1)
{
    if (rows.cols() != forest.num_features)
        throw UsageError("forest expects " + std::to_string(forest.num_features) + " features, got " +
                         std::to_string(rows.cols()));
    std::vector<std::uint32_t> out(rows.rows());
    parallel_for(rows.rows(), threads, [&](std::size_t r) {
        std::vector<std::uint32_t> votes(forest.num_classes, 0);
        for (const auto& t : forest.trees)
            ++votes[t.predict(rows.row(r))];
        out[r] = detail::majority_vote(votes);
    });
    return out;
}

/// Majority vote of each row's out-of-bag trees. Rows drawn by every tree are
/// skipped and counted.
inline OobResult oob_score(const TrainedForest& forest, const Matrix& x, std::span<const std::uint32_t> y)
{
    OobResult res;
    if (forest.inbag.size() != forest.trees.size())
        throw UsageError("forest carries no bootstrap masks");
    std::size_t correct = 0;
    std::vector<std::uint32_t> votes(forest.num_classes);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::fill(votes.begin(), votes.end(), 0);
        bool any = false;
        for (std::size_t t = 0; t < forest.trees.size(); ++t) {
            if (forest.inbag[t][r])
                continue;
            any = true;
            ++votes[forest.trees[t].predict(x.row(r))];
        }
        if (!any) {
            ++res.skipped;
            continue;
        }
        ++res.scored;
        correct += detail::majority_vote(votes) == y[r];
    }
    if (res.scored == 0)
        res.note = "every row is in-bag for every tree; out-of-bag accuracy is undefined";
    else
        res.accuracy = static_cast<double>(correct) / static_cast<double>(res.scored);
    return res;
}

/// Entropy gain per split, accumulated per feature. Weighted mode scales each
/// gain by the node's share of the root sample and averages the per-tree totals;
/// unweighted mode averages raw gains over all splits on the feature.
inline std::vector<double> feature_importance(const TrainedForest& forest)
{
    const std::size_t p = forest.num_features;
    std::vector<double> total(p, 0.0);
    std::vector<std::size_t> splits(p, 0);
    std::size_t all_splits = 0;
    for (const auto& t : forest.trees) {
        std::vector<double> per_tree(p, 0.0);
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                continue;
            const auto f = static_cast<std::size_t>(n.feature);
            ++splits[f];
            ++all_splits;
            per_tree[f] += forest.config.importance == ImportanceMode::weighted ? n.entropy_gain * n.sample_fraction
                                                                                 : n.entropy_gain;
        }
        for (std::size_t f = 0; f < p; ++f)
            total[f] += per_tree[f];
    }
    if (all_splits == 0)
        throw NumericError("forest has no splits; importances are undefined");
    std::vector<double> imp(p, 0.0);
    for (std::size_t f = 0; f < p; ++f) {
        if (forest.config.importance == ImportanceMode::weighted)
            imp[f] = total[f] / static_cast<double>(forest.trees.size());
        else
            imp[f] = splits[f] ? total[f] / static_cast<double>(splits[f]) : 0.0;
    }
    const double s = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (!(s > 0.0))
        throw NumericError("all split gains are zero; importances are undefined");
    for (auto& v : imp)
        v /= s;
    return imp;
}

inline TrainedForest train_forest(const Matrix& x, std::span<const std::uint32_t> y, std::size_t num_classes,
                                  const ForestConfig& cfg)
{
    cfg.validate(x.cols());
    if (x.rows() != y.size())
        throw UsageError("feature and label counts differ");
    if (x.rows() == 0)
        throw DataError("empty training set");
    {
        std::vector<std::uint8_t> seen(num_classes, 0);
        std::size_t distinct = 0;
        for (auto l : y) {
            if (l >= num_classes)
                throw DataError("label index out of range");
            distinct += seen[l] == 0;
            seen[l] = 1;
        }
        if (distinct < 2)
            throw DataError("training data holds a single class");
    }

    TrainedForest forest;
    forest.num_features = x.cols();
    forest.num_classes = num_classes;
    forest.config = cfg;
    forest.trees.resize(cfg.n_trees);
    forest.inbag.resize(cfg.n_trees);
    const TrainingData data{x, y, num_classes};
    const std::size_t n = x.rows();

    const auto start = std::chrono::steady_clock::now();
    parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
        Rng boot(derive_seed(cfg.seed, {0xF0, t, 0}));
        std::vector<std::size_t> sample(n);
        auto& mask = forest.inbag[t];
        mask.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sample[i] = cfg.bootstrap ? static_cast<std::size_t>(boot.below(n)) : i;
            mask[sample[i]] = 1;
        }
        forest.trees[t] = grow_tree(data, sample, cfg, derive_seed(cfg.seed, {0xF0, t, 1}));
    });
    forest.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    forest.importances = feature_importance(forest);
    forest.oob = oob_score(forest, x, y);
    return forest;
}

/// The k highest-importance features; equal importances favour the lower index.
inline FeatureSubset select_top_k(std::span<const double> importances, std::size_t k)
{
    if (k < 1 || k > importances.size())
        throw UsageError("k must lie in [1, " + std::to_string(importances.size()) + "]");
    std::vector<std::size_t> order(importances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
    order.resize(k);
    return FeatureSubset(std::move(order));
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::string_view kForestMagic = "CFSIDSRF";
inline constexpr std::uint32_t kForestVersion = 1;

inline void save_forest(const std::filesystem::path& path, const TrainedForest& f)
{
    io::BinaryWriter w(path);
    w.magic(kForestMagic, kForestVersion);
    w.put<std::uint64_t>(f.num_features);
    w.put<std::uint64_t>(f.num_classes);
    w.put<std::uint64_t>(f.config.n_trees);
    w.put<std::uint64_t>(f.config.max_depth);
    w.put<std::uint64_t>(f.config.min_node_size);
    w.put<std::uint64_t>(f.config.split_candidates(f.num_features));
    w.put<std::uint8_t>(f.config.bootstrap ? 1 : 0);
    w.put<std::uint8_t>(f.config.importance == ImportanceMode::weighted ? 0 : 1);
    w.put<std::uint64_t>(f.config.seed);
    w.put<double>(f.build_seconds);
    w.put<double>(f.oob.accuracy.value_or(std::numeric_limits<double>::quiet_NaN()));
    w.put<std::uint64_t>(f.oob.scored);
    w.put<std::uint64_t>(f.oob.skipped);
    w.put_vector<double>(f.importances);
    w.put<std::uint64_t>(f.trees.size());
    for (std::size_t t = 0; t < f.trees.size(); ++t) {
        const auto& nodes = f.trees[t].nodes;
        w.put<std::uint64_t>(nodes.size());
        for (const auto& n : nodes) {
            w.put(n.feature);
            w.put(n.threshold);
            w.put(n.left);
            w.put(n.right);
            w.put(n.gini);
            w.put(n.gini_decrease);
            w.put(n.entropy_gain);
            w.put(n.sample_fraction);
            w.put(n.majority);
            w.put_vector<std::uint32_t>(n.counts);
        }
        w.put_vector<std::uint8_t>(f.inbag[t]);
    }
    w.finish();
}

inline TrainedForest load_forest(const std::filesystem::path& path)
{
    io::BinaryReader r(path);
    if (auto v = r.magic(kForestMagic); v != kForestVersion)
        throw DataError("unsupported forest file version " + std::to_string(v));
    TrainedForest f;
    f.num_features = r.get<std::uint64_t>();
    f.num_classes = r.get<std::uint64_t>();
    f.config.n_trees = r.get<std::uint64_t>();
    f.config.max_depth = r.get<std::uint64_t>();
    f.config.min_node_size = r.get<std::uint64_t>();
    f.config.features_per_split = r.get<std::uint64_t>();
    f.config.bootstrap = r.get<std::uint8_t>() != 0;
    f.config.importance = r.get<std::uint8_t>() == 0 ? ImportanceMode::weighted : ImportanceMode::unweighted;
    f.config.seed = r.get<std::uint64_t>();
    f.build_seconds = r.get<double>();
    const double oob = r.get<double>();
    if (!std::isnan(oob))
        f.oob.accuracy = oob;
    f.oob.scored = r.get<std::uint64_t>();
    f.oob.skipped = r.get<std::uint64_t>();
    f.importances = r.get_vector<double>();
    const auto nt = r.get<std::uint64_t>();
    f.trees.resize(nt);
    f.inbag.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto nn = r.get<std::uint64_t>();
        auto& nodes = f.trees[t].nodes;
        nodes.resize(nn);
        for (auto& n : nodes) {
            n.feature = r.get<std::int32_t>();
            n.threshold = r.get<double>();
            n.left = r.get<std::int32_t>();
            n.right = r.get<std::int32_t>();
            n.gini = r.get<double>();
            n.gini_decrease = r.get<double>();
            n.entropy_gain = r.get<double>();
            n.sample_fraction = r.get<double>();
            n.majority = r.get<std::uint32_t>();
            n.counts = r.get_vector<std::uint32_t>();
            const bool bad_child = !n.is_leaf() && (n.left < 0 || n.right < 0 || static_cast<std::uint64_t>(n.left) >= nn ||
                                                    static_cast<std::uint64_t>(n.right) >= nn);
            if (bad_child || (!n.is_leaf() && static_cast<std::size_t>(n.feature) >= f.num_features) ||
                n.majority >= f.num_classes)
                throw DataError("corrupt tree node in '" + path.string() + "'");
        }
        f.inbag[t] = r.get_vector<std::uint8_t>();
    }
    return f;
}

/// CSV `feature,importance` sorted by descending importance, preceded by
/// `# key: value` metadata lines.
inline void write_importances(const std::filesystem::path& path, const TrainedForest& f,
                              std::span<const std::string> names)
{
    if (names.size() != f.importances.size())
        throw UsageError("importance/name count mismatch");
    auto out = io::open_out(path);
    out << "# seed: " << f.config.seed << '\n';
    out << "# n_trees: " << f.config.n_trees << '\n';
    out << "# max_depth: " << f.config.max_depth << '\n';
    out << "# features_per_split: " << f.config.split_candidates(f.num_features) << '\n';
    out << "# importance_mode: " << (f.config.importance == ImportanceMode::weighted ? "weighted" : "unweighted") << '\n';
    out << "# oob_accuracy: " << (f.oob.accuracy ? io::format_double(*f.oob.accuracy) : std::string("undefined")) << '\n';
    out << "# build_seconds: " << io::format_double(f.build_seconds) << '\n';
    out << "feature,importance\n";
    std::vector<std::size_t> order(names.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f.importances[a] > f.importances[b]; });
    for (auto i : order)
        out << io::csv_escape(names[i]) << ',' << io::format_double(f.importances[i]) << '\n';
}

/// Reads an importance file back into feature order given by `names`.
inline std::vector<double> read_importances(const std::filesystem::path& path, std::span<const std::string> names)
{
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < names.size(); ++i)
        index.emplace(names[i], i);
    std::vector<double> imp(names.size(), std::numeric_limits<double>::quiet_NaN());
    auto in = io::open_in(path);
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line.front() == '#')
            continue;
        if (!header) {
            header = true;
            continue;
        }
        auto cells = io::split_csv_line(line);
        if (cells.size() != 2)
            throw DataError("'" + path.string() + "': malformed importance row");
        auto it = index.find(cells[0]);
        if (it == index.end())
            throw DataError("'" + path.string() + "': unknown feature '" + cells[0] + "'");
        if (!io::parse_double(cells[1], imp[it->second]))
            throw DataError("'" + path.string() + "': bad importance for '" + cells[0] + "'");
    }
    for (std::size_t i = 0; i < imp.size(); ++i)
        if (std::isnan(imp[i]))
            throw DataError("'" + path.string() + "': no importance for '" + names[i] + "'");
    return imp;
}

} // namespace cfsids
