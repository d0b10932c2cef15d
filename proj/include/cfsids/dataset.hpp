#pragma once

#include "cfsids/core.hpp"
#include "cfsids/io.hpp"
#include "cfsids/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfsids
{

enum class CellKind : std::uint8_t { number, missing, nonfinite, text };

/// Flow records as read from CSV, stored column-wise. The label column keeps
/// its raw text in `labels`; its numeric slot is unused.
struct RawTable
{
    std::vector<std::string> column_names;
    std::string label_column;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<CellKind>> kinds;
    std::vector<std::string> labels;
    std::vector<std::size_t> source_lines;

    std::size_t rows() const noexcept { return labels.size(); }
    std::size_t cols() const noexcept { return column_names.size(); }

    std::size_t label_index() const
    {
        auto it = std::find(column_names.begin(), column_names.end(), label_column);
        if (it == column_names.end())
            throw DataError("label column '" + label_column + "' missing from table");
        return static_cast<std::size_t>(it - column_names.begin());
    }

    std::optional<std::size_t> find_column(std::string_view name) const
    {
        auto it = std::find(column_names.begin(), column_names.end(), name);
        if (it == column_names.end())
            return std::nullopt;
        return static_cast<std::size_t>(it - column_names.begin());
    }
};

/// Cleaned, normalized and label-encoded predictor matrix.
struct Dataset
{
    Matrix features;
    std::vector<std::string> feature_names;
    std::vector<std::uint32_t> labels_cat;
    std::vector<std::uint8_t> labels_bin;
    std::vector<std::string> class_names;
    std::string benign_name;

    std::size_t rows() const noexcept { return features.rows(); }
    std::size_t num_features() const noexcept { return features.cols(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }

    Dataset select_rows(std::span<const std::size_t> idx) const
    {
        Dataset out;
        out.features = features.select_rows(idx);
        out.feature_names = feature_names;
        out.labels_cat = gather<std::uint32_t>(labels_cat, idx);
        out.labels_bin = gather<std::uint8_t>(labels_bin, idx);
        out.class_names = class_names;
        out.benign_name = benign_name;
        return out;
    }

    Dataset select_features(std::span<const std::size_t> idx) const
    {
        Dataset out = *this;
        out.features = features.select_cols(idx);
        out.feature_names = gather<std::string>(feature_names, idx);
        return out;
    }

    /// Labels for the chosen task: categorical classes or 0/1 attack flag.
    std::vector<std::uint32_t> targets(bool binary) const
    {
        if (!binary)
            return labels_cat;
        return {labels_bin.begin(), labels_bin.end()};
    }

    std::vector<std::string> target_names(bool binary) const
    {
        if (!binary)
            return class_names;
        return {benign_name, "Attack"};
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitPair
{
    Dataset train;
    Dataset test;
    std::uint64_t seed = 0;
    double ratio = 0.5;
    std::vector<std::string> warnings;
};

namespace detail
{

inline std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace detail

/// Classifies one CSV cell. Empty and NaN are missing; infinities are non-finite.
inline CellKind parse_cell(std::string_view raw, double& value)
{
    const auto s = detail::trim(raw);
    const auto l = detail::lower(s);
    if (l.empty() || l == "nan") {
        value = std::numeric_limits<double>::quiet_NaN();
        return CellKind::missing;
    }
    if (l == "infinity" || l == "inf" || l == "+infinity" || l == "+inf") {
        value = std::numeric_limits<double>::infinity();
        return CellKind::nonfinite;
    }
    if (l == "-infinity" || l == "-inf") {
        value = -std::numeric_limits<double>::infinity();
        return CellKind::nonfinite;
    }
    if (io::parse_double(s, value))
        return std::isfinite(value) ? CellKind::number : CellKind::nonfinite;
    value = std::numeric_limits<double>::quiet_NaN();
    return CellKind::text;
}

inline RawTable load_csv(const std::filesystem::path& path, const std::string& label_column)
{
    if (!std::filesystem::exists(path))
        throw DataError("no such file: '" + path.string() + "'");
    auto in = io::open_in(path);
    std::string line;
    if (!std::getline(in, line))
        throw DataError("'" + path.string() + "' has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
        line.erase(0, 3);

    RawTable t;
    t.label_column = label_column;
    for (auto& name : io::split_csv_line(line))
        t.column_names.emplace_back(detail::trim(name));
    const auto label_idx = t.find_column(label_column);
    if (!label_idx)
        throw DataError("'" + path.string() + "': header lacks label column '" + label_column + "'");

    const std::size_t ncols = t.cols();
    t.values.resize(ncols);
    t.kinds.resize(ncols);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty())
            continue;
        auto cells = io::split_csv_line(line);
        if (cells.size() != ncols)
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                            std::to_string(ncols) + " cells, found " + std::to_string(cells.size()));
        // CIC exports repeat the header row inside concatenated day files.
        if (detail::trim(cells[*label_idx]) == label_column)
            continue;
        for (std::size_t c = 0; c < ncols; ++c) {
            if (c == *label_idx) {
                t.values[c].push_back(0.0);
                t.kinds[c].push_back(CellKind::text);
                continue;
            }
            double v = 0.0;
            t.kinds[c].push_back(parse_cell(cells[c], v));
            t.values[c].push_back(v);
        }
        t.labels.emplace_back(detail::trim(cells[*label_idx]));
        t.source_lines.push_back(line_no);
    }
    return t;
}

/// Row-wise concatenation over the union of columns (first-seen order).
/// Cells for columns a file lacks are marked missing.
inline RawTable concat_tables(const std::vector<RawTable>& tables)
{
    if (tables.empty())
        throw DataError("no input tables");
    if (tables.size() == 1)
        return tables.front();
    RawTable out;
    out.label_column = tables.front().label_column;
    for (const auto& t : tables) {
        if (t.label_column != out.label_column)
            throw DataError("input tables disagree on the label column");
        for (const auto& n : t.column_names)
            if (!out.find_column(n))
                out.column_names.push_back(n);
    }
    out.values.resize(out.cols());
    out.kinds.resize(out.cols());
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& t : tables) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            auto src = t.find_column(out.column_names[c]);
            if (src) {
                out.values[c].insert(out.values[c].end(), t.values[*src].begin(), t.values[*src].end());
                out.kinds[c].insert(out.kinds[c].end(), t.kinds[*src].begin(), t.kinds[*src].end());
            } else {
                out.values[c].insert(out.values[c].end(), t.rows(), nan);
                out.kinds[c].insert(out.kinds[c].end(), t.rows(), CellKind::missing);
            }
        }
        out.labels.insert(out.labels.end(), t.labels.begin(), t.labels.end());
        out.source_lines.insert(out.source_lines.end(), t.source_lines.begin(), t.source_lines.end());
    }
    return out;
}

inline RawTable drop_named_columns(const RawTable& table, const std::vector<std::string>& names)
{
    const std::set<std::string> drop(names.begin(), names.end());
    if (drop.contains(table.label_column))
        throw UsageError("cannot drop the label column '" + table.label_column + "'");
    RawTable out;
    out.label_column = table.label_column;
    out.labels = table.labels;
    out.source_lines = table.source_lines;
    for (std::size_t c = 0; c < table.cols(); ++c) {
        if (drop.contains(table.column_names[c]))
            continue;
        out.column_names.push_back(table.column_names[c]);
        out.values.push_back(table.values[c]);
        out.kinds.push_back(table.kinds[c]);
    }
    return out;
}

namespace detail
{

inline RawTable keep_rows(const RawTable& table, const std::vector<std::size_t>& keep)
{
    RawTable out;
    out.column_names = table.column_names;
    out.label_column = table.label_column;
    out.values.resize(table.cols());
    out.kinds.resize(table.cols());
    for (std::size_t c = 0; c < table.cols(); ++c) {
        out.values[c] = gather<double>(table.values[c], keep);
        out.kinds[c] = gather<CellKind>(table.kinds[c], keep);
    }
    out.labels = gather<std::string>(table.labels, keep);
    out.source_lines = gather<std::size_t>(table.source_lines, keep);
    return out;
}

} // namespace detail

/// Removes every row holding a missing or non-finite predictor cell.
inline std::pair<RawTable, std::size_t> drop_nonfinite_rows(const RawTable& table)
{
    const auto label_idx = table.label_index();
    std::vector<std::size_t> keep;
    keep.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        bool bad = false;
        for (std::size_t c = 0; c < table.cols() && !bad; ++c) {
            if (c == label_idx)
                continue;
            const auto k = table.kinds[c][r];
            bad = k == CellKind::missing || k == CellKind::nonfinite;
        }
        if (!bad)
            keep.push_back(r);
    }
    if (keep.empty() && table.rows() > 0)
        throw DataError("every row contains a missing or non-finite value");
    const std::size_t removed = table.rows() - keep.size();
    if (removed == 0)
        return {table, 0};
    return {detail::keep_rows(table, keep), removed};
}

/// Drops predictor columns taking fewer than two distinct values.
inline std::pair<RawTable, std::vector<std::string>> drop_constant_columns(const RawTable& table)
{
    const auto label_idx = table.label_index();
    RawTable out;
    out.label_column = table.label_column;
    out.labels = table.labels;
    out.source_lines = table.source_lines;
    std::vector<std::string> dropped;
    for (std::size_t c = 0; c < table.cols(); ++c) {
        bool constant = c != label_idx;
        if (constant) {
            const auto& v = table.values[c];
            const auto& k = table.kinds[c];
            for (std::size_t r = 1; r < v.size() && constant; ++r)
                constant = k[r] == k[0] && (k[r] != CellKind::number || v[r] == v[0]);
        }
        if (constant) {
            dropped.push_back(table.column_names[c]);
            continue;
        }
        out.column_names.push_back(table.column_names[c]);
        out.values.push_back(table.values[c]);
        out.kinds.push_back(table.kinds[c]);
    }
    return {std::move(out), std::move(dropped)};
}

struct MinMax
{
    double min = 0.0;
    double max = 1.0;
};

inline std::vector<MinMax> fit_minmax(const Matrix& train)
{
    std::vector<MinMax> ranges(train.cols(), MinMax{std::numeric_limits<double>::infinity(),
                                                    -std::numeric_limits<double>::infinity()});
    for (std::size_t r = 0; r < train.rows(); ++r)
        for (std::size_t c = 0; c < train.cols(); ++c) {
            ranges[c].min = std::min(ranges[c].min, train(r, c));
            ranges[c].max = std::max(ranges[c].max, train(r, c));
        }
    for (std::size_t c = 0; c < ranges.size(); ++c)
        if (!(ranges[c].max > ranges[c].min))
            throw DataError("column " + std::to_string(c) + " is constant in the fitting partition");
    return ranges;
}

/// Affine map onto [0,1] using fitted ranges, clamped.
inline Matrix apply_minmax(const Matrix& m, const std::vector<MinMax>& ranges)
{
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const double scaled = (m(r, c) - ranges[c].min) / (ranges[c].max - ranges[c].min);
            out(r, c) = std::clamp(scaled, 0.0, 1.0);
        }
    return out;
}

struct NormalizedPair
{
    Matrix train;
    Matrix applied;
    std::vector<MinMax> ranges;
};

inline NormalizedPair minmax_normalize(const Matrix& train, const Matrix& apply_to)
{
    auto ranges = fit_minmax(train);
    return {apply_minmax(train, ranges), apply_minmax(apply_to, ranges), ranges};
}

struct LabelEncoding
{
    std::vector<std::uint32_t> labels_cat;
    std::vector<std::uint8_t> labels_bin;
    std::vector<std::string> class_names;
};

using LabelGrouping = std::map<std::string, std::string>;

inline LabelEncoding encode_labels(const RawTable& table, const std::string& benign_name,
                                   const std::optional<LabelGrouping>& grouping = std::nullopt)
{
    std::vector<std::string> grouped;
    grouped.reserve(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const auto& raw = table.labels[r];
        if (grouping) {
            auto it = grouping->find(raw);
            if (it == grouping->end())
                throw DataError("label '" + raw + "' (line " + std::to_string(table.source_lines[r]) +
                                ") is not covered by the label grouping");
            grouped.push_back(it->second);
        } else {
            grouped.push_back(raw);
        }
    }
    const std::set<std::string> distinct(grouped.begin(), grouped.end());
    if (!distinct.contains(benign_name))
        throw DataError("benign class '" + benign_name + "' does not occur among the labels");

    LabelEncoding enc;
    enc.class_names.assign(distinct.begin(), distinct.end());
    std::map<std::string, std::uint32_t> index;
    for (std::uint32_t i = 0; i < enc.class_names.size(); ++i)
        index[enc.class_names[i]] = i;
    enc.labels_cat.reserve(grouped.size());
    enc.labels_bin.reserve(grouped.size());
    for (const auto& g : grouped) {
        enc.labels_cat.push_back(index.at(g));
        enc.labels_bin.push_back(g != benign_name ? 1 : 0);
    }
    return enc;
}

/// Reads a two-column CSV `raw_label,group` (header optional, `#` comments).
inline LabelGrouping load_grouping(const std::filesystem::path& path)
{
    auto in = io::open_in(path);
    LabelGrouping g;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = detail::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        auto cells = io::split_csv_line(t);
        if (cells.size() != 2)
            throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected raw,group");
        auto raw = std::string(detail::trim(cells[0]));
        auto grp = std::string(detail::trim(cells[1]));
        if (line_no == 1 && detail::lower(raw) == "raw" && detail::lower(grp) == "group")
            continue;
        g[raw] = grp;
    }
    return g;
}

/// Predictor matrix from a cleaned table. Any remaining text cell is an error.
inline Matrix table_features(const RawTable& table, std::vector<std::string>& names)
{
    const auto label_idx = table.label_index();
    std::vector<std::size_t> cols;
    names.clear();
    for (std::size_t c = 0; c < table.cols(); ++c)
        if (c != label_idx) {
            cols.push_back(c);
            names.push_back(table.column_names[c]);
        }
    Matrix m(table.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto c = cols[j];
        for (std::size_t r = 0; r < table.rows(); ++r) {
            if (table.kinds[c][r] != CellKind::number)
                throw DataError("column '" + table.column_names[c] + "' holds a non-numeric cell at line " +
                                std::to_string(table.source_lines[r]));
            m(r, j) = table.values[c][r];
        }
    }
    return m;
}

/// Seeded shuffle-and-partition. Stratified mode splits each class separately;
/// a class with a single row goes to train and is noted in `warnings`.
inline SplitPair split(const Dataset& data, double ratio, std::uint64_t seed, bool stratified)
{
    if (!(ratio > 0.0 && ratio < 1.0))
        throw UsageError("split ratio must lie strictly between 0 and 1");
    const std::size_t n = data.rows();
    if (n < 2)
        throw DataError("need at least 2 rows to split");

    SplitPair out;
    out.seed = seed;
    out.ratio = ratio;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    auto take = [&](std::vector<std::size_t>& idx, std::uint64_t stream, bool clamp_both) {
        Rng rng(derive_seed(seed, {0x5Eu, stream}));
        rng.shuffle(idx.begin(), idx.end());
        auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
        if (clamp_both)
            n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    };

    if (!stratified) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = i;
        take(idx, 0, true);
    } else {
        std::vector<std::vector<std::size_t>> by_class(data.num_classes());
        for (std::size_t i = 0; i < n; ++i)
            by_class[data.labels_cat[i]].push_back(i);
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto& idx = by_class[c];
            if (idx.empty())
                continue;
            if (idx.size() == 1) {
                out.warnings.push_back("class '" + data.class_names[c] + "' has a single row; assigned to train");
                train_idx.push_back(idx[0]);
                continue;
            }
            take(idx, c + 1, false);
        }
        if (test_idx.empty())
            throw DataError("stratified split left the test partition empty");
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    out.train = data.select_rows(train_idx);
    out.test = data.select_rows(test_idx);
    return out;
}

inline Matrix one_hot(std::span<const std::uint32_t> labels, std::size_t num_classes)
{
    Matrix m(labels.size(), num_classes);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= num_classes)
            throw DataError("label index out of range in one-hot encoding");
        m(r, labels[r]) = 1.0;
    }
    return m;
}

/// Class indicator columns for correlation: one-hot over classes in the
/// categorical task, a single attack indicator in the binary task.
inline Matrix class_indicators(const Dataset& data, bool binary, std::vector<std::string>& names)
{
    names.clear();
    if (binary) {
        names.push_back("class:attack");
        Matrix m(data.rows(), 1);
        for (std::size_t r = 0; r < data.rows(); ++r)
            m(r, 0) = data.labels_bin[r];
        return m;
    }
    for (const auto& c : data.class_names)
        names.push_back("class:" + c);
    return one_hot(data.labels_cat, data.num_classes());
}

struct PreprocessOptions
{
    std::string benign_name = "Benign";
    std::vector<std::string> drop_columns = {"Dst IP", "Flow ID", "Src IP", "Src Port", "Timestamp",
                                             "Dst.IP", "Flow.ID", "Src.IP", "Src.Port"};
    std::optional<LabelGrouping> grouping;
    double ratio = 0.5;
    std::uint64_t seed = 0;
    bool stratified = false;
    bool normalize_before_split = false;
};

struct PreprocessResult
{
    SplitPair split;
    nlohmann::ordered_json report;
};

/// Column pruning, row cleaning, label encoding, split and min-max scaling.
inline PreprocessResult preprocess(const RawTable& raw, const PreprocessOptions& opt)
{
    nlohmann::ordered_json report;
    report["rows_in"] = raw.rows();
    report["columns_in"] = raw.cols() - 1;

    std::vector<std::string> named_dropped;
    for (const auto& n : opt.drop_columns)
        if (raw.find_column(n))
            named_dropped.push_back(n);
    auto table = drop_named_columns(raw, opt.drop_columns);
    report["columns_dropped_by_name"] = named_dropped;

    auto [clean, removed] = drop_nonfinite_rows(table);
    report["rows_removed_nonfinite"] = removed;

    auto [pruned, constant] = drop_constant_columns(clean);
    report["columns_dropped_constant"] = constant;

    std::vector<std::string> names;
    Matrix features = table_features(pruned, names);
    auto enc = encode_labels(pruned, opt.benign_name, opt.grouping);

    Dataset all;
    all.feature_names = names;
    all.labels_cat = std::move(enc.labels_cat);
    all.labels_bin = std::move(enc.labels_bin);
    all.class_names = std::move(enc.class_names);
    all.benign_name = opt.benign_name;

    std::vector<MinMax> ranges;
    if (opt.normalize_before_split) {
        ranges = fit_minmax(features);
        all.features = apply_minmax(features, ranges);
    } else {
        all.features = std::move(features);
    }

    PreprocessResult res;
    res.split = split(all, opt.ratio, opt.seed, opt.stratified);
    if (!opt.normalize_before_split) {
        ranges = fit_minmax(res.split.train.features);
        res.split.train.features = apply_minmax(res.split.train.features, ranges);
        res.split.test.features = apply_minmax(res.split.test.features, ranges);
    }

    report["rows_out"] = pruned.rows();
    report["features_out"] = names.size();
    report["train_rows"] = res.split.train.rows();
    report["test_rows"] = res.split.test.rows();
    report["split_seed"] = opt.seed;
    report["split_ratio"] = opt.ratio;
    report["stratified"] = opt.stratified;
    report["normalize_before_split"] = opt.normalize_before_split;
    report["class_names"] = all.class_names;
    std::vector<std::size_t> counts(all.num_classes(), 0);
    for (auto l : all.labels_cat)
        ++counts[l];
    report["class_counts"] = counts;
    auto& mm = report["minmax"];
    mm = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < names.size(); ++c)
        mm.push_back({{"column", names[c]}, {"min", ranges[c].min}, {"max", ranges[c].max}});
    report["warnings"] = res.split.warnings;
    res.report = std::move(report);
    return res;
}

// Columnar dataset cache: magic, version, then train/test partitions.
inline constexpr std::string_view kDatasetMagic = "CFSIDSDS";
inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail
{

inline void put_dataset(io::BinaryWriter& w, const Dataset& d)
{
    w.put_strings(d.feature_names);
    w.put_strings(d.class_names);
    w.put_string(d.benign_name);
    w.put_matrix(d.features);
    w.put_vector<std::uint32_t>(d.labels_cat);
    w.put_vector<std::uint8_t>(d.labels_bin);
}

inline Dataset get_dataset(io::BinaryReader& r)
{
    Dataset d;
    d.feature_names = r.get_strings();
    d.class_names = r.get_strings();
    d.benign_name = r.get_string();
    d.features = r.get_matrix();
    d.labels_cat = r.get_vector<std::uint32_t>();
    d.labels_bin = r.get_vector<std::uint8_t>();
    if (d.features.cols() != d.feature_names.size() || d.labels_cat.size() != d.features.rows() ||
        d.labels_bin.size() != d.features.rows())
        throw DataError("dataset cache is inconsistent");
    return d;
}

} // namespace detail

inline void save_split(const std::filesystem::path& path, const SplitPair& s)
{
    io::BinaryWriter w(path);
    w.magic(kDatasetMagic, kDatasetVersion);
    w.put<std::uint64_t>(s.seed);
    w.put<double>(s.ratio);
    w.put_strings(s.warnings);
    detail::put_dataset(w, s.train);
    detail::put_dataset(w, s.test);
    w.finish();
}

inline SplitPair load_split(const std::filesystem::path& path)
{
    io::BinaryReader r(path);
    if (auto v = r.magic(kDatasetMagic); v != kDatasetVersion)
        throw DataError("unsupported dataset cache version " + std::to_string(v));
    SplitPair s;
    s.seed = r.get<std::uint64_t>();
    s.ratio = r.get<double>();
    s.warnings = r.get_strings();
    s.train = detail::get_dataset(r);
    s.test = detail::get_dataset(r);
    return s;
}

} // namespace cfsids
