#pragma once

#include "cfsids/core.hpp"
#include "cfsids/io.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace cfsids
{

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix
{
    std::vector<std::vector<std::uint64_t>> counts;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return counts.size(); }

    std::uint64_t total() const
    {
        std::uint64_t t = 0;
        for (const auto& r : counts)
            for (auto c : r)
                t += c;
        return t;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted,
                                 std::vector<std::string> class_names)
{
    if (truth.size() != predicted.size())
        throw UsageError("true and predicted label counts differ");
    if (truth.empty())
        throw DataError("confusion matrix of an empty label set");
    const std::size_t k = class_names.size();
    ConfusionMatrix cm;
    cm.class_names = std::move(class_names);
    cm.counts.assign(k, std::vector<std::uint64_t>(k, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= k || predicted[i] >= k)
            throw DataError("label " + std::to_string(std::max(truth[i], predicted[i])) + " outside the class list");
        ++cm.counts[truth[i]][predicted[i]];
    }
    return cm;
}

enum class Averaging { binary, micro, macro, weighted };

inline std::string to_string(Averaging a)
{
    switch (a) {
    case Averaging::binary: return "binary";
    case Averaging::micro: return "micro";
    case Averaging::macro: return "macro";
    case Averaging::weighted: return "weighted";
    }
    return "?";
}

inline Averaging parse_averaging(const std::string& s)
{
    if (s == "binary")
        return Averaging::binary;
    if (s == "micro")
        return Averaging::micro;
    if (s == "macro")
        return Averaging::macro;
    if (s == "weighted")
        return Averaging::weighted;
    throw UsageError("unknown averaging '" + s + "'");
}

/// Undefined ratios (zero denominators) stay empty instead of becoming 0.
struct MetricReport
{
    Averaging averaging = Averaging::binary;
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> far;
    std::optional<double> f1;
    /// Classes left out of a macro or weighted mean because the ratio was undefined.
    std::size_t skipped_precision = 0;
    std::size_t skipped_recall = 0;
    std::size_t skipped_far = 0;
    std::size_t skipped_f1 = 0;
};

namespace detail
{

using boost::multiprecision::cpp_rational;

/// Exact ratio of counts, empty when the denominator is zero.
struct Ratio
{
    std::uint64_t num = 0;
    std::uint64_t den = 0;

    bool defined() const noexcept { return den != 0; }
    cpp_rational exact() const { return cpp_rational(num, den); }
};

inline std::optional<cpp_rational> harmonic_f1(std::optional<cpp_rational> p, std::optional<cpp_rational> r)
{
    if (!p || !r)
        return std::nullopt;
    if (*p == 0 || *r == 0)
        return cpp_rational(0);
    return 2 * *p * *r / (*p + *r);
}

inline std::optional<double> to_double(const std::optional<cpp_rational>& v)
{
    if (!v)
        return std::nullopt;
    return v->convert_to<double>();
}

struct OneVsRest
{
    std::uint64_t tp = 0, fn = 0, fp = 0, tn = 0;
};

inline std::vector<OneVsRest> one_vs_rest(const ConfusionMatrix& cm)
{
    const std::size_t k = cm.size();
    const std::uint64_t total = cm.total();
    std::vector<OneVsRest> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm.counts[c][j];
            col += cm.counts[j][c];
        }
        auto& o = out[c];
        o.tp = cm.counts[c][c];
        o.fn = row - o.tp;
        o.fp = col - o.tp;
        o.tn = total - o.tp - o.fn - o.fp;
    }
    return out;
}

inline void check_cm(const ConfusionMatrix& cm)
{
    if (cm.size() == 0 || cm.class_names.size() != cm.size())
        throw UsageError("confusion matrix shape does not match its class list");
    for (const auto& r : cm.counts)
        if (r.size() != cm.size())
            throw UsageError("confusion matrix is not square");
    if (cm.total() == 0)
        throw DataError("confusion matrix holds no rows");
}

} // namespace detail

/// Binary metrics with `positive` (the attack class) as the positive label.
inline MetricReport binary_metrics(const ConfusionMatrix& cm, std::size_t positive = 1)
{
    detail::check_cm(cm);
    if (cm.size() != 2 || positive > 1)
        throw UsageError("binary metrics need a 2x2 confusion matrix");
    const std::size_t negative = 1 - positive;
    const auto tp = cm.counts[positive][positive];
    const auto fn = cm.counts[positive][negative];
    const auto fp = cm.counts[negative][positive];
    const auto tn = cm.counts[negative][negative];

    MetricReport rep;
    rep.averaging = Averaging::binary;
    rep.accuracy = static_cast<double>(tp + tn) / static_cast<double>(tp + tn + fp + fn);
    const detail::Ratio p{tp, tp + fp}, r{tp, tp + fn}, far{fp, fp + tn};
    auto pe = p.defined() ? std::optional(p.exact()) : std::nullopt;
    auto re = r.defined() ? std::optional(r.exact()) : std::nullopt;
    rep.precision = detail::to_double(pe);
    rep.recall = detail::to_double(re);
    rep.far = far.defined() ? std::optional(static_cast<double>(far.num) / static_cast<double>(far.den)) : std::nullopt;
    rep.f1 = detail::to_double(detail::harmonic_f1(pe, re));
    return rep;
}

/// One-vs-rest metrics per class, aggregated by pooled counts (micro),
/// plain mean (macro) or support-weighted mean (weighted). Averages are
/// computed in exact rational arithmetic and rounded once.
inline MetricReport multiclass_metrics(const ConfusionMatrix& cm, Averaging averaging)
{
    using detail::cpp_rational;
    detail::check_cm(cm);
    if (cm.size() < 2)
        throw UsageError("multiclass metrics need at least two classes");
    if (averaging == Averaging::binary)
        return binary_metrics(cm);

    const auto ovr = detail::one_vs_rest(cm);
    const std::uint64_t total = cm.total();
    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < cm.size(); ++c)
        trace += cm.counts[c][c];

    MetricReport rep;
    rep.averaging = averaging;
    rep.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    if (averaging == Averaging::micro) {
        detail::OneVsRest pooled;
        for (const auto& o : ovr) {
            pooled.tp += o.tp;
            pooled.fn += o.fn;
            pooled.fp += o.fp;
            pooled.tn += o.tn;
        }
        const detail::Ratio p{pooled.tp, pooled.tp + pooled.fp}, r{pooled.tp, pooled.tp + pooled.fn},
            far{pooled.fp, pooled.fp + pooled.tn};
        auto pe = p.defined() ? std::optional(p.exact()) : std::nullopt;
        auto re = r.defined() ? std::optional(r.exact()) : std::nullopt;
        rep.precision = detail::to_double(pe);
        rep.recall = detail::to_double(re);
        rep.far = detail::to_double(far.defined() ? std::optional(far.exact()) : std::nullopt);
        rep.f1 = detail::to_double(detail::harmonic_f1(pe, re));
        return rep;
    }

    struct Acc
    {
        cpp_rational sum = 0;
        cpp_rational weight = 0;
        std::size_t skipped = 0;

        void add(const std::optional<cpp_rational>& v, const cpp_rational& w)
        {
            if (!v) {
                ++skipped;
                return;
            }
            sum += *v * w;
            weight += w;
        }

        std::optional<double> mean() const
        {
            if (weight == 0)
                return std::nullopt;
            return cpp_rational(sum / weight).convert_to<double>();
        }
    };

    Acc prec, rec, far, f1;
    for (const auto& o : ovr) {
        const std::uint64_t support = o.tp + o.fn;
        const cpp_rational w = averaging == Averaging::macro ? cpp_rational(1) : cpp_rational(support, total);
        const detail::Ratio p{o.tp, o.tp + o.fp}, r{o.tp, o.tp + o.fn}, fa{o.fp, o.fp + o.tn};
        auto pe = p.defined() ? std::optional(p.exact()) : std::nullopt;
        auto re = r.defined() ? std::optional(r.exact()) : std::nullopt;
        prec.add(pe, w);
        rec.add(re, w);
        far.add(fa.defined() ? std::optional(fa.exact()) : std::nullopt, w);
        f1.add(detail::harmonic_f1(pe, re), w);
    }
    rep.precision = prec.mean();
    rep.recall = rec.mean();
    rep.far = far.mean();
    rep.f1 = f1.mean();
    rep.skipped_precision = prec.skipped;
    rep.skipped_recall = rec.skipped;
    rep.skipped_far = far.skipped;
    rep.skipped_f1 = f1.skipped;
    return rep;
}

/// Pools every non-benign class into one positive class. Index 0 of the
/// result is benign, index 1 attack.
inline ConfusionMatrix collapse_to_binary(const ConfusionMatrix& cm, const std::string& benign)
{
    detail::check_cm(cm);
    const auto it = std::find(cm.class_names.begin(), cm.class_names.end(), benign);
    if (it == cm.class_names.end())
        throw DataError("benign class '" + benign + "' is not in the confusion matrix");
    const auto b = static_cast<std::size_t>(it - cm.class_names.begin());
    ConfusionMatrix out;
    out.class_names = {benign, "Attack"};
    out.counts.assign(2, std::vector<std::uint64_t>(2, 0));
    for (std::size_t i = 0; i < cm.size(); ++i)
        for (std::size_t j = 0; j < cm.size(); ++j)
            out.counts[i == b ? 0 : 1][j == b ? 0 : 1] += cm.counts[i][j];
    return out;
}

inline std::vector<std::uint32_t> collapse_labels(std::span<const std::uint32_t> labels, std::size_t benign_index)
{
    std::vector<std::uint32_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = labels[i] == benign_index ? 0 : 1;
    return out;
}

inline void write_confusion(const std::filesystem::path& path, const ConfusionMatrix& cm)
{
    auto out = io::open_out(path);
    out << "true\\predicted";
    for (const auto& n : cm.class_names)
        out << ',' << io::csv_escape(n);
    out << '\n';
    for (std::size_t i = 0; i < cm.size(); ++i) {
        out << io::csv_escape(cm.class_names[i]);
        for (auto c : cm.counts[i])
            out << ',' << c;
        out << '\n';
    }
}

inline ConfusionMatrix read_confusion(const std::filesystem::path& path)
{
    auto in = io::open_in(path);
    std::string line;
    if (!std::getline(in, line))
        throw DataError("'" + path.string() + "' is empty");
    auto header = io::split_csv_line(line);
    ConfusionMatrix cm;
    cm.class_names.assign(header.begin() + 1, header.end());
    const std::size_t k = cm.class_names.size();
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto cells = io::split_csv_line(line);
        if (cells.size() != k + 1)
            throw DataError("'" + path.string() + "': confusion row has wrong width");
        std::vector<std::uint64_t> row;
        for (std::size_t j = 1; j <= k; ++j)
            row.push_back(std::stoull(cells[j]));
        cm.counts.push_back(std::move(row));
    }
    if (cm.counts.size() != k)
        throw DataError("'" + path.string() + "': confusion matrix is not square");
    return cm;
}

} // namespace cfsids
