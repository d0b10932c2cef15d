#pragma once

#include "cfsids/core.hpp"
#include "cfsids/dataset.hpp"
#include "cfsids/io.hpp"
#include "cfsids/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfsids
{

struct SynthSpec
{
    std::size_t informative = 3;
    std::size_t noise = 9;
    std::size_t rows = 2000;
    std::size_t classes = 3;
    /// Class-mean spacing of informative features, in noise standard deviations.
    double separation = 2.0;
    /// Adds the identifier columns, a constant column and a few NA/Infinity
    /// rows that the preprocessing stage has to remove.
    bool flow_artifacts = true;
    std::uint64_t seed = 0;
};

struct SynthFixture
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// Positions of the informative predictors in the feature order left
    /// after preprocessing.
    std::vector<std::size_t> informative;
    std::vector<std::string> informative_names;
    std::vector<std::string> class_names;
};

/// Class-conditional Gaussian flow-like records. Informative feature j has
/// class means separation * ((c + j) mod classes); noise features ignore the
/// label. Every third noise feature is rounded to one decimal so ties occur.
inline SynthFixture synth_fixture(const SynthSpec& spec)
{
    if (spec.informative < 1 || spec.noise < 1)
        throw UsageError("synthetic fixture needs at least one informative and one noise feature");
    if (spec.classes < 2 || spec.rows < 2 * spec.classes)
        throw UsageError("synthetic fixture needs at least 2 classes and 2 rows per class");

    Rng rng(derive_seed(spec.seed, {0x5717}));
    const std::size_t p = spec.informative + spec.noise;

    std::vector<std::size_t> perm(p);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    // perm[j] = column position of generator feature j (first `informative` are signal)

    SynthFixture fx;
    fx.class_names.push_back("Benign");
    for (std::size_t c = 1; c < spec.classes; ++c)
        fx.class_names.push_back("Attack-" + std::string(1, static_cast<char>('A' + (c - 1) % 26)) +
                                 (c > 26 ? std::to_string(c) : ""));

    std::vector<std::string> xnames(p);
    for (std::size_t c = 0; c < p; ++c)
        xnames[c] = (c < 10 ? "x0" : "x") + std::to_string(c);
    // Dst Port is a retained predictor and precedes the x-columns.
    const std::size_t offset = spec.flow_artifacts ? 1 : 0;
    for (std::size_t j = 0; j < spec.informative; ++j)
        fx.informative.push_back(perm[j] + offset);
    std::sort(fx.informative.begin(), fx.informative.end());
    for (auto i : fx.informative)
        fx.informative_names.push_back(xnames[i - offset]);

    if (spec.flow_artifacts)
        fx.header = {"Flow ID", "Timestamp", "Dst Port"};
    fx.header.insert(fx.header.end(), xnames.begin(), xnames.end());
    if (spec.flow_artifacts)
        fx.header.push_back("Bwd URG Flags");
    fx.header.push_back("Label");

    std::vector<double> x(p);
    for (std::size_t r = 0; r < spec.rows; ++r) {
        // Benign takes half the rows, attacks share the rest; the first
        // `classes` rows cover every class once.
        std::size_t cls = r < spec.classes ? r
                          : rng.uniform() < 0.5
                              ? 0
                              : 1 + static_cast<std::size_t>(rng.below(spec.classes - 1));
        for (std::size_t j = 0; j < p; ++j) {
            double v = rng.normal();
            if (j < spec.informative)
                v += spec.separation * static_cast<double>((cls + j) % spec.classes);
            else if ((j - spec.informative) % 3 == 2)
                v = std::round(v * 10.0) / 10.0;
            x[perm[j]] = v;
        }

        std::vector<std::string> row;
        if (spec.flow_artifacts) {
            row.push_back("10.0.0." + std::to_string(r % 250) + "-" + std::to_string(r));
            row.push_back("02/03/2018 08:" + std::to_string(10 + r % 50) + ":00");
            row.push_back(std::to_string(rng.below(4) == 0 ? 443 : 80 + rng.below(3)));
        }
        for (std::size_t c = 0; c < p; ++c)
            row.push_back(io::format_double(x[c]));
        if (spec.flow_artifacts) {
            row.push_back("0");
            // roughly one row in a hundred carries a bad cell
            if (r >= spec.classes && rng.below(100) == 0) {
                const auto col = 3 + rng.below(p);
                row[col] = rng.below(2) == 0 ? "NaN" : "Infinity";
            }
        }
        row.push_back(fx.class_names[cls]);
        fx.rows.push_back(std::move(row));
    }
    return fx;
}

/// The fixture as a parsed table, equivalent to writing and re-loading the CSV.
inline RawTable synth_table(const SynthFixture& fx)
{
    RawTable t;
    t.column_names = fx.header;
    t.label_column = "Label";
    const auto label_idx = t.label_index();
    t.values.resize(t.cols());
    t.kinds.resize(t.cols());
    for (std::size_t r = 0; r < fx.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) {
            double v = 0.0;
            const auto kind = c == label_idx ? CellKind::text : parse_cell(fx.rows[r][c], v);
            t.values[c].push_back(v);
            t.kinds[c].push_back(kind);
        }
        t.labels.push_back(fx.rows[r][label_idx]);
        t.source_lines.push_back(r + 2);
    }
    return t;
}

/// Writes `<stem>.csv` and the ground-truth sidecar `<stem>.truth.json`.
inline void write_synth(const SynthFixture& fx, const SynthSpec& spec, const std::filesystem::path& csv_path)
{
    auto out = io::open_out(csv_path);
    for (std::size_t i = 0; i < fx.header.size(); ++i)
        out << (i ? "," : "") << io::csv_escape(fx.header[i]);
    out << '\n';
    for (const auto& row : fx.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << io::csv_escape(row[i]);
        out << '\n';
    }
    if (!out)
        throw DataError("write failed for '" + csv_path.string() + "'");

    nlohmann::ordered_json truth;
    truth["informative"] = fx.informative;
    truth["informative_names"] = fx.informative_names;
    truth["class_names"] = fx.class_names;
    truth["rows"] = spec.rows;
    truth["noise"] = spec.noise;
    truth["separation"] = spec.separation;
    truth["seed"] = spec.seed;
    auto side = io::open_out(std::filesystem::path(csv_path).replace_extension(".truth.json"));
    side << truth.dump(2) << '\n';
}

} // namespace cfsids
