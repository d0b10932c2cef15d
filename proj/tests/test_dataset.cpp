#include "cfsids/dataset.hpp"
#include "cfsids/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace cfsids;
using cfsids::testing::TempDir;
using cfsids::testing::write_file;

namespace
{

RawTable table_from(const std::string& csv)
{
    TempDir dir;
    write_file(dir / "t.csv", csv);
    return load_csv(dir / "t.csv", "Label");
}

Dataset labelled(std::vector<std::uint32_t> labels, std::size_t classes)
{
    Dataset d;
    d.features = Matrix(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i)
        d.features(i, 0) = static_cast<double>(i);
    d.feature_names = {"row"};
    d.labels_cat = labels;
    for (auto l : labels)
        d.labels_bin.push_back(l != 0);
    for (std::size_t c = 0; c < classes; ++c)
        d.class_names.push_back("c" + std::to_string(c));
    d.benign_name = "c0";
    return d;
}

} // namespace

TEST(LoadCsv, ThreeRowFixture)
{
    const auto t = table_from("a,b,Label\n1,2,Benign\n3,4,DoS\n5,6,Benign\n");
    EXPECT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.cols(), 3u);
    EXPECT_EQ(t.label_index(), 2u);
    EXPECT_EQ(t.values[1][2], 6.0);
    EXPECT_EQ(t.labels[1], "DoS");
    EXPECT_EQ(t.source_lines, (std::vector<std::size_t>{2, 3, 4}));
}

TEST(LoadCsv, InfinityIsFlaggedNotFatal)
{
    const auto t = table_from("a,b,Label\nInfinity,2,Benign\n-inf,NaN,DoS\n,1,DoS\n");
    EXPECT_EQ(t.kinds[0][0], CellKind::nonfinite);
    EXPECT_TRUE(std::isinf(t.values[0][0]));
    EXPECT_EQ(t.kinds[0][1], CellKind::nonfinite);
    EXPECT_EQ(t.kinds[1][1], CellKind::missing);
    EXPECT_EQ(t.kinds[0][2], CellKind::missing);
}

TEST(LoadCsv, RaggedRowNamesItsLine)
{
    try {
        table_from("a,b,Label\n1,2,Benign\n1,2,3,Benign\n");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, MissingLabelColumnAndFile)
{
    EXPECT_THROW(table_from("a,b,Class\n1,2,x\n"), DataError);
    EXPECT_THROW(load_csv("/nonexistent/file.csv", "Label"), DataError);
}

TEST(LoadCsv, RepeatedHeaderAndBomAndQuotes)
{
    const auto t = table_from("\xEF\xBB\xBF" "a,\"b, c\",Label\n1,2,Benign\na,\"b, c\",Label\n3,4,DoS\n");
    EXPECT_EQ(t.column_names[1], "b, c");
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.source_lines, (std::vector<std::size_t>{2, 4}));
}

TEST(LoadCsv, ConcatUnionsColumns)
{
    TempDir dir;
    write_file(dir / "a.csv", "x,Label\n1,Benign\n");
    write_file(dir / "b.csv", "x,y,Label\n2,3,DoS\n");
    const auto t = concat_tables({load_csv(dir / "a.csv", "Label"), load_csv(dir / "b.csv", "Label")});
    EXPECT_EQ(t.column_names, (std::vector<std::string>{"x", "Label", "y"}));
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.kinds[2][0], CellKind::missing);
    EXPECT_EQ(t.values[2][1], 3.0);
}

TEST(DropColumns, NamedDrops)
{
    const auto t = table_from("Timestamp,a,b,c,Label\n1,2,3,4,Benign\n");
    const auto d = drop_named_columns(t, {"Timestamp"});
    EXPECT_EQ(d.cols(), 4u);
    EXPECT_EQ(d.column_names.front(), "a");

    const auto same = drop_named_columns(t, {"Nope"});
    EXPECT_EQ(same.column_names, t.column_names);
    EXPECT_EQ(same.values, t.values);

    EXPECT_THROW(drop_named_columns(t, {"Label"}), UsageError);
}

TEST(DropRows, NonfiniteRows)
{
    std::string csv = "a,b,Label\n";
    for (int i = 0; i < 10; ++i)
        csv += (i == 3 ? std::string("NaN") : std::to_string(i)) + "," + (i == 7 ? "Infinity" : "1") + ",Benign\n";
    const auto t = table_from(csv);
    auto [clean, removed] = drop_nonfinite_rows(t);
    EXPECT_EQ(removed, 2u);
    EXPECT_EQ(clean.rows(), 8u);

    auto [again, none] = drop_nonfinite_rows(clean);
    EXPECT_EQ(none, 0u);
    EXPECT_EQ(again.values, clean.values);
    EXPECT_EQ(again.labels, clean.labels);

    EXPECT_THROW(drop_nonfinite_rows(table_from("a,Label\nNaN,x\ninf,y\n")), DataError);
}

TEST(DropConstant, Columns)
{
    const auto t = table_from("z,v,Label\n0,0,A\n0,0,B\n0,1,A\n");
    auto [kept, dropped] = drop_constant_columns(t);
    EXPECT_EQ(dropped, (std::vector<std::string>{"z"}));
    EXPECT_EQ(kept.column_names, (std::vector<std::string>{"v", "Label"}));

    auto [single, all] = drop_constant_columns(table_from("z,v,Label\n3,4,A\n"));
    EXPECT_EQ(all.size(), 2u);
    EXPECT_EQ(single.column_names, (std::vector<std::string>{"Label"}));
}

TEST(MinMax, Examples)
{
    Matrix train(3, 1);
    train(0, 0) = 2;
    train(1, 0) = 4;
    train(2, 0) = 6;
    Matrix test(2, 1);
    test(0, 0) = 1;
    test(1, 0) = 7;
    const auto n = minmax_normalize(train, test);
    EXPECT_EQ(n.train(0, 0), 0.0);
    EXPECT_EQ(n.train(1, 0), 0.5);
    EXPECT_EQ(n.train(2, 0), 1.0);
    EXPECT_EQ(n.applied(0, 0), 0.0);
    EXPECT_EQ(n.applied(1, 0), 1.0);

    Matrix unit(3, 1);
    unit(0, 0) = 0.0;
    unit(1, 0) = 0.25;
    unit(2, 0) = 1.0;
    EXPECT_EQ(minmax_normalize(unit, unit).train, unit);

    Matrix flat(2, 1);
    EXPECT_THROW(fit_minmax(flat), DataError);
}

TEST(Labels, BinaryAndGrouping)
{
    const auto t = table_from("a,Label\n1,Benign\n2,DoS\n3,Benign\n");
    const auto enc = encode_labels(t, "Benign");
    EXPECT_EQ(enc.labels_bin, (std::vector<std::uint8_t>{0, 1, 0}));
    EXPECT_EQ(enc.class_names, (std::vector<std::string>{"Benign", "DoS"}));

    const auto g = table_from("a,Label\n1,DoS-Hulk\n2,DoS-Slowloris\n3,Benign\n");
    const LabelGrouping grouping{{"DoS-Hulk", "DoS"}, {"DoS-Slowloris", "DoS"}, {"Benign", "Benign"}};
    const auto ge = encode_labels(g, "Benign", grouping);
    EXPECT_EQ(ge.class_names.size(), 2u);
    EXPECT_EQ(ge.labels_cat[0], ge.labels_cat[1]);

    const auto bot = table_from("a,Label\n1,Botnet\n2,Benign\n");
    EXPECT_THROW(encode_labels(bot, "Benign", grouping), DataError);
    EXPECT_THROW(encode_labels(t, "Normal"), DataError);
}

TEST(Labels, GroupingFile)
{
    TempDir dir;
    write_file(dir / "g.csv", "raw,group\n# comment\nDoS-Hulk,DoS\nBenign,Benign\n");
    const auto g = load_grouping(dir / "g.csv");
    EXPECT_EQ(g.size(), 2u);
    EXPECT_EQ(g.at("DoS-Hulk"), "DoS");
}

TEST(Split, HalvesAndDeterminism)
{
    std::vector<std::uint32_t> labels(100);
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = i % 2;
    const auto d = labelled(labels, 2);
    const auto a = split(d, 0.5, 42, false);
    EXPECT_EQ(a.train.rows(), 50u);
    EXPECT_EQ(a.test.rows(), 50u);

    const auto b = split(d, 0.5, 42, false);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(split(d, 0.5, 43, false).train, a.train);

    // partitions are disjoint and cover every row
    std::set<double> seen;
    for (std::size_t r = 0; r < a.train.rows(); ++r)
        seen.insert(a.train.features(r, 0));
    for (std::size_t r = 0; r < a.test.rows(); ++r)
        EXPECT_TRUE(seen.insert(a.test.features(r, 0)).second);
    EXPECT_EQ(seen.size(), 100u);

    EXPECT_THROW(split(d, 1.0, 0, false), UsageError);
    EXPECT_THROW(split(d, 0.0, 0, false), UsageError);
}

TEST(Split, Stratified)
{
    std::vector<std::uint32_t> labels(100, 0);
    for (std::size_t i = 0; i < 10; ++i)
        labels[i * 10] = 1;
    const auto d = labelled(labels, 2);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = split(d, 0.5, seed, true);
        auto count = [](const Dataset& p, std::uint32_t c) {
            return std::count(p.labels_cat.begin(), p.labels_cat.end(), c);
        };
        EXPECT_EQ(count(s.train, 0), 45);
        EXPECT_EQ(count(s.train, 1), 5);
        EXPECT_EQ(count(s.test, 0), 45);
        EXPECT_EQ(count(s.test, 1), 5);
    }
}

TEST(Split, SingletonClassGoesToTrainWithWarning)
{
    const auto d = labelled({0, 0, 0, 0, 1}, 2);
    const auto s = split(d, 0.5, 7, true);
    EXPECT_EQ(s.warnings.size(), 1u);
    EXPECT_EQ(std::count(s.train.labels_cat.begin(), s.train.labels_cat.end(), 1u), 1);
}

TEST(OneHot, Examples)
{
    const std::vector<std::uint32_t> l{0, 1, 0};
    const auto m = one_hot(l, 2);
    EXPECT_EQ(m(0, 0), 1.0);
    EXPECT_EQ(m(0, 1), 0.0);
    EXPECT_EQ(m(1, 1), 1.0);
    EXPECT_EQ(m(2, 0), 1.0);

    const std::vector<std::uint32_t> single{0, 0};
    const auto s = one_hot(single, 1);
    EXPECT_EQ(s.cols(), 1u);
    EXPECT_EQ(s(0, 0), 1.0);
    EXPECT_EQ(s(1, 0), 1.0);

    const auto d = labelled({0, 1, 2, 0}, 3);
    std::vector<std::string> names;
    const auto bin = class_indicators(d, true, names);
    EXPECT_EQ(bin.cols(), 1u);
    EXPECT_EQ(names.size(), 1u);
    EXPECT_EQ(bin(2, 0), 1.0);
    EXPECT_EQ(class_indicators(d, false, names).cols(), 3u);
}

TEST(Preprocess, SyntheticFixtureInvariants)
{
    SynthSpec spec;
    spec.seed = 5;
    const auto fx = synth_fixture(spec);
    PreprocessOptions opt;
    opt.seed = 9;
    const auto res = preprocess(synth_table(fx), opt);
    const auto& tr = res.split.train;
    const auto& te = res.split.test;

    // identifiers and the constant column are gone, Dst Port stays
    EXPECT_EQ(tr.num_features(), 1 + spec.informative + spec.noise);
    EXPECT_EQ(tr.feature_names.front(), "Dst Port");
    EXPECT_EQ(res.report["columns_dropped_constant"], nlohmann::ordered_json::array({"Bwd URG Flags"}));
    EXPECT_GT(res.report["rows_removed_nonfinite"].get<std::size_t>(), 0u);
    EXPECT_EQ(tr.rows() + te.rows(), res.report["rows_out"].get<std::size_t>());

    // training columns span exactly [0,1], test columns are clamped into it
    for (std::size_t c = 0; c < tr.num_features(); ++c) {
        const auto col = tr.features.column(c);
        EXPECT_EQ(*std::min_element(col.begin(), col.end()), 0.0);
        EXPECT_EQ(*std::max_element(col.begin(), col.end()), 1.0);
        for (double v : te.features.column(c)) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    for (std::size_t i = 0; i < fx.informative.size(); ++i)
        EXPECT_EQ(tr.feature_names[fx.informative[i]], fx.informative_names[i]);
}

TEST(Preprocess, CacheRoundTrip)
{
    SynthSpec spec;
    spec.rows = 300;
    const auto res = preprocess(synth_table(synth_fixture(spec)), PreprocessOptions{});
    TempDir dir;
    save_split(dir / "d.bin", res.split);
    const auto back = load_split(dir / "d.bin");
    EXPECT_EQ(back.train, res.split.train);
    EXPECT_EQ(back.test, res.split.test);
    EXPECT_EQ(back.seed, res.split.seed);

    write_file(dir / "bad.bin", "not a dataset");
    EXPECT_THROW(load_split(dir / "bad.bin"), DataError);
}

TEST(Synth, SidecarAndDeterminism)
{
    SynthSpec spec;
    spec.seed = 3;
    const auto a = synth_fixture(spec);
    const auto b = synth_fixture(spec);
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_EQ(a.informative.size(), 3u);

    TempDir dir;
    write_synth(a, spec, dir / "fx.csv");
    auto in = io::open_in(dir / "fx.truth.json");
    const auto truth = nlohmann::json::parse(in);
    EXPECT_EQ(truth["informative"].get<std::vector<std::size_t>>(), a.informative);

    // reloading the CSV gives the same table as the in-memory path
    const auto loaded = load_csv(dir / "fx.csv", "Label");
    const auto direct = synth_table(a);
    EXPECT_EQ(loaded.labels, direct.labels);
    EXPECT_EQ(loaded.kinds, direct.kinds);
}

TEST(Synth, ClassMeanGapSeparatesInformativeFromNoise)
{
    SynthSpec spec;
    spec.rows = 6000;
    spec.flow_artifacts = false;
    const auto fx = synth_fixture(spec);
    const auto t = synth_table(fx);
    std::vector<std::string> names;
    const auto x = table_features(t, names);
    const auto enc = encode_labels(t, "Benign");

    for (std::size_t c = 0; c < x.cols(); ++c) {
        std::vector<double> sum(spec.classes, 0.0), n(spec.classes, 0.0);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            sum[enc.labels_cat[r]] += x(r, c);
            n[enc.labels_cat[r]] += 1.0;
        }
        double lo = 1e300, hi = -1e300;
        for (std::size_t k = 0; k < spec.classes; ++k) {
            lo = std::min(lo, sum[k] / n[k]);
            hi = std::max(hi, sum[k] / n[k]);
        }
        const bool informative = std::find(fx.informative.begin(), fx.informative.end(), c) != fx.informative.end();
        if (informative)
            EXPECT_GT(hi - lo, 0.5 * spec.separation) << names[c];
        else
            EXPECT_LT(hi - lo, 0.15) << names[c];
    }
}
