#include "cfsids/metrics.hpp"
#include "cfsids/rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include <numeric>

using namespace cfsids;
using boost::multiprecision::cpp_rational;
using cfsids::testing::TempDir;

namespace
{

ConfusionMatrix cm_of(std::vector<std::vector<std::uint64_t>> counts)
{
    ConfusionMatrix cm;
    cm.counts = std::move(counts);
    for (std::size_t i = 0; i < cm.counts.size(); ++i)
        cm.class_names.push_back("c" + std::to_string(i));
    return cm;
}

// rows are true class: TP/FN in the attack row, FP/TN in the benign row
ConfusionMatrix binary_cm(std::uint64_t tp, std::uint64_t fn, std::uint64_t fp, std::uint64_t tn)
{
    auto cm = cm_of({{tn, fp}, {fn, tp}});
    cm.class_names = {"Benign", "Attack"};
    return cm;
}

ConfusionMatrix random_cm(Rng& rng, std::size_t k)
{
    std::vector<std::vector<std::uint64_t>> c(k, std::vector<std::uint64_t>(k));
    for (auto& row : c)
        for (auto& v : row)
            v = rng.below(3) == 0 ? 0 : rng.below(1000);
    c[0][0] += 1;
    return cm_of(std::move(c));
}

double exact(cpp_rational r) { return r.convert_to<double>(); }

// Independent oracle: per-class tables straight from row and column sums,
// averaged in rationals.
struct Oracle
{
    std::optional<double> precision, recall, far, f1;
};

Oracle oracle(const ConfusionMatrix& cm, Averaging avg)
{
    const std::size_t k = cm.size();
    cpp_rational total = 0;
    std::vector<cpp_rational> rows(k, 0), cols(k, 0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            rows[i] += cm.counts[i][j];
            cols[j] += cm.counts[i][j];
            total += cm.counts[i][j];
        }
    cpp_rational sp = 0, sr = 0, sf = 0, s1 = 0, wp = 0, wr = 0, wf = 0, w1 = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const cpp_rational tp = cm.counts[c][c];
        const cpp_rational w = avg == Averaging::macro ? cpp_rational(1) : rows[c] / total;
        std::optional<cpp_rational> p, r;
        if (cols[c] != 0) {
            p = tp / cols[c];
            sp += w * *p;
            wp += w;
        }
        if (rows[c] != 0) {
            r = tp / rows[c];
            sr += w * *r;
            wr += w;
        }
        const cpp_rational negatives = total - rows[c];
        if (negatives != 0) {
            sf += w * (cols[c] - tp) / negatives;
            wf += w;
        }
        if (p && r) {
            s1 += w * (*p + *r == 0 ? cpp_rational(0) : 2 * *p * *r / (*p + *r));
            w1 += w;
        }
    }
    auto avg_of = [](cpp_rational s, cpp_rational w) -> std::optional<double> {
        if (w == 0)
            return std::nullopt;
        return exact(s / w);
    };
    return {avg_of(sp, wp), avg_of(sr, wr), avg_of(sf, wf), avg_of(s1, w1)};
}

ConfusionMatrix permuted(const ConfusionMatrix& cm, const std::vector<std::size_t>& perm)
{
    ConfusionMatrix out = cm;
    for (std::size_t i = 0; i < cm.size(); ++i) {
        out.class_names[i] = cm.class_names[perm[i]];
        for (std::size_t j = 0; j < cm.size(); ++j)
            out.counts[i][j] = cm.counts[perm[i]][perm[j]];
    }
    return out;
}

} // namespace

TEST(BinaryMetrics, WorkedExample)
{
    const auto r = binary_metrics(binary_cm(90, 10, 20, 80));
    EXPECT_DOUBLE_EQ(r.accuracy, 0.85);
    EXPECT_DOUBLE_EQ(*r.precision, 90.0 / 110.0);
    EXPECT_NEAR(*r.precision, 0.81818, 1e-5);
    EXPECT_DOUBLE_EQ(*r.recall, 0.9);
    EXPECT_DOUBLE_EQ(*r.far, 0.2);
    EXPECT_NEAR(*r.f1, 0.85714, 1e-5);
    EXPECT_DOUBLE_EQ(*r.f1, 6.0 / 7.0);
}

TEST(BinaryMetrics, ZeroDenominatorsAreFlagged)
{
    const auto clean = binary_metrics(binary_cm(5, 1, 0, 7));
    EXPECT_EQ(*clean.precision, 1.0);
    EXPECT_EQ(*clean.far, 0.0);

    const auto none = binary_metrics(binary_cm(0, 4, 0, 6));
    EXPECT_FALSE(none.precision.has_value());
    EXPECT_FALSE(none.f1.has_value());
    EXPECT_EQ(*none.recall, 0.0);

    const auto no_benign = binary_metrics(binary_cm(3, 1, 0, 0));
    EXPECT_FALSE(no_benign.far.has_value());

    EXPECT_THROW(binary_metrics(cm_of({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})), UsageError);
    EXPECT_THROW(binary_metrics(binary_cm(0, 0, 0, 0)), DataError);
}

TEST(MulticlassMetrics, ThreeClassWorkedExample)
{
    const auto cm = cm_of({{5, 0, 0}, {0, 3, 2}, {0, 1, 4}});
    // one-vs-rest by hand:
    //   c0 TP5 FN0 FP0 TN10, c1 TP3 FN2 FP1 TN9, c2 TP4 FN1 FP2 TN8
    const auto ovr = detail::one_vs_rest(cm);
    EXPECT_EQ(ovr[1].tp, 3u);
    EXPECT_EQ(ovr[1].fn, 2u);
    EXPECT_EQ(ovr[1].fp, 1u);
    EXPECT_EQ(ovr[1].tn, 9u);
    EXPECT_EQ(ovr[2].fp, 2u);
    EXPECT_EQ(ovr[2].tn, 8u);

    const auto micro = multiclass_metrics(cm, Averaging::micro);
    EXPECT_DOUBLE_EQ(micro.accuracy, 0.8);
    EXPECT_DOUBLE_EQ(*micro.precision, 0.8);
    EXPECT_DOUBLE_EQ(*micro.f1, 0.8);

    const auto macro = multiclass_metrics(cm, Averaging::macro);
    EXPECT_DOUBLE_EQ(macro.accuracy, 0.8);
    EXPECT_DOUBLE_EQ(*macro.precision, exact(cpp_rational(29, 36)));
    EXPECT_DOUBLE_EQ(*macro.recall, 0.8);
    EXPECT_DOUBLE_EQ(*macro.far, 0.1);
    EXPECT_DOUBLE_EQ(*macro.f1, exact(cpp_rational(79, 99)));
    EXPECT_EQ(macro.skipped_precision, 0u);

    // equal supports make weighted and macro agree here
    const auto weighted = multiclass_metrics(cm, Averaging::weighted);
    EXPECT_EQ(*weighted.precision, *macro.precision);
    EXPECT_EQ(*weighted.f1, *macro.f1);
}

TEST(MulticlassMetrics, DiagonalIsPerfectUnderEveryAveraging)
{
    const auto cm = cm_of({{4, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 9, 0}, {0, 0, 0, 2}});
    for (auto a : {Averaging::micro, Averaging::macro, Averaging::weighted}) {
        const auto r = multiclass_metrics(cm, a);
        EXPECT_EQ(r.accuracy, 1.0);
        EXPECT_EQ(*r.precision, 1.0);
        EXPECT_EQ(*r.recall, 1.0);
        EXPECT_EQ(*r.f1, 1.0);
        EXPECT_EQ(*r.far, 0.0);
    }
}

TEST(MulticlassMetrics, TwoClassMacroIsMeanOfOneVsRest)
{
    const auto cm = binary_cm(90, 10, 20, 80);
    const auto r = multiclass_metrics(cm, Averaging::macro);
    const double p_attack = 90.0 / 110.0, p_benign = 80.0 / 90.0;
    EXPECT_NEAR(*r.precision, (p_attack + p_benign) / 2, 1e-15);
}

TEST(MulticlassMetrics, UndefinedClassesAreSkippedAndCounted)
{
    // class 2 is never predicted and never occurs
    const auto cm = cm_of({{3, 1, 0}, {2, 4, 0}, {0, 0, 0}});
    const auto r = multiclass_metrics(cm, Averaging::macro);
    EXPECT_EQ(r.skipped_precision, 1u);
    EXPECT_EQ(r.skipped_recall, 1u);
    EXPECT_EQ(r.skipped_far, 0u);
    EXPECT_DOUBLE_EQ(*r.precision, (3.0 / 5.0 + 4.0 / 5.0) / 2);
}

TEST(MulticlassMetrics, MatchesOracleOnRandomMatrices)
{
    Rng rng(derive_seed(41, {1}));
    for (int trial = 0; trial < 300; ++trial) {
        const auto cm = random_cm(rng, 2 + rng.below(7));
        for (auto a : {Averaging::macro, Averaging::weighted}) {
            const auto got = multiclass_metrics(cm, a);
            const auto want = oracle(cm, a);
            EXPECT_EQ(got.precision, want.precision);
            EXPECT_EQ(got.recall, want.recall);
            EXPECT_EQ(got.far, want.far);
            EXPECT_EQ(got.f1, want.f1);
        }
    }
}

TEST(MulticlassMetrics, ExactIdentitiesOnRandomMatrices)
{
    Rng rng(derive_seed(42, {1}));
    for (int trial = 0; trial < 1000; ++trial) {
        const auto cm = random_cm(rng, 2 + rng.below(9));
        const auto micro = multiclass_metrics(cm, Averaging::micro);
        ASSERT_TRUE(micro.precision && micro.recall && micro.f1);
        EXPECT_EQ(*micro.precision, micro.accuracy);
        EXPECT_EQ(*micro.recall, micro.accuracy);
        EXPECT_EQ(*micro.f1, micro.accuracy);
        const auto weighted = multiclass_metrics(cm, Averaging::weighted);
        EXPECT_EQ(*weighted.recall, weighted.accuracy);

        std::uint64_t support = 0;
        for (const auto& o : detail::one_vs_rest(cm))
            support += o.tp + o.fn;
        EXPECT_EQ(support, cm.total());
    }
}

TEST(MulticlassMetrics, InvariantUnderClassPermutation)
{
    Rng rng(derive_seed(43, {1}));
    for (int trial = 0; trial < 200; ++trial) {
        const auto cm = random_cm(rng, 2 + rng.below(6));
        std::vector<std::size_t> perm(cm.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        const auto pm = permuted(cm, perm);
        for (auto a : {Averaging::micro, Averaging::macro, Averaging::weighted}) {
            const auto x = multiclass_metrics(cm, a), y = multiclass_metrics(pm, a);
            EXPECT_EQ(x.accuracy, y.accuracy);
            EXPECT_EQ(x.precision, y.precision);
            EXPECT_EQ(x.recall, y.recall);
            EXPECT_EQ(x.far, y.far);
            EXPECT_EQ(x.f1, y.f1);
        }
    }
}

TEST(Collapse, PoolsAttacksAndConservesCounts)
{
    auto cm = cm_of({{7, 0, 0}, {0, 3, 0}, {0, 0, 4}});
    cm.class_names = {"Benign", "DoS", "Bot"};
    const auto d = collapse_to_binary(cm, "Benign");
    EXPECT_EQ(d.counts, (std::vector<std::vector<std::uint64_t>>{{7, 0}, {0, 7}}));

    // DoS predicted as Bot is still a detected attack
    cm.counts = {{6, 1, 0}, {2, 0, 5}, {0, 1, 3}};
    const auto c = collapse_to_binary(cm, "Benign");
    EXPECT_EQ(c.counts, (std::vector<std::vector<std::uint64_t>>{{6, 1}, {2, 9}}));
    EXPECT_EQ(c.total(), cm.total());
    EXPECT_EQ(binary_metrics(c).recall, 9.0 / 11.0);

    EXPECT_THROW(collapse_to_binary(cm, "Normal"), DataError);

    Rng rng(derive_seed(44, {1}));
    for (int trial = 0; trial < 100; ++trial) {
        const auto r = random_cm(rng, 2 + rng.below(6));
        EXPECT_EQ(collapse_to_binary(r, "c0").total(), r.total());
    }

    const std::vector<std::uint32_t> labels{0, 2, 1, 2};
    EXPECT_EQ(collapse_labels(labels, 2), (std::vector<std::uint32_t>{1, 0, 1, 0}));
}

TEST(Confusion, BuildsCounts)
{
    const std::vector<std::string> names{"a", "b", "c"};
    const std::vector<std::uint32_t> t{0, 1, 2, 1};
    EXPECT_EQ(confusion(t, t, names).counts,
              (std::vector<std::vector<std::uint64_t>>{{1, 0, 0}, {0, 2, 0}, {0, 0, 1}}));

    const std::vector<std::uint32_t> zeros(4, 0);
    const auto col = confusion(t, zeros, names);
    EXPECT_EQ(col.counts, (std::vector<std::vector<std::uint64_t>>{{1, 0, 0}, {2, 0, 0}, {1, 0, 0}}));

    const std::vector<std::uint32_t> empty;
    EXPECT_THROW(confusion(empty, empty, names), DataError);
    EXPECT_THROW(confusion(t, std::vector<std::uint32_t>{0}, names), UsageError);
    EXPECT_THROW(confusion(t, std::vector<std::uint32_t>{0, 0, 3, 0}, names), DataError);
}

TEST(Confusion, FileRoundTrip)
{
    auto cm = cm_of({{5, 0, 1}, {0, 3, 2}, {7, 1, 4}});
    cm.class_names = {"Benign", "Web, XSS", "Bot"};
    TempDir dir;
    write_confusion(dir / "cm.csv", cm);
    EXPECT_EQ(read_confusion(dir / "cm.csv"), cm);

    cfsids::testing::write_file(dir / "bad.csv", "true\\predicted,a,b\na,1,2\n");
    EXPECT_THROW(read_confusion(dir / "bad.csv"), DataError);
}

TEST(Averaging, NamesRoundTrip)
{
    for (auto a : {Averaging::micro, Averaging::macro, Averaging::weighted})
        EXPECT_EQ(parse_averaging(to_string(a)), a);
    EXPECT_THROW(parse_averaging("harmonic"), UsageError);
}
