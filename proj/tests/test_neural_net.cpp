#include "cfsids/neural_net.hpp"
#include "cfsids/rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cfsids;
using namespace cfsids::nn;
using cfsids::testing::TempDir;

namespace
{

struct Blobs
{
    Matrix x;
    std::vector<std::uint32_t> y;
};

// Two Gaussian blobs at (-1.5,-1.5) and (1.5,1.5), unit-free sd 0.5.
Blobs blobs(std::uint64_t seed, std::size_t per_class = 200)
{
    Rng rng(seed);
    Blobs b{Matrix(2 * per_class, 2), {}};
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const std::uint32_t cls = i % 2;
        const double mu = cls ? 1.5 : -1.5;
        b.x(i, 0) = mu + 0.5 * rng.normal();
        b.x(i, 1) = mu + 0.5 * rng.normal();
        b.y.push_back(cls);
    }
    return b;
}

// Fisher discriminant with pooled covariance, solved in closed form (2x2).
double lda_training_accuracy(const Blobs& b)
{
    double mu[2][2] = {}, n[2] = {};
    for (std::size_t i = 0; i < b.y.size(); ++i) {
        n[b.y[i]] += 1;
        for (int d = 0; d < 2; ++d)
            mu[b.y[i]][d] += b.x(i, d);
    }
    for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d)
            mu[c][d] /= n[c];
    double s[2][2] = {};
    for (std::size_t i = 0; i < b.y.size(); ++i) {
        const double e0 = b.x(i, 0) - mu[b.y[i]][0], e1 = b.x(i, 1) - mu[b.y[i]][1];
        s[0][0] += e0 * e0;
        s[0][1] += e0 * e1;
        s[1][1] += e1 * e1;
    }
    s[1][0] = s[0][1];
    const double det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    const double dm0 = mu[1][0] - mu[0][0], dm1 = mu[1][1] - mu[0][1];
    const double w0 = (s[1][1] * dm0 - s[0][1] * dm1) / det;
    const double w1 = (-s[1][0] * dm0 + s[0][0] * dm1) / det;
    const double c = w0 * (mu[0][0] + mu[1][0]) / 2 + w1 * (mu[0][1] + mu[1][1]) / 2;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < b.y.size(); ++i)
        correct += ((w0 * b.x(i, 0) + w1 * b.x(i, 1) > c) ? 1u : 0u) == b.y[i];
    return static_cast<double>(correct) / static_cast<double>(b.y.size());
}

double accuracy(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b)
{
    std::size_t ok = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        ok += a[i] == b[i];
    return static_cast<double>(ok) / static_cast<double>(a.size());
}

Matrix random_rows(Rng& rng, std::size_t rows, std::size_t cols)
{
    Matrix m(rows, cols);
    for (auto& v : m.data())
        v = rng.uniform();
    return m;
}

MlpConfig small(std::vector<std::size_t> hidden, std::uint64_t seed = 1)
{
    MlpConfig cfg;
    cfg.hidden_sizes = std::move(hidden);
    cfg.seed = seed;
    return cfg;
}

void zero(MlpModel& m)
{
    for (auto& l : m.layers) {
        std::fill(l.w.data().begin(), l.w.data().end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
}

} // namespace

TEST(Activations, Examples)
{
    const std::vector<double> z{0.0, 0.0};
    EXPECT_EQ(softmax(z), (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
    EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(Forward, ZeroWeightsGiveUniformProbabilities)
{
    Rng rng(derive_seed(21, {1}));
    auto m = init_model(5, 4, Head::categorical, small({6, 3}));
    zero(m);
    const auto p = forward(m, random_rows(rng, 10, 5));
    for (double v : p.data())
        EXPECT_DOUBLE_EQ(v, 0.25);

    auto b = init_model(5, 2, Head::binary, small({3}));
    zero(b);
    const auto pb = forward(b, random_rows(rng, 3, 5));
    for (double v : pb.data())
        EXPECT_EQ(v, 0.5);
}

TEST(Forward, RowsSumToOneAndSoftmaxIsTranslationInvariant)
{
    Rng rng(derive_seed(22, {1}));
    const auto m = init_model(8, 7, Head::categorical, small({50, 25}, 3));
    const auto p = forward(m, random_rows(rng, 64, 8));
    for (std::size_t r = 0; r < p.rows(); ++r) {
        double s = 0;
        for (double v : p.row(r)) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }

    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> z(5);
        for (auto& v : z)
            v = 20 * rng.normal();
        const double shift = 100 * rng.normal();
        auto shifted = z;
        for (auto& v : shifted)
            v += shift;
        const auto a = softmax(z), b = softmax(shifted);
        for (std::size_t k = 0; k < z.size(); ++k)
            EXPECT_NEAR(a[k], b[k], 1e-12);
    }
}

TEST(Forward, RejectsWrongWidth)
{
    const auto m = init_model(3, 2, Head::categorical, small({4}));
    EXPECT_THROW(forward(m, Matrix(2, 4)), UsageError);
}

TEST(Predict, RulesForTiesAndThreshold)
{
    // categorical tie between classes 1 and 2: zero weights, biases set by hand
    auto m = init_model(2, 3, Head::categorical, small({2}));
    zero(m);
    m.layers.back().b = {0.0, 1.0, 1.0};
    EXPECT_EQ(predict(m, Matrix(1, 2)), std::vector<std::uint32_t>{1});
    m.layers.back().b = {std::log(9.0), 0.0, 0.0};
    EXPECT_EQ(predict(m, Matrix(1, 2)), std::vector<std::uint32_t>{0});

    // binary p = 0.5 exactly goes to the positive class
    auto b = init_model(2, 2, Head::binary, small({2}));
    zero(b);
    EXPECT_EQ(predict(b, Matrix(3, 2)), (std::vector<std::uint32_t>{1, 1, 1}));
    b.layers.back().b = {-1e-9};
    EXPECT_EQ(predict(b, Matrix(1, 2)), std::vector<std::uint32_t>{0});
}

TEST(GradientCheck, FreshNetworkMatchesFiniteDifferences)
{
    Rng rng(derive_seed(23, {1}));
    for (auto head : {Head::categorical, Head::binary}) {
        const std::size_t k = head == Head::binary ? 2 : 3;
        const auto m = init_model(5, k, head, small({4, 3}, 7));
        const auto batch = random_rows(rng, 4, 5);
        const std::vector<std::uint32_t> labels{0, 1, static_cast<std::uint32_t>(k - 1), 1};
        const auto res = gradient_check(m, batch, labels);
        EXPECT_LT(res.max_relative_error, 1e-5);
        EXPECT_GT(res.checked, m.param_count() / 2);
        EXPECT_EQ(res.checked + res.skipped_near_kink, m.param_count());
    }
}

TEST(GradientCheck, ZeroInputBatchStillChecksBiases)
{
    const auto m = init_model(6, 3, Head::categorical, small({4, 3}, 9));
    const Matrix batch(4, 6);
    const std::vector<std::uint32_t> labels{0, 1, 2, 0};
    const auto res = gradient_check(m, batch, labels);
    EXPECT_LT(res.max_relative_error, 1e-5);
    EXPECT_GT(res.checked, 0u);
    // first-layer weight gradients vanish on zero input; biases carry the signal
    const auto g = gradients(m, batch, labels);
    for (double v : g.front().w.data())
        EXPECT_EQ(v, 0.0);
    double bias_mass = 0;
    for (double v : g.front().b)
        bias_mass += std::abs(v);
    EXPECT_GT(bias_mass, 0.0);
}

TEST(GradientCheck, KinkPreactivationsAreSkipped)
{
    auto m = init_model(2, 2, Head::categorical, small({3}, 4));
    zero(m);
    for (auto& v : m.layers.back().w.data())
        v = 0.3;
    // every hidden pre-activation is exactly 0, so every probe lands near the kink
    const auto res = gradient_check(m, Matrix(2, 2), std::vector<std::uint32_t>{0, 1});
    EXPECT_GT(res.skipped_near_kink, 0u);
    EXPECT_THROW(gradient_check(m, Matrix(9, 2), std::vector<std::uint32_t>(9, 0)), UsageError);
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged)
{
    const auto b = blobs(derive_seed(24, {1}), 50);
    for (auto opt : {Optimizer::sgd, Optimizer::adam}) {
        auto cfg = small({8, 4}, 5);
        cfg.learning_rate = 0.0;
        cfg.optimizer = opt;
        cfg.epochs = 3;
        const auto trained = train(b.x, b.y, 2, Head::categorical, cfg);
        const auto fresh = init_model(2, 2, Head::categorical, cfg);
        ASSERT_EQ(trained.layers.size(), fresh.layers.size());
        for (std::size_t l = 0; l < fresh.layers.size(); ++l) {
            EXPECT_EQ(trained.layers[l].w, fresh.layers[l].w);
            EXPECT_EQ(trained.layers[l].b, fresh.layers[l].b);
        }
        EXPECT_EQ(trained.loss_trace.size(), 3 * ((b.y.size() + 31) / 32));
    }
}

TEST(Train, SeparableBlobsReachHighTrainingAccuracy)
{
    const auto b = blobs(derive_seed(25, {1}));
    // the fixture itself must be linearly separable to this level
    ASSERT_GE(lda_training_accuracy(b), 0.98);

    auto cfg = small({50, 25}, 11);
    cfg.epochs = 10;
    const auto cat = train(b.x, b.y, 2, Head::categorical, cfg);
    EXPECT_GE(accuracy(predict(cat, b.x), b.y), 0.98);
    EXPECT_GT(cat.build_seconds, 0.0);

    const auto bin = train(b.x, b.y, 2, Head::binary, cfg);
    EXPECT_GE(accuracy(predict(bin, b.x), b.y), 0.98);
}

TEST(Train, FullBatchLossIsNonIncreasingAtSmallStep)
{
    const auto b = blobs(derive_seed(26, {1}), 60);
    auto cfg = small({50, 25}, 12);
    cfg.learning_rate = 1e-4;
    cfg.batch_size = b.y.size();
    cfg.epochs = 30;
    const auto m = train(b.x, b.y, 2, Head::categorical, cfg);
    ASSERT_EQ(m.loss_trace.size(), 30u);
    for (std::size_t i = 1; i < m.loss_trace.size(); ++i)
        EXPECT_LE(m.loss_trace[i].loss, m.loss_trace[i - 1].loss + 1e-12) << "epoch " << i;
    EXPECT_LT(m.loss_trace.back().loss, m.loss_trace.front().loss);
}

TEST(Train, MiniBatchLossOnFixedBatchDecreasesOverFirstEpoch)
{
    // one epoch of 32-row batches at a small step lowers the whole-set loss
    const auto b = blobs(derive_seed(27, {1}), 100);
    auto cfg = small({50, 25}, 13);
    cfg.learning_rate = 1e-4;
    cfg.epochs = 1;
    const auto fresh = init_model(2, 2, Head::categorical, cfg);
    const auto m = train(b.x, b.y, 2, Head::categorical, cfg);
    EXPECT_LE(loss(m, b.x, b.y), loss(fresh, b.x, b.y));
}

TEST(Train, DeterministicForFixedSeed)
{
    const auto b = blobs(derive_seed(28, {1}), 80);
    auto cfg = small({16, 8}, 14);
    cfg.epochs = 4;
    const auto a = train(b.x, b.y, 2, Head::categorical, cfg);
    const auto c = train(b.x, b.y, 2, Head::categorical, cfg);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        EXPECT_EQ(a.layers[l].w, c.layers[l].w);
        EXPECT_EQ(a.layers[l].b, c.layers[l].b);
    }
    cfg.seed = 15;
    const auto d = train(b.x, b.y, 2, Head::categorical, cfg);
    EXPECT_NE(a.layers.front().w, d.layers.front().w);
}

TEST(Train, RejectsBadInputs)
{
    const auto b = blobs(derive_seed(29, {1}), 10);
    auto cfg = small({4});
    EXPECT_THROW(train(b.x, std::vector<std::uint32_t>(b.y.size(), 0), 2, Head::categorical, cfg), DataError);
    EXPECT_THROW(init_model(2, 3, Head::binary, cfg), UsageError);
    cfg.hidden_sizes = {};
    EXPECT_THROW(train(b.x, b.y, 2, Head::categorical, cfg), UsageError);
    EXPECT_THROW(MlpConfig::preset("10-10"), UsageError);
    EXPECT_EQ(MlpConfig::preset("100-100-100").hidden_sizes, (std::vector<std::size_t>{100, 100, 100}));
}

TEST(Train, DivergenceIsReportedAsNumericError)
{
    auto b = blobs(derive_seed(30, {1}), 40);
    for (auto& v : b.x.data())
        v *= 1e150;
    auto cfg = small({8}, 16);
    cfg.learning_rate = 1e10;
    try {
        train(b.x, b.y, 2, Head::categorical, cfg);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_EQ(e.exit_code(), 3);
    }
}

TEST(Persistence, RoundTripAndLossTrace)
{
    const auto b = blobs(derive_seed(31, {1}), 30);
    auto cfg = small({5, 3}, 17);
    cfg.epochs = 2;
    const auto m = train(b.x, b.y, 2, Head::binary, cfg);
    TempDir dir;
    save_model(dir / "m.bin", m);
    const auto back = load_model(dir / "m.bin");
    EXPECT_EQ(back.head, Head::binary);
    EXPECT_EQ(back.num_classes, 2u);
    EXPECT_EQ(forward(back, b.x), forward(m, b.x));

    write_loss_trace(dir / "loss.csv", m);
    const auto text = cfsids::testing::read_file(dir / "loss.csv");
    EXPECT_EQ(text.rfind("epoch,batch,loss\n", 0), 0u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), m.loss_trace.size() + 1);

    cfsids::testing::write_file(dir / "bad.bin", "CFSIDSRF nope");
    EXPECT_THROW(load_model(dir / "bad.bin"), DataError);
}
