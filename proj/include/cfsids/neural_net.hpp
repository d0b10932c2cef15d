#pragma once

#include "cfsids/core.hpp"
#include "cfsids/io.hpp"
#include "cfsids/parallel.hpp"
#include "cfsids/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace cfsids::nn
{

enum class Head { categorical, binary };
enum class Optimizer { sgd, adam };

struct MlpConfig
{
    std::vector<std::size_t> hidden_sizes = {50, 25};
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double learning_rate = 0.01;
    Optimizer optimizer = Optimizer::sgd;
    std::uint64_t seed = 0;

    static MlpConfig preset(const std::string& name)
    {
        MlpConfig c;
        if (name == "50-25")
            c.hidden_sizes = {50, 25};
        else if (name == "100-100-100")
            c.hidden_sizes = {100, 100, 100};
        else
            throw UsageError("unknown MLP preset '" + name + "' (expected 50-25 or 100-100-100)");
        return c;
    }

    void validate() const
    {
        if (hidden_sizes.empty())
            throw UsageError("MLP needs at least one hidden layer");
        if (std::find(hidden_sizes.begin(), hidden_sizes.end(), 0u) != hidden_sizes.end())
            throw UsageError("hidden layer sizes must be positive");
        if (batch_size < 1)
            throw UsageError("batch size must be at least 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw UsageError("learning rate must be finite and nonnegative");
    }
};

/// Fully connected layer; weights are out x in, one bias per output.
struct Layer
{
    Matrix w;
    std::vector<double> b;

    std::size_t inputs() const noexcept { return w.cols(); }
    std::size_t outputs() const noexcept { return w.rows(); }

    friend bool operator==(const Layer&, const Layer&) = default;
};

struct LossRecord
{
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double loss = 0.0;
};

struct MlpModel
{
    std::vector<Layer> layers;
    Head head = Head::categorical;
    std::size_t num_classes = 2;
    double build_seconds = 0.0;
    std::vector<LossRecord> loss_trace;

    std::size_t inputs() const { return layers.front().inputs(); }
    std::size_t param_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers)
            n += l.w.data().size() + l.b.size();
        return n;
    }
};

inline double sigmoid(double z)
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Max-shifted softmax.
inline std::vector<double> softmax(std::span<const double> z)
{
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - m);
        s += p[k];
    }
    for (auto& v : p)
        v /= s;
    return p;
}

/// Symmetric uniform weights and biases in +-1/sqrt(fan_in).
inline MlpModel init_model(std::size_t inputs, std::size_t num_classes, Head head, const MlpConfig& cfg)
{
    cfg.validate();
    if (inputs < 1)
        throw UsageError("MLP needs at least one input");
    if (num_classes < 2)
        throw UsageError("MLP needs at least two classes");
    if (head == Head::binary && num_classes != 2)
        throw UsageError("binary head needs exactly two classes");
    MlpModel m;
    m.head = head;
    m.num_classes = num_classes;
    std::vector<std::size_t> dims{inputs};
    dims.insert(dims.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
    dims.push_back(head == Head::binary ? 1 : num_classes);
    Rng rng(derive_seed(cfg.seed, {0x11, 0}));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer{Matrix(dims[l + 1], dims[l]), std::vector<double>(dims[l + 1])};
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (auto& w : layer.w.data())
            w = rng.uniform(-bound, bound);
        for (auto& b : layer.b)
            b = rng.uniform(-bound, bound);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

/// Pre-activations and activations of every layer for one batch.
struct ForwardCache
{
    std::vector<Matrix> pre;
    std::vector<Matrix> act;
};

namespace detail
{

inline Matrix affine(const Matrix& in, const Layer& layer)
{
    Matrix out(in.rows(), layer.outputs());
    for (std::size_t r = 0; r < in.rows(); ++r) {
        auto x = in.row(r);
        for (std::size_t o = 0; o < layer.outputs(); ++o) {
            auto w = layer.w.row(o);
            double s = layer.b[o];
            for (std::size_t i = 0; i < x.size(); ++i)
                s += w[i] * x[i];
            out(r, o) = s;
        }
    }
    return out;
}

inline void check_finite(const Matrix& m, std::size_t layer)
{
    for (double v : m.data())
        if (!std::isfinite(v))
            throw NumericError("non-finite activation in layer " + std::to_string(layer));
}

} // namespace detail

inline ForwardCache forward_cache(const MlpModel& model, const Matrix& batch)
{
    if (batch.cols() != model.inputs())
        throw UsageError("MLP expects " + std::to_string(model.inputs()) + " inputs, got " + std::to_string(batch.cols()));
    ForwardCache c;
    const Matrix* in = &batch;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        c.pre.push_back(detail::affine(*in, model.layers[l]));
        detail::check_finite(c.pre.back(), l);
        Matrix a = c.pre.back();
        if (l + 1 < model.layers.size()) {
            for (auto& v : a.data())
                v = std::max(0.0, v);
        }
        c.act.push_back(std::move(a));
        in = &c.act.back();
    }
    return c;
}

/// Per-row probabilities from output pre-activations. The binary head maps
/// its single unit to (1 - p, p).
inline Matrix output_probabilities(const Matrix& z, Head head)
{
    if (head == Head::binary) {
        Matrix p(z.rows(), 2);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            const double s = sigmoid(z(r, 0));
            p(r, 0) = 1.0 - s;
            p(r, 1) = s;
        }
        return p;
    }
    Matrix p(z.rows(), z.cols());
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto s = softmax(z.row(r));
        std::copy(s.begin(), s.end(), p.row(r).begin());
    }
    return p;
}

inline Matrix forward(const MlpModel& model, const Matrix& batch)
{
    auto c = forward_cache(model, batch);
    return output_probabilities(c.pre.back(), model.head);
}

/// Argmax with ties to the lower class; binary head is positive at p >= 0.5.
inline std::vector<std::uint32_t> predict(const MlpModel& model, const Matrix& rows)
{
    const auto p = forward(model, rows);
    std::vector<std::uint32_t> out(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        if (model.head == Head::binary) {
            out[r] = p(r, 1) >= 0.5 ? 1 : 0;
        } else {
            auto row = p.row(r);
            out[r] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    }
    return out;
}

/// Mean cross-entropy of a batch.
inline double loss(const MlpModel& model, const Matrix& batch, std::span<const std::uint32_t> labels)
{
    const auto c = forward_cache(model, batch);
    const auto& z = c.pre.back();
    double total = 0.0;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        if (model.head == Head::binary) {
            // -[y log s + (1-y) log(1-s)] written via softplus for stability
            const double zr = z(r, 0);
            const double softplus = zr > 0 ? zr + std::log1p(std::exp(-zr)) : std::log1p(std::exp(zr));
            total += softplus - (labels[r] ? zr : 0.0);
        } else {
            auto zr = z.row(r);
            const double m = *std::max_element(zr.begin(), zr.end());
            double s = 0.0;
            for (double v : zr)
                s += std::exp(v - m);
            total += m + std::log(s) - zr[labels[r]];
        }
    }
    return total / static_cast<double>(batch.rows());
}

/// Gradients with the same layout as the model's layers.
inline std::vector<Layer> gradients(const MlpModel& model, const Matrix& batch, std::span<const std::uint32_t> labels)
{
    const auto c = forward_cache(model, batch);
    const std::size_t nb = batch.rows();
    const double inv = 1.0 / static_cast<double>(nb);
    const std::size_t L = model.layers.size();

    Matrix delta = c.pre.back();
    if (model.head == Head::binary) {
        for (std::size_t r = 0; r < nb; ++r)
            delta(r, 0) = (sigmoid(delta(r, 0)) - (labels[r] ? 1.0 : 0.0)) * inv;
    } else {
        for (std::size_t r = 0; r < nb; ++r) {
            auto p = softmax(c.pre.back().row(r));
            for (std::size_t k = 0; k < p.size(); ++k)
                delta(r, k) = (p[k] - (labels[r] == k ? 1.0 : 0.0)) * inv;
        }
    }

    std::vector<Layer> grads(L);
    for (std::size_t li = L; li-- > 0;) {
        const auto& layer = model.layers[li];
        const Matrix& in = li == 0 ? batch : c.act[li - 1];
        auto& g = grads[li];
        g.w = Matrix(layer.outputs(), layer.inputs());
        g.b.assign(layer.outputs(), 0.0);
        for (std::size_t r = 0; r < nb; ++r)
            for (std::size_t o = 0; o < layer.outputs(); ++o) {
                const double d = delta(r, o);
                if (d == 0.0)
                    continue;
                g.b[o] += d;
                auto gw = g.w.row(o);
                auto x = in.row(r);
                for (std::size_t i = 0; i < x.size(); ++i)
                    gw[i] += d * x[i];
            }
        if (li == 0)
            break;
        Matrix prev(nb, layer.inputs());
        for (std::size_t r = 0; r < nb; ++r)
            for (std::size_t o = 0; o < layer.outputs(); ++o) {
                const double d = delta(r, o);
                if (d == 0.0)
                    continue;
                auto w = layer.w.row(o);
                for (std::size_t i = 0; i < w.size(); ++i)
                    prev(r, i) += d * w[i];
            }
        const auto& z = c.pre[li - 1];
        for (std::size_t k = 0; k < prev.data().size(); ++k)
            if (!(z.data()[k] > 0.0))
                prev.data()[k] = 0.0;
        delta = std::move(prev);
    }
    return grads;
}

struct GradientCheck
{
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_near_kink = 0;
};

/// Central finite differences against the analytic gradient. Parameters whose
/// perturbation brings any hidden pre-activation within `kink` of zero are
/// skipped. Checks every parameter when there are at most `max_params`,
/// otherwise an evenly strided sample.
inline GradientCheck gradient_check(const MlpModel& model, const Matrix& batch, std::span<const std::uint32_t> labels,
                                    double step = 1e-5, double kink = 1e-4, std::size_t max_params = 5000)
{
    if (batch.rows() > 8)
        throw UsageError("gradient check takes at most 8 rows");
    const auto analytic = gradients(model, batch, labels);
    MlpModel probe = model;
    GradientCheck res;

    auto near_kink = [&](const MlpModel& m) {
        const auto c = forward_cache(m, batch);
        for (std::size_t l = 0; l + 1 < c.pre.size(); ++l)
            for (double v : c.pre[l].data())
                if (std::abs(v) < kink)
                    return true;
        return false;
    };

    const std::size_t total = model.param_count();
    const std::size_t stride = total > max_params ? (total + max_params - 1) / max_params : 1;
    std::size_t flat = 0;
    auto visit = [&](double& param, double grad) {
        if (flat++ % stride != 0)
            return;
        const double saved = param;
        param = saved + step;
        const bool kp = near_kink(probe);
        const double lp = loss(probe, batch, labels);
        param = saved - step;
        const bool km = near_kink(probe);
        const double lm = loss(probe, batch, labels);
        param = saved;
        if (kp || km) {
            ++res.skipped_near_kink;
            return;
        }
        const double numeric = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(grad), 1e-7});
        res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - grad) / denom);
        ++res.checked;
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& layer = probe.layers[l];
        for (std::size_t k = 0; k < layer.w.data().size(); ++k)
            visit(layer.w.data()[k], analytic[l].w.data()[k]);
        for (std::size_t k = 0; k < layer.b.size(); ++k)
            visit(layer.b[k], analytic[l].b[k]);
    }
    return res;
}

/// Mini-batch training on cross-entropy; rows are reshuffled every epoch.
inline MlpModel train(const Matrix& x, std::span<const std::uint32_t> y, std::size_t num_classes, Head head,
                      const MlpConfig& cfg)
{
    cfg.validate();
    if (x.rows() != y.size())
        throw UsageError("feature and label counts differ");
    {
        std::vector<std::size_t> seen(num_classes, 0);
        for (auto l : y) {
            if (l >= num_classes)
                throw DataError("label index out of range");
            ++seen[l];
        }
        for (std::size_t k = 0; k < num_classes; ++k)
            if (seen[k] == 0)
                throw DataError("class " + std::to_string(k) + " has no training rows");
    }

    auto model = init_model(x.cols(), num_classes, head, cfg);
    const auto start = std::chrono::steady_clock::now();

    // Adam moment estimates, same layout as the layers.
    std::vector<Layer> m1, m2;
    if (cfg.optimizer == Optimizer::adam) {
        for (const auto& l : model.layers) {
            m1.push_back({Matrix(l.outputs(), l.inputs()), std::vector<double>(l.outputs(), 0.0)});
            m2.push_back(m1.back());
        }
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;

    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, {0x11, epoch + 1}));
        rng.shuffle(order.begin(), order.end());
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const Matrix xb = x.select_rows(idx);
            std::vector<std::uint32_t> yb;
            yb.reserve(idx.size());
            for (auto i : idx)
                yb.push_back(y[i]);

            const double l = loss(model, xb, yb);
            if (!std::isfinite(l))
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            model.loss_trace.push_back({epoch, batch_index, l});

            const auto g = gradients(model, xb, yb);
            ++step;
            if (cfg.optimizer == Optimizer::sgd) {
                for (std::size_t li = 0; li < model.layers.size(); ++li) {
                    auto& w = model.layers[li].w.data();
                    auto& b = model.layers[li].b;
                    for (std::size_t k = 0; k < w.size(); ++k)
                        w[k] -= cfg.learning_rate * g[li].w.data()[k];
                    for (std::size_t k = 0; k < b.size(); ++k)
                        b[k] -= cfg.learning_rate * g[li].b[k];
                }
                continue;
            }
            const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
            auto adam = [&](double& p, double grad, double& a, double& v) {
                a = beta1 * a + (1 - beta1) * grad;
                v = beta2 * v + (1 - beta2) * grad * grad;
                p -= cfg.learning_rate * (a / c1) / (std::sqrt(v / c2) + eps);
            };
            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                auto& layer = model.layers[li];
                for (std::size_t k = 0; k < layer.w.data().size(); ++k)
                    adam(layer.w.data()[k], g[li].w.data()[k], m1[li].w.data()[k], m2[li].w.data()[k]);
                for (std::size_t k = 0; k < layer.b.size(); ++k)
                    adam(layer.b[k], g[li].b[k], m1[li].b[k], m2[li].b[k]);
            }
        }
    }
    model.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return model;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::string_view kMlpMagic = "CFSIDSNN";
inline constexpr std::uint32_t kMlpVersion = 1;

inline void save_model(const std::filesystem::path& path, const MlpModel& m)
{
    io::BinaryWriter w(path);
    w.magic(kMlpMagic, kMlpVersion);
    w.put<std::uint8_t>(m.head == Head::binary ? 1 : 0);
    w.put<std::uint64_t>(m.num_classes);
    w.put<double>(m.build_seconds);
    std::vector<std::uint64_t> dims{m.inputs()};
    for (const auto& l : m.layers)
        dims.push_back(l.outputs());
    w.put_vector<std::uint64_t>(dims);
    for (const auto& l : m.layers) {
        w.put_vector<double>(l.w.data());
        w.put_vector<double>(l.b);
    }
    w.finish();
}

inline MlpModel load_model(const std::filesystem::path& path)
{
    io::BinaryReader r(path);
    if (auto v = r.magic(kMlpMagic); v != kMlpVersion)
        throw DataError("unsupported MLP file version " + std::to_string(v));
    MlpModel m;
    m.head = r.get<std::uint8_t>() ? Head::binary : Head::categorical;
    m.num_classes = r.get<std::uint64_t>();
    m.build_seconds = r.get<double>();
    const auto dims = r.get_vector<std::uint64_t>();
    if (dims.size() < 3)
        throw DataError("'" + path.string() + "': MLP needs input, hidden and output layers");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer{Matrix(dims[l + 1], dims[l]), {}};
        auto w = r.get_vector<double>();
        layer.b = r.get_vector<double>();
        if (w.size() != dims[l] * dims[l + 1] || layer.b.size() != dims[l + 1])
            throw DataError("'" + path.string() + "': layer " + std::to_string(l) + " does not match its header");
        layer.w.data() = std::move(w);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

inline void write_loss_trace(const std::filesystem::path& path, const MlpModel& m)
{
    auto out = io::open_out(path);
    out << "epoch,batch,loss\n";
    for (const auto& rec : m.loss_trace)
        out << rec.epoch << ',' << rec.batch << ',' << io::format_double(rec.loss) << '\n';
}

} // namespace cfsids::nn
