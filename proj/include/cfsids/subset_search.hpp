#pragma once

#include "cfsids/core.hpp"
#include "cfsids/correlation.hpp"
#include "cfsids/io.hpp"
#include "cfsids/rng.hpp"
#include "cfsids/subset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfsids
{

/// Positions at or above this value select their feature.
inline constexpr double kSelectThreshold = 0.5;

inline FeatureSubset decode(std::span<const double> position)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < position.size(); ++i)
        if (position[i] >= kSelectThreshold)
            idx.push_back(i);
    return FeatureSubset(std::move(idx));
}

struct SearchResult
{
    FeatureSubset best;
    double best_merit = 0.0;
    std::vector<double> best_position;
    /// Entry 0 is the initialization sweep, entry t the incumbent after epoch t.
    std::vector<double> merit_trace;
    std::size_t evaluations = 0;
    double elapsed = 0.0;
};

// ---------------------------------------------------------------------------
// Bat Algorithm

struct BatConfig
{
    std::size_t n = 100;
    std::size_t t_max = 1000;
    double alpha = 0.95;
    double gamma = 0.95;
    double f_min = 0.0;
    double f_max = 0.1;
    double a0_min = 1.0;
    double a0_max = 2.0;
    double local_walk_scale = 0.01;
    /// r = r0 (1 - exp(-gamma * t)) instead of r0 (1 - exp(-gamma^t)).
    bool canonical_pulse = false;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n < 1)
            throw UsageError("bat population must be at least 1");
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw UsageError("alpha must lie in (0,1]");
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw UsageError("gamma must lie in (0,1]");
        if (!(f_max >= f_min) || !(a0_max >= a0_min) || !(a0_min > 0.0))
            throw UsageError("invalid frequency or loudness range");
    }
};

struct Bat
{
    std::vector<double> x;
    std::vector<double> v;
    double f = 0.0;
    double loudness = 1.0;
    double pulse_rate = 0.0;
    double r0 = 0.0;
    double merit = 0.0;
};

struct BatPopulation
{
    std::vector<Bat> bats;
    std::vector<double> best_x;
    double best_merit = 0.0;
    std::size_t epoch = 0;
    std::size_t evaluations = 0;
};

/// Loudness after one accepted incumbent update.
inline double bat_loudness_update(double loudness, const BatConfig& cfg) { return cfg.alpha * loudness; }

/// Pulse rate set when a bat's solution becomes the incumbent at epoch t.
inline double bat_pulse_update(double r0, std::size_t t, const BatConfig& cfg)
{
    const double td = static_cast<double>(t);
    const double exponent = cfg.canonical_pulse ? cfg.gamma * td : std::pow(cfg.gamma, td);
    return r0 * (1.0 - std::exp(-exponent));
}

inline BatPopulation bat_init(const BatConfig& cfg, std::size_t k)
{
    cfg.validate();
    if (k < 1)
        throw UsageError("bat search needs at least one candidate feature");
    BatPopulation pop;
    pop.bats.resize(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        Rng rng(derive_seed(cfg.seed, {0xBA7, 0, i}));
        auto& b = pop.bats[i];
        b.x.resize(k);
        b.v.resize(k);
        for (auto& xi : b.x)
            xi = rng.uniform(0.0, 1.0);
        for (auto& vi : b.v)
            vi = rng.uniform(-1.0, 1.0);
        b.f = rng.uniform(cfg.f_min, cfg.f_max);
        b.loudness = rng.uniform(cfg.a0_min, cfg.a0_max);
        b.r0 = rng.uniform(0.0, 1.0);
        b.pulse_rate = b.r0;
    }
    pop.best_x.assign(k, 0.0);
    pop.best_merit = 0.0;
    return pop;
}

/// Scores every bat once and keeps the strictly best as incumbent.
inline void bat_initial_sweep(BatPopulation& pop, const CfsEvaluator& eval)
{
    for (auto& b : pop.bats) {
        b.merit = eval.score(decode(b.x)).merit;
        ++pop.evaluations;
        if (b.merit > pop.best_merit) {
            pop.best_x = b.x;
            pop.best_merit = b.merit;
        }
    }
}

/// One epoch over all bats in index order. The incumbent moves as soon as a
/// bat beats it, so later bats in the same epoch see the new best position.
inline void bat_epoch(BatPopulation& pop, const CfsEvaluator& eval, const BatConfig& cfg)
{
    const std::size_t t = ++pop.epoch;
    const std::size_t k = pop.best_x.size();
    for (std::size_t i = 0; i < pop.bats.size(); ++i) {
        auto& b = pop.bats[i];
        Rng rng(derive_seed(cfg.seed, {0xBA7, t, i}));

        b.f = rng.uniform(cfg.f_min, cfg.f_max);
        for (std::size_t d = 0; d < k; ++d)
            b.v[d] = std::clamp(b.v[d] + (b.x[d] - pop.best_x[d]) * b.f, -1.0, 1.0);

        if (b.pulse_rate >= rng.uniform()) {
            for (std::size_t d = 0; d < k; ++d)
                b.x[d] = std::clamp(b.x[d] + b.v[d], -1.0, 1.0);
        } else {
            for (std::size_t d = 0; d < k; ++d) {
                const double step = rng.uniform(-cfg.local_walk_scale, cfg.local_walk_scale) * b.loudness;
                b.x[d] = std::clamp(pop.best_x[d] + step, -1.0, 1.0);
            }
        }

        b.merit = eval.score(decode(b.x)).merit;
        ++pop.evaluations;
        const double accept_draw = rng.uniform();
        if (b.loudness > accept_draw && b.merit > pop.best_merit) {
            pop.best_x = b.x;
            pop.best_merit = b.merit;
            b.pulse_rate = bat_pulse_update(b.r0, t, cfg);
            b.loudness = bat_loudness_update(b.loudness, cfg);
        }
    }
}

namespace detail
{

inline SearchResult finish_search(const std::vector<double>& best_x, double best_merit, std::vector<double> trace,
                                  std::size_t evaluations, const CfsEvaluator& eval,
                                  std::chrono::steady_clock::time_point start)
{
    SearchResult res;
    res.best = decode(best_x);
    res.best.cfs = eval.score(res.best);
    res.best_merit = best_merit;
    res.best_position = best_x;
    res.merit_trace = std::move(trace);
    res.evaluations = evaluations;
    res.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

} // namespace detail

inline SearchResult bat_run(const CorrelationMatrix& corr, const BatConfig& cfg)
{
    if (corr.num_features() < 1 || corr.num_classes() < 1)
        throw DataError("correlation matrix needs at least one feature and one class column");
    const auto start = std::chrono::steady_clock::now();
    const CfsEvaluator eval(corr);
    auto pop = bat_init(cfg, eval.num_features());
    bat_initial_sweep(pop, eval);
    std::vector<double> trace{pop.best_merit};
    trace.reserve(cfg.t_max + 1);
    while (pop.epoch < cfg.t_max) {
        bat_epoch(pop, eval, cfg);
        trace.push_back(pop.best_merit);
    }
    return detail::finish_search(pop.best_x, pop.best_merit, std::move(trace), pop.evaluations, eval, start);
}

// ---------------------------------------------------------------------------
// Aquila Optimizer

struct AquilaConfig
{
    std::size_t n = 100;
    std::size_t t_max = 1000;
    /// Exploitation adjustment parameters of the expanded exploitation step.
    double alpha = 0.1;
    double delta = 0.1;
    double levy_beta = 1.5;
    double levy_scale = 0.01;
    /// Spiral shape of the narrowed exploration step.
    double spiral_r1 = 10.0;
    double spiral_u = 0.00565;
    double spiral_omega = 0.005;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n < 1)
            throw UsageError("aquila population must be at least 1");
        if (!(levy_beta > 0.0 && levy_beta <= 2.0))
            throw UsageError("levy beta must lie in (0,2]");
    }
};

namespace detail
{

inline double levy_sigma(double beta)
{
    const double num = std::tgamma(1.0 + beta) * std::sin(std::numbers::pi * beta / 2.0);
    const double den = std::tgamma((1.0 + beta) / 2.0) * beta * std::pow(2.0, (beta - 1.0) / 2.0);
    return std::pow(num / den, 1.0 / beta);
}

inline double levy_step(Rng& rng, double beta, double sigma, double scale)
{
    const double u = rng.normal() * sigma;
    double v = rng.normal();
    if (v == 0.0)
        v = 1e-300;
    return scale * u / std::pow(std::abs(v), 1.0 / beta);
}

} // namespace detail

/// Aquila Optimizer maximizing CFS merit over positions in [-1,1]^k. Four
/// move types: expanded and narrowed exploration during the first two thirds
/// of the run, expanded and narrowed exploitation afterwards. Moves are kept
/// only when they improve the individual (greedy selection).
inline SearchResult aquila_run(const CorrelationMatrix& corr, const AquilaConfig& cfg)
{
    cfg.validate();
    if (corr.num_features() < 1 || corr.num_classes() < 1)
        throw DataError("correlation matrix needs at least one feature and one class column");
    const auto start = std::chrono::steady_clock::now();
    const CfsEvaluator eval(corr);
    const std::size_t k = eval.num_features();
    const std::size_t n = cfg.n;
    constexpr double lb = -1.0;
    constexpr double ub = 1.0;

    std::vector<std::vector<double>> pos(n, std::vector<double>(k));
    std::vector<double> fit(n);
    std::size_t evaluations = 0;
    std::vector<double> best_x(k, 0.0);
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed, {0xA0, 0, i}));
        for (auto& x : pos[i])
            x = rng.uniform(lb, ub);
        fit[i] = eval.score(decode(pos[i])).merit;
        ++evaluations;
        if (fit[i] > best) {
            best = fit[i];
            best_x = pos[i];
        }
    }

    const double sigma = detail::levy_sigma(cfg.levy_beta);
    std::vector<double> spiral(k);
    for (std::size_t d = 0; d < k; ++d) {
        const double d1 = static_cast<double>(d + 1);
        const double r = cfg.spiral_r1 + cfg.spiral_u * d1;
        const double theta = -cfg.spiral_omega * d1 + 3.0 * std::numbers::pi / 2.0;
        spiral[d] = r * std::cos(theta) - r * std::sin(theta); // y - x
    }

    std::vector<double> trace{best};
    trace.reserve(cfg.t_max + 1);
    const double tmax = static_cast<double>(cfg.t_max);
    std::vector<double> mean(k);
    std::vector<double> cand(k);
    for (std::size_t t = 1; t <= cfg.t_max; ++t) {
        const double td = static_cast<double>(t);
        Rng iter_rng(derive_seed(cfg.seed, {0xA0, t, n}));
        const double g1 = 2.0 * iter_rng.uniform() - 1.0;
        const double g2 = 2.0 * (1.0 - td / tmax);
        const double qf =
            cfg.t_max > 1 ? std::pow(td, (2.0 * iter_rng.uniform() - 1.0) / ((1.0 - tmax) * (1.0 - tmax))) : 1.0;

        std::fill(mean.begin(), mean.end(), 0.0);
        for (const auto& p : pos)
            for (std::size_t d = 0; d < k; ++d)
                mean[d] += p[d];
        for (auto& m : mean)
            m /= static_cast<double>(n);

        const std::vector<double> leader = best_x;
        const bool exploring = td <= (2.0 / 3.0) * tmax;
        for (std::size_t i = 0; i < n; ++i) {
            Rng rng(derive_seed(cfg.seed, {0xA0, t, i}));
            const bool expanded = rng.uniform() < 0.5;
            if (exploring && expanded) {
                const double r = rng.uniform();
                for (std::size_t d = 0; d < k; ++d)
                    cand[d] = leader[d] * (1.0 - td / tmax) + (mean[d] - leader[d] * r);
            } else if (exploring) {
                const auto& other = pos[rng.below(n)];
                const double r = rng.uniform();
                for (std::size_t d = 0; d < k; ++d)
                    cand[d] = leader[d] * detail::levy_step(rng, cfg.levy_beta, sigma, cfg.levy_scale) + other[d] +
                              spiral[d] * r;
            } else if (expanded) {
                const double r1 = rng.uniform();
                const double r2 = rng.uniform();
                for (std::size_t d = 0; d < k; ++d)
                    cand[d] = (leader[d] - mean[d]) * cfg.alpha - r1 + ((ub - lb) * r2 + lb) * cfg.delta;
            } else {
                const double r1 = rng.uniform();
                const double r2 = rng.uniform();
                for (std::size_t d = 0; d < k; ++d)
                    cand[d] = qf * leader[d] - g1 * pos[i][d] * r1 -
                              g2 * detail::levy_step(rng, cfg.levy_beta, sigma, cfg.levy_scale) + r2 * g1;
            }
            for (auto& c : cand)
                c = std::clamp(c, lb, ub);
            const double m = eval.score(decode(cand)).merit;
            ++evaluations;
            if (m > fit[i]) {
                fit[i] = m;
                pos[i] = cand;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            if (fit[i] > best) {
                best = fit[i];
                best_x = pos[i];
            }
        trace.push_back(best);
    }
    return detail::finish_search(best_x, best, std::move(trace), evaluations, eval, start);
}

// ---------------------------------------------------------------------------
// Exhaustive search

inline constexpr std::size_t kMaxBruteForceFeatures = 20;

/// Enumerates every nonempty subset. Ties go to the smaller subset, then to the
/// lexicographically smaller index list.
inline SearchResult brute_force_best(const CorrelationMatrix& corr, std::size_t max_features = kMaxBruteForceFeatures)
{
    const auto start = std::chrono::steady_clock::now();
    const CfsEvaluator eval(corr);
    const std::size_t k = eval.num_features();
    if (max_features > kMaxBruteForceFeatures)
        throw UsageError("exhaustive search is capped at " + std::to_string(kMaxBruteForceFeatures) + " features");
    if (k > max_features)
        throw UsageError("exhaustive search over " + std::to_string(k) + " features exceeds the limit of " +
                         std::to_string(max_features));
    if (k == 0)
        throw DataError("no feature columns to search");

    std::vector<std::size_t> best_idx;
    double best = -1.0;
    std::vector<std::size_t> idx;
    idx.reserve(k);
    const std::uint64_t total = std::uint64_t{1} << k;
    for (std::uint64_t mask = 1; mask < total; ++mask) {
        idx.clear();
        for (std::size_t d = 0; d < k; ++d)
            if (mask & (std::uint64_t{1} << d))
                idx.push_back(d);
        const double m = eval.score(idx).merit;
        const bool better = m > best || (m == best && (idx.size() < best_idx.size() ||
                                                       (idx.size() == best_idx.size() && idx < best_idx)));
        if (better) {
            best = m;
            best_idx = idx;
        }
    }

    std::vector<double> pos(k, 0.0);
    for (auto i : best_idx)
        pos[i] = 1.0;
    return detail::finish_search(pos, best, {best}, total - 1, eval, start);
}

// ---------------------------------------------------------------------------
// Subset and trace files

struct SubsetFile
{
    FeatureSubset subset;
    std::string method;
    std::optional<std::uint64_t> seed;
};

/// One feature name per line after a `# key: value` metadata block.
inline void write_subset(const std::filesystem::path& path, const FeatureSubset& subset,
                         std::span<const std::string> names, const std::string& method,
                         std::optional<std::uint64_t> seed)
{
    subset.check_bounds(names.size());
    auto out = io::open_out(path);
    out << "# k: " << subset.size() << '\n';
    if (subset.cfs)
        out << "# merit: " << io::format_double(subset.cfs->merit) << '\n';
    if (subset.ig_sum)
        out << "# ig_sum: " << io::format_double(*subset.ig_sum) << '\n';
    out << "# method: " << method << '\n';
    if (seed)
        out << "# seed: " << *seed << '\n';
    for (auto i : subset.indices())
        out << names[i] << '\n';
    if (!out)
        throw DataError("write failed for '" + path.string() + "'");
}

inline SubsetFile read_subset(const std::filesystem::path& path, std::span<const std::string> names)
{
    auto in = io::open_in(path);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < names.size(); ++i)
        index.emplace(names[i], i);

    SubsetFile f;
    std::vector<std::size_t> idx;
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line.rfind("# ", 0) == 0) {
            auto colon = line.find(": ");
            if (colon != std::string::npos)
                meta[line.substr(2, colon - 2)] = line.substr(colon + 2);
            continue;
        }
        auto it = index.find(line);
        if (it == index.end())
            throw DataError("'" + path.string() + "': unknown feature '" + line + "'");
        idx.push_back(it->second);
    }
    f.subset = FeatureSubset(std::move(idx));
    if (auto it = meta.find("k"); it != meta.end() && std::stoull(it->second) != f.subset.size())
        throw DataError("'" + path.string() + "': k does not match the listed features");
    if (auto it = meta.find("merit"); it != meta.end()) {
        CfsScore s;
        s.k = f.subset.size();
        io::parse_double(it->second, s.merit);
        f.subset.cfs = s;
    }
    if (auto it = meta.find("ig_sum"); it != meta.end()) {
        double v = 0.0;
        io::parse_double(it->second, v);
        f.subset.ig_sum = v;
    }
    if (auto it = meta.find("method"); it != meta.end())
        f.method = it->second;
    if (auto it = meta.find("seed"); it != meta.end())
        f.seed = std::stoull(it->second);
    return f;
}

inline void write_trace(const std::filesystem::path& path, std::span<const double> trace)
{
    auto out = io::open_out(path);
    out << "epoch,best_merit\n";
    for (std::size_t t = 0; t < trace.size(); ++t)
        out << t << ',' << io::format_double(trace[t]) << '\n';
}

inline std::vector<double> read_trace(const std::filesystem::path& path)
{
    auto in = io::open_in(path);
    std::string line;
    std::getline(in, line);
    std::vector<double> trace;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto cells = io::split_csv_line(line);
        if (cells.size() != 2)
            throw DataError("'" + path.string() + "': malformed trace row");
        double v = 0;
        if (!io::parse_double(cells[1], v))
            throw DataError("'" + path.string() + "': bad merit value");
        trace.push_back(v);
    }
    return trace;
}

} // namespace cfsids
