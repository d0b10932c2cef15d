#pragma once

// Experiment orchestration: preprocess -> correlate -> select -> train ->
// evaluate -> report, with content-addressed stage caching.

#include "cfsids/correlation.hpp"
#include "cfsids/dataset.hpp"
#include "cfsids/io.hpp"
#include "cfsids/metrics.hpp"
#include "cfsids/neural_net.hpp"
#include "cfsids/random_forest.hpp"
#include "cfsids/subset_search.hpp"

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfsids
{

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum class Method { full, ba, ao, rf_ig, brute };
enum class ModelKind { rf, mlp };

inline Method parse_method(const std::string& s)
{
    if (s == "full")
        return Method::full;
    if (s == "ba")
        return Method::ba;
    if (s == "ao")
        return Method::ao;
    if (s == "rf-ig")
        return Method::rf_ig;
    if (s == "brute")
        return Method::brute;
    throw UsageError("unknown selection method '" + s + "' (full, ba, ao, rf-ig, brute)");
}

inline std::string to_string(Method m)
{
    switch (m) {
    case Method::full: return "full";
    case Method::ba: return "ba";
    case Method::ao: return "ao";
    case Method::rf_ig: return "rf-ig";
    case Method::brute: return "brute";
    }
    return "?";
}

inline ModelKind parse_model(const std::string& s)
{
    if (s == "rf")
        return ModelKind::rf;
    if (s == "mlp")
        return ModelKind::mlp;
    throw UsageError("unknown model '" + s + "' (rf, mlp)");
}

inline std::string to_string(ModelKind m) { return m == ModelKind::rf ? "rf" : "mlp"; }

/// Table label in the style "Cat. CFS-BA" / "Bi. RF-IG".
inline std::string methodology_label(Method m, bool binary)
{
    std::string name;
    switch (m) {
    case Method::full: name = "Full"; break;
    case Method::ba: name = "CFS-BA"; break;
    case Method::ao: name = "CFS-AO"; break;
    case Method::rf_ig: name = "RF-IG"; break;
    case Method::brute: name = "CFS-Exhaustive"; break;
    }
    return (binary ? "Bi. " : "Cat. ") + name;
}

struct ExperimentConfig
{
    std::vector<fs::path> inputs;
    std::string label_column = "Label";
    std::string benign_name = "Benign";
    std::optional<fs::path> grouping;
    std::vector<std::string> drop_columns = PreprocessOptions{}.drop_columns;
    double split_ratio = 0.5;
    bool stratified = false;
    bool normalize_before_split = false;

    Method method = Method::full;
    std::size_t k = 0;
    BatConfig bat;
    AquilaConfig aquila;

    ModelKind model = ModelKind::rf;
    ForestConfig forest;
    nn::MlpConfig mlp;
    bool binary = false;
    Averaging averaging = Averaging::macro;

    std::uint64_t seed = 0;
    std::size_t threads = 1;
    fs::path output_dir = "out";
    bool force = false;
};

/// Stage seeds fanned out from the master seed.
struct SeedLineage
{
    std::uint64_t master = 0;
    std::uint64_t split = 0;
    std::uint64_t search = 0;
    std::uint64_t importance_forest = 0;
    std::uint64_t model = 0;

    static SeedLineage from(std::uint64_t master)
    {
        return {master, derive_seed(master, {1}), derive_seed(master, {2}), derive_seed(master, {3}),
                derive_seed(master, {4})};
    }
};

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL)
{
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex16(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline json metrics_json(const MetricReport& m)
{
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["averaging"] = to_string(m.averaging);
    j["accuracy"] = m.accuracy;
    j["precision"] = opt(m.precision);
    j["recall"] = opt(m.recall);
    j["far"] = opt(m.far);
    j["f1"] = opt(m.f1);
    j["skipped"] = {{"precision", m.skipped_precision},
                    {"recall", m.skipped_recall},
                    {"far", m.skipped_far},
                    {"f1", m.skipped_f1}};
    return j;
}

inline MetricReport metrics_from_json(const json& j)
{
    auto opt = [](const json& v) { return v.is_null() ? std::optional<double>() : std::optional(v.get<double>()); };
    MetricReport m;
    m.averaging = parse_averaging(j.at("averaging").get<std::string>());
    m.accuracy = j.at("accuracy").get<double>();
    m.precision = opt(j.at("precision"));
    m.recall = opt(j.at("recall"));
    m.far = opt(j.at("far"));
    m.f1 = opt(j.at("f1"));
    return m;
}

inline MetricReport evaluate_labels(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted,
                                    const std::vector<std::string>& names, bool binary, Averaging averaging,
                                    ConfusionMatrix* cm_out = nullptr)
{
    auto cm = confusion(truth, predicted, names);
    if (cm_out)
        *cm_out = cm;
    return binary ? binary_metrics(cm) : multiclass_metrics(cm, averaging);
}

// ---------------------------------------------------------------------------
// Stages

/// Cached stage directory `<output>/stages/<name>-<hash>`; `done` marks completion.
class StageCache
{
public:
    StageCache(fs::path root, bool force) : root_(std::move(root)), force_(force) {}

    fs::path dir(const std::string& name, std::uint64_t key) const { return root_ / "stages" / (name + "-" + hex16(key)); }

    bool complete(const fs::path& d) const { return !force_ && fs::exists(d / "done"); }

    void mark(const fs::path& d) const
    {
        auto out = io::open_out(d / "done");
        out << "ok\n";
    }

private:
    fs::path root_;
    bool force_;
};

inline std::string preprocess_key(const ExperimentConfig& c, const SeedLineage& s)
{
    std::ostringstream os;
    for (const auto& p : c.inputs) {
        os << fs::absolute(p).string() << '|';
        if (fs::exists(p))
            os << fs::file_size(p) << '|' << fs::last_write_time(p).time_since_epoch().count() << '|';
    }
    os << c.label_column << '|' << c.benign_name << '|';
    if (c.grouping) {
        std::ifstream g(*c.grouping);
        os << std::string(std::istreambuf_iterator<char>(g), {}) << '|';
    }
    for (const auto& d : c.drop_columns)
        os << d << ',';
    os << '|' << io::format_double(c.split_ratio) << '|' << s.split << '|' << c.stratified << '|'
       << c.normalize_before_split;
    return os.str();
}

inline std::string forest_key(const ForestConfig& f, std::uint64_t seed)
{
    std::ostringstream os;
    os << f.n_trees << ',' << f.max_depth << ',' << f.min_node_size << ',' << f.features_per_split.value_or(0) << ','
       << f.bootstrap << ',' << static_cast<int>(f.importance) << ',' << seed;
    return os.str();
}

inline std::string search_key(const ExperimentConfig& c, const SeedLineage& s)
{
    std::ostringstream os;
    os << to_string(c.method) << '|';
    switch (c.method) {
    case Method::ba:
        os << c.bat.n << ',' << c.bat.t_max << ',' << io::format_double(c.bat.alpha) << ','
           << io::format_double(c.bat.gamma) << ',' << io::format_double(c.bat.f_min) << ','
           << io::format_double(c.bat.f_max) << ',' << io::format_double(c.bat.a0_min) << ','
           << io::format_double(c.bat.a0_max) << ',' << io::format_double(c.bat.local_walk_scale) << ','
           << c.bat.canonical_pulse << ',' << s.search;
        break;
    case Method::ao:
        os << c.aquila.n << ',' << c.aquila.t_max << ',' << io::format_double(c.aquila.alpha) << ','
           << io::format_double(c.aquila.delta) << ',' << s.search;
        break;
    case Method::rf_ig:
        os << c.k;
        break;
    default:
        break;
    }
    return os.str();
}

inline std::string model_key(const ExperimentConfig& c, const SeedLineage& s)
{
    std::ostringstream os;
    os << to_string(c.model) << '|';
    if (c.model == ModelKind::rf) {
        os << forest_key(c.forest, s.model);
    } else {
        for (auto h : c.mlp.hidden_sizes)
            os << h << '-';
        os << ',' << c.mlp.batch_size << ',' << c.mlp.epochs << ',' << io::format_double(c.mlp.learning_rate) << ','
           << static_cast<int>(c.mlp.optimizer) << ',' << s.model;
    }
    return os.str();
}

inline CorrelationMatrix correlate(const Dataset& train, bool binary, std::size_t threads)
{
    std::vector<std::string> class_names;
    auto indicators = class_indicators(train, binary, class_names);
    return spearman_matrix(train.features, indicators, train.feature_names, class_names, threads);
}

struct SelectionOutcome
{
    FeatureSubset subset;
    std::optional<SearchResult> search;
    double seconds = 0.0;
};

/// Applies one selection method on precomputed inputs. `importances` is
/// required for rf-ig.
inline SelectionOutcome select_features(Method method, const CorrelationMatrix& corr,
                                        std::span<const double> importances, const ExperimentConfig& c,
                                        std::uint64_t search_seed)
{
    SelectionOutcome out;
    const auto start = std::chrono::steady_clock::now();
    switch (method) {
    case Method::full:
        out.subset = FeatureSubset::all(corr.num_features());
        break;
    case Method::ba: {
        auto cfg = c.bat;
        cfg.seed = search_seed;
        out.search = bat_run(corr, cfg);
        out.subset = out.search->best;
        break;
    }
    case Method::ao: {
        auto cfg = c.aquila;
        cfg.seed = search_seed;
        out.search = aquila_run(corr, cfg);
        out.subset = out.search->best;
        break;
    }
    case Method::brute:
        out.search = brute_force_best(corr);
        out.subset = out.search->best;
        break;
    case Method::rf_ig:
        if (c.k == 0)
            throw UsageError("rf-ig selection needs --k");
        out.subset = select_top_k(importances, c.k);
        break;
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.subset.empty())
        throw NumericError("selection method '" + to_string(method) + "' produced an empty subset");
    out.subset.cfs = cfs_merit(corr, out.subset);
    out.subset.ig_sum = ig_sum(importances, out.subset);
    return out;
}

struct RunRecord
{
    json data;

    std::string report_row() const;
};

inline const std::vector<std::string>& report_columns()
{
    static const std::vector<std::string> cols{"methodology", "K", "cfs", "ig", "time_s", "accuracy", "precision", "far",
                                               "f1"};
    return cols;
}

namespace detail
{

inline std::string fmt_metric(const json& v)
{
    return v.is_null() ? std::string("NA") : io::format_fixed(v.get<double>(), 6);
}

} // namespace detail

inline std::string RunRecord::report_row() const
{
    const auto& d = data;
    std::ostringstream os;
    os << io::csv_escape(d.at("methodology").get<std::string>()) << ',' << d.at("subset").at("k").get<std::size_t>()
       << ',' << io::format_fixed(d.at("subset").at("cfs").get<double>(), 6) << ','
       << io::format_fixed(d.at("subset").at("ig").get<double>(), 6) << ','
       << io::format_fixed(d.at("build_seconds").get<double>(), 3) << ','
       << io::format_fixed(d.at("metrics").at("accuracy").get<double>(), 6) << ','
       << detail::fmt_metric(d.at("metrics").at("precision")) << ',' << detail::fmt_metric(d.at("metrics").at("far"))
       << ',' << detail::fmt_metric(d.at("metrics").at("f1"));
    return os.str();
}

inline std::string report_header()
{
    std::string h;
    for (const auto& c : report_columns())
        h += (h.empty() ? "" : ",") + c;
    return h;
}

/// Drops the time column so rows can be compared across runs.
inline std::string strip_time_column(const std::string& row)
{
    auto cells = io::split_csv_line(row);
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i == 4)
            continue;
        out += (out.empty() ? "" : ",") + io::csv_escape(cells[i]);
    }
    return out;
}

inline json config_json(const ExperimentConfig& c, const SeedLineage& s)
{
    json j;
    std::vector<std::string> inputs;
    for (const auto& p : c.inputs)
        inputs.push_back(p.string());
    j["inputs"] = inputs;
    j["label_column"] = c.label_column;
    j["benign_name"] = c.benign_name;
    j["grouping"] = c.grouping ? json(c.grouping->string()) : json(nullptr);
    j["split_ratio"] = c.split_ratio;
    j["stratified"] = c.stratified;
    j["normalize_before_split"] = c.normalize_before_split;
    j["method"] = to_string(c.method);
    j["k"] = c.k;
    j["bat"] = {{"n", c.bat.n},
                {"t_max", c.bat.t_max},
                {"alpha", c.bat.alpha},
                {"gamma", c.bat.gamma},
                {"f_range", {c.bat.f_min, c.bat.f_max}},
                {"a0_range", {c.bat.a0_min, c.bat.a0_max}},
                {"local_walk_scale", c.bat.local_walk_scale},
                {"canonical_pulse", c.bat.canonical_pulse}};
    j["aquila"] = {{"n", c.aquila.n}, {"t_max", c.aquila.t_max}, {"alpha", c.aquila.alpha}, {"delta", c.aquila.delta}};
    j["model"] = to_string(c.model);
    j["forest"] = {{"n_trees", c.forest.n_trees},
                   {"max_depth", c.forest.max_depth},
                   {"min_node_size", c.forest.min_node_size},
                   {"features_per_split", c.forest.features_per_split ? json(*c.forest.features_per_split) : json("sqrt")},
                   {"importance", c.forest.importance == ImportanceMode::weighted ? "weighted" : "unweighted"}};
    j["mlp"] = {{"hidden_sizes", c.mlp.hidden_sizes},
                {"batch_size", c.mlp.batch_size},
                {"epochs", c.mlp.epochs},
                {"learning_rate", c.mlp.learning_rate},
                {"optimizer", c.mlp.optimizer == nn::Optimizer::sgd ? "sgd" : "adam"}};
    j["task"] = c.binary ? "binary" : "categorical";
    j["averaging"] = to_string(c.averaging);
    j["seeds"] = {{"master", s.master},
                  {"split", s.split},
                  {"search", s.search},
                  {"importance_forest", s.importance_forest},
                  {"model", s.model}};
    return j;
}

struct TrainedModel
{
    ModelKind kind = ModelKind::rf;
    std::optional<TrainedForest> forest;
    std::optional<nn::MlpModel> mlp;

    double build_seconds() const { return forest ? forest->build_seconds : mlp->build_seconds; }

    std::vector<std::uint32_t> predict(const Matrix& x, std::size_t threads) const
    {
        return forest ? cfsids::predict(*forest, x, threads) : nn::predict(*mlp, x);
    }
};

inline TrainedModel fit_model(const Dataset& train, bool binary, ModelKind kind, const ForestConfig& forest_cfg,
                              const nn::MlpConfig& mlp_cfg, std::uint64_t seed, std::size_t threads)
{
    TrainedModel m;
    m.kind = kind;
    const auto y = train.targets(binary);
    const auto k = train.target_names(binary).size();
    if (kind == ModelKind::rf) {
        auto cfg = forest_cfg;
        cfg.seed = seed;
        cfg.threads = threads;
        m.forest = train_forest(train.features, y, k, cfg);
    } else {
        auto cfg = mlp_cfg;
        cfg.seed = seed;
        m.mlp = nn::train(train.features, y, k, binary ? nn::Head::binary : nn::Head::categorical, cfg);
    }
    return m;
}

inline void save_model_file(const fs::path& path, const TrainedModel& m)
{
    if (m.forest)
        save_forest(path, *m.forest);
    else
        nn::save_model(path, *m.mlp);
}

/// Loads either model type by sniffing the magic tag.
inline TrainedModel load_model_file(const fs::path& path)
{
    auto in = io::open_in(path, true);
    std::string tag(8, '\0');
    in.read(tag.data(), 8);
    TrainedModel m;
    if (tag == kForestMagic) {
        m.kind = ModelKind::rf;
        m.forest = load_forest(path);
    } else if (tag == nn::kMlpMagic) {
        m.kind = ModelKind::mlp;
        m.mlp = nn::load_model(path);
    } else {
        throw DataError("'" + path.string() + "' is not a model file");
    }
    return m;
}

namespace detail
{

inline void write_text(const fs::path& p, const std::string& s)
{
    auto out = io::open_out(p);
    out << s;
    if (!out)
        throw DataError("write failed for '" + p.string() + "'");
}

/// Wraps stage failures with the stage name and the artifacts finished so far.
template <typename Fn>
auto run_stage(const std::string& stage, const std::vector<std::string>& completed, Fn&& fn)
{
    try {
        return fn();
    } catch (const Error& e) {
        std::string msg = "stage '" + stage + "' failed: " + e.what();
        if (!completed.empty()) {
            msg += "; completed artifacts:";
            for (const auto& c : completed)
                msg += " " + c;
        }
        if (dynamic_cast<const NumericError*>(&e))
            throw NumericError(msg);
        if (dynamic_cast<const UsageError*>(&e))
            throw UsageError(msg);
        throw DataError(msg);
    }
}

} // namespace detail

/// Runs every stage, reusing cached stage outputs keyed by the configuration.
inline RunRecord run_pipeline(const ExperimentConfig& c)
{
    if (c.inputs.empty())
        throw UsageError("no input files given");
    for (const auto& p : c.inputs)
        if (!fs::exists(p))
            throw UsageError("input file '" + p.string() + "' does not exist");
    if (c.grouping && !fs::exists(*c.grouping))
        throw UsageError("grouping file '" + c.grouping->string() + "' does not exist");

    const auto seeds = SeedLineage::from(c.seed);
    const StageCache cache(c.output_dir, c.force);
    std::vector<std::string> done;
    const std::string started = utc_timestamp();

    // preprocess
    const auto prep_key = fnv1a(preprocess_key(c, seeds));
    const auto prep_dir = cache.dir("preprocess", prep_key);
    const auto split_pair = detail::run_stage("preprocess", done, [&] {
        if (!cache.complete(prep_dir)) {
            std::vector<RawTable> tables;
            for (const auto& p : c.inputs)
                tables.push_back(load_csv(p, c.label_column));
            PreprocessOptions opt;
            opt.benign_name = c.benign_name;
            opt.drop_columns = c.drop_columns;
            if (c.grouping)
                opt.grouping = load_grouping(*c.grouping);
            opt.ratio = c.split_ratio;
            opt.seed = seeds.split;
            opt.stratified = c.stratified;
            opt.normalize_before_split = c.normalize_before_split;
            auto res = preprocess(concat_tables(tables), opt);
            save_split(prep_dir / "dataset.bin", res.split);
            detail::write_text(prep_dir / "preprocess_report.json", res.report.dump(2) + "\n");
            cache.mark(prep_dir);
        }
        return load_split(prep_dir / "dataset.bin");
    });
    done.push_back((prep_dir / "dataset.bin").string());
    const auto& train = split_pair.train;
    const auto& test = split_pair.test;

    // correlate
    const auto corr_key = fnv1a(c.binary ? "binary" : "categorical", prep_key);
    const auto corr_dir = cache.dir("correlate", corr_key);
    const auto corr = detail::run_stage("correlate", done, [&] {
        if (!cache.complete(corr_dir)) {
            export_heatmap(correlate(train, c.binary, c.threads), corr_dir / "correlation.csv");
            cache.mark(corr_dir);
        }
        return import_heatmap(corr_dir / "correlation.csv");
    });
    done.push_back((corr_dir / "correlation.csv").string());

    // importance forest on the full feature set, feeding IG sums and rf-ig
    const auto imp_key = fnv1a(forest_key(c.forest, seeds.importance_forest), corr_key);
    const auto imp_dir = cache.dir("importance", imp_key);
    const auto importances = detail::run_stage("importance", done, [&] {
        if (!cache.complete(imp_dir)) {
            auto cfg = c.forest;
            cfg.seed = seeds.importance_forest;
            cfg.threads = c.threads;
            const auto f = train_forest(train.features, train.targets(c.binary), train.target_names(c.binary).size(), cfg);
            write_importances(imp_dir / "importances.csv", f, train.feature_names);
            cache.mark(imp_dir);
        }
        return read_importances(imp_dir / "importances.csv", train.feature_names);
    });
    done.push_back((imp_dir / "importances.csv").string());

    // select
    const auto sel_key = fnv1a(search_key(c, seeds), c.method == Method::rf_ig ? imp_key : corr_key);
    const auto sel_dir = cache.dir("select", sel_key);
    json selection_info;
    const auto subset = detail::run_stage("select", done, [&] {
        if (!cache.complete(sel_dir)) {
            auto sel = select_features(c.method, corr, importances, c, seeds.search);
            write_subset(sel_dir / "subset.txt", sel.subset, train.feature_names, to_string(c.method), seeds.search);
            json info;
            info["seconds"] = sel.seconds;
            if (sel.search) {
                write_trace(sel_dir / "trace.csv", sel.search->merit_trace);
                info["evaluations"] = sel.search->evaluations;
                info["trace"] = (sel_dir / "trace.csv").string();
            }
            detail::write_text(sel_dir / "selection.json", info.dump(2) + "\n");
            cache.mark(sel_dir);
        }
        auto f = read_subset(sel_dir / "subset.txt", train.feature_names);
        auto in = io::open_in(sel_dir / "selection.json");
        selection_info = json::parse(in);
        return f.subset;
    });
    done.push_back((sel_dir / "subset.txt").string());
    const auto score = cfs_merit(corr, subset);
    const double ig = ig_sum(importances, subset);

    // train
    const auto train_sub = train.select_features(subset.indices());
    const auto test_sub = test.select_features(subset.indices());
    const auto mdl_key = fnv1a(model_key(c, seeds) + (c.binary ? "|bin" : "|cat"), sel_key ^ prep_key);
    const auto mdl_dir = cache.dir("train", mdl_key);
    const auto model = detail::run_stage("train", done, [&] {
        if (!cache.complete(mdl_dir)) {
            auto m = fit_model(train_sub, c.binary, c.model, c.forest, c.mlp, seeds.model, c.threads);
            save_model_file(mdl_dir / "model.bin", m);
            if (m.forest)
                write_importances(mdl_dir / "model_importances.csv", *m.forest, train_sub.feature_names);
            else
                nn::write_loss_trace(mdl_dir / "loss_trace.csv", *m.mlp);
            cache.mark(mdl_dir);
        }
        return load_model_file(mdl_dir / "model.bin");
    });
    done.push_back((mdl_dir / "model.bin").string());

    // evaluate
    const auto names = test.target_names(c.binary);
    ConfusionMatrix cm;
    const auto predicted = model.predict(test_sub.features, c.threads);
    const auto metrics = detail::run_stage("evaluate", done, [&] {
        return evaluate_labels(test.targets(c.binary), predicted, names, c.binary, c.averaging, &cm);
    });

    fs::create_directories(c.output_dir);
    write_confusion(c.output_dir / "confusion.csv", cm);

    RunRecord rec;
    auto& d = rec.data;
    d["methodology"] = methodology_label(c.method, c.binary);
    d["config"] = config_json(c, seeds);
    d["feature_universe"] = train.feature_names;
    std::vector<std::string> chosen;
    for (auto i : subset.indices())
        chosen.push_back(train.feature_names[i]);
    d["subset"] = {{"names", chosen}, {"k", subset.size()}, {"cfs", score.merit}, {"r_cf", score.r_cf},
                   {"r_ff", score.r_ff}, {"ig", ig}};
    d["selection_seconds"] = selection_info.value("seconds", 0.0);
    d["build_seconds"] = model.build_seconds();
    d["metrics"] = metrics_json(metrics);
    d["confusion"] = {{"class_names", cm.class_names}, {"counts", cm.counts}};
    if (!c.binary) {
        const auto bin = binary_metrics(collapse_to_binary(cm, c.benign_name));
        d["collapsed_binary_metrics"] = metrics_json(bin);
    }
    d["artifacts"] = {{"dataset", (prep_dir / "dataset.bin").string()},
                      {"preprocess_report", (prep_dir / "preprocess_report.json").string()},
                      {"correlation", (corr_dir / "correlation.csv").string()},
                      {"importances", (imp_dir / "importances.csv").string()},
                      {"subset", (sel_dir / "subset.txt").string()},
                      {"model", (mdl_dir / "model.bin").string()},
                      {"confusion", (c.output_dir / "confusion.csv").string()}};
    if (selection_info.contains("trace"))
        d["artifacts"]["trace"] = selection_info["trace"];
    d["timestamps"] = {{"started", started}, {"finished", utc_timestamp()}};

    detail::write_text(c.output_dir / "record.json", d.dump(2) + "\n");
    detail::write_text(c.output_dir / "report.csv", report_header() + "\n" + rec.report_row() + "\n");
    return rec;
}

inline RunRecord load_record(const fs::path& path)
{
    auto in = io::open_in(path);
    RunRecord r;
    try {
        r.data = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("'" + path.string() + "' is not a run record: " + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Comparison

struct Comparison
{
    std::string table;
    json overlap;
};

/// Results table over several runs plus pairwise and common subset overlaps;
/// for exactly three runs the seven Venn region counts as well.
inline Comparison compare(const std::vector<RunRecord>& records)
{
    if (records.size() < 2)
        throw UsageError("comparison needs at least two run records");
    const auto universe = records.front().data.at("feature_universe");
    for (const auto& r : records)
        if (r.data.at("feature_universe") != universe)
            throw DataError("run records were produced over different feature universes");

    Comparison out;
    out.table = report_header() + "\n";
    for (const auto& r : records)
        out.table += r.report_row() + "\n";

    std::vector<std::set<std::string>> sets;
    std::vector<std::string> labels;
    for (const auto& r : records) {
        const auto names = r.data.at("subset").at("names").get<std::vector<std::string>>();
        sets.emplace_back(names.begin(), names.end());
        labels.push_back(r.data.at("methodology").get<std::string>());
    }
    auto& ov = out.overlap;
    ov["methods"] = labels;
    ov["sizes"] = json::array();
    for (const auto& s : sets)
        ov["sizes"].push_back(s.size());
    ov["pairwise"] = json::array();
    for (std::size_t a = 0; a < sets.size(); ++a)
        for (std::size_t b = a + 1; b < sets.size(); ++b) {
            std::size_t n = 0;
            for (const auto& x : sets[a])
                n += sets[b].count(x);
            ov["pairwise"].push_back({{"a", labels[a]}, {"b", labels[b]}, {"intersection", n}});
        }
    std::vector<std::string> common;
    for (const auto& x : sets.front()) {
        bool all = true;
        for (std::size_t i = 1; i < sets.size() && all; ++i)
            all = sets[i].count(x) > 0;
        if (all)
            common.push_back(x);
    }
    ov["common_to_all"] = common;
    if (sets.size() == 3) {
        std::map<std::string, std::size_t> regions{{"only_a", 0},  {"only_b", 0},  {"only_c", 0}, {"ab_only", 0},
                                                   {"ac_only", 0}, {"bc_only", 0}, {"abc", 0}};
        std::set<std::string> all;
        for (const auto& s : sets)
            all.insert(s.begin(), s.end());
        for (const auto& x : all) {
            const bool a = sets[0].count(x), b = sets[1].count(x), c = sets[2].count(x);
            if (a && b && c)
                ++regions["abc"];
            else if (a && b)
                ++regions["ab_only"];
            else if (a && c)
                ++regions["ac_only"];
            else if (b && c)
                ++regions["bc_only"];
            else if (a)
                ++regions["only_a"];
            else if (b)
                ++regions["only_b"];
            else
                ++regions["only_c"];
        }
        ov["venn"] = {{"a", labels[0]}, {"b", labels[1]}, {"c", labels[2]}};
        for (const auto& [k, v] : regions)
            ov["venn"][k] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Depth sweep

struct DepthRow
{
    std::size_t depth = 0;
    std::optional<double> oob_accuracy;
    std::size_t oob_skipped = 0;
    double train_accuracy = 0.0;
    double build_seconds = 0.0;
    bool best = false;
};

/// One forest per depth; marks the depth with the highest OOB accuracy
/// (first one on ties).
inline std::vector<DepthRow> depth_sweep(const Dataset& train, bool binary, const std::vector<std::size_t>& depths,
                                         const ForestConfig& base)
{
    std::vector<DepthRow> rows;
    const auto y = train.targets(binary);
    const auto k = train.target_names(binary).size();
    for (auto d : depths) {
        auto cfg = base;
        cfg.max_depth = d;
        const auto f = train_forest(train.features, y, k, cfg);
        DepthRow r;
        r.depth = d;
        r.oob_accuracy = f.oob.accuracy;
        r.oob_skipped = f.oob.skipped;
        r.build_seconds = f.build_seconds;
        const auto pred = predict(f, train.features, cfg.threads);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            ok += pred[i] == y[i];
        r.train_accuracy = static_cast<double>(ok) / static_cast<double>(pred.size());
        rows.push_back(r);
    }
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].oob_accuracy && (!best || *rows[i].oob_accuracy > *rows[*best].oob_accuracy))
            best = i;
    if (best)
        rows[*best].best = true;
    return rows;
}

inline std::string depth_table(const std::vector<DepthRow>& rows)
{
    std::string s = "depth,oob_accuracy,oob_skipped,train_accuracy,build_seconds,best\n";
    for (const auto& r : rows) {
        s += std::to_string(r.depth) + "," + (r.oob_accuracy ? io::format_fixed(*r.oob_accuracy, 6) : "NA") + "," +
             std::to_string(r.oob_skipped) + "," + io::format_fixed(r.train_accuracy, 6) + "," +
             io::format_fixed(r.build_seconds, 3) + "," + (r.best ? "*" : "") + "\n";
    }
    return s;
}

} // namespace cfsids
