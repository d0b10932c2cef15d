// cfsids: feature selection and classification for flow-based intrusion
// detection. Each subcommand reads and writes plain files so the stages can
// be chained by hand; `run` executes the whole chain with stage caching.

#include "cfsids/pipeline.hpp"
#include "cfsids/synth.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace
{

using namespace cfsids;
namespace fs = std::filesystem;

void add_task_flags(CLI::App* app, bool& binary)
{
    app->add_flag("--binary,!--categorical", binary, "Benign-vs-attack task instead of the categorical one");
}

void add_forest_flags(CLI::App* app, ForestConfig& f)
{
    app->add_option("--trees", f.n_trees, "Number of trees")->capture_default_str();
    app->add_option("--max-depth", f.max_depth, "Maximum tree depth")->capture_default_str();
    app->add_option("--min-node-size", f.min_node_size, "Smallest node that may be split")->capture_default_str();
    app->add_option("--mtry", f.features_per_split, "Candidate features per split (default floor(sqrt(p)))");
    app->add_flag("!--no-bootstrap", f.bootstrap, "Grow every tree on all rows");
    app->add_option("--importance", f.importance, "Importance accumulation: weighted or unweighted")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, ImportanceMode>{{"weighted", ImportanceMode::weighted},
                                                  {"unweighted", ImportanceMode::unweighted}}));
}

void add_mlp_flags(CLI::App* app, nn::MlpConfig& m, std::string& preset)
{
    app->add_option("--preset", preset, "Hidden layers: 50-25 or 100-100-100")->capture_default_str();
    app->add_option("--hidden", m.hidden_sizes, "Explicit hidden layer sizes (overrides --preset)")->delimiter(',');
    app->add_option("--epochs", m.epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch", m.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--lr", m.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--optimizer", m.optimizer, "sgd or adam")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, nn::Optimizer>{{"sgd", nn::Optimizer::sgd}, {"adam", nn::Optimizer::adam}}));
}

void add_search_flags(CLI::App* app, BatConfig& bat, AquilaConfig& ao)
{
    app->add_option("--bats", bat.n, "Bat population size")->capture_default_str();
    app->add_option("--epochs-ba", bat.t_max, "Bat epochs")->capture_default_str();
    app->add_option("--alpha", bat.alpha, "Loudness decay")->capture_default_str();
    app->add_option("--gamma", bat.gamma, "Pulse-rate constant")->capture_default_str();
    app->add_option("--local-walk-scale", bat.local_walk_scale, "Width of the bat local walk")->capture_default_str();
    app->add_flag("--canonical-pulse", bat.canonical_pulse, "Use r0(1-exp(-gamma t)) for the pulse rate");
    app->add_option("--aquilas", ao.n, "Aquila population size")->capture_default_str();
    app->add_option("--epochs-ao", ao.t_max, "Aquila iterations")->capture_default_str();
}

/// Applies --preset unless explicit sizes were given.
void resolve_mlp(nn::MlpConfig& m, const std::string& preset, const CLI::App* app)
{
    if (app->count("--hidden") == 0)
        m.hidden_sizes = nn::MlpConfig::preset(preset).hidden_sizes;
}

std::vector<std::size_t> feature_indices(const Dataset& data, const std::optional<fs::path>& subset_path)
{
    const auto subset = subset_path ? read_subset(*subset_path, data.feature_names).subset
                                    : FeatureSubset::all(data.num_features());
    return {subset.indices().begin(), subset.indices().end()};
}

void write_json(const fs::path& path, const json& j)
{
    auto out = io::open_out(path);
    out << j.dump(2) << '\n';
}

void print_metrics(const MetricReport& m)
{
    auto show = [](const std::optional<double>& v) { return v ? io::format_fixed(*v, 6) : std::string("NA"); };
    std::cout << "accuracy  " << io::format_fixed(m.accuracy, 6) << '\n'
              << "precision " << show(m.precision) << '\n'
              << "recall    " << show(m.recall) << '\n'
              << "far       " << show(m.far) << '\n'
              << "f1        " << show(m.f1) << '\n';
}

int run(int argc, char** argv)
{
    CLI::App app{"Correlation-based feature selection and classifiers for network intrusion detection"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI file whose [section] names match subcommands");

    // synth
    SynthSpec sspec;
    fs::path synth_out;
    auto* synth = app.add_subcommand("synth", "Write a synthetic flow-like dataset with known informative features");
    synth->add_option("--out", synth_out, "Output CSV; ground truth goes to <stem>.truth.json")->required();
    synth->add_option("--informative", sspec.informative)->capture_default_str();
    synth->add_option("--noise", sspec.noise)->capture_default_str();
    synth->add_option("--rows", sspec.rows)->capture_default_str();
    synth->add_option("--classes", sspec.classes)->capture_default_str();
    synth->add_option("--separation", sspec.separation)->capture_default_str();
    synth->add_flag("!--no-artifacts", sspec.flow_artifacts, "Omit identifier, constant and NA/Infinity cells");
    synth->add_option("--seed", sspec.seed)->capture_default_str();

    // preprocess
    ExperimentConfig pcfg;
    fs::path prep_out;
    std::string grouping_path;
    auto* prep = app.add_subcommand("preprocess", "Clean, encode, split and normalise raw CSV files");
    prep->add_option("--input", pcfg.inputs, "Input CSV file(s)")->required()->check(CLI::ExistingFile);
    prep->add_option("--out", prep_out, "Binary dataset cache")->required();
    prep->add_option("--label", pcfg.label_column)->capture_default_str();
    prep->add_option("--benign", pcfg.benign_name)->capture_default_str();
    prep->add_option("--grouping", grouping_path, "CSV mapping raw labels to families")->check(CLI::ExistingFile);
    prep->add_option("--drop", pcfg.drop_columns, "Columns to drop (replaces the default list)");
    prep->add_option("--ratio", pcfg.split_ratio, "Training fraction")->capture_default_str();
    prep->add_flag("--stratified", pcfg.stratified, "Split each class separately");
    prep->add_flag("--normalize-before-split", pcfg.normalize_before_split,
                   "Fit min-max ranges on all rows instead of the training split");
    prep->add_option("--seed", pcfg.seed)->capture_default_str();

    // correlate
    fs::path corr_data, corr_out;
    bool corr_binary = false;
    std::size_t corr_threads = 1;
    auto* corr = app.add_subcommand("correlate", "Spearman correlation of features and class indicators");
    corr->add_option("--data", corr_data, "Dataset cache from preprocess")->required()->check(CLI::ExistingFile);
    corr->add_option("--out", corr_out, "Heatmap CSV (a .meta.json sidecar is written next to it)")->required();
    add_task_flags(corr, corr_binary);
    corr->add_option("--threads", corr_threads)->capture_default_str();

    // select
    ExperimentConfig scfg;
    std::string sel_method = "full";
    fs::path sel_data, sel_out;
    std::optional<fs::path> sel_corr, sel_imp, sel_trace;
    auto* sel = app.add_subcommand("select", "Choose a feature subset");
    sel->add_option("--data", sel_data, "Dataset cache from preprocess")->required()->check(CLI::ExistingFile);
    sel->add_option("--out", sel_out, "Subset file")->required();
    sel->add_option("--method", sel_method, "full, ba, ao, rf-ig or brute")
        ->check(CLI::IsMember({"full", "ba", "ao", "rf-ig", "brute"}))
        ->capture_default_str();
    sel->add_option("--k", scfg.k, "Subset size for rf-ig");
    sel->add_option("--corr", sel_corr, "Correlation heatmap (computed when absent)");
    sel->add_option("--importances", sel_imp, "Importance CSV (computed with a forest when absent)");
    sel->add_option("--trace", sel_trace, "Write the best-merit trace of ba, ao or brute");
    add_task_flags(sel, scfg.binary);
    add_search_flags(sel, scfg.bat, scfg.aquila);
    add_forest_flags(sel, scfg.forest);
    sel->add_option("--seed", scfg.seed)->capture_default_str();
    sel->add_option("--threads", scfg.threads)->capture_default_str();

    // train
    ExperimentConfig tcfg;
    std::string tmodel = "rf", tpreset = "50-25";
    fs::path tr_data, tr_out;
    std::optional<fs::path> tr_subset;
    auto* tr = app.add_subcommand("train", "Fit a classifier on the training split");
    tr->add_option("--data", tr_data, "Dataset cache from preprocess")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Model file")->required();
    tr->add_option("--subset", tr_subset, "Subset file (all features when absent)");
    tr->add_option("--model", tmodel, "rf or mlp")->check(CLI::IsMember({"rf", "mlp"}))->capture_default_str();
    add_task_flags(tr, tcfg.binary);
    add_forest_flags(tr, tcfg.forest);
    add_mlp_flags(tr, tcfg.mlp, tpreset);
    tr->add_option("--seed", tcfg.seed)->capture_default_str();
    tr->add_option("--threads", tcfg.threads)->capture_default_str();

    // evaluate
    fs::path ev_data, ev_model;
    std::optional<fs::path> ev_subset, ev_out;
    bool ev_binary = false;
    std::string ev_avg = "macro";
    std::string ev_benign = "Benign";
    std::size_t ev_threads = 1;
    auto* ev = app.add_subcommand("evaluate", "Score a model on the test split");
    ev->add_option("--data", ev_data, "Dataset cache from preprocess")->required()->check(CLI::ExistingFile);
    ev->add_option("--model", ev_model, "Model file from train")->required()->check(CLI::ExistingFile);
    ev->add_option("--subset", ev_subset, "Subset file used for training");
    ev->add_option("--out", ev_out, "Directory for metrics.json and confusion.csv");
    add_task_flags(ev, ev_binary);
    ev->add_option("--averaging", ev_avg, "micro, macro or weighted")
        ->check(CLI::IsMember({"micro", "macro", "weighted"}))
        ->capture_default_str();
    ev->add_option("--threads", ev_threads)->capture_default_str();

    // report
    std::vector<fs::path> rep_records;
    std::optional<fs::path> rep_out, rep_overlap;
    auto* rep = app.add_subcommand("report", "Results table and subset overlaps over run records");
    rep->add_option("records", rep_records, "record.json files written by run")->required()->check(CLI::ExistingFile);
    rep->add_option("--out", rep_out, "Write the table here instead of stdout");
    rep->add_option("--overlap", rep_overlap, "Write the overlap report (JSON)");

    // sweep-depth
    fs::path sw_data;
    std::vector<std::size_t> sw_depths{2, 5, 10, 20, 40, 100, 200};
    ForestConfig sw_forest;
    bool sw_binary = false;
    std::uint64_t sw_seed = 0;
    std::optional<fs::path> sw_out;
    auto* sw = app.add_subcommand("sweep-depth", "Out-of-bag accuracy for a range of tree depths");
    sw->add_option("--data", sw_data, "Dataset cache from preprocess")->required()->check(CLI::ExistingFile);
    sw->add_option("--depths", sw_depths)->delimiter(',')->capture_default_str();
    sw->add_option("--out", sw_out, "Write the table here instead of stdout");
    add_task_flags(sw, sw_binary);
    add_forest_flags(sw, sw_forest);
    sw->add_option("--seed", sw_seed)->capture_default_str();
    sw->add_option("--threads", sw_forest.threads)->capture_default_str();

    // run
    ExperimentConfig rcfg;
    std::string run_method = "full";
    std::string rmodel = "rf", rpreset = "50-25", ravg = "macro", rgrouping;
    auto* rn = app.add_subcommand("run", "Whole pipeline with cached stages");
    rn->add_option("--input", rcfg.inputs, "Input CSV file(s)")->required();
    rn->add_option("--out", rcfg.output_dir, "Output directory")->capture_default_str();
    rn->add_option("--label", rcfg.label_column)->capture_default_str();
    rn->add_option("--benign", rcfg.benign_name)->capture_default_str();
    rn->add_option("--grouping", rgrouping, "CSV mapping raw labels to families");
    rn->add_option("--drop", rcfg.drop_columns, "Columns to drop (replaces the default list)");
    rn->add_option("--ratio", rcfg.split_ratio)->capture_default_str();
    rn->add_flag("--stratified", rcfg.stratified);
    rn->add_flag("--normalize-before-split", rcfg.normalize_before_split);
    rn->add_option("--method", run_method)->check(CLI::IsMember({"full", "ba", "ao", "rf-ig", "brute"}))->capture_default_str();
    rn->add_option("--k", rcfg.k, "Subset size for rf-ig");
    rn->add_option("--model", rmodel)->check(CLI::IsMember({"rf", "mlp"}))->capture_default_str();
    rn->add_option("--averaging", ravg)->check(CLI::IsMember({"micro", "macro", "weighted"}))->capture_default_str();
    add_task_flags(rn, rcfg.binary);
    add_search_flags(rn, rcfg.bat, rcfg.aquila);
    add_forest_flags(rn, rcfg.forest);
    add_mlp_flags(rn, rcfg.mlp, rpreset);
    rn->add_option("--seed", rcfg.seed)->capture_default_str();
    rn->add_option("--threads", rcfg.threads)->capture_default_str();
    rn->add_flag("--force", rcfg.force, "Recompute cached stages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    if (*synth) {
        const auto fx = synth_fixture(sspec);
        write_synth(fx, sspec, synth_out);
        std::cout << "wrote " << synth_out.string() << " (" << fx.rows.size() << " rows, informative:";
        for (const auto& n : fx.informative_names)
            std::cout << ' ' << n;
        std::cout << ")\n";
    } else if (*prep) {
        const auto seeds = SeedLineage::from(pcfg.seed);
        std::vector<RawTable> tables;
        for (const auto& p : pcfg.inputs)
            tables.push_back(load_csv(p, pcfg.label_column));
        PreprocessOptions opt;
        opt.benign_name = pcfg.benign_name;
        opt.drop_columns = pcfg.drop_columns;
        if (!grouping_path.empty())
            opt.grouping = load_grouping(grouping_path);
        opt.ratio = pcfg.split_ratio;
        opt.seed = seeds.split;
        opt.stratified = pcfg.stratified;
        opt.normalize_before_split = pcfg.normalize_before_split;
        const auto res = preprocess(concat_tables(tables), opt);
        save_split(prep_out, res.split);
        write_json(fs::path(prep_out).replace_extension(".report.json"), res.report);
        for (const auto& w : res.split.warnings)
            std::cerr << "warning: " << w << '\n';
        std::cout << "train " << res.split.train.rows() << " rows, test " << res.split.test.rows() << " rows, "
                  << res.split.train.num_features() << " features, " << res.split.train.num_classes() << " classes\n";
    } else if (*corr) {
        const auto data = load_split(corr_data);
        const auto m = correlate(data.train, corr_binary, corr_threads);
        export_heatmap(m, corr_out);
        std::cout << "full-set CFS merit " << io::format_fixed(cfs_merit(m, FeatureSubset::all(m.num_features())).merit, 6)
                  << '\n';
    } else if (*sel) {
        scfg.method = parse_method(sel_method);
        const auto seeds = SeedLineage::from(scfg.seed);
        const auto data = load_split(sel_data);
        const auto& train = data.train;
        const auto cm = sel_corr ? import_heatmap(*sel_corr) : correlate(train, scfg.binary, scfg.threads);
        if (cm.names.size() < cm.class_boundary ||
            !std::equal(train.feature_names.begin(), train.feature_names.end(), cm.names.begin()))
            throw DataError("correlation heatmap does not match the dataset features");
        std::vector<double> imp;
        if (sel_imp) {
            imp = read_importances(*sel_imp, train.feature_names);
        } else {
            auto f = scfg.forest;
            f.seed = seeds.importance_forest;
            f.threads = scfg.threads;
            imp = train_forest(train.features, train.targets(scfg.binary), train.target_names(scfg.binary).size(), f)
                      .importances;
        }
        const auto out = select_features(scfg.method, cm, imp, scfg, seeds.search);
        write_subset(sel_out, out.subset, train.feature_names, sel_method, seeds.search);
        if (sel_trace && out.search)
            write_trace(*sel_trace, out.search->merit_trace);
        std::cout << "k " << out.subset.size() << ", merit " << io::format_fixed(out.subset.cfs->merit, 6) << ", ig "
                  << io::format_fixed(*out.subset.ig_sum, 6) << ", " << io::format_fixed(out.seconds, 3) << " s\n";
    } else if (*tr) {
        tcfg.model = parse_model(tmodel);
        resolve_mlp(tcfg.mlp, tpreset, tr);
        const auto seeds = SeedLineage::from(tcfg.seed);
        const auto data = load_split(tr_data);
        const auto train = data.train.select_features(feature_indices(data.train, tr_subset));
        const auto m = fit_model(train, tcfg.binary, tcfg.model, tcfg.forest, tcfg.mlp, seeds.model, tcfg.threads);
        save_model_file(tr_out, m);
        std::cout << "built " << to_string(tcfg.model) << " in " << io::format_fixed(m.build_seconds(), 3) << " s";
        if (m.forest && m.forest->oob.accuracy)
            std::cout << ", OOB accuracy " << io::format_fixed(*m.forest->oob.accuracy, 6);
        std::cout << '\n';
    } else if (*ev) {
        const auto data = load_split(ev_data);
        const auto test = data.test.select_features(feature_indices(data.test, ev_subset));
        const auto model = load_model_file(ev_model);
        const auto want = test.target_names(ev_binary).size();
        const auto have = model.forest ? model.forest->num_classes : model.mlp->num_classes;
        if (want != have)
            throw UsageError("model was trained for " + std::to_string(have) + " classes, the " +
                             (ev_binary ? "binary" : "categorical") + " task has " + std::to_string(want));
        ConfusionMatrix cm;
        const auto predicted = model.predict(test.features, ev_threads);
        const auto m = evaluate_labels(test.targets(ev_binary), predicted, test.target_names(ev_binary), ev_binary,
                                       parse_averaging(ev_avg), &cm);
        print_metrics(m);
        if (ev_out) {
            json j;
            j["metrics"] = metrics_json(m);
            if (!ev_binary)
                j["collapsed_binary_metrics"] = metrics_json(binary_metrics(collapse_to_binary(cm, data.test.benign_name)));
            j["build_seconds"] = model.build_seconds();
            write_json(*ev_out / "metrics.json", j);
            write_confusion(*ev_out / "confusion.csv", cm);
        }
    } else if (*rep) {
        std::vector<RunRecord> records;
        for (const auto& p : rep_records)
            records.push_back(load_record(p));
        std::string table;
        json overlap;
        if (records.size() == 1) {
            table = report_header() + "\n" + records.front().report_row() + "\n";
        } else {
            auto c = compare(records);
            table = std::move(c.table);
            overlap = std::move(c.overlap);
        }
        if (rep_out) {
            auto out = io::open_out(*rep_out);
            out << table;
        } else {
            std::cout << table;
        }
        if (rep_overlap) {
            if (overlap.is_null())
                throw UsageError("overlap report needs at least two records");
            write_json(*rep_overlap, overlap);
        }
    } else if (*sw) {
        const auto data = load_split(sw_data);
        sw_forest.seed = SeedLineage::from(sw_seed).model;
        const auto table = depth_table(depth_sweep(data.train, sw_binary, sw_depths, sw_forest));
        if (sw_out) {
            auto out = io::open_out(*sw_out);
            out << table;
        } else {
            std::cout << table;
        }
    } else if (*rn) {
        rcfg.method = parse_method(run_method);
        rcfg.model = parse_model(rmodel);
        rcfg.averaging = parse_averaging(ravg);
        if (!rgrouping.empty())
            rcfg.grouping = rgrouping;
        resolve_mlp(rcfg.mlp, rpreset, rn);
        const auto rec = run_pipeline(rcfg);
        std::cout << report_header() << '\n' << rec.report_row() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const cfsids::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::bad_alloc&) {
        std::cerr << "error: out of memory\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
