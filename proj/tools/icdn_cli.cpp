#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"
#include "icdn/kv_config.hpp"
#include "icdn/manifest.hpp"
#include "icdn/model.hpp"
#include "icdn/panel.hpp"
#include "icdn/pipeline.hpp"
#include "icdn/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace icdn;

namespace {

bool verbose() {
    const char* v = std::getenv("ICDN_LOG");
    return v && std::string(v) != "0" && std::string(v) != "";
}

void log(const std::string& msg) {
    if (verbose()) std::cerr << "[icdn] " << msg << '\n';
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return in;
}

// Write through a temp file so a failed run never leaves a half-written artifact.
template <class F>
void write_file(const std::string& path, F&& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + path + "'");
        body(out);
        out.flush();
        if (!out) throw Error("write failed for '" + path + "'");
    }
    fs::rename(tmp, path);
}

std::string feature_path(const std::string& data) {
    return fs::is_directory(data) ? (fs::path(data) / "feature_panel.csv").string() : data;
}

std::string raw_path(const std::string& input) {
    return fs::is_directory(input) ? (fs::path(input) / "raw_panel.csv").string() : input;
}

std::vector<panel::FeatureRow> load_features(const std::string& data, manifest::RunManifest& m) {
    const auto path = feature_path(data);
    auto in = open_in(path);
    m.add_input(path);
    return panel::read_feature_panel(in);
}

pipeline::RunConfig load_config(const std::string& path, manifest::RunManifest& m) {
    if (path.empty()) return {};
    m.config_path = path;
    m.config_hash = manifest::sha256_file(path);
    return pipeline::load_run_config(KeyValueConfig::load(path));
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("no seeds given");
    return out;
}

void finish(manifest::RunManifest& m, const std::string& path) {
    m.finished_utc = manifest::utc_now();
    manifest::write_manifest(m, path);
}

std::string manifest_for(const std::string& artifact) { return artifact + ".manifest.json"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-conditioned demand surfaces and analytic price elasticities"};
    app.require_subcommand(1);
    manifest::RunManifest m;
    m.started_utc = manifest::utc_now();

    std::string input, out = ".", config, data, ckpt, log_path, icdn_path, bench_path, icdn_metrics, bench_metrics;
    std::uint64_t seed = 0;
    std::optional<int> stats_last_week;
    int folds = evaluation::kDefaultFolds, reps = evaluation::kDefaultBootstrapReps,
        block_len = evaluation::kDefaultBlockLength, points = 32;
    std::string seeds_text = "0";

    auto* pre = app.add_subcommand("preprocess", "raw panel -> cleaned and feature panels");
    pre->add_option("--input", input, "raw panel CSV or directory holding raw_panel.csv")->required();
    pre->add_option("--out", out, "output directory")->required();
    pre->add_option("--config", config, "key-value config (filter keys)");
    pre->add_option("--stats-last-week", stats_last_week, "last week used for assortment statistics");

    auto* syn = app.add_subcommand("synth", "constant-elasticity synthetic panel");
    syn->add_option("--config", config, "synthetic panel config")->required();
    syn->add_option("--seed", seed, "random seed")->required();
    syn->add_option("--out", out, "output directory");

    auto* tr = app.add_subcommand("train", "two-phase training to a checkpoint");
    tr->add_option("--config", config, "key-value config");
    tr->add_option("--data", data, "feature panel CSV or preprocess output directory")->required();
    tr->add_option("--seed", seed, "random seed");
    tr->add_option("--out", ckpt, "checkpoint path")->required();
    tr->add_option("--log", log_path, "epoch log (JSON lines); default <out>.log.jsonl");

    auto* ev = app.add_subcommand("evaluate", "expanding-window folds, seeds and bootstrap");
    ev->add_option("--config", config, "key-value config");
    ev->add_option("--data", data, "feature panel")->required();
    ev->add_option("--folds", folds, "number of folds");
    ev->add_option("--seeds", seeds_text, "comma-separated training seeds");
    ev->add_option("--bootstrap-reps", reps, "bootstrap replicates");
    ev->add_option("--block-len", block_len, "bootstrap block length in weeks");
    ev->add_option("--seed", seed, "bootstrap seed");
    ev->add_option("--out", out, "output directory")->required();

    auto* el = app.add_subcommand("elasticity", "elasticity records from a checkpoint");
    el->add_option("--ckpt", ckpt, "checkpoint")->required();
    el->add_option("--data", data, "feature panel")->required();
    el->add_option("--out", out, "records CSV")->required();

    auto* be = app.add_subcommand("benchmark", "pairwise log-log OLS with HC1 errors");
    be->add_option("--data", data, "feature panel")->required();
    be->add_option("--folds", folds, "number of folds");
    be->add_option("--bootstrap-reps", reps, "bootstrap replicates");
    be->add_option("--block-len", block_len, "bootstrap block length in weeks");
    be->add_option("--seed", seed, "bootstrap seed");
    be->add_option("--ckpt", ckpt, "restrict pairs to a checkpoint's frozen graph");
    be->add_option("--out", out, "output directory")->required();

    auto* cmp = app.add_subcommand("compare", "stability and coverage diagnostics");
    cmp->add_option("--icdn", icdn_path, "ICDN records CSV")->required();
    cmp->add_option("--benchmark", bench_path, "benchmark records CSV")->required();
    cmp->add_option("--icdn-metrics", icdn_metrics, "ICDN per-series metrics CSV");
    cmp->add_option("--benchmark-metrics", bench_metrics, "benchmark per-series metrics CSV");
    cmp->add_option("--out", out, "diagnostics JSON")->required();

    auto* ve = app.add_subcommand("verify", "closure, finite-difference and path checks");
    ve->add_option("--ckpt", ckpt, "checkpoint")->required();
    ve->add_option("--points", points, "random interior points");
    ve->add_option("--data", data, "feature panel for contexts");
    ve->add_option("--seed", seed, "random seed");
    ve->add_option("--out", out, "output JSON (stdout when absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (e.get_exit_code() == 0) return 0;
        if (!app.get_subcommands().empty()) std::cerr << app.get_subcommands().front()->help();
        (void)code;
        return 1;
    }

    try {
        auto* sub = app.get_subcommands().front();
        m.command = sub->get_name();
        for (const auto* opt : sub->get_options()) {
            if (opt->count() == 0 || opt->get_name() == "--help") continue;
            m.flags[opt->get_name()] = opt->as<std::string>();
        }
        m.seed = seed;

        if (sub == pre) {
            const auto cfg = load_config(config, m).filter;
            const auto path = raw_path(input);
            auto in = open_in(path);
            m.add_input(path);
            const auto res = pipeline::preprocess(panel::read_panel(in), cfg, stats_last_week);
            if (res.filter.empty_warning) std::cerr << "warning: no series survived the filters\n";
            fs::create_directories(out);
            const auto cleaned = (fs::path(out) / "cleaned_panel.csv").string();
            const auto feat = (fs::path(out) / "feature_panel.csv").string();
            const auto report = (fs::path(out) / "preprocess_report.json").string();
            write_file(cleaned, [&](std::ostream& o) { panel::write_panel_rows(o, res.cleaned); });
            write_file(feat, [&](std::ostream& o) { panel::write_feature_panel(o, res.features); });
            write_file(report, [&](std::ostream& o) { o << pipeline::preprocess_report_json(res) << '\n'; });
            for (const auto& p : {cleaned, feat, report}) m.add_output(p);
            finish(m, (fs::path(out) / "preprocess.manifest.json").string());
        } else if (sub == syn) {
            m.config_path = config;
            m.config_hash = manifest::sha256_file(config);
            const auto cfg = pipeline::load_synth_config(KeyValueConfig::load(config), seed);
            const auto res = panel::generate_synthetic_panel(cfg);
            fs::create_directories(out);
            const auto panel_path = (fs::path(out) / "raw_panel.csv").string();
            const auto truth_path = (fs::path(out) / "ground_truth.json").string();
            write_file(panel_path, [&](std::ostream& o) { panel::write_raw_panel(o, res.raw); });
            write_file(truth_path, [&](std::ostream& o) { o << pipeline::ground_truth_json(res.truth) << '\n'; });
            m.add_output(panel_path);
            m.add_output(truth_path);
            finish(m, (fs::path(out) / "synth.manifest.json").string());
        } else if (sub == tr) {
            auto cfg = load_config(config, m);
            cfg.train.seed = seed;
            const auto wide = pipeline::build_wide(load_features(data, m));
            if (log_path.empty()) log_path = ckpt + ".log.jsonl";
            std::ofstream logf(log_path, std::ios::binary | std::ios::trunc);
            if (!logf) throw Error("cannot write '" + log_path + "'");
            const auto res = training::train_model(wide.universe, wide.instances, cfg.model, cfg.train, cfg.loss,
                                                   [&](const training::EpochLog& e) {
                                                       const auto line = training::to_json_line(e);
                                                       logf << line << '\n';
                                                       log(line);
                                                   });
            logf.close();
            model::save_checkpoint(res.state, ckpt);
            m.add_output(ckpt);
            m.add_output(log_path);
            finish(m, manifest_for(ckpt));
        } else if (sub == ev) {
            const auto cfg = load_config(config, m);
            const auto wide = pipeline::build_wide(load_features(data, m));
            pipeline::EvaluateOptions opts;
            opts.folds = folds;
            opts.seeds = parse_seeds(seeds_text);
            opts.bootstrap_reps = reps;
            opts.block_len = block_len;
            opts.bootstrap_seed = seed;
            opts.beta_eda = cfg.train.beta_eda;
            const auto res = pipeline::evaluate_icdn(wide, cfg, opts);
            fs::create_directories(out);
            const auto summary = (fs::path(out) / "evaluation.json").string();
            const auto records = (fs::path(out) / "icdn_elasticities.csv").string();
            const auto metrics = (fs::path(out) / "icdn_metrics.csv").string();
            write_file(summary, [&](std::ostream& o) { o << pipeline::evaluation_json(res) << '\n'; });
            write_file(records, [&](std::ostream& o) { evaluation::write_records_csv(o, res.records); });
            write_file(metrics, [&](std::ostream& o) { pipeline::write_metrics_csv(o, res.metrics); });
            for (const auto& p : {summary, records, metrics}) m.add_output(p);
            finish(m, (fs::path(out) / "evaluate.manifest.json").string());
        } else if (sub == el) {
            const auto st = model::load_checkpoint(ckpt);
            m.add_input(ckpt);
            const auto wide = pipeline::build_wide(load_features(data, m));
            if (wide.universe.products.size() != st.universe.products.size())
                throw Error("data product universe does not match the checkpoint");
            for (std::size_t i = 0; i < wide.universe.products.size(); ++i)
                if (wide.universe.products[i].upc_code != st.universe.products[i].upc_code)
                    throw Error("data product universe does not match the checkpoint");
            const auto recs = evaluation::extract_elasticities(st, wide.instances);
            write_file(out, [&](std::ostream& o) { evaluation::write_records_csv(o, recs); });
            m.add_output(out);
            finish(m, manifest_for(out));
        } else if (sub == be) {
            pipeline::BenchmarkOptions opts;
            opts.folds = folds;
            opts.bootstrap_reps = reps;
            opts.block_len = block_len;
            opts.seed = seed;
            std::vector<std::pair<std::string, std::string>> pairs;
            if (!ckpt.empty()) {
                pairs = pipeline::frozen_pairs(model::load_checkpoint(ckpt));
                m.add_input(ckpt);
                opts.pairs = &pairs;
            }
            const auto run = pipeline::run_benchmark(load_features(data, m), opts);
            fs::create_directories(out);
            const auto fits = (fs::path(out) / "benchmark_fits.csv").string();
            const auto records = (fs::path(out) / "benchmark_elasticities.csv").string();
            const auto metrics = (fs::path(out) / "benchmark_metrics.csv").string();
            write_file(fits, [&](std::ostream& o) {
                bool header = true;
                for (const auto& [fold, outcomes] : run.folds) {
                    evaluation::write_benchmark_csv(o, outcomes, fold, header);
                    header = false;
                }
            });
            write_file(records, [&](std::ostream& o) { evaluation::write_records_csv(o, run.records); });
            write_file(metrics, [&](std::ostream& o) { pipeline::write_metrics_csv(o, run.metrics); });
            for (const auto& p : {fits, records, metrics}) m.add_output(p);
            finish(m, (fs::path(out) / "benchmark.manifest.json").string());
        } else if (sub == cmp) {
            auto a = open_in(icdn_path);
            auto b = open_in(bench_path);
            m.add_input(icdn_path);
            m.add_input(bench_path);
            const auto ra = evaluation::read_records_csv(a), rb = evaluation::read_records_csv(b);
            std::vector<evaluation::PairedSample> paired;
            if (!icdn_metrics.empty() && !bench_metrics.empty()) {
                auto ma = open_in(icdn_metrics);
                auto mb = open_in(bench_metrics);
                m.add_input(icdn_metrics);
                m.add_input(bench_metrics);
                paired = pipeline::pair_metrics(pipeline::read_metrics_csv(ma), pipeline::read_metrics_csv(mb));
            }
            const auto report = evaluation::stability_diagnostics(ra, rb, paired);
            write_file(out, [&](std::ostream& o) { o << evaluation::to_json(report) << '\n'; });
            m.add_output(out);
            finish(m, manifest_for(out));
        } else if (sub == ve) {
            const auto st = model::load_checkpoint(ckpt);
            m.add_input(ckpt);
            std::vector<panel::WideInstance> contexts;
            if (!data.empty()) contexts = pipeline::build_wide(load_features(data, m)).instances;
            const auto rep = pipeline::verify_surface(st, data.empty() ? nullptr : &contexts, points, seed);
            const auto text = pipeline::verify_json(rep);
            std::cout << text << '\n';
            if (ve->count("--out")) {
                write_file(out, [&](std::ostream& o) { o << text << '\n'; });
                m.add_output(out);
                finish(m, manifest_for(out));
            } else {
                finish(m, manifest_for(ckpt) + ".verify");
            }
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
