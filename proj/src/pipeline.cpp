#include "icdn/pipeline.hpp"

#include "icdn/csv.hpp"
#include "icdn/error.hpp"
#include "icdn/field.hpp"
#include "icdn/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace icdn::pipeline {

using nlohmann::json;

// --- config -------------------------------------------------------------------

namespace {

std::vector<double> parse_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        try {
            std::size_t used = 0;
            const std::string tok = item.substr(b, e - b + 1);
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': cannot parse list item '" + item + "'");
        }
    }
    return out;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = {
        // model
        "basis_count", "hidden", "dropout", "attention_dim", "neighbors", "category_priority", "embedding_dim",
        "bonus_brand", "bonus_style", "bonus_size",
        // training
        "batch_size", "lr_phase0", "lr_phase1", "weight_decay", "clip_norm", "adam_beta1", "adam_beta2", "adam_eps",
        "plateau_factor", "plateau_patience", "epochs_phase0", "epochs_phase1", "early_stop_patience", "beta_eda",
        "smoothing_window", "val_fraction",
        // loss
        "huber_delta", "lambda_smooth", "lambda_elast", "own_band_lo", "own_band_hi", "cross_band_lo", "cross_band_hi",
        // filters
        "min_price", "min_store_weeks", "min_series_weeks", "min_coverage", "min_distinct_prices", "min_price_changes",
        "min_logprice_range", "max_promo_corr", "max_promo_switch_share", "iqr_multiplier"};
    return keys;
}

RunConfig load_run_config(const KeyValueConfig& kv) {
    kv.require_known(run_config_keys());
    RunConfig c;
    auto& m = c.model;
    m.basis_count = static_cast<int>(kv.get_int("basis_count", m.basis_count));
    if (auto h = kv.get("hidden")) {
        m.hidden.clear();
        for (double v : parse_list(*h, "hidden")) m.hidden.push_back(static_cast<int>(v));
    }
    m.dropout = kv.get_double("dropout", m.dropout);
    m.attention_dim = static_cast<int>(kv.get_int("attention_dim", m.attention_dim));
    m.neighbors = static_cast<int>(kv.get_int("neighbors", m.neighbors));
    m.category_priority = kv.get_bool("category_priority", m.category_priority);
    m.embedding_dim = static_cast<int>(kv.get_int("embedding_dim", m.embedding_dim));
    m.bonus_brand = kv.get_double("bonus_brand", m.bonus_brand);
    m.bonus_style = kv.get_double("bonus_style", m.bonus_style);
    m.bonus_size = kv.get_double("bonus_size", m.bonus_size);
    m.validate();

    auto& t = c.train;
    t.batch_size = static_cast<int>(kv.get_int("batch_size", t.batch_size));
    t.lr_phase0 = kv.get_double("lr_phase0", t.lr_phase0);
    t.lr_phase1 = kv.get_double("lr_phase1", t.lr_phase1);
    t.weight_decay = kv.get_double("weight_decay", t.weight_decay);
    t.clip_norm = kv.get_double("clip_norm", t.clip_norm);
    t.adam_beta1 = kv.get_double("adam_beta1", t.adam_beta1);
    t.adam_beta2 = kv.get_double("adam_beta2", t.adam_beta2);
    t.adam_eps = kv.get_double("adam_eps", t.adam_eps);
    t.plateau_factor = kv.get_double("plateau_factor", t.plateau_factor);
    t.plateau_patience = static_cast<int>(kv.get_int("plateau_patience", t.plateau_patience));
    t.epochs_phase0 = static_cast<int>(kv.get_int("epochs_phase0", t.epochs_phase0));
    t.epochs_phase1 = static_cast<int>(kv.get_int("epochs_phase1", t.epochs_phase1));
    t.early_stop_patience = static_cast<int>(kv.get_int("early_stop_patience", t.early_stop_patience));
    t.beta_eda = kv.get_double("beta_eda", t.beta_eda);
    t.smoothing_window = static_cast<int>(kv.get_int("smoothing_window", t.smoothing_window));
    t.val_fraction = kv.get_double("val_fraction", t.val_fraction);
    t.validate();

    auto& l = c.loss;
    l.delta = kv.get_double("huber_delta", l.delta);
    l.lambda_smooth = kv.get_double("lambda_smooth", l.lambda_smooth);
    l.lambda_elast = kv.get_double("lambda_elast", l.lambda_elast);
    l.own_lo = kv.get_double("own_band_lo", l.own_lo);
    l.own_hi = kv.get_double("own_band_hi", l.own_hi);
    l.cross_lo = kv.get_double("cross_band_lo", l.cross_lo);
    l.cross_hi = kv.get_double("cross_band_hi", l.cross_hi);
    l.validate();

    auto& f = c.filter;
    f.min_price = kv.get_double("min_price", f.min_price);
    f.min_store_weeks = static_cast<int>(kv.get_int("min_store_weeks", f.min_store_weeks));
    f.min_series_weeks = static_cast<int>(kv.get_int("min_series_weeks", f.min_series_weeks));
    f.min_coverage = kv.get_double("min_coverage", f.min_coverage);
    f.min_distinct_prices = static_cast<int>(kv.get_int("min_distinct_prices", f.min_distinct_prices));
    f.min_price_changes = static_cast<int>(kv.get_int("min_price_changes", f.min_price_changes));
    f.min_logprice_range = kv.get_double("min_logprice_range", f.min_logprice_range);
    f.max_promo_corr = kv.get_double("max_promo_corr", f.max_promo_corr);
    f.max_promo_switch_share = kv.get_double("max_promo_switch_share", f.max_promo_switch_share);
    f.iqr_multiplier = kv.get_double("iqr_multiplier", f.iqr_multiplier);
    f.validate();
    return c;
}

const std::vector<std::string>& synth_config_keys() {
    static const std::vector<std::string> keys = {
        "n_products", "n_stores",   "n_weeks",     "first_week", "walk_scale", "walk_bound",
        "promo_prob", "promo_discount", "noise_sd", "missing_prob", "n_categories", "own",
        "cross",      "base_price", "base_demand", "own_min",    "own_max",    "cross_max"};
    return keys;
}

panel::SynthConfig load_synth_config(const KeyValueConfig& kv, std::uint64_t seed) {
    kv.require_known(synth_config_keys());
    panel::SynthConfig c;
    c.seed = seed;
    c.n_products = static_cast<int>(kv.get_int("n_products", c.n_products));
    c.n_stores = static_cast<int>(kv.get_int("n_stores", c.n_stores));
    c.n_weeks = static_cast<int>(kv.get_int("n_weeks", c.n_weeks));
    c.first_week = static_cast<int>(kv.get_int("first_week", c.first_week));
    c.walk_scale = kv.get_double("walk_scale", c.walk_scale);
    c.walk_bound = kv.get_double("walk_bound", c.walk_bound);
    c.promo_prob = kv.get_double("promo_prob", c.promo_prob);
    c.promo_discount = kv.get_double("promo_discount", c.promo_discount);
    c.noise_sd = kv.get_double("noise_sd", c.noise_sd);
    c.missing_prob = kv.get_double("missing_prob", c.missing_prob);
    c.n_categories = static_cast<int>(kv.get_int("n_categories", c.n_categories));
    if (auto v = kv.get("own")) c.own = parse_list(*v, "own");
    if (auto v = kv.get("base_price")) c.base_price = parse_list(*v, "base_price");
    if (auto v = kv.get("base_demand")) c.base_demand = parse_list(*v, "base_demand");
    if (auto v = kv.get("cross")) {
        const auto flat = parse_list(*v, "cross");
        const auto n = static_cast<std::size_t>(c.n_products);
        if (flat.size() != n * n) throw ConfigError("cross must list n_products^2 values (row-major)");
        c.cross = Matrix(c.n_products, c.n_products);
        for (std::size_t k = 0; k < flat.size(); ++k)
            c.cross(static_cast<Eigen::Index>(k / n), static_cast<Eigen::Index>(k % n)) = flat[k];
    }
    c.fill_defaults(kv.get_double("own_min", -3.0), kv.get_double("own_max", -1.0), kv.get_double("cross_max", 0.5));
    c.validate();
    return c;
}

std::string ground_truth_json(const panel::GroundTruth& t) {
    json e = json::array();
    for (Eigen::Index i = 0; i < t.elasticity.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < t.elasticity.cols(); ++j) row.push_back(t.elasticity(i, j));
        e.push_back(std::move(row));
    }
    json j{{"upcs", t.upcs},
           {"elasticity", std::move(e)},
           {"base_price", t.base_price},
           {"base_demand", t.base_demand},
           {"seed", t.config.seed},
           {"noise_sd", t.config.noise_sd},
           {"n_weeks", t.config.n_weeks},
           {"n_stores", t.config.n_stores}};
    return j.dump(2);
}

// --- preprocessing ------------------------------------------------------------

PreprocessOutput preprocess(const std::vector<panel::RawRow>& raw, const panel::FilterConfig& cfg,
                            std::optional<int> stats_last_week) {
    cfg.validate();
    PreprocessOutput out;
    auto norm = panel::normalize_units(raw, cfg.min_price);
    out.normalize = norm.report;
    auto filt = panel::apply_filters(norm.rows, cfg);
    out.filter = std::move(filt.report);
    auto outl = panel::remove_price_outliers(filt.rows, cfg);
    out.outliers = std::move(outl.report);
    out.cleaned = std::move(outl.rows);
    if (out.cleaned.empty()) return out;
    const auto skeleton = panel::complete_calendar(out.cleaned);
    out.calendar_inserted = skeleton.inserted;
    int lo = out.cleaned.front().raw.week_id, hi = lo;
    for (const auto& r : out.cleaned) {
        lo = std::min(lo, r.raw.week_id);
        hi = std::max(hi, r.raw.week_id);
    }
    out.stats_range = {lo, stats_last_week ? std::min(hi, *stats_last_week) : hi};
    out.features = panel::engineer_features(skeleton, out.stats_range);
    return out;
}

std::string preprocess_report_json(const PreprocessOutput& o) {
    json rules = json::object();
    for (int r = 0; r < panel::kFilterRuleCount; ++r) {
        const auto rule = static_cast<panel::FilterRule>(r);
        rules[panel::to_string(rule)] = {{"series", o.filter.series_removed[static_cast<std::size_t>(r)]},
                                         {"rows", o.filter.rows_removed[static_cast<std::size_t>(r)]}};
    }
    json upcs = json::array();
    for (const auto& u : o.outliers.per_upc)
        upcs.push_back({{"upc", u.upc_code},
                        {"rows", u.rows},
                        {"dropped", u.dropped},
                        {"skipped", u.skipped},
                        {"lower_fence", u.lower_fence},
                        {"upper_fence", u.upper_fence}});
    json j{{"normalize",
            {{"input_rows", o.normalize.input_rows},
             {"kept_rows", o.normalize.kept_rows},
             {"excluded", o.normalize.excluded},
             {"zero_units", o.normalize.zero_units},
             {"min_price", o.normalize.min_price},
             {"nonfinite", o.normalize.nonfinite}}},
           {"filters",
            {{"input_rows", o.filter.input_rows},
             {"kept_rows", o.filter.kept_rows},
             {"input_series", o.filter.input_series},
             {"kept_series", o.filter.kept_series},
             {"stores_removed", o.filter.stores_removed},
             {"empty_warning", o.filter.empty_warning},
             {"removed_by_rule", std::move(rules)}}},
           {"outliers", {{"input_rows", o.outliers.input_rows}, {"kept_rows", o.outliers.kept_rows}, {"per_upc", std::move(upcs)}}},
           {"calendar_inserted", o.calendar_inserted},
           {"feature_rows", o.features.size()},
           {"stats_weeks", {o.stats_range.first, o.stats_range.last}}};
    return j.dump(2);
}

WideData build_wide(const std::vector<panel::FeatureRow>& features) {
    if (features.empty()) throw InsufficientDataError("feature panel is empty");
    WideData d;
    d.universe = panel::Universe::from_features(features);
    d.instances = panel::assemble_wide(features, d.universe);
    return d;
}

std::vector<int> distinct_weeks(const std::vector<panel::WideInstance>& instances) {
    std::set<int> w;
    for (const auto& inst : instances) w.insert(inst.week_id);
    return {w.begin(), w.end()};
}

std::vector<panel::WideInstance> select_weeks(const std::vector<panel::WideInstance>& instances, panel::WeekRange range) {
    std::vector<panel::WideInstance> out;
    for (const auto& inst : instances)
        if (range.contains(inst.week_id)) out.push_back(inst);
    return out;
}

// --- metrics tables -------------------------------------------------------------

void write_metrics_csv(std::ostream& out, const std::vector<SeriesMetric>& rows) {
    csv::Writer w(out);
    w.row({"source", "store", "upc", "fold", "seed", "r2", "mae", "rmse"});
    for (const auto& r : rows)
        w.row({r.source, r.store, r.upc, std::to_string(r.fold), std::to_string(r.seed),
               r.r2 ? csv::format_double(*r.r2) : std::string(), csv::format_double(r.mae), csv::format_double(r.rmse)});
}

std::vector<SeriesMetric> read_metrics_csv(std::istream& in) {
    const auto t = csv::Table::read_stream(in);
    const std::size_t c[] = {t.column("source"), t.column("store"), t.column("upc"), t.column("fold"),
                             t.column("seed"),   t.column("r2"),    t.column("mae"), t.column("rmse")};
    std::vector<SeriesMetric> out;
    for (const auto& rec : t.records()) {
        const auto& f = rec.fields;
        if (f.size() != t.header().size()) throw ParseError(rec.line, "wrong number of fields");
        SeriesMetric m;
        m.source = f[c[0]];
        m.store = f[c[1]];
        m.upc = f[c[2]];
        m.fold = static_cast<int>(csv::parse_int(f[c[3]], rec.line, "fold"));
        m.seed = csv::parse_int(f[c[4]], rec.line, "seed");
        if (!f[c[5]].empty()) m.r2 = csv::parse_double(f[c[5]], rec.line, "r2");
        m.mae = csv::parse_double(f[c[6]], rec.line, "mae");
        m.rmse = csv::parse_double(f[c[7]], rec.line, "rmse");
        out.push_back(std::move(m));
    }
    return out;
}

// --- ICDN evaluation ----------------------------------------------------------

namespace {

struct SeriesAccumulator {
    std::vector<double> yhat, y;
};

SeriesMetric finish_series(const std::string& source, const std::string& store, const std::string& upc, int fold,
                           std::int64_t seed, const SeriesAccumulator& a) {
    SeriesMetric m{source, store, upc, fold, seed, std::nullopt, 0.0, 0.0};
    const auto n = static_cast<Eigen::Index>(a.y.size());
    const Vector yh = Eigen::Map<const Vector>(a.yhat.data(), n), y = Eigen::Map<const Vector>(a.y.data(), n);
    const Vector ones = Vector::Ones(n);
    const auto err = evaluation::masked_mae_rmse(yh, y, ones);
    m.mae = err.mae;
    m.rmse = err.rmse;
    try {
        m.r2 = evaluation::masked_r2(yh, y, ones);
    } catch (const EvaluationError&) {
    }
    return m;
}

}  // namespace

EvaluateOutput evaluate_icdn(const WideData& data, const RunConfig& cfg, const EvaluateOptions& opts) {
    if (opts.seeds.empty()) throw ConfigError("at least one seed is required");
    const auto weeks = distinct_weeks(data.instances);
    const auto plan = evaluation::make_folds(weeks, opts.folds);
    EvaluateOutput out;
    std::vector<double> r2s, scores;
    const auto& products = data.universe.products;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const int fold_id = static_cast<int>(f) + 1;
        const auto train = select_weeks(data.instances, plan.folds[f].train);
        const auto val = select_weeks(data.instances, plan.folds[f].val);
        for (std::uint64_t seed : opts.seeds) {
            auto tcfg = cfg.train;
            tcfg.seed = seed;
            auto res = training::train_model(data.universe, train, cfg.model, tcfg, cfg.loss);
            std::vector<double> yh, yt;
            std::map<std::pair<std::string, std::string>, SeriesAccumulator> series;
            for (const auto& inst : val) {
                if (inst.observed() == 0) continue;
                const auto fo = model::forward(res.state, inst, *res.state.frozen_graph, model::Mode::Eval);
                for (Eigen::Index i = 0; i < inst.log_demand.size(); ++i) {
                    if (inst.mask(i) < 0.5) continue;
                    yh.push_back(fo.prediction(i));
                    yt.push_back(inst.log_demand(i));
                    auto& acc = series[{inst.store_code, products[static_cast<std::size_t>(i)].upc_code}];
                    acc.yhat.push_back(fo.prediction(i));
                    acc.y.push_back(inst.log_demand(i));
                }
            }
            if (yh.empty()) throw InsufficientDataError("fold " + std::to_string(fold_id) + " has no observed validation rows");
            const auto n = static_cast<Eigen::Index>(yh.size());
            const Vector ones = Vector::Ones(n);
            FoldSeedResult run;
            run.fold = fold_id;
            run.seed = seed;
            run.r2 = evaluation::masked_r2(Eigen::Map<Vector>(yh.data(), n), Eigen::Map<Vector>(yt.data(), n), ones);
            const auto err = evaluation::masked_mae_rmse(Eigen::Map<Vector>(yh.data(), n), Eigen::Map<Vector>(yt.data(), n), ones);
            run.mae = err.mae;
            run.rmse = err.rmse;
            auto recs = evaluation::extract_elasticities(res.state, val, fold_id, static_cast<std::int64_t>(seed));
            std::vector<double> own, cross;
            for (const auto& r : recs) (r.upc_i == r.upc_j ? own : cross).push_back(r.estimate);
            if (own.empty()) throw InsufficientDataError("fold " + std::to_string(fold_id) + " produced no own-price elasticities");
            run.score = evaluation::elasticity_score(own, cross, opts.beta_eda);
            r2s.push_back(run.r2);
            scores.push_back(run.score.s_elast);
            out.runs.push_back(run);
            out.records.insert(out.records.end(), recs.begin(), recs.end());
            for (const auto& [key, acc] : series)
                out.metrics.push_back(finish_series("icdn", key.first, key.second, fold_id, static_cast<std::int64_t>(seed), acc));
        }
    }
    out.summary = evaluation::TrialSummary::from_evaluations(0, r2s, scores);

    if (opts.bootstrap_reps > 0) {
        const auto& last = plan.folds.back();
        const int fold_id = static_cast<int>(plan.folds.size());
        const auto train = select_weeks(data.instances, last.train);
        const auto val = select_weeks(data.instances, last.val);
        const auto train_weeks = distinct_weeks(train);
        const auto reps = evaluation::block_bootstrap(train_weeks, opts.block_len, opts.bootstrap_reps, opts.bootstrap_seed);
        for (std::size_t r = 0; r < reps.size(); ++r) {
            auto tcfg = cfg.train;
            tcfg.seed = opts.seeds.front();
            auto res = training::train_model(data.universe, evaluation::resample_instances(train, reps[r]), cfg.model, tcfg, cfg.loss);
            auto recs = evaluation::extract_elasticities(res.state, val, fold_id, static_cast<std::int64_t>(tcfg.seed),
                                                         static_cast<int>(r));
            out.records.insert(out.records.end(), recs.begin(), recs.end());
        }
    }
    return out;
}

std::string evaluation_json(const EvaluateOutput& out) {
    json runs = json::array();
    for (const auto& r : out.runs)
        runs.push_back({{"fold", r.fold},
                        {"seed", r.seed},
                        {"r2", r.r2},
                        {"mae", r.mae},
                        {"rmse", r.rmse},
                        {"p_own", r.score.p_own},
                        {"p_prior", r.score.p_prior},
                        {"s_own", r.score.s_own},
                        {"s_cross", r.score.s_cross},
                        {"s_elast", r.score.s_elast}});
    json j{{"runs", std::move(runs)},
           {"r2_robust", out.summary.r2_robust},
           {"s_elast_robust", out.summary.s_elast_robust},
           {"s_select", out.summary.s_select},
           {"records", out.records.size()}};
    return j.dump(2);
}

// --- benchmark runs ---------------------------------------------------------------

namespace {

evaluation::PairwiseGroup resample_group(const evaluation::PairwiseGroup& g, const std::vector<int>& weeks) {
    std::map<int, std::vector<Eigen::Index>> rows;
    for (std::size_t r = 0; r < g.weeks_train.size(); ++r) rows[g.weeks_train[r]].push_back(static_cast<Eigen::Index>(r));
    std::vector<Eigen::Index> pick;
    for (int w : weeks) {
        auto it = rows.find(w);
        if (it != rows.end()) pick.insert(pick.end(), it->second.begin(), it->second.end());
    }
    evaluation::PairwiseGroup out = g;
    out.x_train.resize(static_cast<Eigen::Index>(pick.size()), g.x_train.cols());
    out.y_train.resize(static_cast<Eigen::Index>(pick.size()));
    out.weeks_train.clear();
    for (std::size_t k = 0; k < pick.size(); ++k) {
        out.x_train.row(static_cast<Eigen::Index>(k)) = g.x_train.row(pick[k]);
        out.y_train(static_cast<Eigen::Index>(k)) = g.y_train(pick[k]);
        out.weeks_train.push_back(g.weeks_train[static_cast<std::size_t>(pick[k])]);
    }
    return out;
}

void append_series_metrics(std::vector<SeriesMetric>& out, const std::vector<evaluation::BenchmarkOutcome>& outcomes,
                           int fold) {
    struct Acc {
        std::vector<double> r2, mae, rmse;
    };
    std::map<std::pair<std::string, std::string>, Acc> by_series;
    for (const auto& o : outcomes) {
        if (!o.fit) continue;
        auto& a = by_series[{o.store, o.upc_i}];
        if (o.fit->val_r2) a.r2.push_back(*o.fit->val_r2);
        a.mae.push_back(o.fit->val_mae);
        a.rmse.push_back(o.fit->val_rmse);
    }
    for (const auto& [key, a] : by_series) {
        SeriesMetric m{"benchmark", key.first, key.second, fold, -1, std::nullopt, stats::mean(a.mae), stats::mean(a.rmse)};
        if (!a.r2.empty()) m.r2 = stats::mean(a.r2);
        out.push_back(std::move(m));
    }
}

}  // namespace

BenchmarkRun run_benchmark(const std::vector<panel::FeatureRow>& features, const BenchmarkOptions& opts) {
    std::set<int> wset;
    for (const auto& f : features)
        if (!f.is_synthetic_row) wset.insert(f.row.raw.week_id);
    const std::vector<int> weeks(wset.begin(), wset.end());
    const auto plan = evaluation::make_folds(weeks, opts.folds);
    BenchmarkRun run;
    std::vector<evaluation::PairwiseGroup> last_groups;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const int fold_id = static_cast<int>(f) + 1;
        auto groups = evaluation::build_pairwise_groups(features, plan.folds[f].train, plan.folds[f].val, opts.pairs);
        std::vector<evaluation::BenchmarkOutcome> outcomes;
        for (const auto& g : groups) outcomes.push_back(evaluation::benchmark_fit(g));
        const auto recs = evaluation::benchmark_records(outcomes, fold_id);
        run.records.insert(run.records.end(), recs.begin(), recs.end());
        append_series_metrics(run.metrics, outcomes, fold_id);
        run.folds.emplace_back(fold_id, std::move(outcomes));
        if (f + 1 == plan.folds.size()) last_groups = std::move(groups);
    }
    if (opts.bootstrap_reps > 0) {
        const auto& last = plan.folds.back();
        std::vector<int> train_weeks;
        for (int w : weeks)
            if (last.train.contains(w)) train_weeks.push_back(w);
        const auto reps = evaluation::block_bootstrap(train_weeks, opts.block_len, opts.bootstrap_reps, opts.seed);
        for (std::size_t r = 0; r < reps.size(); ++r) {
            std::vector<evaluation::BenchmarkOutcome> outcomes;
            for (const auto& g : last_groups) outcomes.push_back(evaluation::benchmark_fit(resample_group(g, reps[r])));
            const auto recs = evaluation::benchmark_records(outcomes, static_cast<int>(plan.folds.size()), static_cast<int>(r));
            run.records.insert(run.records.end(), recs.begin(), recs.end());
        }
    }
    return run;
}

std::vector<evaluation::PairedSample> pair_metrics(const std::vector<SeriesMetric>& icdn,
                                                   const std::vector<SeriesMetric>& benchmark) {
    using Key = std::tuple<std::string, std::string, int>;
    struct Mean {
        std::vector<double> r2, mae, rmse;
    };
    auto collect = [](const std::vector<SeriesMetric>& rows) {
        std::map<Key, Mean> m;
        for (const auto& r : rows) {
            auto& a = m[{r.store, r.upc, r.fold}];
            if (r.r2) a.r2.push_back(*r.r2);
            a.mae.push_back(r.mae);
            a.rmse.push_back(r.rmse);
        }
        return m;
    };
    const auto a = collect(icdn), b = collect(benchmark);
    std::vector<evaluation::PairedSample> out;
    std::map<int, std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>> per_fold;
    for (const auto& [key, ma] : a) {
        auto it = b.find(key);
        if (it == b.end()) continue;
        const auto& mb = it->second;
        const auto& [store, upc, fold] = key;
        const std::string label = store + "|" + upc + "|" + std::to_string(fold);
        auto add = [&](const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
            if (x.empty() || y.empty()) return;
            const double xi = stats::mean(x), yi = stats::mean(y);
            out.push_back({"triplet." + name, label, xi, yi});
            auto& slot = per_fold[fold][name];
            slot.first.push_back(xi);
            slot.second.push_back(yi);
        };
        add("r2", ma.r2, mb.r2);
        add("mae", ma.mae, mb.mae);
        add("rmse", ma.rmse, mb.rmse);
    }
    for (const auto& [fold, metrics] : per_fold)
        for (const auto& [name, xs] : metrics)
            out.push_back({"fold." + name, "fold " + std::to_string(fold), stats::mean(xs.first), stats::mean(xs.second)});
    return out;
}

std::vector<std::pair<std::string, std::string>> frozen_pairs(const model::ModelState& st) {
    if (!st.frozen_graph) throw GraphError("model has no frozen graph");
    std::vector<std::pair<std::string, std::string>> out;
    const auto& p = st.universe.products;
    for (std::size_t i = 0; i < st.frozen_graph->neighbors.size(); ++i)
        for (int j : st.frozen_graph->neighbors[i]) out.emplace_back(p[i].upc_code, p[static_cast<std::size_t>(j)].upc_code);
    return out;
}

// --- verification ------------------------------------------------------------------

namespace {

constexpr double kFirstStep = 1e-5;
constexpr double kSecondStep = 1e-3;

// Points inside the outer knots, clear of every knot by two second-difference steps.
Vector sample_point(const model::ModelState& st, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(st.products());
    Vector u(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = st.splines[static_cast<std::size_t>(i)];
        for (;;) {
            const double x = uniform(rng, s.knots.front(), s.knots.back());
            bool clear = true;
            for (double k : s.knots)
                if (std::abs(x - k) < 2.0 * kSecondStep) clear = false;
            if (clear) {
                u(i) = x;
                break;
            }
        }
    }
    return u;
}

double mixed_error(double analytic, double fd) { return std::abs(analytic - fd) / (1.0 + std::abs(fd)); }

}  // namespace

VerifyReport verify_surface(const model::ModelState& st, const std::vector<panel::WideInstance>* data, int points,
                            std::uint64_t seed) {
    if (points < 1) throw ConfigError("points must be >= 1");
    VerifyReport rep;
    rep.points = points;
    rep.context = data && !data->empty() ? "data" : "neutral";
    Rng rng = make_stream(seed, "verify");
    const auto n = static_cast<Eigen::Index>(st.products());
    panel::WideInstance neutral;
    neutral.store_code = "";
    neutral.log_price = Vector::Zero(n);
    neutral.log_demand = Vector::Zero(n);
    neutral.mask = Vector::Zero(n);
    neutral.tokens = Matrix::Zero(n, static_cast<Eigen::Index>(panel::token_features().size()));
    for (int p = 0; p < points; ++p) {
        const panel::WideInstance& ctx =
            rep.context == "data" ? (*data)[static_cast<std::size_t>(rng() % data->size())] : neutral;
        const auto enc = model::encode(st, ctx, model::Mode::Eval);
        const model::SparseGraph graph =
            st.frozen_graph ? *st.frozen_graph
                            : model::select_graph(enc.scores, st.config.neighbors, st.config.category_priority,
                                                  st.category_of, model::GraphProvenance::Online);
        const Vector u = sample_point(st, rng);
        const auto out = model::surface_forward(st, enc, u, graph);
        const auto& surf = out.surface;
        const auto field = surf.as_field();
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto si = static_cast<std::size_t>(i);
            rep.max_closure_residual = std::max(rep.max_closure_residual, field::closure_residual(field, u, si));
            Vector up = u, dn = u;
            up(i) += kFirstStep;
            dn(i) -= kFirstStep;
            const double fd_own = (surf.evaluate(up)(i) - surf.evaluate(dn)(i)) / (2.0 * kFirstStep);
            rep.max_own_fd_delta = std::max(rep.max_own_fd_delta, mixed_error(model::elasticity_own(out, static_cast<int>(i)), fd_own));
            up = u;
            dn = u;
            up(i) += kSecondStep;
            dn(i) -= kSecondStep;
            const double fd_k = (surf.evaluate(up)(i) - 2.0 * out.prediction(i) + surf.evaluate(dn)(i)) / (kSecondStep * kSecondStep);
            rep.max_curvature_fd_delta = std::max(rep.max_curvature_fd_delta, mixed_error(model::curvature(out, static_cast<int>(i)), fd_k));
            for (int j : graph.neighbors[si]) {
                up = u;
                dn = u;
                up(j) += kFirstStep;
                dn(j) -= kFirstStep;
                const double fd = (surf.evaluate(up)(i) - surf.evaluate(dn)(i)) / (2.0 * kFirstStep);
                rep.max_cross_fd_delta = std::max(rep.max_cross_fd_delta, mixed_error(*model::elasticity_cross(out, static_cast<int>(i), j), fd));
            }
        }
        const Vector to = sample_point(st, rng);
        for (Eigen::Index i = 0; i < n; ++i)
            rep.max_path_gap = std::max(rep.max_path_gap, field::path_independence_gap(field, static_cast<std::size_t>(i), u, to, 1.0));
    }
    return rep;
}

std::string verify_json(const VerifyReport& r) {
    json j{{"points", r.points},
           {"context", r.context},
           {"max_closure_residual", r.max_closure_residual},
           {"max_own_fd_delta", r.max_own_fd_delta},
           {"max_cross_fd_delta", r.max_cross_fd_delta},
           {"max_curvature_fd_delta", r.max_curvature_fd_delta},
           {"max_path_gap", r.max_path_gap}};
    return j.dump(2);
}

}  // namespace icdn::pipeline
