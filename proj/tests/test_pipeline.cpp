#include "fixtures.hpp"

#include "icdn/error.hpp"
#include "icdn/kv_config.hpp"
#include "icdn/pipeline.hpp"
#include "icdn/training.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <sstream>

using namespace icdn;
using namespace icdn::pipeline;

TEST(Config, DefaultsAndOverrides) {
    const auto c = load_run_config(KeyValueConfig::parse("hidden = 16,8\nbatch_size = 32 # small\n"));
    EXPECT_EQ(c.model.hidden, (std::vector<int>{16, 8}));
    EXPECT_EQ(c.train.batch_size, 32);
    EXPECT_DOUBLE_EQ(c.train.lr_phase0, 1.686e-3);
    EXPECT_EQ(c.model.basis_count, 3);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(load_run_config(KeyValueConfig::parse("hiden = 3\n")), ConfigError);
    EXPECT_THROW(load_run_config(KeyValueConfig::parse("lr_phase0 = -1\n")), ConfigError);
}

TEST(Config, SynthListsAndDraws) {
    const auto kv = KeyValueConfig::parse("n_products = 2\nown = -2, -1.5\ncross = 0, 0.2, -0.1, 0\n");
    const auto s = load_synth_config(kv, 4);
    EXPECT_EQ(s.own, (std::vector<double>{-2, -1.5}));
    EXPECT_DOUBLE_EQ(s.cross(0, 1), 0.2);
    EXPECT_DOUBLE_EQ(s.cross(1, 0), -0.1);
    EXPECT_EQ(s.base_price.size(), 2u);
    const auto truth = nlohmann::json::parse(ground_truth_json(panel::generate_synthetic_panel(s).truth));
    EXPECT_DOUBLE_EQ(truth["elasticity"][0][0].get<double>(), -2.0);
}

TEST(Preprocess, SyntheticPanelSurvivesDefaults) {
    panel::SynthConfig sc;
    sc.n_weeks = 160;
    sc.fill_defaults();
    const auto raw = panel::generate_synthetic_panel(sc).raw;
    const auto out = preprocess(raw, panel::FilterConfig{});
    EXPECT_EQ(out.filter.kept_series, 15u);
    EXPECT_EQ(out.cleaned.size() + out.outliers.input_rows - out.outliers.kept_rows, raw.size());
    const auto rep = nlohmann::json::parse(preprocess_report_json(out));
    EXPECT_TRUE(rep.contains("filters"));
    const auto wide = build_wide(out.features);
    EXPECT_EQ(wide.universe.size(), 5u);
    EXPECT_EQ(distinct_weeks(wide.instances).size(), 160u);
    EXPECT_EQ(select_weeks(wide.instances, {1, 10}).size(), 30u);
}

TEST(Metrics, CsvRoundTrip) {
    std::vector<SeriesMetric> rows = {{"icdn", "S1", "U1", 1, 0, 0.5, 0.1, 0.2}, {"benchmark", "S1", "U2", 2, -1, std::nullopt, 0.3, 0.4}};
    std::ostringstream out;
    write_metrics_csv(out, rows);
    std::istringstream in(out.str());
    const auto back = read_metrics_csv(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].r2, 0.5);
    EXPECT_FALSE(back[1].r2.has_value());
    EXPECT_EQ(back[1].seed, -1);
}

TEST(Metrics, PairingMatchesTriplets) {
    std::vector<SeriesMetric> a = {{"icdn", "S1", "U1", 1, 0, 0.5, 0.1, 0.2}, {"icdn", "S1", "U1", 1, 1, 0.7, 0.3, 0.4}};
    std::vector<SeriesMetric> b = {{"benchmark", "S1", "U1", 1, -1, 0.4, 0.2, 0.3}};
    const auto p = pair_metrics(a, b);
    bool found = false;
    for (const auto& s : p)
        if (s.metric.find("r2") != std::string::npos && s.key.find("U1") != std::string::npos) {
            found = true;
            EXPECT_NEAR(s.icdn, 0.6, 1e-15);
            EXPECT_NEAR(s.benchmark, 0.4, 1e-15);
        }
    EXPECT_TRUE(found);
}

TEST(Verify, TrainedSurfaceIsIntegrable) {
    const auto data = icdn::testing::synth_wide(4, 2, 40, 6);
    training::TrainConfig tc;
    tc.epochs_phase0 = 2;
    tc.epochs_phase1 = 10;
    tc.batch_size = 16;
    tc.seed = 6;
    const auto st = training::train_model(data.universe, data.instances, icdn::testing::tiny_model_config(3, 2), tc,
                                          training::LossConfig{})
                        .state;
    const auto r = verify_surface(st, &data.instances, 8, 3);
    EXPECT_EQ(r.points, 8);
    EXPECT_EQ(r.context, "data");
    EXPECT_LT(r.max_closure_residual, 1e-4);
    EXPECT_LT(r.max_own_fd_delta, 1e-6);
    EXPECT_LT(r.max_cross_fd_delta, 1e-6);
    EXPECT_LT(r.max_curvature_fd_delta, 1e-4);
    EXPECT_LT(r.max_path_gap, 1e-6);
    const auto neutral = verify_surface(st, nullptr, 4, 3);
    EXPECT_EQ(neutral.context, "neutral");
    EXPECT_TRUE(nlohmann::json::parse(verify_json(r)).contains("max_closure_residual"));
}

TEST(Benchmark, RunsOnSyntheticFeatures) {
    panel::SynthConfig sc;
    sc.n_products = 3;
    sc.n_stores = 1;
    sc.n_weeks = 150;
    sc.noise_sd = 0.05;
    sc.fill_defaults();
    const auto pre = preprocess(panel::generate_synthetic_panel(sc).raw, icdn::testing::loose_filters());
    BenchmarkOptions opts;
    opts.folds = 2;
    opts.bootstrap_reps = 3;
    const auto run = run_benchmark(pre.features, opts);
    ASSERT_EQ(run.folds.size(), 2u);
    std::size_t fitted = 0;
    for (const auto& [fold, outcomes] : run.folds)
        for (const auto& o : outcomes) fitted += o.fit.has_value();
    EXPECT_GT(fitted, 0u);
    EXPECT_FALSE(run.records.empty());
    EXPECT_FALSE(run.metrics.empty());
}

TEST(Evaluate, SmallFoldRun) {
    const auto data = icdn::testing::synth_wide(3, 1, 60, 8);
    RunConfig cfg;
    cfg.model = icdn::testing::tiny_model_config(3, 1);
    cfg.train.epochs_phase0 = 1;
    cfg.train.epochs_phase1 = 2;
    cfg.train.batch_size = 16;
    EvaluateOptions opts;
    opts.folds = 2;
    opts.seeds = {0, 1};
    opts.bootstrap_reps = 2;
    const auto out = evaluate_icdn(data, cfg, opts);
    EXPECT_EQ(out.runs.size(), 4u);
    EXPECT_EQ(out.summary.r2.size(), 4u);
    bool has_replicate = false;
    for (const auto& r : out.records) has_replicate |= r.replicate >= 0;
    EXPECT_TRUE(has_replicate);
    const auto js = nlohmann::json::parse(evaluation_json(out));
    EXPECT_TRUE(js.contains("s_select"));
}
