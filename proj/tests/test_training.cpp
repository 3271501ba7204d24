#include "fixtures.hpp"

#include "icdn/error.hpp"
#include "icdn/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace icdn;
using namespace icdn::training;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

std::vector<const panel::WideInstance*> pointers(const std::vector<panel::WideInstance>& v, std::size_t from,
                                                 std::size_t count) {
    std::vector<const panel::WideInstance*> out;
    for (std::size_t k = from; k < from + count && k < v.size(); ++k) out.push_back(&v[k]);
    return out;
}

std::vector<Matrix> flatten(const model::Parameters& p) {
    std::vector<Matrix> out;
    p.visit([&](const std::string&, const Matrix& m, const model::BlockInfo&) { out.push_back(m); });
    return out;
}

TrainConfig quick_train(int e0, int e1) {
    TrainConfig t;
    t.batch_size = 16;
    t.epochs_phase0 = e0;
    t.epochs_phase1 = e1;
    t.seed = 4;
    return t;
}

}  // namespace

TEST(Losses, HuberBranches) {
    EXPECT_EQ(loss_fit(vec({1, 2}), vec({1, 2}), vec({1, 1}), 1.0), 0.0);
    EXPECT_DOUBLE_EQ(loss_fit(vec({0.5}), vec({0.0}), vec({1}), 1.0), 0.125);
    EXPECT_DOUBLE_EQ(loss_fit(vec({3.0}), vec({0.0}), vec({1}), 1.0), 2.5);
    EXPECT_DOUBLE_EQ(huber(-3.0, 1.0), 2.5);
}

TEST(Losses, FitIgnoresMaskedEntries) {
    const double base = loss_fit(vec({0.5, 1.0}), vec({0.0, 0.2}), vec({1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(loss_fit(vec({0.5, 1.0, 40.0}), vec({0.0, 0.2, -3.0}), vec({1, 1, 0}), 1.0), base);
    EXPECT_THROW(loss_fit(vec({1.0}), vec({0.0}), vec({0}), 1.0), InsufficientDataError);
}

TEST(Losses, SmoothMeanSquares) {
    EXPECT_DOUBLE_EQ(loss_smooth(vec({0, 0}), vec({1, 1})), 0.0);
    EXPECT_DOUBLE_EQ(loss_smooth(vec({2, -2}), vec({1, 1})), 4.0);
    EXPECT_DOUBLE_EQ(loss_smooth(vec({2, -3}), vec({1, 0})), 4.0);
}

TEST(Losses, BandViolations) {
    const std::vector<BandEntry> inside = {{-1.0, -5, 0}, {0.3, -1, 1}};
    EXPECT_EQ(loss_band(inside), 0.0);
    const std::vector<BandEntry> own = {{0.5, -5, 0}};
    EXPECT_DOUBLE_EQ(loss_band(own), 0.25);
    const std::vector<BandEntry> cross = {{-1.3, -1, 1}};
    EXPECT_NEAR(loss_band(cross), 0.09, 1e-15);
    EXPECT_EQ(loss_band(std::span<const BandEntry>{}), 0.0);
}

TEST(Losses, BreakdownReconstructsTotal) {
    const auto data = icdn::testing::synth_wide(3, 2, 40, 2);
    auto st = model::initialize_model(icdn::testing::tiny_model_config(), data.universe, data.instances, 2);
    icdn::testing::randomize(st.params, 3, 0.5);
    const auto g = model::freeze_graph(st, data.instances);
    LossConfig cfg;
    for (std::size_t k = 0; k < 10; ++k) {
        const auto& inst = data.instances[k];
        const auto out = model::forward(st, inst, g);
        const auto l = instance_loss(out, inst.log_demand, inst.mask, cfg);
        EXPECT_NEAR(l.total, l.fit + cfg.lambda_smooth * l.smooth + cfg.lambda_elast * l.band, 1e-12);
        EXPECT_EQ(static_cast<double>(l.n_mask), inst.mask.sum());
        EXPECT_EQ(band_entries(out, inst.mask, cfg).size(), l.n_elast);
    }
}

TEST(Gradients, MatchFiniteDifferences) {
    const auto data = icdn::testing::synth_wide(2, 2, 40, 3);
    auto mc = icdn::testing::tiny_model_config(2, 1);
    mc.hidden = {4};
    auto st = model::initialize_model(mc, data.universe, data.instances, 5);
    icdn::testing::randomize(st.params, 9, 0.3);
    LossConfig lc;
    lc.own_hi = -1.0;
    lc.cross_lo = -0.05;
    lc.cross_hi = 0.05;
    const auto batch = pointers(data.instances, 10, 6);
    const BatchOptions bo;
    const auto g = compute_gradients(st, batch, lc, bo);
    const auto grads = flatten(g.grad);
    std::size_t b = 0;
    double worst = 0.0;
    st.params.visit([&](const std::string& name, Matrix& m, const model::BlockInfo&) {
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            const double keep = m.data()[k], h = 1e-6;
            m.data()[k] = keep + h;
            const double lp = batch_loss(st, batch, lc, bo).total;
            m.data()[k] = keep - h;
            const double lm = batch_loss(st, batch, lc, bo).total;
            m.data()[k] = keep;
            const double fd = (lp - lm) / (2 * h), an = grads[b].data()[k];
            const double err = std::abs(fd - an) / std::max(std::abs(fd), 1e-4);
            worst = std::max(worst, err);
            EXPECT_LT(err, 1e-4) << name << "[" << k << "] analytic " << an << " fd " << fd;
        }
        ++b;
    });
    EXPECT_LT(worst, 1e-4);
}

TEST(Gradients, ZeroResidualIsStationary) {
    auto data = icdn::testing::synth_wide(3, 1, 40, 6);
    auto st = model::initialize_model(icdn::testing::tiny_model_config(), data.universe, data.instances, 6);
    const auto g = model::freeze_graph(st, data.instances);
    for (auto& inst : data.instances) inst.log_demand = model::forward(st, inst, g).prediction;
    LossConfig lc;
    lc.lambda_smooth = 0.0;
    lc.lambda_elast = 0.0;
    BatchOptions bo;
    bo.graph = GraphSource::Frozen;
    bo.frozen = &g;
    const auto res = compute_gradients(st, pointers(data.instances, 0, 8), lc, bo);
    EXPECT_EQ(res.loss.total, 0.0);
    EXPECT_EQ(global_norm(res.grad), 0.0);
}

TEST(Gradients, FrozenHeadsGetZero) {
    const auto data = icdn::testing::synth_wide(3, 1, 40, 7);
    auto st = model::initialize_model(icdn::testing::tiny_model_config(), data.universe, data.instances, 7);
    icdn::testing::randomize(st.params, 7, 0.4);
    BatchOptions bo;
    bo.freeze_nonlinear = true;
    const auto res = compute_gradients(st, pointers(data.instances, 0, 8), LossConfig{}, bo);
    res.grad.visit([](const std::string& name, const Matrix& m, const model::BlockInfo& info) {
        if (info.nonlinear_head) EXPECT_TRUE(m.isZero(0.0)) << name;
    });
    EXPECT_GT(global_norm(res.grad), 0.0);
}

TEST(Optimizer, ZeroGradientNoDecayUnchanged) {
    const auto data = icdn::testing::synth_wide(3, 1, 30, 8);
    auto st = model::initialize_model(icdn::testing::tiny_model_config(), data.universe, data.instances, 8);
    const auto before = flatten(st.params);
    AdamW opt(st.params);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    opt.step(st.params, st.params.zeros_like(), cfg, false);
    EXPECT_EQ(flatten(st.params), before);

    cfg.weight_decay = 0.5;
    opt.step(st.params, st.params.zeros_like(), cfg, false);
    std::size_t b = 0;
    const auto after = flatten(st.params);
    st.params.visit([&](const std::string& name, const Matrix&, const model::BlockInfo& info) {
        if (!info.decay) EXPECT_EQ(after[b], before[b]) << name;
        else if (!before[b].isZero(0.0)) EXPECT_NE(after[b], before[b]) << name;
        ++b;
    });
}

TEST(Optimizer, ClippingScalesByNormRatio) {
    const auto data = icdn::testing::synth_wide(3, 1, 30, 8);
    auto st = model::initialize_model(icdn::testing::tiny_model_config(), data.universe, data.instances, 8);
    auto g = st.params.zeros_like();
    g.intercept_bias(0, 0) = 6.0;
    g.own_slope_bias(0, 0) = 8.0;
    const double before = clip_gradients(g, 1.0);
    EXPECT_DOUBLE_EQ(before, 10.0);
    EXPECT_NEAR(g.intercept_bias(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(g.own_slope_bias(0, 0), 0.8, 1e-15);
    EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
}

TEST(Optimizer, PlateauHalvesAfterPatience) {
    PlateauScheduler s(1.0, 0.5, 2);
    EXPECT_EQ(s.observe(1.0), 1.0);
    EXPECT_EQ(s.observe(1.0), 1.0);
    EXPECT_EQ(s.observe(1.5), 1.0);
    EXPECT_EQ(s.observe(1.2), 0.5);
    EXPECT_EQ(s.observe(0.9), 0.5);
}

TEST(Protocol, SplitByTrailingWeeks) {
    const auto data = icdn::testing::synth_wide(3, 2, 50, 9);
    const auto split = split_by_week(data.instances, 0.2);
    int max_train = 0, min_val = 1 << 30;
    for (const auto& i : split.train) max_train = std::max(max_train, i.week_id);
    for (const auto& i : split.val) min_val = std::min(min_val, i.week_id);
    EXPECT_LT(max_train, min_val);
    std::set<int> vw;
    for (const auto& i : split.val) vw.insert(i.week_id);
    EXPECT_EQ(vw.size(), 10u);
}

TEST(Protocol, RollingTargetOfConstantSeries) {
    auto data = icdn::testing::synth_wide(2, 1, 20, 10);
    for (auto& inst : data.instances) inst.log_demand.setConstant(3.25);
    panel::attach_smoothed_targets(data.instances, 8);
    for (const auto& inst : data.instances)
        for (Eigen::Index i = 0; i < inst.mask.size(); ++i)
            if (inst.mask[i] > 0) EXPECT_DOUBLE_EQ(inst.demand_smoothed[static_cast<std::size_t>(i)], 3.25);
}

TEST(Protocol, WarmStartSlopeAndFrozenHeads) {
    auto data = icdn::testing::synth_wide(4, 2, 50, 11);
    const auto tcfg = quick_train(3, 0);
    auto split = split_by_week(data.instances, tcfg.val_fraction);
    panel::attach_smoothed_targets(split.train, tcfg.smoothing_window);
    panel::attach_smoothed_targets(split.val, tcfg.smoothing_window);
    auto st = model::initialize_model(icdn::testing::tiny_model_config(), data.universe, split.train, tcfg.seed);
    icdn::testing::randomize(st.params, 12, 0.4);
    prepare_phase0(st, tcfg);
    for (const auto& inst : data.instances) {
        const auto enc = model::encode(st, inst, model::Mode::Eval);
        for (Eigen::Index i = 0; i < enc.latent.rows(); ++i)
            EXPECT_NEAR(model::own_head(st.params, enc.latent.row(i).transpose()).slope, -2.0, 1e-3);
    }
    std::vector<Matrix> frozen_before;
    st.params.visit([&](const std::string&, const Matrix& m, const model::BlockInfo& info) {
        if (info.nonlinear_head) frozen_before.push_back(m);
    });
    const auto rep = train_phase0(st, split, tcfg, LossConfig{});
    EXPECT_FALSE(rep.diverged);
    std::size_t k = 0;
    st.params.visit([&](const std::string& name, const Matrix& m, const model::BlockInfo& info) {
        if (info.nonlinear_head) EXPECT_EQ(m, frozen_before[k++]) << name;
    });
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : rep.epochs) best = std::min(best, e.val_fit);
    EXPECT_EQ(rep.best_val_fit, best);
}

TEST(Protocol, SeededTrainingIsBitwiseReproducible) {
    const auto data = icdn::testing::synth_wide(3, 2, 40, 13);
    const auto tcfg = quick_train(2, 2);
    auto mc = icdn::testing::tiny_model_config();
    mc.dropout = 0.2;
    const auto a = train_model(data.universe, data.instances, mc, tcfg, LossConfig{});
    const auto b = train_model(data.universe, data.instances, mc, tcfg, LossConfig{});
    EXPECT_EQ(model::checkpoint_json(a.state), model::checkpoint_json(b.state));
    ASSERT_TRUE(a.state.frozen_graph.has_value());
    EXPECT_EQ(a.state.frozen_graph->provenance, model::GraphProvenance::Frozen);
}

TEST(Protocol, FitsNoiselessLogLogData) {
    panel::SynthConfig sc;
    sc.n_products = 2;
    sc.n_stores = 2;
    sc.n_weeks = 80;
    sc.cross = Matrix::Zero(2, 2);
    sc.promo_prob = 0.0;
    sc.seed = 14;
    sc.fill_defaults();
    const auto pre = pipeline::preprocess(panel::generate_synthetic_panel(sc).raw, icdn::testing::loose_filters());
    const auto data = pipeline::build_wide(pre.features);
    auto mc = icdn::testing::tiny_model_config(3, 1);
    auto tcfg = quick_train(5, 60);
    tcfg.batch_size = 8;
    const auto res = train_model(data.universe, data.instances, mc, tcfg, LossConfig{});
    EXPECT_GT(split_r2(res.state, res.split.val, *res.state.frozen_graph), 0.95);
}
