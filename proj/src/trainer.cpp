#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"
#include "icdn/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace icdn::training {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_phase0 > 0.0) || !(lr_phase1 > 0.0)) throw ConfigError("learning rates must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) throw ConfigError("plateau_factor must lie in (0, 1]");
    if (plateau_patience < 0 || early_stop_patience < 1) throw ConfigError("patience values out of range");
    if (epochs_phase0 < 0 || epochs_phase1 < 0) throw ConfigError("epoch counts must be nonnegative");
    if (!(beta_eda < 0.0)) throw ConfigError("beta_eda must be negative");
    if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
}

Split split_by_week(std::vector<panel::WideInstance> instances, double val_fraction) {
    std::set<int> weeks;
    for (const auto& inst : instances) weeks.insert(inst.week_id);
    if (weeks.size() < 2) throw InsufficientDataError("need at least two weeks to form a validation split");
    const auto w = static_cast<double>(weeks.size());
    const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(val_fraction * w)), 1, weeks.size() - 1);
    const int first_val = *std::next(weeks.begin(), static_cast<std::ptrdiff_t>(weeks.size() - n_val));
    Split s;
    for (auto& inst : instances) (inst.week_id >= first_val ? s.val : s.train).push_back(std::move(inst));
    return s;
}

std::string to_json_line(const EpochLog& log) {
    nlohmann::json j{{"epoch", log.epoch},          {"phase", log.phase},          {"lr", log.lr},
                     {"fit", log.train.fit},        {"smooth", log.train.smooth},  {"band", log.train.band},
                     {"total", log.train.total},    {"val_fit", log.val_fit},      {"val_r2", log.val_r2}};
    return j.dump();
}

void prepare_phase0(model::ModelState& st, const TrainConfig& cfg) {
    auto& p = st.params;
    p.own_slope_weight.setZero();
    p.own_slope_bias.setConstant(model::inverse_softplus(-cfg.beta_eda));
    p.own_spline_weight.setZero();
    p.own_spline_bias.setZero();
    p.cross_spline_weight.setZero();
    p.cross_spline_bias.setZero();
    p.interaction_weight.setZero();
    p.interaction_bias.setZero();
}

namespace {

struct ValResult {
    double fit = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
};

ValResult validate_split(const model::ModelState& st, std::span<const panel::WideInstance> val,
                         const model::SparseGraph& graph, const LossConfig& lcfg, bool smoothed) {
    ValResult r;
    std::vector<double> yh, yt;
    double fit = 0.0;
    std::size_t used = 0;
    for (const auto& inst : val) {
        if (inst.observed() == 0) continue;
        const auto out = model::forward(st, inst, graph, model::Mode::Eval);
        Vector target = inst.log_demand;
        if (smoothed) target = Eigen::Map<const Vector>(inst.demand_smoothed.data(), target.size());
        fit += loss_fit(out.prediction, target, inst.mask, lcfg.delta);
        ++used;
        for (Eigen::Index i = 0; i < target.size(); ++i)
            if (inst.mask(i) > 0.5) {
                yh.push_back(out.prediction(i));
                yt.push_back(target(i));
            }
    }
    if (used == 0) return r;
    r.fit = fit / static_cast<double>(used);
    try {
        const auto n = static_cast<Eigen::Index>(yh.size());
        r.r2 = evaluation::masked_r2(Eigen::Map<Vector>(yh.data(), n), Eigen::Map<Vector>(yt.data(), n), Vector::Ones(n));
    } catch (const EvaluationError&) {
    }
    return r;
}

struct PhaseSettings {
    int phase = 0;
    double lr = 0.0;
    int epochs = 0;
    bool smoothed = false;
    bool freeze_nonlinear = false;
};

PhaseReport run_phase(model::ModelState& st, const Split& split, const TrainConfig& tcfg, const LossConfig& lcfg,
                      const PhaseSettings& ps, const EpochCallback& on_epoch) {
    tcfg.validate();
    lcfg.validate();
    if (split.train.empty() || split.val.empty()) throw InsufficientDataError("train and validation splits must be nonempty");
    PhaseReport report;
    AdamW opt(st.params);
    PlateauScheduler sched(ps.lr, tcfg.plateau_factor, tcfg.plateau_patience);
    Rng shuffle = make_stream(tcfg.seed, ps.phase == 0 ? "data.phase0" : "data.phase1");
    Rng dropout = make_stream(tcfg.seed, ps.phase == 0 ? "dropout.phase0" : "dropout.phase1");
    model::Parameters best = st.params;
    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(tcfg.batch_size);

    for (int epoch = 1; epoch <= ps.epochs; ++epoch) {
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[shuffle() % k]);
        AdamWConfig acfg{sched.lr(), tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps, tcfg.weight_decay, tcfg.clip_norm};
        LossBreakdown acc;
        std::size_t used = 0;
        bool failed = false;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::vector<const panel::WideInstance*> batch;
            for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(&split.train[order[k]]);
            BatchOptions bo;
            bo.mode = model::Mode::Train;
            bo.graph = GraphSource::Online;
            bo.smoothed_targets = ps.smoothed;
            bo.freeze_nonlinear = ps.freeze_nonlinear;
            bo.dropout_rng = &dropout;
            try {
                GradientResult g = compute_gradients(st, batch, lcfg, bo);
                if (g.used == 0) continue;
                if (!std::isfinite(g.loss.total)) throw NanGuardError("loss");
                const double w = static_cast<double>(g.used);
                acc.fit += w * g.loss.fit;
                acc.smooth += w * g.loss.smooth;
                acc.band += w * g.loss.band;
                acc.n_mask += g.loss.n_mask;
                acc.n_elast += g.loss.n_elast;
                used += g.used;
                opt.step(st.params, std::move(g.grad), acfg, ps.freeze_nonlinear);
            } catch (const NanGuardError& e) {
                report.diverged = true;
                report.message = e.what();
                failed = true;
                break;
            }
        }
        if (failed) break;
        if (used > 0) {
            const double inv = 1.0 / static_cast<double>(used);
            acc.fit *= inv;
            acc.smooth *= inv;
            acc.band *= inv;
            acc.total = acc.fit + lcfg.lambda_smooth * acc.smooth + lcfg.lambda_elast * acc.band;
        }
        const auto graph = model::freeze_graph(st, split.train);
        const ValResult val = validate_split(st, split.val, graph, lcfg, ps.smoothed);
        EpochLog log{ps.phase, epoch, sched.lr(), acc, val.fit, val.r2};
        report.epochs.push_back(log);
        if (on_epoch) on_epoch(log);
        if (!std::isfinite(val.fit)) {
            report.diverged = true;
            report.message = "non-finite validation loss";
            break;
        }
        if (val.fit < report.best_val_fit) {
            report.best_val_fit = val.fit;
            report.best_epoch = epoch;
            best = st.params;
        }
        sched.observe(val.fit);
        if (epoch - report.best_epoch >= tcfg.early_stop_patience) break;
    }
    st.params = std::move(best);
    return report;
}

}  // namespace

PhaseReport train_phase0(model::ModelState& st, const Split& split, const TrainConfig& tcfg, const LossConfig& lcfg,
                         const EpochCallback& on_epoch) {
    for (const auto* part : {&split.train, &split.val})
        for (const auto& inst : *part)
            if (inst.demand_smoothed.size() != inst.size()) throw ShapeError("phase 0 needs smoothed targets");
    return run_phase(st, split, tcfg, lcfg, {0, tcfg.lr_phase0, tcfg.epochs_phase0, true, true}, on_epoch);
}

PhaseReport train_phase1(model::ModelState& st, const Split& split, const TrainConfig& tcfg, const LossConfig& lcfg,
                         const EpochCallback& on_epoch) {
    return run_phase(st, split, tcfg, lcfg, {1, tcfg.lr_phase1, tcfg.epochs_phase1, false, false}, on_epoch);
}

TrainingResult train_model(const panel::Universe& universe, std::vector<panel::WideInstance> instances,
                           const model::ModelConfig& mcfg, const TrainConfig& tcfg, const LossConfig& lcfg,
                           const EpochCallback& on_epoch) {
    tcfg.validate();
    lcfg.validate();
    panel::attach_smoothed_targets(instances, tcfg.smoothing_window);
    TrainingResult res;
    res.split = split_by_week(std::move(instances), tcfg.val_fraction);
    res.state = model::initialize_model(mcfg, universe, res.split.train, tcfg.seed);
    prepare_phase0(res.state, tcfg);
    res.phase0 = train_phase0(res.state, res.split, tcfg, lcfg, on_epoch);
    if (!res.phase0.diverged) res.phase1 = train_phase1(res.state, res.split, tcfg, lcfg, on_epoch);
    res.state.frozen_graph = model::freeze_graph(res.state, res.split.train);
    return res;
}

double split_r2(const model::ModelState& st, std::span<const panel::WideInstance> data, const model::SparseGraph& graph,
                bool smoothed_targets) {
    std::vector<double> yh, yt;
    for (const auto& inst : data) {
        if (inst.observed() == 0) continue;
        const auto out = model::forward(st, inst, graph, model::Mode::Eval);
        for (Eigen::Index i = 0; i < inst.log_demand.size(); ++i)
            if (inst.mask(i) > 0.5) {
                yh.push_back(out.prediction(i));
                yt.push_back(smoothed_targets ? inst.demand_smoothed[static_cast<std::size_t>(i)] : inst.log_demand(i));
            }
    }
    const auto n = static_cast<Eigen::Index>(yh.size());
    return evaluation::masked_r2(Eigen::Map<Vector>(yh.data(), n), Eigen::Map<Vector>(yt.data(), n), Vector::Ones(n));
}

}  // namespace icdn::training
