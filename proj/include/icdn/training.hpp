#pragma once

// Composite objective, hand-derived gradients through the structured surface,
// AdamW with decay groups, and the warm-start -> full training protocol.

#include "icdn/model.hpp"

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace icdn::training {

struct LossConfig {
    double delta = 1.0;  // Huber threshold
    double lambda_smooth = 3.514e-2;
    double lambda_elast = 4.450e-2;
    double own_lo = -5.0, own_hi = 0.0;
    double cross_lo = -1.0, cross_hi = 1.0;

    void validate() const;
};

struct TrainConfig {
    int batch_size = 256;
    double lr_phase0 = 1.686e-3;
    double lr_phase1 = 1.625e-3;
    double weight_decay = 1e-2;
    double clip_norm = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double plateau_factor = 0.5;
    int plateau_patience = 5;
    int epochs_phase0 = 50;
    int epochs_phase1 = 100;
    int early_stop_patience = 15;
    double beta_eda = -2.0;
    int smoothing_window = 8;
    double val_fraction = 0.2;  // trailing share of weeks held out for validation
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossBreakdown {
    double fit = 0.0;
    double smooth = 0.0;
    double band = 0.0;
    double total = 0.0;
    std::size_t n_mask = 0;    // N_m summed over contributing instances
    std::size_t n_elast = 0;   // N_E summed over contributing instances
};

double huber(double r, double delta);

// (1/N_m) sum m_i Huber(yhat_i - y_i). Throws InsufficientDataError if N_m = 0.
double loss_fit(const Vector& yhat, const Vector& y, const Vector& mask, double delta);
// (1/N_m) sum m_i kappa_i^2.
double loss_smooth(const Vector& kappa, const Vector& mask);

struct BandEntry {
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};
// Mean squared band violation; 0 for an empty set.
double loss_band(std::span<const BandEntry> entries);

// Own entries for observed products and cross entries on graph edges whose two
// endpoints are observed.
std::vector<BandEntry> band_entries(const model::ForwardOutput& out, const Vector& mask, const LossConfig& cfg);

// Per-instance loss. `n_mask == 0` marks a skipped instance.
LossBreakdown instance_loss(const model::ForwardOutput& out, const Vector& target, const Vector& mask,
                            const LossConfig& cfg);

enum class GraphSource { Online, Frozen };

struct BatchOptions {
    model::Mode mode = model::Mode::Eval;
    GraphSource graph = GraphSource::Online;
    const model::SparseGraph* frozen = nullptr;  // required for GraphSource::Frozen
    bool smoothed_targets = false;
    bool freeze_nonlinear = false;  // zero gradient on spline and interaction heads
    Rng* dropout_rng = nullptr;
};

struct GradientResult {
    LossBreakdown loss;            // batch means over contributing instances
    model::Parameters grad;
    std::size_t used = 0;
    std::size_t skipped = 0;       // instances with no observed product
    model::SparseGraph graph;      // graph the batch was evaluated on
};

// Gradient of the batch-mean total loss with respect to every parameter block.
// Graph selection is treated as fixed (piecewise constant in the parameters).
GradientResult compute_gradients(const model::ModelState& state, std::span<const panel::WideInstance* const> batch,
                                 const LossConfig& cfg, const BatchOptions& opts);

// Same objective without gradients.
LossBreakdown batch_loss(const model::ModelState& state, std::span<const panel::WideInstance* const> batch,
                         const LossConfig& cfg, const BatchOptions& opts);

// --- optimizer ----------------------------------------------------------------

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    double clip_norm = 1.0;  // <= 0 disables clipping
};

double global_norm(const model::Parameters& grad, bool skip_nonlinear = false);
// Scales `grad` in place so its global norm is at most `max_norm`; returns the
// norm before clipping.
double clip_gradients(model::Parameters& grad, double max_norm, bool skip_nonlinear = false);

class AdamW {
public:
    explicit AdamW(const model::Parameters& like);

    // Clips, then applies one decoupled-decay Adam step. Frozen blocks are not
    // touched at all.
    void step(model::Parameters& params, model::Parameters grad, const AdamWConfig& cfg, bool freeze_nonlinear);
    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    model::Parameters m_, v_;
    long t_ = 0;
};

class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor, int patience) : lr_(lr), factor_(factor), patience_(patience) {}
    // Returns the learning rate for the next epoch.
    double observe(double metric);
    [[nodiscard]] double lr() const noexcept { return lr_; }

private:
    double lr_;
    double factor_;
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_ = 0;
};

// --- protocol -------------------------------------------------------------

struct Split {
    std::vector<panel::WideInstance> train;
    std::vector<panel::WideInstance> val;
};
// Trailing `val_fraction` of distinct weeks go to validation (at least one
// week on each side).
Split split_by_week(std::vector<panel::WideInstance> instances, double val_fraction);

struct EpochLog {
    int phase = 0;
    int epoch = 0;
    double lr = 0.0;
    LossBreakdown train;
    double val_fit = 0.0;
    double val_r2 = 0.0;
};
std::string to_json_line(const EpochLog& log);

struct PhaseReport {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_val_fit = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::string message;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Zero own-slope weights, own-slope bias at inverse-softplus(-beta_eda), and
// zeroed spline / interaction heads.
void prepare_phase0(model::ModelState& state, const TrainConfig& cfg);

// Both phases keep the best-validation parameters in `state`. Phase 0 expects
// `demand_smoothed` on every instance of the split.
PhaseReport train_phase0(model::ModelState& state, const Split& split, const TrainConfig& tcfg,
                         const LossConfig& lcfg, const EpochCallback& on_epoch = {});
PhaseReport train_phase1(model::ModelState& state, const Split& split, const TrainConfig& tcfg,
                         const LossConfig& lcfg, const EpochCallback& on_epoch = {});

struct TrainingResult {
    model::ModelState state;
    Split split;
    PhaseReport phase0;
    PhaseReport phase1;
};

// initialize -> Phase 0 -> Phase 1 -> freeze_graph on the training split.
TrainingResult train_model(const panel::Universe& universe, std::vector<panel::WideInstance> instances,
                           const model::ModelConfig& mcfg, const TrainConfig& tcfg, const LossConfig& lcfg,
                           const EpochCallback& on_epoch = {});

// Pooled masked R^2 of eval-mode predictions on `data` under `graph`.
double split_r2(const model::ModelState& state, std::span<const panel::WideInstance> data,
                const model::SparseGraph& graph, bool smoothed_targets = false);

}  // namespace icdn::training
