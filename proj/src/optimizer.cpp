#include "icdn/error.hpp"
#include "icdn/training.hpp"

#include <cmath>

namespace icdn::training {

double global_norm(const model::Parameters& grad, bool skip_nonlinear) {
    double s = 0.0;
    grad.visit([&](const std::string&, const Matrix& m, model::BlockInfo info) {
        if (skip_nonlinear && info.nonlinear_head) return;
        s += m.squaredNorm();
    });
    return std::sqrt(s);
}

double clip_gradients(model::Parameters& grad, double max_norm, bool skip_nonlinear) {
    const double norm = global_norm(grad, skip_nonlinear);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        grad.visit([&](const std::string&, Matrix& m, model::BlockInfo info) {
            if (skip_nonlinear && info.nonlinear_head) return;
            m *= scale;
        });
    }
    return norm;
}

AdamW::AdamW(const model::Parameters& like) : m_(like.zeros_like()), v_(like.zeros_like()) {}

void AdamW::step(model::Parameters& params, model::Parameters grad, const AdamWConfig& cfg, bool freeze_nonlinear) {
    clip_gradients(grad, cfg.clip_norm, freeze_nonlinear);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));

    std::vector<Matrix*> gs, ms, vs;
    grad.visit([&](const std::string&, Matrix& m, model::BlockInfo) { gs.push_back(&m); });
    m_.visit([&](const std::string&, Matrix& m, model::BlockInfo) { ms.push_back(&m); });
    v_.visit([&](const std::string&, Matrix& m, model::BlockInfo) { vs.push_back(&m); });
    std::size_t k = 0;
    params.visit([&](const std::string&, Matrix& w, model::BlockInfo info) {
        const std::size_t b = k++;
        if (freeze_nonlinear && info.nonlinear_head) return;
        Matrix& g = *gs[b];
        Matrix& m = *ms[b];
        Matrix& v = *vs[b];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        if (info.decay && cfg.weight_decay > 0.0) w *= 1.0 - cfg.lr * cfg.weight_decay;
        w.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    });
}

double PlateauScheduler::observe(double metric) {
    if (metric < best_) {
        best_ = metric;
        bad_ = 0;
    } else if (++bad_ > patience_) {
        lr_ *= factor_;
        bad_ = 0;
    }
    return lr_;
}

}  // namespace icdn::training
