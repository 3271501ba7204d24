#include "icdn/error.hpp"
#include "icdn/training.hpp"

#include <cmath>

namespace icdn::training {

void LossConfig::validate() const {
    if (!(delta > 0.0)) throw ConfigError("Huber delta must be positive");
    if (lambda_smooth < 0.0 || lambda_elast < 0.0) throw ConfigError("loss weights must be nonnegative");
    if (!(own_lo < own_hi)) throw ConfigError("own band must satisfy lo < hi");
    if (!(cross_lo < cross_hi)) throw ConfigError("cross band must satisfy lo < hi");
}

double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

namespace {

std::size_t observed_count(const Vector& mask) {
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i)
        if (mask(i) > 0.5) ++n;
    return n;
}

}  // namespace

double loss_fit(const Vector& yhat, const Vector& y, const Vector& mask, double delta) {
    if (yhat.size() != y.size() || y.size() != mask.size()) throw ShapeError("loss_fit: length mismatch");
    const std::size_t nm = observed_count(mask);
    if (nm == 0) throw InsufficientDataError("loss_fit: no observed entries");
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (mask(i) > 0.5) s += huber(yhat(i) - y(i), delta);
    return s / static_cast<double>(nm);
}

double loss_smooth(const Vector& kappa, const Vector& mask) {
    if (kappa.size() != mask.size()) throw ShapeError("loss_smooth: length mismatch");
    const std::size_t nm = observed_count(mask);
    if (nm == 0) throw InsufficientDataError("loss_smooth: no observed entries");
    double s = 0.0;
    for (Eigen::Index i = 0; i < kappa.size(); ++i)
        if (mask(i) > 0.5) s += kappa(i) * kappa(i);
    return s / static_cast<double>(nm);
}

double loss_band(std::span<const BandEntry> entries) {
    if (entries.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : entries) {
        const double over = std::max(0.0, e.value - e.hi);
        const double under = std::max(0.0, e.lo - e.value);
        s += over * over + under * under;
    }
    return s / static_cast<double>(entries.size());
}

std::vector<BandEntry> band_entries(const model::ForwardOutput& out, const Vector& mask, const LossConfig& cfg) {
    std::vector<BandEntry> entries;
    const auto n = static_cast<int>(out.surface.size());
    for (int i = 0; i < n; ++i) {
        if (mask(i) < 0.5) continue;
        entries.push_back({model::elasticity_own(out, i), cfg.own_lo, cfg.own_hi});
        for (int e : out.surface.edges_of()[static_cast<std::size_t>(i)]) {
            const auto& ed = out.surface.edges()[static_cast<std::size_t>(e)];
            if (mask(ed.other) < 0.5) continue;
            entries.push_back({*model::elasticity_cross(out, i, ed.other), cfg.cross_lo, cfg.cross_hi});
        }
    }
    return entries;
}

LossBreakdown instance_loss(const model::ForwardOutput& out, const Vector& target, const Vector& mask,
                            const LossConfig& cfg) {
    LossBreakdown lb;
    lb.n_mask = observed_count(mask);
    if (lb.n_mask == 0) return lb;
    lb.fit = loss_fit(out.prediction, target, mask, cfg.delta);
    Vector kappa(mask.size());
    for (Eigen::Index i = 0; i < mask.size(); ++i) kappa(i) = model::curvature(out, static_cast<int>(i));
    lb.smooth = loss_smooth(kappa, mask);
    const auto entries = band_entries(out, mask, cfg);
    lb.n_elast = entries.size();
    lb.band = loss_band(entries);
    lb.total = lb.fit + cfg.lambda_smooth * lb.smooth + cfg.lambda_elast * lb.band;
    return lb;
}

}  // namespace icdn::training
