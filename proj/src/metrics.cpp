#include "icdn/error.hpp"
#include "icdn/evaluation.hpp"
#include "icdn/stats.hpp"

#include <algorithm>
#include <cmath>

namespace icdn::evaluation {

double masked_r2(const Vector& yhat, const Vector& y, const Vector& mask) {
    if (yhat.size() != y.size() || y.size() != mask.size()) throw ShapeError("masked_r2: length mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (mask(i) > 0.5) {
            sum += y(i);
            ++n;
        }
    if (n < 2) throw EvaluationError("R^2 needs at least two observed entries");
    const double ybar = sum / static_cast<double>(n);
    double sse = 0.0, sst = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (mask(i) < 0.5) continue;
        sse += (y(i) - yhat(i)) * (y(i) - yhat(i));
        sst += (y(i) - ybar) * (y(i) - ybar);
    }
    if (!(sst > 0.0)) throw EvaluationError("R^2 undefined: observed targets have zero variance");
    return 1.0 - sse / sst;
}

ErrorSummary masked_mae_rmse(const Vector& yhat, const Vector& y, const Vector& mask) {
    if (yhat.size() != y.size() || y.size() != mask.size()) throw ShapeError("masked_mae_rmse: length mismatch");
    double abs_sum = 0.0, sq_sum = 0.0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (mask(i) < 0.5) continue;
        const double r = yhat(i) - y(i);
        abs_sum += std::abs(r);
        sq_sum += r * r;
        ++n;
    }
    if (n == 0) throw EvaluationError("empty mask");
    return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
}

ElasticityScore elasticity_score(std::span<const double> own, std::span<const double> cross, double beta_eda) {
    if (own.empty()) throw EvaluationError("elasticity score needs at least one own-price elasticity");
    if (beta_eda == 0.0) throw DomainError("beta_eda must be nonzero");
    ElasticityScore s;
    const auto in_range = [](std::span<const double> xs, double lo, double hi) {
        std::size_t k = 0;
        for (double x : xs)
            if (x >= lo && x <= hi) ++k;
        return static_cast<double>(k) / static_cast<double>(xs.size());
    };
    s.p_own = in_range(own, -5.0, 0.0);
    const double med = stats::median(std::vector<double>(own.begin(), own.end()));
    s.p_prior = std::min(std::max(0.0, std::abs(med - beta_eda) - kPriorTolerance) / std::abs(beta_eda), 1.0);
    s.s_own = s.p_own * (1.0 - s.p_prior);
    s.s_cross = cross.empty() ? 1.0 : in_range(cross, -1.0, 1.0);
    s.s_elast = 0.7 * s.s_own + 0.3 * s.s_cross;
    return s;
}

double robust_aggregate(std::span<const double> values) {
    if (values.empty()) throw EvaluationError("robust aggregate of an empty set");
    return stats::mean(values) - 0.25 * stats::sample_sd(values);
}

TrialSummary TrialSummary::from_evaluations(int id, std::vector<double> r2, std::vector<double> s_elast) {
    TrialSummary t;
    t.id = id;
    t.r2 = std::move(r2);
    t.s_elast = std::move(s_elast);
    t.r2_robust = robust_aggregate(t.r2);
    t.s_elast_robust = robust_aggregate(t.s_elast);
    t.s_select = t.r2_robust + t.s_elast_robust;
    return t;
}

int select_trial(std::span<const TrialSummary> trials) {
    if (trials.empty()) throw EvaluationError("no completed trials");
    const TrialSummary* best = &trials.front();
    for (const auto& t : trials)
        if (t.s_select > best->s_select || (t.s_select == best->s_select && t.id < best->id)) best = &t;
    return best->id;
}

}  // namespace icdn::evaluation
