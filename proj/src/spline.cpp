#include "icdn/spline.hpp"

#include "icdn/error.hpp"
#include "icdn/stats.hpp"

#include <algorithm>
#include <cmath>

namespace icdn::spline {

SplineSpec fit_spline_spec(std::span<const double> train_u, int basis_count) {
    if (basis_count < 1) throw DomainError("spline basis count must be >= 1");
    std::vector<double> values;
    for (double v : train_u)
        if (std::isfinite(v)) values.push_back(v);
    if (values.size() < 2) throw InsufficientDataError("spline spec needs at least two finite log prices");
    std::sort(values.begin(), values.end());

    SplineSpec spec;
    spec.knots.resize(static_cast<std::size_t>(basis_count));
    for (int k = 0; k < basis_count; ++k) {
        const double tau = basis_count == 1 ? 0.5 : 0.05 + 0.9 * k / (basis_count - 1);
        spec.knots[static_cast<std::size_t>(k)] = stats::quantile_sorted(values, tau);
    }
    spec.mu = stats::mean(values);
    spec.sigma = std::max(stats::sample_sd(values), kMinScale);
    return spec;
}

Vector eval_basis(const SplineSpec& spec, double u, int order) {
    if (order < 0 || order > 2) throw DomainError("spline derivative order must be 0, 1 or 2");
    const int K = spec.size();
    Vector out(K);
    const double inv = 1.0 / spec.sigma;
    for (int k = 0; k < K; ++k) {
        const double z = std::max(0.0, (u - spec.knots[static_cast<std::size_t>(k)]) * inv);
        switch (order) {
            case 0: out[k] = z * z * z; break;
            case 1: out[k] = 3.0 * inv * z * z; break;
            default: out[k] = 6.0 * inv * inv * z; break;
        }
    }
    return out;
}

BasisValues eval_all(const SplineSpec& spec, double u) {
    const int K = spec.size();
    BasisValues b{Vector(K), Vector(K), Vector(K)};
    const double inv = 1.0 / spec.sigma;
    for (int k = 0; k < K; ++k) {
        const double z = std::max(0.0, (u - spec.knots[static_cast<std::size_t>(k)]) * inv);
        b.value[k] = z * z * z;
        b.first[k] = 3.0 * inv * z * z;
        b.second[k] = 6.0 * inv * inv * z;
    }
    return b;
}

}  // namespace icdn::spline
