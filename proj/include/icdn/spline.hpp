#pragma once

// Per-product truncated-power cubic spline bases on log prices.

#include "icdn/linalg.hpp"

#include <span>
#include <vector>

namespace icdn::spline {

inline constexpr double kMinScale = 0.2;
inline constexpr int kDefaultBasisCount = 3;

struct SplineSpec {
    std::vector<double> knots;  // original log-price scale, nondecreasing
    double mu = 0.0;
    double sigma = kMinScale;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(knots.size()); }
};

// Knots at empirical quantiles tau_k equally spaced on [0.05, 0.95] (the median
// for K = 1); mu = mean, sigma = max(sample sd, 0.2). Throws
// InsufficientDataError for fewer than two finite values.
SplineSpec fit_spline_spec(std::span<const double> train_u, int basis_count = kDefaultBasisCount);

// Component k: 3!/(3-r)! * sigma^-r * max(0, (u - knot_k)/sigma)^(3-r), r in {0,1,2}.
Vector eval_basis(const SplineSpec& spec, double u, int order);

struct BasisValues {
    Vector value;  // B
    Vector first;  // B'
    Vector second; // B''
};
BasisValues eval_all(const SplineSpec& spec, double u);

}  // namespace icdn::spline
