#pragma once

// Elasticity fields as 1-forms in log-price space: closure (integrability)
// residuals, line-integral demand reconstruction, and the constant-elasticity
// closed form.

#include "icdn/linalg.hpp"

#include <functional>
#include <vector>

namespace icdn::field {

// Maps a log-price vector u to the n x n elasticity matrix E(u) for a fixed
// context. The callable must be safe to invoke concurrently.
struct ElasticityField {
    std::size_t dimension = 0;
    std::function<Matrix(const Vector&)> evaluate;
    // Row-only evaluation; defaults to evaluate(u).row(i) when empty.
    std::function<Vector(const Vector&, std::size_t)> evaluate_row;

    [[nodiscard]] Vector row(const Vector& u, std::size_t i) const;
};

struct PricePath {
    std::vector<Vector> waypoints;  // traversed linearly, segment by segment

    static PricePath straight(const Vector& from, const Vector& to);
    // Moves one coordinate at a time in ascending index order.
    static PricePath staircase(const Vector& from, const Vector& to);
};

struct QuadratureOptions {
    int initial_segments = 16;       // subdivisions per path segment
    double tolerance = 1e-8;         // on the log-demand increment (relative on demand)
    long long max_segments = 1LL << 20;
};

inline constexpr double kDefaultClosureStep = 1e-3;

// max_{j,k} |d E_ij / d u_k - d E_ik / d u_j| by central differences.
double closure_residual(const ElasticityField& field, const Vector& u, std::size_t row,
                        double step = kDefaultClosureStep);

// Log-demand increment: composite-trapezoid line integral of omega_i along the path.
double integrate_log_demand(const ElasticityField& field, std::size_t row, const PricePath& path,
                            const QuadratureOptions& opts = {});

// v0 * exp(line integral of omega_i along path).
double integrate_line(const ElasticityField& field, std::size_t row, const PricePath& path, double v0,
                      const QuadratureOptions& opts = {});

// Relative gap between straight-line and staircase reconstructions.
double path_independence_gap(const ElasticityField& field, std::size_t row, const Vector& from, const Vector& to,
                             double v0, const QuadratureOptions& opts = {});

struct ConstantElasticityModel {
    Matrix elasticity;  // diagonal = own, off-diagonal = cross
    Vector base_price;
    Vector base_demand;

    void validate() const;
};

double constant_elasticity_demand(const ConstantElasticityModel& model, const Vector& price, std::size_t row);
ElasticityField as_field(const ConstantElasticityModel& model);

}  // namespace icdn::field
