#include "icdn/field.hpp"

#include "icdn/error.hpp"

#include <cmath>
#include <sstream>

namespace icdn::field {

namespace {

std::string describe(const Vector& u) {
    std::ostringstream os;
    os << '(';
    for (Eigen::Index k = 0; k < u.size(); ++k) os << (k ? ", " : "") << u[k];
    os << ')';
    return os.str();
}

Vector checked_row(const ElasticityField& f, const Vector& u, std::size_t i) {
    Vector r = f.row(u, i);
    if (!r.allFinite()) throw EvaluationError("non-finite elasticity at u = " + describe(u));
    return r;
}

// Trapezoid rule on one linear segment with `m` subdivisions.
double trapezoid(const ElasticityField& f, std::size_t i, const Vector& a, const Vector& b, long long m) {
    const Vector delta = b - a;
    double sum = 0.0;
    for (long long k = 0; k <= m; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(m);
        const double w = (k == 0 || k == m) ? 0.5 : 1.0;
        sum += w * checked_row(f, a + t * delta, i).dot(delta);
    }
    return sum / static_cast<double>(m);
}

}  // namespace

Vector ElasticityField::row(const Vector& u, std::size_t i) const {
    if (evaluate_row) return evaluate_row(u, i);
    return evaluate(u).row(static_cast<Eigen::Index>(i)).transpose();
}

PricePath PricePath::straight(const Vector& from, const Vector& to) { return PricePath{{from, to}}; }

PricePath PricePath::staircase(const Vector& from, const Vector& to) {
    PricePath p;
    p.waypoints.push_back(from);
    Vector cur = from;
    for (Eigen::Index k = 0; k < from.size(); ++k) {
        if (cur[k] == to[k]) continue;
        cur[k] = to[k];
        p.waypoints.push_back(cur);
    }
    if (p.waypoints.size() == 1) p.waypoints.push_back(to);
    return p;
}

double closure_residual(const ElasticityField& field, const Vector& u, std::size_t row, double step) {
    const auto n = static_cast<Eigen::Index>(field.dimension);
    if (u.size() != n) throw ShapeError("closure_residual: u has wrong dimension");
    checked_row(field, u, row);
    // jac(j, k) = d E_{row j} / d u_k
    Matrix jac(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        Vector up = u, dn = u;
        up[k] += step;
        dn[k] -= step;
        jac.col(k) = (checked_row(field, up, row) - checked_row(field, dn, row)) / (2.0 * step);
    }
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k) worst = std::max(worst, std::abs(jac(j, k) - jac(k, j)));
    return worst;
}

double integrate_log_demand(const ElasticityField& field, std::size_t row, const PricePath& path,
                            const QuadratureOptions& opts) {
    if (path.waypoints.size() < 2) throw DomainError("price path needs at least two waypoints");
    for (const auto& w : path.waypoints)
        if (!w.allFinite()) throw DomainError("price path waypoint is not finite");
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < path.waypoints.size(); ++s) {
        const auto& a = path.waypoints[s];
        const auto& b = path.waypoints[s + 1];
        if ((b - a).squaredNorm() == 0.0) continue;
        long long m = std::max(1, opts.initial_segments);
        double prev = trapezoid(field, row, a, b, m);
        for (;;) {
            if (2 * m > opts.max_segments) throw QuadratureError(prev, prev);
            m *= 2;
            const double next = trapezoid(field, row, a, b, m);
            if (std::abs(next - prev) <= opts.tolerance) {
                prev = next;
                break;
            }
            if (2 * m > opts.max_segments) throw QuadratureError(prev, next);
            prev = next;
        }
        total += prev;
    }
    return total;
}

double integrate_line(const ElasticityField& field, std::size_t row, const PricePath& path, double v0,
                      const QuadratureOptions& opts) {
    if (!(v0 > 0.0)) throw DomainError("baseline demand must be positive");
    return v0 * std::exp(integrate_log_demand(field, row, path, opts));
}

double path_independence_gap(const ElasticityField& field, std::size_t row, const Vector& from, const Vector& to,
                             double v0, const QuadratureOptions& opts) {
    const double straight = integrate_line(field, row, PricePath::straight(from, to), v0, opts);
    const double stairs = integrate_line(field, row, PricePath::staircase(from, to), v0, opts);
    return std::abs(straight - stairs) / straight;
}

void ConstantElasticityModel::validate() const {
    const auto n = elasticity.rows();
    if (elasticity.cols() != n || base_price.size() != n || base_demand.size() != n)
        throw ShapeError("constant-elasticity model dimensions disagree");
    if ((base_price.array() <= 0.0).any() || (base_demand.array() <= 0.0).any())
        throw DomainError("baseline prices and demands must be positive");
}

double constant_elasticity_demand(const ConstantElasticityModel& model, const Vector& price, std::size_t row) {
    model.validate();
    if (price.size() != model.base_price.size()) throw ShapeError("price vector has wrong dimension");
    if ((price.array() <= 0.0).any()) throw DomainError("prices must be positive");
    const auto i = static_cast<Eigen::Index>(row);
    double log_v = std::log(model.base_demand[i]);
    for (Eigen::Index j = 0; j < price.size(); ++j)
        log_v += model.elasticity(i, j) * std::log(price[j] / model.base_price[j]);
    return std::exp(log_v);
}

ElasticityField as_field(const ConstantElasticityModel& model) {
    model.validate();
    ElasticityField f;
    f.dimension = static_cast<std::size_t>(model.elasticity.rows());
    const Matrix e = model.elasticity;
    f.evaluate = [e](const Vector&) { return e; };
    f.evaluate_row = [e](const Vector&, std::size_t i) -> Vector {
        return e.row(static_cast<Eigen::Index>(i)).transpose();
    };
    return f;
}

}  // namespace icdn::field
