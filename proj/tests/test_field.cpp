#include "fixtures.hpp"

#include "icdn/error.hpp"
#include "icdn/field.hpp"
#include "icdn/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace icdn;
using namespace icdn::field;

namespace {

ElasticityField twisted_field() {
    ElasticityField f;
    f.dimension = 3;
    f.evaluate = [](const Vector& u) {
        Matrix e = Matrix::Zero(3, 3);
        e(0, 1) = u[2];
        return e;
    };
    return f;
}

ConstantElasticityModel two_product(double own, double cross) {
    ConstantElasticityModel m;
    m.elasticity = Matrix::Zero(2, 2);
    m.elasticity(0, 0) = own;
    m.elasticity(0, 1) = cross;
    m.elasticity(1, 1) = -1.0;
    m.base_price = Vector::Constant(2, 1.5);
    m.base_demand = Vector::Constant(2, 40.0);
    return m;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

}  // namespace

TEST(Closure, ConstantFieldIsExact) {
    const auto f = as_field(two_product(-2.0, 0.3));
    EXPECT_LT(closure_residual(f, vec({0.1, -0.2}), 0), 1e-12);
}

TEST(Closure, TwistedFieldResidualIsOne) {
    EXPECT_NEAR(closure_residual(twisted_field(), vec({0.2, 0.1, -0.3}), 0), 1.0, 1e-6);
}

TEST(Closure, SurfaceJacobianIsClosed) {
    const auto s = icdn::testing::random_surface(4, 3, 11);
    const auto f = s.as_field();
    Rng rng = make_stream(2, "closure");
    for (int t = 0; t < 10; ++t) {
        Vector u(4);
        for (int i = 0; i < 4; ++i) u[i] = uniform(rng, -0.8, 0.8);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(closure_residual(f, u, i, 1e-4), 1e-3);
    }
}

TEST(IntegrateLine, DegeneratePathReturnsBaseline) {
    const auto f = as_field(two_product(-2.0, 0.3));
    const Vector u0 = vec({0.3, 0.4});
    EXPECT_EQ(integrate_line(f, 0, PricePath::straight(u0, u0), 7.5), 7.5);
}

TEST(IntegrateLine, ConstantElasticityQuarter) {
    ConstantElasticityModel m;
    m.elasticity = Matrix::Constant(1, 1, -2.0);
    m.base_price = Vector::Ones(1);
    m.base_demand = Vector::Ones(1);
    const double v = integrate_line(as_field(m), 0, PricePath::straight(vec({0.0}), vec({std::log(2.0)})), 8.0);
    EXPECT_NEAR(v, 2.0, 1e-10 * 2.0);
}

TEST(IntegrateLine, SurfaceIncrementMatchesDirectEvaluation) {
    const auto s = icdn::testing::random_surface(3, 3, 5);
    const Vector u0 = vec({-0.4, 0.1, 0.3}), u1 = vec({0.5, -0.2, 0.6});
    for (std::size_t i = 0; i < 3; ++i) {
        const double direct = 3.0 * std::exp(s.evaluate(u1)[static_cast<Eigen::Index>(i)] -
                                             s.evaluate(u0)[static_cast<Eigen::Index>(i)]);
        const double line = integrate_line(s.as_field(), i, PricePath::straight(u0, u1), 3.0);
        EXPECT_NEAR(line, direct, 1e-6 * direct);
    }
}

TEST(PathGap, ConstantFieldNoGap) {
    const auto f = as_field(two_product(-1.7, 0.4));
    EXPECT_LT(path_independence_gap(f, 0, vec({0, 0}), vec({0.5, -0.3}), 1.0), 1e-10);
}

TEST(PathGap, SurfaceFieldNoGap) {
    const auto s = icdn::testing::random_surface(3, 3, 8);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_LT(path_independence_gap(s.as_field(), i, vec({-0.5, -0.5, 0.0}), vec({0.6, 0.2, 0.7}), 1.0), 1e-6);
}

TEST(PathGap, TwistedFieldGap) {
    EXPECT_GT(path_independence_gap(twisted_field(), 0, vec({0, 0, 0}), vec({0, 1, 1}), 1.0), 0.1);
}

TEST(ConstantElasticity, BaselineAndHandCases) {
    auto m = two_product(-2.0, 0.5);
    EXPECT_NEAR(constant_elasticity_demand(m, m.base_price, 0), 40.0, 1e-12);
    const Vector p = vec({2 * 1.5, 4 * 1.5});
    EXPECT_NEAR(constant_elasticity_demand(m, p, 0), 20.0, 1e-12);
    const Vector disc = vec({1.5 * 0.5, 1.5});
    EXPECT_NEAR(constant_elasticity_demand(m, disc, 0), 160.0, 1e-10);
}

TEST(ConstantElasticity, RejectsNonPositivePrice) {
    auto m = two_product(-2.0, 0.5);
    EXPECT_THROW(constant_elasticity_demand(m, vec({0.0, 1.0}), 0), DomainError);
}
