#include "icdn/error.hpp"
#include "icdn/rng.hpp"
#include "icdn/spline.hpp"

#include <gtest/gtest.h>

#include <vector>

using namespace icdn;
using namespace icdn::spline;

TEST(SplineSpec, QuantileKnots) {
    std::vector<double> u;
    for (int k = 0; k <= 100; ++k) u.push_back(k);
    const auto s = fit_spline_spec(u, 3);
    ASSERT_EQ(s.size(), 3);
    EXPECT_NEAR(s.knots[0], 5.0, 1e-12);
    EXPECT_NEAR(s.knots[1], 50.0, 1e-12);
    EXPECT_NEAR(s.knots[2], 95.0, 1e-12);
    EXPECT_NEAR(s.mu, 50.0, 1e-12);
}

TEST(SplineSpec, ConstantInputFloorsScale) {
    const std::vector<double> u(20, 3.0);
    const auto s = fit_spline_spec(u);
    EXPECT_EQ(s.size(), kDefaultBasisCount);
    EXPECT_DOUBLE_EQ(s.mu, 3.0);
    EXPECT_DOUBLE_EQ(s.sigma, 0.2);
    for (double k : s.knots) EXPECT_DOUBLE_EQ(k, 3.0);
}

TEST(SplineSpec, TooFewValues) {
    const std::vector<double> u = {1.0};
    EXPECT_THROW(fit_spline_spec(u), InsufficientDataError);
}

TEST(SplineBasis, HandValuesUnitScale) {
    SplineSpec s{{0.0}, 0.0, 1.0};
    EXPECT_DOUBLE_EQ(eval_basis(s, 2.0, 0)[0], 8.0);
    EXPECT_DOUBLE_EQ(eval_basis(s, 2.0, 1)[0], 12.0);
    EXPECT_DOUBLE_EQ(eval_basis(s, 2.0, 2)[0], 12.0);
}

TEST(SplineBasis, HandValuesHalfScale) {
    SplineSpec s{{0.1}, 0.0, 0.5};
    const auto b = eval_all(s, 0.6);
    EXPECT_NEAR(b.value[0], 1.0, 1e-12);
    EXPECT_NEAR(b.first[0], 6.0, 1e-12);
    EXPECT_NEAR(b.second[0], 24.0, 1e-12);
}

TEST(SplineBasis, BelowKnotsIsZero) {
    SplineSpec s{{0.0, 0.5, 1.0}, 0.4, 0.3};
    for (int r = 0; r < 3; ++r) EXPECT_TRUE(eval_basis(s, -0.2, r).isZero());
}

TEST(SplineBasis, DerivativesMatchDifferences) {
    SplineSpec s{{-0.3, 0.0, 0.4}, 0.0, 0.25};
    Rng rng = make_stream(4, "spline");
    for (int t = 0; t < 50; ++t) {
        const double u = uniform(rng, -0.5, 1.0);
        const double h = 1e-6;
        const auto b = eval_all(s, u);
        const Vector d1 = (eval_basis(s, u + h, 0) - eval_basis(s, u - h, 0)) / (2 * h);
        const Vector d2 = (eval_basis(s, u + h, 1) - eval_basis(s, u - h, 1)) / (2 * h);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(b.first[k], d1[k], 1e-5 * (1 + std::abs(d1[k])));
            EXPECT_NEAR(b.second[k], d2[k], 1e-5 * (1 + std::abs(d2[k])));
        }
    }
}

TEST(SplineBasis, RejectsBadOrder) {
    SplineSpec s{{0.0}, 0.0, 1.0};
    EXPECT_THROW(eval_basis(s, 0.0, 3), DomainError);
}
