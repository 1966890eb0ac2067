#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <spingap/single_site.hpp>

using namespace spingap;

namespace {

PotentialSpec pure_quartic() { return make_potential(Polynomial{{0.0, 0.0, 0.0, 0.0, 1.0}}); }

}  // namespace

TEST(ChemicalPotential, GaussianClosedForm) {
    for (double rho : {-7.5, -1.0, 0.0, 0.3, 4.0}) {
        const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), rho);
        EXPECT_NEAR(tm.lambda, -rho, 1e-10);
        EXPECT_NEAR(tm.sigma2, 1.0, 1e-10);
        EXPECT_NEAR(tm.moments[1], 0.0, 1e-12);
        EXPECT_NEAR(tm.moments[4], 3.0, 1e-9);
        EXPECT_NEAR(tm.log_z, 0.5 * std::log(2 * std::numbers::pi) - rho * rho / 2, 1e-9);
    }
}

TEST(ChemicalPotential, PureQuarticOracles) {
    // Gamma(3/4)/Gamma(1/4) and an mpmath root of the mean condition
    const TiltedMeasure t0 = solve_chemical_potential(pure_quartic(), 0.0);
    EXPECT_NEAR(t0.lambda, 0.0, 1e-12);
    EXPECT_NEAR(t0.sigma2, 0.337989120033642364, 1e-11);
    const TiltedMeasure t1 = solve_chemical_potential(pure_quartic(), 1.0);
    EXPECT_NEAR(t1.lambda, -5.01304511692270675574, 1e-9);
    EXPECT_NEAR(t1.sigma2, 0.0904636317767683972, 1e-11);
}

TEST(ChemicalPotential, QuarticCosineMoments) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 1.0);
    EXPECT_NEAR(tm.lambda, -1.56867741471157154752, 1e-9);
    EXPECT_NEAR(tm.sigma2, 0.498896029711896267, 1e-10);
    EXPECT_NEAR(tm.moments[3], -0.187074027949282234, 1e-10);
    EXPECT_NEAR(tm.moments[4], 0.802361149952078476, 1e-10);
}

TEST(ChemicalPotential, RejectsBadInput) {
    EXPECT_THROW(solve_chemical_potential(gaussian_potential(), std::numeric_limits<double>::quiet_NaN()),
                 std::invalid_argument);
    SolverOptions o;
    o.tol = 0.0;
    EXPECT_THROW(solve_chemical_potential(gaussian_potential(), 0.0, o), std::invalid_argument);
}

TEST(ChemicalPotential, QuadratureMassConverged) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), -12.0);
    EXPECT_NEAR(tm.moments[0], 1.0, 1e-12);
    EXPECT_NEAR(tm.moments[1], 0.0, 1e-12);
}

TEST(SigmaBounds, QuarticBracketsHold) {
    std::vector<double> grid;
    for (int i = -30; i <= 30; i += 5) grid.push_back(i);
    const SigmaBoundReport r = verify_sigma_bounds(quartic_potential(0.3), grid);
    EXPECT_TRUE(r.all_brackets_ok);
    EXPECT_GT(r.min_product, 0.0);
    EXPECT_TRUE(std::isfinite(r.observed_k));
    for (const auto& row : r.rows) {
        EXPECT_LE(row.jensen_lower, row.convex_sigma2 * (1 + 1e-9));
        EXPECT_GE(row.bl_upper, row.convex_sigma2 * (1 - 1e-9));
    }
    EXPECT_THROW(verify_sigma_bounds(gaussian_potential(), {}), std::invalid_argument);
}

TEST(MomentBounds, HoldWithCosinePerturbation) {
    const MomentBoundReport r = verify_moment_bounds(quartic_potential(0.3), {-20.0, -3.0, 0.0, 1.0, 20.0}, 4);
    EXPECT_NEAR(r.k, 12.0 * std::exp(1.8), 1e-12);
    EXPECT_TRUE(r.all_within);
    // Gaussian: m_4 / sigma^4 = 3
    const MomentBoundReport g = verify_moment_bounds(gaussian_potential(), {0.0}, 2);
    EXPECT_NEAR(g.max_ratio, 3.0, 1e-8);
}

TEST(Tail, GaussianTwoSided) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 0.5);
    const TailReport r = tail_estimate(tm, {0.0, 2.0});
    EXPECT_NEAR(r.tail[0], 1.0, 1e-12);
    EXPECT_NEAR(r.tail[1], 0.0455002638963584144, 1e-12);
    EXPECT_GT(r.fitted_c, 0.0);
    EXPECT_THROW(tail_estimate(tm, {-1.0}), std::invalid_argument);
}

TEST(CharFunction, GaussianDecay) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 0.0);
    const auto v = char_function(tm, {0.0, 1.0, 2.5});
    EXPECT_NEAR(std::abs(v[0]), 1.0, 1e-13);
    EXPECT_NEAR(std::abs(v[1]), std::exp(-0.5), 1e-12);
    EXPECT_NEAR(std::abs(v[2]), std::exp(-3.125), 1e-12);
    const CharFunctionBounds b = char_function_bounds(tm, 0.5, 10.0);
    EXPECT_NEAR(b.c_eps, std::exp(-0.125), 1e-10);
    EXPECT_LT(b.decay_c, 1.0);
}

TEST(SmoothedPower, VarianceGrowsLikeSqrtRho) {
    const PotentialSpec p = smoothed_power_potential(0.5);
    const double s10 = solve_chemical_potential(p, 10.0).sigma2;
    const double s300 = solve_chemical_potential(p, 300.0).sigma2;
    EXPECT_NEAR(std::log(s300 / s10) / std::log(30.0), 0.5, 0.15);
}
