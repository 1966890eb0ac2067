#include <gtest/gtest.h>

#include <cmath>

#include <spingap/gap.hpp>

using namespace spingap;

namespace {

KOperator make_k(const PotentialSpec& pot, double rho, int n) {
    KBuildOptions o;
    o.cross_check = false;
    return build_k(solve_chemical_potential(pot, rho), n, o);
}

}  // namespace

TEST(ExactGap, GaussianIsOne) {
    for (int n : {2, 3})
        for (double rho : {-2.0, 0.0, 5.0}) EXPECT_NEAR(exact_gap_small_n(gaussian_potential(), n, rho).value, 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(quadratic_gap(make_potential(Quadratic{2.0}), 7, 1.0).value, 0.25);
}

TEST(ExactGap, EvenPotentialIsSymmetricInRho) {
    const PotentialSpec p = quartic_potential(0.3);
    for (int n : {2, 3})
        EXPECT_NEAR(exact_gap_small_n(p, n, 2.5).value, exact_gap_small_n(p, n, -2.5).value, 1e-9);
}

TEST(ExactGap, QuadraticPerturbationOfDimensionTwo) {
    // N = 2, V = x^2/2 + c cos x at rho = 0: slice coordinate t, eta = +-t/sqrt2,
    // so the constant is below 1/(1 - c) and above 1/(1 + c)
    const PotentialSpec p = make_potential(Quadratic{0.5}, Cosine{0.2, 1.0});
    const double g = exact_gap_small_n(p, 2, 0.0).value;
    EXPECT_LT(g, 1.0 / 0.8);
    EXPECT_GT(g, 1.0 / 1.2);
}

TEST(ExactGap, RejectsBadInput) {
    EXPECT_THROW(exact_gap_small_n(gaussian_potential(), 4, 0.0), std::invalid_argument);
    SliceOptions o;
    o.resolution = 8;
    EXPECT_THROW(exact_gap_small_n(gaussian_potential(), 2, 0.0, o), std::invalid_argument);
    EXPECT_THROW(quadratic_gap(quartic_potential(), 2, 0.0), std::invalid_argument);
}

TEST(Identities, HoldAgainstDirectSumsAtNThree) {
    const KOperator k = make_k(quartic_potential(0.3), 1.0, 3);
    const IdentityReport r = verify_variance_decomposition(k, random_trials(k, 5, 11));
    EXPECT_TRUE(r.used_direct_oracle);
    EXPECT_LT(r.max_residual, 1e-8);
    for (const char* name : {"ccl2", "gag1", "gag2", "gag3", "gag4", "gag5", "gag6", "cond_expectation"})
        EXPECT_TRUE(r.residuals.count(name)) << name;
}

TEST(Identities, HoldAtLargerN) {
    const KOperator k = make_k(quartic_potential(0.3), 0.0, 6);
    const IdentityReport r = verify_variance_decomposition(k, random_trials(k, 5, 3));
    EXPECT_FALSE(r.used_direct_oracle);
    EXPECT_LT(r.max_residual, 1e-10);
}

TEST(Identities, ConservationKillsSymmetricXi) {
    const KOperator k = make_k(quartic_potential(0.3), 1.0, 5);
    const Eigen::VectorXd xi = center(k, k.xi());
    const SymmetricLift f = SymmetricLift::from(std::vector<Eigen::VectorXd>(5, xi));
    const POperator p(k);
    EXPECT_NEAR(p.inner(f, f), 0.0, 1e-10 * k.inner(xi, xi));
}

TEST(Identities, RejectsWrongComponentCount) {
    const KOperator k = make_k(gaussian_potential(), 0.0, 4);
    const SymmetricLift f = SymmetricLift::from({k.xi(), k.xi()});
    EXPECT_THROW(verify_variance_decomposition(k, {f}), std::invalid_argument);
}

TEST(PGap, GaussianSectorsFromHermiteEigenvalues) {
    const int n = 8;
    const KOperator k = make_k(gaussian_potential(), 0.0, n);
    const PGapReport r = verify_p_gap(k);
    EXPECT_NEAR(r.s_ratio, (n - 1.0) / n * (1.0 - 1.0 / ((n - 1.0) * (n - 1.0))), 1e-8);
    EXPECT_NEAR(r.orth_ratio, (n - 2.0) / (n - 1.0), 1e-10);
    EXPECT_TRUE(r.s_ok);
    EXPECT_TRUE(r.orth_ok);
}

TEST(PGap, OrthogonalSectorBound) {
    for (int n : {4, 8}) {
        const PGapReport r = verify_p_gap(make_k(quartic_potential(0.3), 1.0, n), 2.0);
        EXPECT_TRUE(r.orth_ok);
        EXPECT_TRUE(r.s_ok);
        EXPECT_DOUBLE_EQ(r.c_used, 2.0);
    }
}

TEST(PGap, SpectrumLiesInUnitInterval) {
    const KOperator k = make_k(quartic_potential(0.3), 0.5, 3);
    const Eigen::VectorXd s = p_spectrum(k);
    EXPECT_GT(s.minCoeff(), -1e-10);
    EXPECT_LT(s.maxCoeff(), 1.0 + 1e-10);
}

TEST(ProductBound, ZetaSeriesOracle) {
    EXPECT_NEAR(product_bound(1.0), 3.39879508156176583518, 1e-10);
    EXPECT_DOUBLE_EQ(product_bound(0.0), 1.0);
    EXPECT_THROW(product_bound(-1.0), std::invalid_argument);
}

TEST(Recursion, GaussianNeedsNoCorrection) {
    const RecursionReport r = recursion_check(gaussian_potential(), {-1.0, 0.0, 2.0}, 5);
    ASSERT_EQ(r.rows.size(), 4u);
    for (const auto& row : r.rows) EXPECT_NEAR(row.gamma, 1.0, 1e-12);
    EXPECT_NEAR(r.fitted_c, 0.0, 1e-9);
    EXPECT_NEAR(r.c_prime, 1.0, 1e-9);
    EXPECT_THROW(recursion_check(gaussian_potential(), {}, 3), std::invalid_argument);
    EXPECT_THROW(recursion_check(gaussian_potential(), {0.0}, 6), std::invalid_argument);
}

TEST(Recursion, QuarticExactBranch) {
    const RecursionReport r = recursion_check(quartic_potential(0.3), {-1.0, 0.0, 1.0}, 3);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_TRUE(std::isfinite(r.fitted_c));
    EXPECT_GE(r.c_prime, 1.0);
}

TEST(Mcmc, GaussianBoundIsBelowOne) {
    SamplerConfig c;
    c.steps = 100000;
    c.chains = 2;
    c.bootstrap = 50;
    const McmcGapResult m = mcmc_gap_bound(gaussian_potential(), 4, 0.0, c);
    EXPECT_EQ(m.dictionary_size, 4 + 10 + 20);
    EXPECT_EQ(m.estimate.method, GapMethod::mcmc_rayleigh);
    EXPECT_TRUE(m.valid);
    EXPECT_LE(m.estimate.value, 1.0 + 4 * m.estimate.uncertainty + 1e-3);
    EXPECT_GE(m.estimate.value, 0.9);
}

TEST(Mcmc, MonomialCount) {
    EXPECT_EQ(detail::monomials(8, 3).size(), 165u);
    EXPECT_EQ(detail::monomials(2, 2).size(), 6u);
}
