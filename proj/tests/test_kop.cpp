#include <gtest/gtest.h>

#include <cmath>

#include <spingap/kop.hpp>

using namespace spingap;

TEST(KOperator, EigenIdentityAndStructure) {
    for (double rho : {0.0, 3.0}) {
        const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), rho);
        const KOperator k = build_k(tm, 16);
        EXPECT_LT(verify_eig(k), 1e-10);
        EXPECT_LT(stochasticity_residual(k), 1e-12);
        EXPECT_LT(self_adjoint_residual(k), 1e-15);
        EXPECT_LT(k.cross_check_error, 1e-10);
        EXPECT_NEAR(k.weights.sum(), 1.0, 1e-12);
    }
}

TEST(KOperator, RejectsSmallN) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 0.0);
    EXPECT_THROW(build_k(tm, 2), std::invalid_argument);
}

TEST(KOperator, GaussianHermiteSpectrum) {
    // K maps the m-th Hermite polynomial to (-1/(N-1))^m times itself
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 0.7);
    const int n = 8;
    KBuildOptions o;
    o.cross_check = false;
    const KOperator k = build_k(tm, n, o);
    const Eigen::VectorXd x = k.xi() / std::sqrt(k.inner(k.xi(), k.xi()));
    const Eigen::VectorXd he2 = (x.array().square() - k.mean(x.array().square().matrix())).matrix();
    const Eigen::VectorXd r = k.apply(he2) - he2 / double((n - 1) * (n - 1));
    EXPECT_LT(std::sqrt(k.inner(r, r) / k.inner(he2, he2)), 1e-8);
    EXPECT_NEAR(projected_norm(k), 1.0 / ((n - 1.0) * (n - 1.0)), 1e-4 / ((n - 1.0) * (n - 1.0)));
    const Eigen::VectorXd ev = k_eigenvalues(k);
    EXPECT_NEAR(ev.maxCoeff(), 1.0, 1e-10);
    EXPECT_NEAR(ev.minCoeff(), -1.0 / (n - 1), 1e-10);
}

TEST(KOperator, ProjectionRemovesOneAndXi) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 1.0);
    KBuildOptions o;
    o.cross_check = false;
    const KOperator k = build_k(tm, 8, o);
    const auto [u, v] = whitened_one_xi(k);
    const Eigen::MatrixXd b = projected_symmetric(k);
    EXPECT_LT((b * u).norm(), 1e-12);
    EXPECT_LT((b * v).norm(), 1e-12);
    EXPECT_NEAR(u.dot(v), 0.0, 1e-14);
}

TEST(Confinement, QuarticSlope) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 1.0);
    const ConfinementReport r = spectral_confinement(tm, {8, 16, 32});
    EXPECT_LE(r.fitted_slope, -1.25);
    EXPECT_TRUE(r.monotone);
    EXPECT_THROW(spectral_confinement(tm, {3}), std::invalid_argument);
}
