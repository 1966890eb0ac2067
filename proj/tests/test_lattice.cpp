#include <gtest/gtest.h>

#include <cmath>

#include <spingap/edgeworth.hpp>

using namespace spingap;

namespace {

double gaussian(double x, double var) { return std::exp(-x * x / (2 * var)) / std::sqrt(2 * std::numbers::pi * var); }

}  // namespace

TEST(Lattice, ConvolutionAddsOffsetsAndKeepsMass) {
    DensityGrid a{0.5, 0.25, -2, {0.1, 0.4, 0.6, 0.5, 0.4}};
    DensityGrid b{0.5, -0.1, 1, {1.0, 1.0}};
    const DensityGrid c = convolve(a, b);
    EXPECT_DOUBLE_EQ(c.offset, 0.15);
    EXPECT_EQ(c.first, -1);
    EXPECT_EQ(c.size(), 6u);
    EXPECT_NEAR(c.mass(), a.mass() * b.mass(), 1e-15);
    DensityGrid other{0.3, 0.0, 0, {1.0}};
    EXPECT_THROW(convolve(a, other), std::invalid_argument);
}

TEST(Lattice, ClipAndTrim) {
    DensityGrid g{1.0, 0.0, -3, {0.0, 1.0, 2.0, 3.0, 2.0, 0.0, 0.0}};
    trim(g);
    EXPECT_EQ(g.first, -2);
    EXPECT_EQ(g.size(), 4u);
    clip(g, 1.0);
    EXPECT_EQ(g.first, -1);
    EXPECT_EQ(g.size(), 3u);
    EXPECT_THROW(clip(g, -5.0), NumericalError);
}

TEST(Lattice, GaussianPowerMatchesClosedForm) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 1.0);
    const DensityGrid h = sample_lattice(tm, lattice_spacing(tm, 256));
    const DensityGrid s = convolution_power(h, 16);
    double err = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) err = std::max(err, std::abs(s.values[i] - gaussian(s.node(i), 16.0)));
    EXPECT_LT(err, 1e-12);
    EXPECT_THROW(convolution_power(h, 0), std::invalid_argument);
    EXPECT_THROW(lattice_spacing(tm, 4), std::invalid_argument);
}

TEST(Lattice, InterpolationIsExactAtNodes) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 0.0);
    const DensityGrid h = sample_lattice(tm, lattice_spacing(tm, 128));
    for (std::size_t i = 10; i < h.size(); i += 17) EXPECT_DOUBLE_EQ(h.interpolate(h.node(i)), h.values[i]);
    EXPECT_EQ(h.interpolate(1e6), 0.0);
}

TEST(Convolution, AgreesWithCharacteristicFunctionInversion) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 1.0);
    for (int n : {2, 5, 16}) EXPECT_LT(convolution_cf_discrepancy(tm, n), 1e-10) << "n=" << n;
}

TEST(Edgeworth, GaussianIsExact) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 2.0);
    for (int n : {8, 64}) {
        const ConvolvedDensity c = convolve_density(tm, n);
        EXPECT_LT(edgeworth_sup_error(tm, c, EdgeworthVariant::verbatim), 1e-6);
        EXPECT_LT(edgeworth_sup_error(tm, c, EdgeworthVariant::hermite6), 1e-6);
    }
}

TEST(Edgeworth, VariantsCoincideWithoutSkew) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 0.0);
    const EdgeworthCoeffs a = edgeworth_coeffs(tm, 16, EdgeworthVariant::verbatim);
    const EdgeworthCoeffs b = edgeworth_coeffs(tm, 16, EdgeworthVariant::hermite6);
    for (double z : {-2.0, 0.0, 0.7}) EXPECT_NEAR(edgeworth_density(a, z), edgeworth_density(b, z), 1e-12);
}

TEST(Edgeworth, ScalingSlopeAtSymmetricPoint) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 0.0);
    const ScalingReport r = clt_scaling(tm, {8, 16, 32, 64});
    EXPECT_LE(r.fitted_slope, -1.25);
}

TEST(Marginal, MeanAndVariance) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 1.0);
    const MarginalDensity m = marginal_density(tm, 16);
    EXPECT_NEAR(m.mean(), 1.0, 1e-12);
    // variance of one coordinate given the sum: sigma^2 (1 - 1/N) to leading order
    EXPECT_NEAR(m.variance() / (tm.sigma2 * 15.0 / 16.0), 1.0, 0.01);
    const MarginalDensity g = marginal_density(solve_chemical_potential(gaussian_potential(), 0.0), 4);
    EXPECT_NEAR(g.variance(), 0.75, 1e-12);
}

TEST(PairKernel, MarginsReproduceTheMarginal) {
    const TiltedMeasure tm = solve_chemical_potential(quartic_potential(0.3), 1.0);
    const PairKernel p = pair_kernel(tm, 8);
    EXPECT_LT(pair_kernel_margin_residual(p), 1e-12);
    EXPECT_LT((p.joint - p.joint.transpose()).cwiseAbs().maxCoeff(), 1e-12 * p.joint.maxCoeff());
}

TEST(KernelExpansion, DecaysFasterThanOneOverN) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 0.0);
    const KernelExpansionReport r = verify_kernel_expansion(tm, {16, 32, 64}, 10.0);
    EXPECT_LE(r.fitted_slope, -1.25);
    for (const auto& row : r.rows) EXPECT_LT(row.discretization, 1e-8);
}

TEST(TailNorm, VanishesOnFullWindowAndGrowsWhenMasked) {
    const TiltedMeasure tm = solve_chemical_potential(gaussian_potential(), 0.0);
    EXPECT_EQ(tail_operator_norm(tm, 16, 10.0).value, 0.0);
    const TailNorm t = tail_operator_norm(tm, 16, 1.0);
    EXPECT_GT(t.value, 0.0);
    EXPECT_NEAR(t.ratio, t.value * std::pow(16.0, 1.5), 1e-12 * t.ratio);
}

TEST(Perron, KnownMatrix) {
    Eigen::MatrixXd a(2, 2);
    a << 2, 1, 1, 2;
    EXPECT_NEAR(perron_eigenvalue(a), 3.0, 1e-12);
}
