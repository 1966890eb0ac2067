#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <spingap/gl.hpp>

using namespace spingap;

TEST(Paths, StaircaseExamples) {
    const PathTable p1 = build_paths(1, 8);
    EXPECT_EQ(p1.length(2, 5), 3);
    const PathTable p2 = build_paths(2, 3);
    const Lattice& lat = p2.lattice;
    const int x = lat.site({1, 1}), y = lat.site({2, 2});
    EXPECT_EQ(p2.length(x, y), 2);
    EXPECT_EQ(lat.site({2, 1}), 5);
    EXPECT_EQ(lat.bonds(), 12);
}

TEST(Paths, PropertiesInOneDimension) {
    for (int l = 2; l <= 8; ++l) {
        const PathProps p = verify_path_props(build_paths(1, l));
        EXPECT_TRUE(p.valid);
        EXPECT_EQ(p.max_length, l - 1);
        EXPECT_EQ(p.max_congestion, 2 * (l / 2) * ((l + 1) / 2));
    }
    const PathProps one = verify_path_props(build_paths(1, 1));
    EXPECT_EQ(one.max_length, 0);
    EXPECT_EQ(one.max_congestion, 0);
}

TEST(Paths, LengthAndCongestionBounds) {
    for (int d = 1; d <= 3; ++d)
        for (int l = 2; l <= (d == 3 ? 6 : 8); ++l) {
            const PathProps p = verify_path_props(build_paths(d, l));
            EXPECT_TRUE(p.valid);
            EXPECT_EQ(p.max_length, d * (l - 1));
            EXPECT_LE(p.max_congestion, std::pow(l, d + 1) / 2.0);
            EXPECT_LT(p.implied_k, d);
        }
}

TEST(Paths, TelescopingAndOrientation) {
    const PathTable pt = build_paths(2, 4);
    std::mt19937_64 rng(5);
    std::vector<double> grad(static_cast<std::size_t>(pt.lattice.sites()));
    for (double& g : grad) g = u01(rng) - 0.5;
    EXPECT_LT(telescoping_residual(pt, grad), 1e-14);
    for (int b = 0; b < pt.lattice.bonds(); ++b) {
        const auto [u, v] = pt.lattice.bond_ends(b);
        const double fwd = grad[u] - grad[v], bwd = grad[v] - grad[u];
        EXPECT_EQ(fwd * fwd, bwd * bwd);
    }
}

TEST(Lattice, BondIdsRoundTrip) {
    for (int d = 1; d <= 3; ++d) {
        const Lattice lat(d, 4);
        for (int b = 0; b < lat.bonds(); ++b) {
            const auto [u, v] = lat.bond_ends(b);
            const auto cu = lat.coords(u), cv = lat.coords(v);
            int axis = -1, diff = 0;
            for (int a = 0; a < d; ++a)
                if (cu[a] != cv[a]) {
                    axis = a;
                    diff += cv[a] - cu[a];
                }
            EXPECT_EQ(diff, 1);
            EXPECT_EQ(lat.bond_id(u, axis), b);
        }
    }
    EXPECT_THROW(Lattice(4, 2), std::invalid_argument);
    EXPECT_THROW(Lattice(1, 0), std::invalid_argument);
}

TEST(Chi, GaussianClosedForm) {
    for (int l = 2; l <= 8; ++l) {
        const GapEstimate g = chi_exact_small(gaussian_potential(), 1, l, 0.3);
        EXPECT_NEAR(g.value, 1.0 / (2.0 * (1.0 - std::cos(std::numbers::pi / l))), 1e-9);
        EXPECT_EQ(g.kind, GapKind::gl_chi);
    }
    EXPECT_NEAR(chi_exact_small(gaussian_potential(), 1, 4, 0.0).value, 1.0 / (2.0 - std::sqrt(2.0)), 1e-12);
}

TEST(Chi, SliceRouteAgreesForGaussian) {
    for (int l : {2, 3}) {
        const Lattice lat(1, l);
        const double v = detail::slice_with_check(gaussian_potential(), l, 0.4, bond_laplacian(lat), SliceOptions{});
        EXPECT_NEAR(v, 1.0 / (2.0 * (1.0 - std::cos(std::numbers::pi / l))), 1e-8);
    }
}

TEST(Chi, DegenerateAndUnsupported) {
    try {
        chi_exact_small(gaussian_potential(), 1, 1, 0.0);
        FAIL() << "expected an error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("empty Dirichlet form"), std::string::npos);
    }
    EXPECT_THROW(chi_exact_small(gaussian_potential(), 2, 3, 0.0), std::invalid_argument);
    EXPECT_THROW(chi_exact_small(quartic_potential(0.3), 1, 4, 0.0), std::invalid_argument);
}

TEST(Comparison, GaussianAndQuartic) {
    const ComparisonReport g = comparison_check(gaussian_potential(), 1, {2, 3, 4, 5, 6, 7, 8}, 0.0);
    EXPECT_TRUE(g.all_ok);
    EXPECT_NEAR(g.rows.front().chi, 0.5, 1e-12);
    for (std::size_t i = 1; i < g.rows.size(); ++i) EXPECT_LT(g.rows[i].chi_over_l2, g.rows[i - 1].chi_over_l2);
    EXPECT_GT(g.rows.back().chi_over_l2, 1.0 / (std::numbers::pi * std::numbers::pi));
    const ComparisonReport q = comparison_check(quartic_potential(0.3), 1, {2, 3}, 1.0);
    EXPECT_TRUE(q.all_ok);
    EXPECT_THROW(comparison_check(quartic_potential(0.3), 1, {4}, 1.0), std::invalid_argument);
}
