#pragma once

// Discretized conditional-expectation operator K: (Kf)(x) = E[f(eta_2) | eta_1 = x]
// under the canonical measure, on the lattice of the single-site density.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgeworth.hpp"
#include "numerics.hpp"
#include "single_site.hpp"

namespace spingap {

struct KOperator {
    int n = 0;
    double rho = 0.0;
    double sigma = 1.0;
    double dx = 1.0;
    std::vector<double> nodes;        // centered coordinate x - rho (xi_rho at the nodes)
    Eigen::VectorXd weights;          // g_{N,rho}(x_i) dx, sums to 1
    Eigen::MatrixXd matrix;           // K_ij = tilde g(x_i, x_j) dx / g(x_i)
    Eigen::MatrixXd symmetric;        // W^{1/2} K W^{-1/2}
    double cross_check_error = 0.0;   // max deviation from the conditional-density route
    DensityGrid site;                 // lattice single-site density the operator was built from

    Eigen::Index size() const { return matrix.rows(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& f) const { return matrix * f; }

    double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
        return (weights.array() * f.array() * g.array()).sum();
    }

    double mean(const Eigen::VectorXd& f) const { return weights.dot(f); }

    Eigen::VectorXd xi() const { return Eigen::Map<const Eigen::VectorXd>(nodes.data(), static_cast<Eigen::Index>(nodes.size())); }
    Eigen::VectorXd ones() const { return Eigen::VectorXd::Ones(size()); }
};

struct KBuildOptions {
    int resolution = kDefaultResolution;
    bool cross_check = true;
    int cross_check_rows = 10;
    double cross_check_tol = 1e-6;
};

namespace detail {

/// Row i of K from the law of eta_2 given eta_1 = x_i: the canonical measure of
/// N-1 sites at density rho_x = rho - xi(x)/(N-1), whose centered lattice is
/// shifted by xi(x)/(N-1).
inline std::vector<double> conditional_row(const TiltedMeasure& tm, const KOperator& k, const CanonicalLattice& c,
                                           std::size_t i) {
    const double x = k.nodes[i];
    const double shift = x / (k.n - 1);
    const TiltedMeasure cond = solve_chemical_potential(tm.potential, tm.rho - shift);
    const CanonicalLattice cc = build_canonical_on(cond, k.n - 1, c.dx(), shift, c.h.first, c.h.last());
    const MarginalDensity m = marginal_from(cc);
    std::vector<double> row(k.nodes.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = m.density.values[j] * c.dx();
    return row;
}

}  // namespace detail

inline KOperator k_from(const CanonicalLattice& c) {
    if (c.n < 3) throw std::invalid_argument("build_k: n must be >= 3");
    const std::size_t m = c.size();
    KOperator k;
    k.n = c.n;
    k.rho = c.rho;
    k.sigma = c.sigma;
    k.dx = c.dx();
    k.site = c.h;
    k.nodes.resize(m);
    std::vector<double> s1(m);
    const double sn0 = c.s_n.at(neg_index(c.s_n, 0.0));
    k.weights.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        k.nodes[i] = c.node(i);
        s1[i] = c.s_nm1.at(neg_index(c.s_nm1, k.nodes[i]));
        k.weights[i] = c.dx() * c.h.values[i] * s1[i] / sn0;
    }
    k.matrix.resize(m, m);
    k.symmetric.resize(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double s2 = c.s_nm2.at(neg_index(c.s_nm2, k.nodes[i] + k.nodes[j]));
            k.matrix(i, j) = s1[i] > 0.0 ? c.dx() * c.h.values[j] * s2 / s1[i] : 0.0;
            const double den = std::sqrt(s1[i] * s1[j]);
            k.symmetric(i, j) = den > 0.0 ? c.dx() * std::sqrt(c.h.values[i] * c.h.values[j]) * s2 / den : 0.0;
        }
    }
    return k;
}

inline KOperator build_k(const TiltedMeasure& tm, int n, const KBuildOptions& opt = {}) {
    if (n < 3) throw std::invalid_argument("build_k: n must be >= 3");
    const CanonicalLattice c = build_canonical(tm, n, opt.resolution);
    KOperator k = k_from(c);
    if (opt.cross_check) {
        const std::size_t m = k.nodes.size();
        // rows spread over the bulk of the marginal
        std::vector<std::size_t> rows;
        std::size_t lo = 0, hi = m - 1;
        while (lo < hi && k.weights[lo] < 1e-10) ++lo;
        while (hi > lo && k.weights[hi] < 1e-10) --hi;
        const int count = std::max(1, opt.cross_check_rows);
        for (int r = 0; r < count; ++r)
            rows.push_back(lo + (hi - lo) * static_cast<std::size_t>(r) / std::max(1, count - 1));
        for (std::size_t i : rows) {
            const auto row = detail::conditional_row(tm, k, c, i);
            for (std::size_t j = 0; j < m; ++j)
                k.cross_check_error = std::max(k.cross_check_error, std::abs(row[j] - k.matrix(i, j)));
        }
        if (k.cross_check_error > opt.cross_check_tol)
            throw NumericalError("k_cross_check", "pair-kernel and conditional-density routes differ by " +
                                                      std::to_string(k.cross_check_error));
    }
    return k;
}

/// max_i |sum_j K_ij - 1|.
inline double stochasticity_residual(const KOperator& k) {
    return (k.matrix.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

/// max |<e_i, K e_j> - <K e_i, e_j>| in the marginal-weighted inner product.
inline double self_adjoint_residual(const KOperator& k) {
    const Eigen::MatrixXd wk = k.weights.asDiagonal() * k.matrix;
    return (wk - wk.transpose()).cwiseAbs().maxCoeff();
}

/// |K xi + xi/(N-1)| / |xi| in the marginal-weighted norm.
inline double verify_eig(const KOperator& k) {
    const Eigen::VectorXd xi = k.xi();
    const Eigen::VectorXd r = k.apply(xi) + xi / (k.n - 1);
    return std::sqrt(k.inner(r, r) / k.inner(xi, xi));
}

inline Eigen::VectorXd k_eigenvalues(const KOperator& k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.symmetric, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

/// Orthonormal basis (in the whitened coordinates sqrt(w) f) of span{1, xi}.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> whitened_one_xi(const KOperator& k) {
    const Eigen::VectorXd sw = k.weights.array().sqrt();
    Eigen::VectorXd u = sw.normalized();
    Eigen::VectorXd v = (sw.array() * k.xi().array()).matrix();
    v -= u.dot(v) * u;
    v.normalize();
    return {u, v};
}

/// K restricted to {1, xi}^perp, as a symmetric matrix on the whitened space
/// (the two removed directions become null vectors).
inline Eigen::MatrixXd projected_symmetric(const KOperator& k) {
    const auto [u, v] = whitened_one_xi(k);
    const Eigen::Index m = k.size();
    const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(m, m) - u * u.transpose() - v * v.transpose();
    Eigen::MatrixXd b = p * k.symmetric * p;
    return 0.5 * (b + b.transpose());
}

/// max |<f, K f>| / <f, f> over f orthogonal to 1 and xi.
inline double projected_norm(const KOperator& k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(projected_symmetric(k), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct ConfinementRow {
    int n = 0;
    double projected_norm = 0.0;
    double eig_residual = 0.0;
};

struct ConfinementReport {
    double rho = 0.0;
    std::vector<ConfinementRow> rows;
    double fitted_slope = 0.0;
    double prefactor = 0.0;   // C in projected_norm ~ C n^slope
    bool monotone = true;     // nonincreasing within 5%
};

inline ConfinementReport spectral_confinement(const TiltedMeasure& tm, const std::vector<int>& n_list,
                                              int resolution = kDefaultResolution) {
    ConfinementReport rep;
    rep.rho = tm.rho;
    std::vector<double> xs, ys;
    for (int n : n_list) {
        if (n < 4) throw std::invalid_argument("spectral_confinement: n must be >= 4");
        KBuildOptions opt;
        opt.resolution = resolution;
        opt.cross_check = false;
        const KOperator k = build_k(tm, n, opt);
        ConfinementRow row{n, projected_norm(k), verify_eig(k)};
        if (!rep.rows.empty() && row.projected_norm > 1.05 * rep.rows.back().projected_norm) rep.monotone = false;
        rep.rows.push_back(row);
        xs.push_back(n);
        ys.push_back(row.projected_norm);
    }
    if (xs.size() >= 2) {
        const LineFit f = fit_loglog(xs, ys);
        rep.fitted_slope = f.slope;
        rep.prefactor = std::exp(f.intercept);
    }
    return rep;
}

}  // namespace spingap
