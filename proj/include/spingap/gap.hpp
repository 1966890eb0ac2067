#pragma once

// Poincare constants of the canonical measure: exact values for N = 2, 3 by a
// Rayleigh-Ritz computation on the hyperplane slice, the operator P of the
// recursion and its identities in terms of K, the recursion constants, and
// Monte Carlo lower bounds for larger N.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kop.hpp"
#include "numerics.hpp"
#include "potential.hpp"
#include "sampler.hpp"
#include "single_site.hpp"

namespace spingap {

enum class GapKind { poincare_gamma, gl_chi };
enum class GapMethod { exact_eigen, mcmc_rayleigh, recursion_bound };

inline const char* to_string(GapKind k) { return k == GapKind::poincare_gamma ? "poincare_gamma" : "gl_chi"; }
inline const char* to_string(GapMethod m) {
    switch (m) {
        case GapMethod::exact_eigen: return "exact_eigen";
        case GapMethod::mcmc_rayleigh: return "mcmc_rayleigh";
        default: return "recursion_bound";
    }
}

struct GapEstimate {
    int size = 0;
    double rho = 0.0;
    double value = 0.0;
    GapKind kind = GapKind::poincare_gamma;
    GapMethod method = GapMethod::exact_eigen;
    double uncertainty = 0.0;
};

// ---------------------------------------------------------------------------
// Slice Rayleigh-Ritz
// ---------------------------------------------------------------------------

/// Orthonormal basis of {sum = 0} in R^n (Helmert), as an n x (n-1) matrix.
inline Eigen::MatrixXd slice_basis(int n) {
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, n - 1);
    for (int k = 1; k < n; ++k) {
        const double s = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
        for (int i = 0; i < k; ++i) u(i, k - 1) = s;
        u(k, k - 1) = -k * s;
    }
    return u;
}

/// Laplacian of the path graph on n sites (unordered bonds counted once).
inline Eigen::MatrixXd path_laplacian(int n) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        l(i, i) += 1.0;
        l(i + 1, i + 1) += 1.0;
        l(i, i + 1) -= 1.0;
        l(i + 1, i) -= 1.0;
    }
    return l;
}

struct SliceOptions {
    int resolution = 0;           // quadrature nodes per slice axis; 0 picks 256 (1-d) or 96 (2-d)
    double log_drop = 40.0;       // box edge where log pi fell this much
    double self_check_tol = 1e-4;
    bool self_check = true;
};

namespace detail {

/// Legendre P_0..P_d and derivatives at t.
inline void legendre(int d, double t, std::vector<double>& p, std::vector<double>& dp) {
    p.assign(d + 1, 0.0);
    dp.assign(d + 1, 0.0);
    p[0] = 1.0;
    if (d >= 1) {
        p[1] = t;
        dp[1] = 1.0;
    }
    for (int k = 1; k < d; ++k) {
        p[k + 1] = ((2.0 * k + 1.0) * t * p[k] - k * p[k - 1]) / (k + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * k + 1.0) * p[k];
    }
}

/// Smallest generalized eigenvalue of (E, C) on the range of C.
inline double min_generalized(const Eigen::MatrixXd& e, const Eigen::MatrixXd& c, double drop = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] > drop * top) keep.push_back(i);
    if (keep.empty()) throw NumericalError("slice_gram", "covariance Gram has no positive directions");
    Eigen::MatrixXd t(c.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k)
        t.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(keep[k]) / std::sqrt(ev[keep[k]]);
    Eigen::MatrixXd red = t.transpose() * e * t;
    red = 0.5 * (red + red.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(red, Eigen::EigenvaluesOnly);
    return es2.eigenvalues().minCoeff();
}

/// 1 / (smallest nonzero eigenvalue) of the form int pi grad f^T M grad f against
/// the variance under pi, on the slice through rho (1,...,1).
inline double slice_inverse_gap(const PotentialSpec& pot, int n, double rho, const Eigen::MatrixXd& sigma_full,
                                int resolution, int degree, double log_drop) {
    const int dim = n - 1;
    if (dim < 1 || dim > 2) throw std::invalid_argument("slice eigenproblem supports n = 2 or 3");
    const Eigen::MatrixXd u = slice_basis(n);
    const Eigen::MatrixXd m = u.transpose() * sigma_full * u;
    const auto logpi = [&](const Eigen::VectorXd& s) {
        const Eigen::VectorXd eta = u * s;
        double v = 0.0;
        for (int i = 0; i < n; ++i) v -= spingap::value(pot, rho + eta[i]);
        return v;
    };
    // box half-width: farthest ray point with log pi above top - log_drop
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dim);
    const double top = logpi(zero);
    const int rays = dim == 1 ? 2 : 32;
    double w = 0.0;
    for (int r = 0; r < rays; ++r) {
        Eigen::VectorXd dir(dim);
        if (dim == 1) dir[0] = r == 0 ? 1.0 : -1.0;
        else {
            const double a = 2.0 * std::numbers::pi * r / rays;
            dir << std::cos(a), std::sin(a);
        }
        double lo = 0.0, hi = 1e-3;
        for (int it = 0; logpi(hi * dir) > top - log_drop; ++it) {
            lo = hi;
            hi *= 2.0;
            if (it > 200) throw NumericalError("slice_box", "slice density does not decay");
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (logpi(mid * dir) > top - log_drop) lo = mid; else hi = mid;
        }
        w = std::max(w, hi);
    }

    const auto [gx, gw] = gauss_legendre(resolution);
    // basis: P_a(s1/w) P_b(s2/w), 1 <= a + b <= degree
    std::vector<std::pair<int, int>> idx;
    for (int a = 0; a <= degree; ++a)
        for (int b = 0; b <= (dim == 2 ? degree - a : 0); ++b)
            if (a + b >= 1) idx.emplace_back(a, b);
    const auto nb = static_cast<Eigen::Index>(idx.size());
    const Eigen::Index nq = dim == 1 ? resolution : static_cast<Eigen::Index>(resolution) * resolution;

    Eigen::MatrixXd phi(nq, nb), g1(nq, nb), g2(dim == 2 ? nq : 0, nb);
    Eigen::VectorXd p(nq);
    std::vector<double> la, dla, lb, dlb;
    double lmax = -INFINITY;
    std::vector<double> lp(static_cast<std::size_t>(nq));
    for (Eigen::Index q = 0; q < nq; ++q) {
        const int i = static_cast<int>(dim == 1 ? q : q / resolution);
        const int j = static_cast<int>(dim == 1 ? 0 : q % resolution);
        Eigen::VectorXd s(dim);
        s[0] = w * gx[i];
        if (dim == 2) s[1] = w * gx[j];
        lp[q] = logpi(s) + std::log(gw[i] * (dim == 2 ? gw[j] : 1.0));
        lmax = std::max(lmax, lp[q]);
    }
    double total = 0.0;
    for (Eigen::Index q = 0; q < nq; ++q) {
        p[q] = std::exp(lp[q] - lmax);
        total += p[q];
    }
    p /= total;
    for (Eigen::Index q = 0; q < nq; ++q) {
        const int i = static_cast<int>(dim == 1 ? q : q / resolution);
        const int j = static_cast<int>(dim == 1 ? 0 : q % resolution);
        legendre(degree, gx[i], la, dla);
        if (dim == 2) legendre(degree, gx[j], lb, dlb);
        for (Eigen::Index k = 0; k < nb; ++k) {
            const auto [a, b] = idx[k];
            const double pb = dim == 2 ? lb[b] : 1.0;
            phi(q, k) = la[a] * pb;
            g1(q, k) = dla[a] * pb / w;
            if (dim == 2) g2(q, k) = la[a] * dlb[b] / w;
        }
    }
    const Eigen::VectorXd mean = phi.transpose() * p;
    const Eigen::MatrixXd pphi = p.asDiagonal() * phi;
    Eigen::MatrixXd c = phi.transpose() * pphi - mean * mean.transpose();
    Eigen::MatrixXd e = m(0, 0) * g1.transpose() * p.asDiagonal() * g1;
    if (dim == 2) {
        const Eigen::MatrixXd cross = g1.transpose() * p.asDiagonal() * g2;
        e += m(0, 1) * cross + m(1, 0) * cross.transpose() + m(1, 1) * g2.transpose() * p.asDiagonal() * g2;
    }
    c = 0.5 * (c + c.transpose());
    e = 0.5 * (e + e.transpose());
    const double lam = min_generalized(e, c);
    if (!(lam > 0.0)) throw NumericalError("empty_dirichlet_form", "Dirichlet form vanishes on the slice");
    return 1.0 / lam;
}

inline double slice_with_check(const PotentialSpec& pot, int n, double rho, const Eigen::MatrixXd& sigma_full,
                               const SliceOptions& opt) {
    const int res = opt.resolution > 0 ? opt.resolution : (n == 2 ? 256 : 96);
    if (res < 16) throw std::invalid_argument("slice resolution must be >= 16");
    const double fine = slice_inverse_gap(pot, n, rho, sigma_full, res, res / 8, opt.log_drop);
    if (opt.self_check) {
        const double coarse = slice_inverse_gap(pot, n, rho, sigma_full, res / 2, res / 16, opt.log_drop);
        const double rel = std::abs(fine - coarse) / fine;
        if (rel > opt.self_check_tol)
            throw NumericalError("gap_self_convergence",
                                 "resolution halving moved the constant by " + std::to_string(rel));
    }
    return fine;
}

}  // namespace detail

/// gamma(N, rho) for N = 2, 3 with the full-gradient Dirichlet form.
inline GapEstimate exact_gap_small_n(const PotentialSpec& pot, int n, double rho, const SliceOptions& opt = {}) {
    if (n != 2 && n != 3) throw std::invalid_argument("exact_gap_small_n: n must be 2 or 3");
    if (opt.resolution != 0 && opt.resolution < 16) throw std::invalid_argument("exact_gap_small_n: resolution too small");
    GapEstimate g;
    g.size = n;
    g.rho = rho;
    g.value = detail::slice_with_check(pot, n, rho, Eigen::MatrixXd::Identity(n, n), opt);
    return g;
}

/// gamma(N, rho) for a pure quadratic a x^2: the canonical measure is Gaussian
/// with covariance (2a)^{-1} on the slice, so gamma = 1/(2a) for every N.
inline GapEstimate quadratic_gap(const PotentialSpec& pot, int n, double rho) {
    if (!is_pure_quadratic(pot)) throw std::invalid_argument("quadratic_gap: potential is not a pure quadratic");
    const double a = std::get<Quadratic>(pot.phi).a;
    return {n, rho, 1.0 / (2.0 * a), GapKind::poincare_gamma, GapMethod::exact_eigen, 0.0};
}

// ---------------------------------------------------------------------------
// Sums of one-site functions and the operator P
// ---------------------------------------------------------------------------

struct SymmetricLift {
    std::vector<Eigen::VectorXd> components;   // f_k on the K lattice, each of mean 0
    Eigen::VectorXd phi_f;                      // sum_k f_k

    static SymmetricLift from(std::vector<Eigen::VectorXd> comps) {
        SymmetricLift s;
        s.phi_f = Eigen::VectorXd::Zero(comps.front().size());
        for (const auto& c : comps) s.phi_f += c;
        s.components = std::move(comps);
        return s;
    }
};

/// P acting on sums of one-site functions: component k becomes ((1-K) f_k + K Phi)/N.
struct POperator {
    const KOperator* k = nullptr;

    explicit POperator(const KOperator& op) : k(&op) {}

    SymmetricLift apply(const SymmetricLift& f) const {
        const Eigen::VectorXd kphi = k->apply(f.phi_f);
        std::vector<Eigen::VectorXd> out;
        for (const auto& fk : f.components) out.push_back((fk - k->apply(fk) + kphi) / k->n);
        return SymmetricLift::from(std::move(out));
    }

    /// nu(F G) for F, G in the span of one-site functions.
    double inner(const SymmetricLift& f, const SymmetricLift& g) const {
        double s = k->inner(f.phi_f, k->apply(g.phi_f));
        for (std::size_t i = 0; i < f.components.size(); ++i)
            s += k->inner(f.components[i], g.components[i] - k->apply(g.components[i]));
        return s;
    }
};

inline Eigen::VectorXd center(const KOperator& k, Eigen::VectorXd f) {
    f.array() -= k.mean(f);
    return f;
}

/// Seeded smooth random trial functions, centered in the marginal.
inline std::vector<SymmetricLift> random_trials(const KOperator& k, int count, std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    const auto coeff = [&] { return 2.0 * u01(rng) - 1.0; };
    const Eigen::VectorXd z = k.xi() / k.sigma;
    std::vector<SymmetricLift> out;
    for (int t = 0; t < count; ++t) {
        std::vector<Eigen::VectorXd> comps;
        for (int c = 0; c < k.n; ++c) {
            Eigen::VectorXd f = Eigen::VectorXd::Zero(z.size());
            for (int p = 1; p <= 4; ++p) f += coeff() * z.array().pow(p).matrix() / std::tgamma(p + 1.0);
            const double om = 0.5 + 1.5 * u01(rng);
            f += coeff() * (om * z.array()).sin().matrix();
            f += coeff() * (-(z.array() - coeff()).square()).exp().matrix();
            comps.push_back(center(k, f));
        }
        out.push_back(SymmetricLift::from(std::move(comps)));
    }
    return out;
}

struct IdentityReport {
    std::map<std::string, double> residuals;   // relative residual per identity
    double max_residual = 0.0;
    bool used_direct_oracle = false;
    int trials = 0;

    void note(const std::string& name, double r) {
        auto& slot = residuals[name];
        slot = std::max(slot, r);
        max_residual = std::max(max_residual, r);
    }
};

namespace detail {

/// Whitened coordinates sqrt(w) f, in which <f, K g> = f_w . A g_w.
inline Eigen::VectorXd whiten(const KOperator& k, const Eigen::VectorXd& f) {
    return (k.weights.array().sqrt() * f.array()).matrix();
}

inline Eigen::MatrixXd sqrt_one_minus(const KOperator& k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.symmetric);
    const Eigen::VectorXd d = (1.0 - es.eigenvalues().array()).max(0.0).sqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Direct sums over the N = 3 lattice joint law.
struct DirectN3 {
    double nu_f2 = 0.0;
    double nu_f_pf = 0.0;
    std::vector<double> var_cond;    // nu(var(F | F_k))
    std::vector<double> cond_var;    // var(nu(F | F_k))
    std::vector<double> f_cond;      // nu(F nu(F | F_k))
    double mean = 0.0;
};

inline DirectN3 direct_n3(const KOperator& k, const SymmetricLift& f) {
    const DensityGrid& h = k.site;
    const auto m = static_cast<std::int64_t>(h.size());
    DirectN3 d;
    d.var_cond.assign(3, 0.0);
    d.cond_var.assign(3, 0.0);
    d.f_cond.assign(3, 0.0);
    // joint weights over (i, j), third index -(i + j)
    std::vector<double> w(static_cast<std::size_t>(m * m), 0.0);
    double z = 0.0;
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < m; ++j) {
            const std::int64_t l = -(h.first + i) - (h.first + j) - h.first;
            if (l < 0 || l >= m) continue;
            const double v = h.values[i] * h.values[j] * h.values[l];
            w[i * m + j] = v;
            z += v;
        }
    for (double& v : w) v /= z;
    const auto third = [&](std::int64_t i, std::int64_t j) { return -(h.first + i) - (h.first + j) - h.first; };
    const auto value = [&](std::int64_t i, std::int64_t j) {
        const std::int64_t l = third(i, j);
        return f.components[0][i] + f.components[1][j] + f.components[2][l];
    };
    // conditional means and second moments per site
    std::vector<std::vector<double>> pm(3, std::vector<double>(m, 0.0)), s1 = pm, s2 = pm;
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < m; ++j) {
            const double v = w[i * m + j];
            if (v == 0.0) continue;
            const double fv = value(i, j);
            const std::int64_t at[3] = {i, j, third(i, j)};
            d.mean += v * fv;
            d.nu_f2 += v * fv * fv;
            for (int s = 0; s < 3; ++s) {
                pm[s][at[s]] += v;
                s1[s][at[s]] += v * fv;
                s2[s][at[s]] += v * fv * fv;
            }
        }
    std::vector<std::vector<double>> cm(3, std::vector<double>(m, 0.0));
    for (int s = 0; s < 3; ++s)
        for (std::int64_t x = 0; x < m; ++x) {
            if (pm[s][x] <= 0.0) continue;
            cm[s][x] = s1[s][x] / pm[s][x];
            d.var_cond[s] += s2[s][x] - pm[s][x] * cm[s][x] * cm[s][x];
            d.cond_var[s] += pm[s][x] * cm[s][x] * cm[s][x];
        }
    for (int s = 0; s < 3; ++s) d.cond_var[s] -= d.mean * d.mean;
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < m; ++j) {
            const double v = w[i * m + j];
            if (v == 0.0) continue;
            const double fv = value(i, j);
            const std::int64_t at[3] = {i, j, third(i, j)};
            double pf = 0.0;
            for (int s = 0; s < 3; ++s) {
                d.f_cond[s] += v * fv * cm[s][at[s]];
                pf += cm[s][at[s]] / 3.0;
            }
            d.nu_f_pf += v * fv * pf;
        }
    return d;
}

}  // namespace detail

/// Checks the variance decomposition and the K-representations of nu(F^2),
/// nu(F nu(F|F_k)) and nu(F(1-P)F) on each trial; at N = 3 every quantity is
/// also computed by direct summation over the lattice joint law.
inline IdentityReport verify_variance_decomposition(const KOperator& k, const std::vector<SymmetricLift>& trials) {
    IdentityReport rep;
    rep.trials = static_cast<int>(trials.size());
    const POperator p(k);
    const int n = k.n;
    const double c = 1.0 / (n - 1);
    const bool direct = n == 3 && k.site.size() == static_cast<std::size_t>(k.size());
    rep.used_direct_oracle = direct;
    const Eigen::MatrixXd root = detail::sqrt_one_minus(k);
    const auto kk = [&](const Eigen::VectorXd& f) { return k.apply(f); };

    for (const SymmetricLift& f : trials) {
        if (static_cast<int>(f.components.size()) != n) throw std::invalid_argument("trial function has wrong number of components");
        const Eigen::VectorXd& phi = f.phi_f;
        const double nu_f2 = p.inner(f, f);
        const double scale = std::max(std::abs(nu_f2), 1e-300);

        // (gag1) against nu(F^2) - nu(F PF), with PF built from the lift of P
        const SymmetricLift pf = p.apply(f);
        const double one_minus_p = nu_f2 - p.inner(f, pf);
        double gag1 = (n - 2.0) / n * k.inner(phi, kk(phi) - kk(kk(phi)));
        std::vector<double> cond2(n), ident(n);
        for (int s = 0; s < n; ++s) {
            const Eigen::VectorXd& fk = f.components[s];
            const Eigen::VectorXd omk = fk - kk(fk);
            gag1 += 1.0 / n * k.inner(fk, (n - 1.0) * omk + kk(omk));
            const Eigen::VectorXd u = omk + kk(phi);   // nu(F | F_k) as a one-site function
            cond2[s] = k.inner(u, u);
            ident[s] = 2.0 * k.inner(phi, kk(omk)) + k.inner(omk, omk) + k.inner(phi, kk(kk(phi)));
            rep.note("cond_expectation", std::abs(ident[s] - cond2[s]) / scale);
        }
        rep.note("gag1", std::abs(gag1 - one_minus_p) / scale);

        // (ccl2): var(F) = (1/N) sum nu(var(F|F_k)) + (1/N) sum var(nu(F|F_k))
        double rhs = 0.0;
        for (int s = 0; s < n; ++s) rhs += (nu_f2 - cond2[s]) / n + cond2[s] / n;
        rep.note("ccl2", std::abs(rhs - nu_f2) / scale);

        // symmetric part: F = sum_k f o pi_k with f = f_1
        const SymmetricLift sym = SymmetricLift::from(std::vector<Eigen::VectorXd>(n, f.components[0]));
        const Eigen::VectorXd f0 = f.components[0];
        const double gag3 = n * (n - 1.0) * k.inner(f0, kk(f0) + c * f0);
        const Eigen::VectorXd kc = kk(f0) + c * f0;
        const double gag4 = (n - 1.0) * (n - 1.0) * k.inner(f0, kc - kk(kc));
        const double sym2 = p.inner(sym, sym);
        const double sym_scale = std::max(std::abs(sym2), 1e-300);
        rep.note("gag3", std::abs(gag3 - sym2) / std::max(sym_scale, scale));
        rep.note("gag4", std::abs(gag4 - (sym2 - p.inner(sym, p.apply(sym)))) / std::max(sym_scale, scale));

        // orthogonal part: components f_k - Phi/N, so that Phi_F = 0
        std::vector<Eigen::VectorXd> oc;
        for (int s = 0; s < n; ++s) oc.push_back(f.components[s] - phi / n);
        const SymmetricLift orth = SymmetricLift::from(oc);
        double gag5 = 0.0, gag6 = 0.0;
        for (const auto& g : oc) {
            const Eigen::VectorXd hat = root * detail::whiten(k, g);
            gag5 += hat.squaredNorm();
            gag6 += hat.dot((n - 1.0) * hat + k.symmetric * hat) / n;
        }
        const double orth2 = p.inner(orth, orth);
        const double orth_scale = std::max({std::abs(orth2), scale});
        rep.note("gag5", std::abs(gag5 - orth2) / orth_scale);
        rep.note("gag6", std::abs(gag6 - (orth2 - p.inner(orth, p.apply(orth)))) / orth_scale);

        if (direct) {
            const detail::DirectN3 d = detail::direct_n3(k, f);
            rep.note("gag2", std::abs(nu_f2 - d.nu_f2) / scale);
            rep.note("mean", std::abs(d.mean) / std::sqrt(scale));
            double drhs = 0.0;
            for (int s = 0; s < 3; ++s) {
                drhs += (d.var_cond[s] + d.cond_var[s]) / 3.0;
                rep.note("ccl2", std::abs(cond2[s] - d.cond_var[s]) / scale);
                rep.note("ccl2", std::abs((nu_f2 - cond2[s]) - d.var_cond[s]) / scale);
                rep.note("cond_expectation", std::abs(ident[s] - d.f_cond[s]) / scale);
            }
            rep.note("ccl2", std::abs(drhs - d.nu_f2) / scale);
            rep.note("gag1", std::abs(gag1 - (d.nu_f2 - d.nu_f_pf)) / scale);

            const detail::DirectN3 ds = detail::direct_n3(k, sym);
            rep.note("gag3", std::abs(gag3 - ds.nu_f2) / std::max(sym_scale, scale));
            rep.note("gag4", std::abs(gag4 - (ds.nu_f2 - ds.nu_f_pf)) / std::max(sym_scale, scale));

            const detail::DirectN3 dorth = detail::direct_n3(k, orth);
            rep.note("gag5", std::abs(gag5 - dorth.nu_f2) / orth_scale);
            rep.note("gag6", std::abs(gag6 - (dorth.nu_f2 - dorth.nu_f_pf)) / orth_scale);
        } else {
            rep.note("gag2", 0.0);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Gap of 1 - P on the two sectors
// ---------------------------------------------------------------------------

namespace detail {

/// Orthonormal complement (whitened coordinates) of the given orthonormal vectors.
inline Eigen::MatrixXd complement(const Eigen::MatrixXd& vecs) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(vecs);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(vecs.rows(), vecs.rows());
    return q.rightCols(vecs.rows() - vecs.cols());
}

inline Eigen::VectorXd restricted_eigenvalues(const KOperator& k, const Eigen::MatrixXd& removed) {
    const Eigen::MatrixXd q = complement(removed);
    Eigen::MatrixXd r = q.transpose() * k.symmetric * q;
    r = 0.5 * (r + r.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace detail

struct PGapReport {
    int n = 0;
    double kappa_max = 0.0;     // top of the spectrum of K on {1, xi}^perp
    double kappa_min = 0.0;     // bottom of the spectrum of K on {1}^perp
    double s_ratio = 0.0;       // min nu(F(1-P)F)/nu(F^2) over the symmetric sector
    double orth_ratio = 0.0;    // same over its orthogonal complement
    double c_used = 0.0;
    double s_bound = 0.0;       // (N-1)/N (1 - C N^{-3/2})
    double orth_bound = 0.0;    // (N-2)/(N-1)
    double s_margin = 0.0;
    double orth_margin = 0.0;
    bool s_ok = true;
    bool orth_ok = true;
};

/// Sector ratios of 1 - P. With c < 0 the constant C is taken from this K's
/// own projected norm, C = N^{3/2} max |eigenvalue of K on {1, xi}^perp|.
inline PGapReport verify_p_gap(const KOperator& k, double c = -1.0) {
    if (k.n < 3) throw std::invalid_argument("verify_p_gap: n must be >= 3");
    PGapReport r;
    r.n = k.n;
    const double n = k.n;
    const auto [u, v] = whitened_one_xi(k);
    Eigen::MatrixXd uv(u.size(), 2);
    uv << u, v;
    const Eigen::VectorXd es = detail::restricted_eigenvalues(k, uv);
    const Eigen::VectorXd eo = detail::restricted_eigenvalues(k, u);
    r.kappa_max = es.maxCoeff();
    r.kappa_min = eo.minCoeff();
    r.s_ratio = (n - 1.0) / n * (1.0 - r.kappa_max);
    r.orth_ratio = (n - 1.0 + r.kappa_min) / n;
    r.c_used = c >= 0.0 ? c : std::pow(n, 1.5) * es.cwiseAbs().maxCoeff();
    r.s_bound = (n - 1.0) / n * (1.0 - r.c_used * std::pow(n, -1.5));
    r.orth_bound = (n - 2.0) / (n - 1.0);
    r.s_margin = r.s_ratio - r.s_bound;
    r.orth_margin = r.orth_ratio - r.orth_bound;
    r.s_ok = r.s_margin >= -1e-10;
    r.orth_ok = r.orth_margin >= -1e-10;
    return r;
}

/// Spectrum of P on sums of one-site mean-zero functions, for small lattices.
inline Eigen::VectorXd p_spectrum(const KOperator& k) {
    const int n = k.n;
    // coordinates: whitened components restricted to {1}^perp, stacked
    const Eigen::MatrixXd q = detail::complement(whitened_one_xi(k).first);
    const Eigen::Index d = q.cols();
    const Eigen::MatrixXd a = q.transpose() * k.symmetric * q;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    // Gram: G_kl = A for k != l, I for k == l
    Eigen::MatrixXd g(n * d, n * d);
    // P component map T: f_k -> ((1-A) f_k + A sum_l f_l)/N
    Eigen::MatrixXd t(n * d, n * d);
    for (int s = 0; s < n; ++s)
        for (int l = 0; l < n; ++l) {
            g.block(s * d, l * d, d, d) = s == l ? id : a;
            t.block(s * d, l * d, d, d) = (s == l ? id : a) / n;
        }
    Eigen::MatrixXd gp = g * t;
    gp = 0.5 * (gp + gp.transpose());
    // generalized problem gp x = mu g x on range(g)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(g);
    const double top = eg.eigenvalues().maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < eg.eigenvalues().size(); ++i)
        if (eg.eigenvalues()[i] > 1e-10 * top) keep.push_back(i);
    Eigen::MatrixXd w(n * d, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i)
        w.col(static_cast<Eigen::Index>(i)) = eg.eigenvectors().col(keep[i]) / std::sqrt(eg.eigenvalues()[keep[i]]);
    Eigen::MatrixXd red = w.transpose() * gp * w;
    red = 0.5 * (red + red.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(red, Eigen::EigenvaluesOnly);
    return er.eigenvalues();
}

// ---------------------------------------------------------------------------
// Recursion constants
// ---------------------------------------------------------------------------

/// prod_{N > n0} (1 + C N^{-3/2}): direct to 10^6, Euler-Maclaurin tail beyond.
inline double product_bound(double c, int n0 = 2) {
    if (c < 0.0) throw std::invalid_argument("product_bound: C must be nonnegative");
    if (c == 0.0) return 1.0;
    const long m = 1000000;
    double log_p = 0.0;
    for (long k = m; k > n0; --k) log_p += std::log1p(c * std::pow(static_cast<double>(k), -1.5));
    const double md = static_cast<double>(m);
    // int_M^inf log(1 + c x^{-3/2}) dx, expanded in c x^{-3/2}
    const double integral = 2.0 * c / std::sqrt(md) - c * c / (4.0 * md * md) + c * c * c / (18.0 * std::pow(md, 3.5));
    const double f = std::log1p(c * std::pow(md, -1.5));
    const double df = -1.5 * c * std::pow(md, -2.5) / (1.0 + c * std::pow(md, -1.5));
    log_p += integral - 0.5 * f - df / 12.0;
    return std::exp(log_p);
}

struct McmcGapResult {
    GapEstimate estimate;       // lower bound on gamma(N, rho)
    double rhat = 0.0;
    bool valid = false;
    int dictionary_size = 0;
    std::size_t samples = 0;
};

namespace detail {

/// Monomials of degree <= max_degree in n variables, as sorted index tuples.
inline std::vector<std::vector<int>> monomials(int n, int max_degree) {
    std::vector<std::vector<int>> out{{}};
    std::vector<std::vector<int>> layer{{}};
    for (int d = 1; d <= max_degree; ++d) {
        std::vector<std::vector<int>> next;
        for (const auto& m : layer) {
            const int start = m.empty() ? 0 : m.back();
            for (int i = start; i < n; ++i) {
                auto e = m;
                e.push_back(i);
                next.push_back(e);
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        layer = std::move(next);
    }
    return out;
}

/// Largest generalized eigenvalue of (cov, dir) on the range of dir.
inline double max_generalized(const Eigen::MatrixXd& cov, const Eigen::MatrixXd& dir, double drop = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dir);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] > drop * top) keep.push_back(i);
    Eigen::MatrixXd t(dir.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k)
        t.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(keep[k]) / std::sqrt(ev[keep[k]]);
    Eigen::MatrixXd red = t.transpose() * cov * t;
    red = 0.5 * (red + red.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(red, Eigen::EigenvaluesOnly);
    return es2.eigenvalues().maxCoeff();
}

struct Dictionary {
    std::vector<std::vector<int>> mono;           // all monomials of degree <= 3, [0] = constant
    std::vector<std::vector<std::pair<int, double>>> deriv;   // deriv[a][i] = (index of d_i mono_a, factor)
    int n = 0;

    explicit Dictionary(int n_sites) : mono(monomials(n_sites, 3)), n(n_sites) {
        std::map<std::vector<int>, int> index;
        for (std::size_t a = 0; a < mono.size(); ++a) index[mono[a]] = static_cast<int>(a);
        deriv.resize(mono.size());
        for (std::size_t a = 0; a < mono.size(); ++a) {
            deriv[a].assign(static_cast<std::size_t>(n), {-1, 0.0});
            for (int i = 0; i < n; ++i) {
                const auto cnt = std::count(mono[a].begin(), mono[a].end(), i);
                if (!cnt) continue;
                auto d = mono[a];
                d.erase(std::find(d.begin(), d.end(), i));
                deriv[a][static_cast<std::size_t>(i)] = {index.at(d), static_cast<double>(cnt)};
            }
        }
    }

    void fill(const std::vector<double>& xi, double* out) const {
        for (std::size_t a = 0; a < mono.size(); ++a) {
            double v = 1.0;
            for (int i : mono[a]) v *= xi[static_cast<std::size_t>(i)];
            out[a] = v;
        }
    }

    /// Ratio bound from the uncentered second-moment matrix of all monomials.
    double bound(const Eigen::MatrixXd& mom) const {
        const auto nd = static_cast<Eigen::Index>(mono.size()) - 1;
        Eigen::MatrixXd cov(nd, nd), dir = Eigen::MatrixXd::Zero(nd, nd);
        for (Eigen::Index a = 0; a < nd; ++a)
            for (Eigen::Index b = 0; b < nd; ++b) cov(a, b) = mom(a + 1, b + 1) - mom(0, a + 1) * mom(0, b + 1);
        for (Eigen::Index a = 0; a < nd; ++a)
            for (Eigen::Index b = 0; b <= a; ++b) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) {
                    const auto [da, fa] = deriv[a + 1][i];
                    const auto [db, fb] = deriv[b + 1][i];
                    if (da < 0 || db < 0) continue;
                    s += fa * fb * mom(da, db);
                }
                dir(a, b) = dir(b, a) = s;
            }
        return max_generalized(cov, dir);
    }
};

}  // namespace detail

/// Variational lower bound on gamma(N, rho) over centered polynomials of degree
/// <= 3 in the coordinates, from pair heat-bath samples.
inline McmcGapResult mcmc_gap_bound(const PotentialSpec& pot, int n, double rho, const SamplerConfig& cfg) {
    if (n < 2) throw std::invalid_argument("mcmc_gap_bound: n must be >= 2");
    if (cfg.chains < 1 || cfg.batches < 1) throw std::invalid_argument("mcmc_gap_bound: need chains >= 1 and batches >= 1");
    const detail::Dictionary dict(n);
    const auto nm = static_cast<Eigen::Index>(dict.mono.size());
    const std::uint64_t per_chain = cfg.steps / std::max<std::uint64_t>(cfg.thin, 1);
    const std::uint64_t per_batch = std::max<std::uint64_t>(per_chain / static_cast<std::uint64_t>(cfg.batches), 1);

    struct ChainOut {
        std::vector<Eigen::MatrixXd> mom;
        std::vector<double> count;
        std::vector<double> t1, t2;
    };
    std::vector<ChainOut> outs(static_cast<std::size_t>(cfg.chains));
    parallel_for(cfg.chains, cfg.threads, [&](int c) {
        ChainOut& out = outs[static_cast<std::size_t>(c)];
        constexpr Eigen::Index chunk = 256;
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(chunk, nm);
        Eigen::MatrixXd mom = Eigen::MatrixXd::Zero(nm, nm);
        std::vector<double> xi(static_cast<std::size_t>(n));
        Eigen::Index fill = 0;
        std::uint64_t in_batch = 0;
        const auto flush = [&] {
            if (fill == 0) return;
            mom.selfadjointView<Eigen::Lower>().rankUpdate(buf.topRows(fill).transpose());
            fill = 0;
        };
        const auto close_batch = [&] {
            flush();
            if (in_batch == 0) return;
            out.mom.push_back(mom.selfadjointView<Eigen::Lower>());
            out.count.push_back(static_cast<double>(in_batch));
            mom.setZero();
            in_batch = 0;
        };
        run_chain(pot, n, rho, chain_seed(cfg.seed, c), cfg, [&](const std::vector<double>& eta) {
            for (int i = 0; i < n; ++i) xi[static_cast<std::size_t>(i)] = eta[static_cast<std::size_t>(i)] - rho;
            dict.fill(xi, buf.row(fill).data());
            ++fill;
            ++in_batch;
            out.t1.push_back(xi[0]);
            out.t2.push_back(xi[0] * xi[0]);
            if (fill == chunk) flush();
            if (in_batch == per_batch) close_batch();
        });
        close_batch();
    });
    std::vector<Eigen::MatrixXd> batch_mom;
    std::vector<double> batch_count;
    std::vector<std::vector<double>> trace1, trace2;
    std::size_t total = 0;
    for (auto& o : outs) {
        for (std::size_t b = 0; b < o.mom.size(); ++b) {
            batch_mom.push_back(std::move(o.mom[b]));
            batch_count.push_back(o.count[b]);
        }
        total += o.t1.size();
        trace1.push_back(std::move(o.t1));
        trace2.push_back(std::move(o.t2));
    }
    const auto estimate = [&](const std::vector<int>& pick) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nm, nm);
        double cnt = 0.0;
        for (int b : pick) {
            m += batch_mom[static_cast<std::size_t>(b)];
            cnt += batch_count[static_cast<std::size_t>(b)];
        }
        return dict.bound(m / cnt);
    };
    std::vector<int> all(batch_mom.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    McmcGapResult r;
    r.estimate.size = n;
    r.estimate.rho = rho;
    r.estimate.method = GapMethod::mcmc_rayleigh;
    r.estimate.value = estimate(all);
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0xB0075742ull));
    double s1 = 0.0, s2 = 0.0;
    for (int b = 0; b < cfg.bootstrap; ++b) {
        std::vector<int> pick(all.size());
        for (auto& x : pick) x = static_cast<int>(rng() % all.size());
        const double v = estimate(pick);
        s1 += v;
        s2 += v * v;
    }
    if (cfg.bootstrap > 1) {
        const double m = s1 / cfg.bootstrap;
        r.estimate.uncertainty = std::sqrt(std::max(s2 / cfg.bootstrap - m * m, 0.0));
    }
    r.rhat = std::max(split_rhat(trace1), split_rhat(trace2));
    r.valid = r.rhat <= 1.1;
    r.dictionary_size = static_cast<int>(nm) - 1;
    r.samples = total;
    return r;
}

struct RecursionRow {
    int n = 0;
    double gamma = 0.0;          // max over the rho grid
    double argmax_rho = 0.0;
    GapMethod method = GapMethod::exact_eigen;
    double uncertainty = 0.0;
    std::vector<GapEstimate> per_rho;
};

struct RecursionReport {
    std::vector<RecursionRow> rows;
    double fitted_c = 0.0;       // smallest C with gamma(N) <= (1 + C N^{-3/2}) gamma(N-1)
    double c_prime = 1.0;        // prod_{N>=3} (1 + C N^{-3/2})
    bool mcmc_valid = true;
};

struct RecursionOptions {
    SliceOptions slice;
    SamplerConfig sampler;
    std::vector<double> mcmc_rho_grid;   // empty: use the exact grid
};

inline RecursionReport recursion_check(const PotentialSpec& pot, const std::vector<double>& rho_grid, int n_max,
                                       const RecursionOptions& opt = {}) {
    if (rho_grid.empty()) throw std::invalid_argument("recursion_check: rho grid empty");
    if (n_max < 2 || n_max > 5) throw std::invalid_argument("recursion_check: n_max must be in 2..5");
    RecursionReport rep;
    for (int n = 2; n <= n_max; ++n) {
        RecursionRow row;
        row.n = n;
        const bool quad = is_pure_quadratic(pot);
        const bool exact = quad || n <= 3;
        row.method = exact ? GapMethod::exact_eigen : GapMethod::mcmc_rayleigh;
        const auto& grid = (exact || opt.mcmc_rho_grid.empty()) ? rho_grid : opt.mcmc_rho_grid;
        row.gamma = -INFINITY;
        for (double rho : grid) {
            GapEstimate g;
            if (quad) g = quadratic_gap(pot, n, rho);
            else if (n <= 3) g = exact_gap_small_n(pot, n, rho, opt.slice);
            else {
                const McmcGapResult m = mcmc_gap_bound(pot, n, rho, opt.sampler);
                g = m.estimate;
                rep.mcmc_valid = rep.mcmc_valid && m.valid;
            }
            if (g.value > row.gamma) {
                row.gamma = g.value;
                row.argmax_rho = rho;
                row.uncertainty = g.uncertainty;
            }
            row.per_rho.push_back(g);
        }
        rep.rows.push_back(std::move(row));
    }
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        const double ratio = rep.rows[i].gamma / rep.rows[i - 1].gamma - 1.0;
        rep.fitted_c = std::max(rep.fitted_c, std::pow(rep.rows[i].n, 1.5) * std::max(ratio, 0.0));
    }
    rep.c_prime = product_bound(rep.fitted_c, 2);
    return rep;
}

}  // namespace spingap
