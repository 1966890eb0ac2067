#pragma once

// N-fold convolved densities, the Edgeworth expansion of their normalized
// form, the one-site marginal g_{N,rho}, the pair kernel Q_{N,rho} and the
// operator norm of the pair density off the typical region.
//
// Lattice convention: h^rho is sampled on k*dx (0 is a node), S_n denotes the
// lattice density of the sum of n samples, and G_n(x) = S_n(-x).

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lattice.hpp"
#include "numerics.hpp"
#include "single_site.hpp"

namespace spingap {

inline constexpr int kDefaultResolution = 256;
inline constexpr double kDefaultB = 10.0;

/// Half-width of the common grid for the n-fold power.
inline double power_window(double sigma, int n, double b) {
    return std::max(20.0, b * std::log(static_cast<double>(n)) + 10.0) * sigma * std::sqrt(static_cast<double>(n));
}

struct ConvolvedDensity {
    int n = 1;
    double rho = 0.0;
    double sigma = 1.0;     // single-site sigma_rho
    DensityGrid density;    // S_n on the lattice

    /// G_n(x) = S_n(-x) by cubic interpolation.
    double g(double x) const { return density.interpolate(-x); }

    /// Normalized form F_n(z) = sigma sqrt(n) G_n(-z sigma sqrt(n)).
    double normalized(double z) const {
        const double s = sigma * std::sqrt(static_cast<double>(n));
        return s * density.interpolate(z * s);
    }
};

inline ConvolvedDensity convolve_density(const TiltedMeasure& tm, int n, int resolution = kDefaultResolution,
                                         double b = kDefaultB) {
    if (n < 1) throw std::invalid_argument("convolve_density: n must be >= 1");
    ConvolvedDensity c;
    c.n = n;
    c.rho = tm.rho;
    c.sigma = tm.sigma();
    const DensityGrid h = sample_lattice(tm, lattice_spacing(tm, resolution));
    PowerOptions opt;
    opt.window = power_window(c.sigma, n, b);
    c.density = convolution_power(h, n, opt);
    return c;
}

/// Independent route: S_n(s) = (1/pi) int_0^inf Re[v(zeta)^n exp(-i zeta s)] dzeta,
/// with v the characteristic function computed by quadrature on the measure's grid.
inline std::vector<double> cf_inversion_density(const TiltedMeasure& tm, int n, const std::vector<double>& s_points) {
    if (n < 1) throw std::invalid_argument("cf_inversion_density: n must be >= 1");
    const auto cf = [&](double zeta) {
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < tm.values.size(); ++i) {
            const double a = tm.grid.weights[i] * tm.values[i];
            re += a * std::cos(zeta * tm.grid.nodes[i]);
            im += a * std::sin(zeta * tm.grid.nodes[i]);
        }
        return std::complex<double>(re, im);
    };
    // cutoff where |v|^n is negligible
    const double nyquist = std::numbers::pi / tm.grid.spacing();
    const int scan = 512;
    double zc = nyquist;
    for (int i = 1; i <= scan; ++i) {
        const double z = nyquist * i / scan;
        if (n * std::log(std::abs(cf(z)) + 1e-300) < std::log(1e-20)) {
            zc = z;
            break;
        }
    }
    static const auto rule = gauss_legendre(16);
    const int panels = 192;
    const double hpanel = zc / panels;
    std::vector<double> zs, ws;
    std::vector<std::complex<double>> vn;
    for (int p = 0; p < panels; ++p) {
        const double mid = (p + 0.5) * hpanel;
        for (std::size_t k = 0; k < rule.first.size(); ++k) {
            const double z = mid + 0.5 * hpanel * rule.first[k];
            zs.push_back(z);
            ws.push_back(0.5 * hpanel * rule.second[k]);
            vn.push_back(std::pow(cf(z), n));
        }
    }
    std::vector<double> out;
    out.reserve(s_points.size());
    for (double s : s_points) {
        double acc = 0.0;
        for (std::size_t k = 0; k < zs.size(); ++k)
            acc += ws[k] * (vn[k].real() * std::cos(zs[k] * s) + vn[k].imag() * std::sin(zs[k] * s));
        out.push_back(acc / std::numbers::pi);
    }
    return out;
}

/// Sup over test points of |sigma sqrt(n) (S_conv - S_cf)|, on `points` nodes
/// spread over +-6 sigma sqrt(n).
inline double convolution_cf_discrepancy(const TiltedMeasure& tm, int n, int resolution = kDefaultResolution,
                                         int points = 101) {
    const ConvolvedDensity c = convolve_density(tm, n, resolution);
    const double s = c.sigma * std::sqrt(static_cast<double>(n));
    std::vector<double> xs(points);
    for (int i = 0; i < points; ++i) {
        // snap to lattice nodes so the convolution side is not interpolated
        const double x = -6.0 * s + 12.0 * s * i / (points - 1);
        xs[i] = std::round(x / c.density.dx) * c.density.dx;
    }
    const auto inv = cf_inversion_density(tm, n, xs);
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
        const auto k = static_cast<std::int64_t>(std::llround(xs[i] / c.density.dx));
        worst = std::max(worst, s * std::abs(c.density.at(k) - inv[i]));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Edgeworth expansion
// ---------------------------------------------------------------------------

enum class EdgeworthVariant {
    verbatim,   // m3^2 term multiplies z^3 - 3z
    hermite6,   // m3^2 term multiplies z^6 - 15z^4 + 45z^2 - 15
};

struct EdgeworthCoeffs {
    double sigma = 1.0;
    double m3 = 0.0;
    double m4 = 3.0;
    int n = 1;
    EdgeworthVariant variant = EdgeworthVariant::verbatim;
};

inline EdgeworthCoeffs edgeworth_coeffs(const TiltedMeasure& tm, int n, EdgeworthVariant v = EdgeworthVariant::verbatim) {
    if (tm.moments.size() < 5) throw std::invalid_argument("edgeworth_coeffs: need moments up to order 4");
    EdgeworthCoeffs c{tm.sigma(), tm.moments[3], tm.moments[4], n, v};
    if (!(c.sigma > 0.0) || c.m4 < ipow(c.sigma, 4) * (1.0 - 1e-12))
        throw std::invalid_argument("edgeworth_coeffs: need sigma > 0 and m4 >= sigma^4");
    return c;
}

inline double edgeworth_p3(const EdgeworthCoeffs& c, double z) {
    return c.m3 / (6.0 * ipow(c.sigma, 3)) * (z * z * z - 3.0 * z);
}

inline double edgeworth_p4(const EdgeworthCoeffs& c, double z) {
    const double z2 = z * z;
    const double skew = c.m3 * c.m3 / (72.0 * ipow(c.sigma, 6));
    const double skew_poly = c.variant == EdgeworthVariant::verbatim ? z * z2 - 3.0 * z
                                                                     : z2 * z2 * z2 - 15.0 * z2 * z2 + 45.0 * z2 - 15.0;
    const double s4 = ipow(c.sigma, 4);
    return skew * skew_poly + (c.m4 - 3.0 * s4) / (24.0 * s4) * (z2 * z2 - 6.0 * z2 + 3.0);
}

inline double edgeworth_density(const EdgeworthCoeffs& c, double z) {
    if (c.n < 1) throw std::invalid_argument("edgeworth_density: n must be >= 1");
    const double rn = std::sqrt(static_cast<double>(c.n));
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) *
           (1.0 + edgeworth_p3(c, z) / rn + edgeworth_p4(c, z) / c.n);
}

struct ScalingRow {
    int n = 0;
    double sup_error = 0.0;
    int resolution = 0;
};

struct ScalingReport {
    std::vector<ScalingRow> rows;
    double fitted_slope = 0.0;
    double prefactor = 0.0;         // exp(intercept) of the log-log fit
    std::vector<std::string> warnings;
};

inline void fit_scaling(ScalingReport& r, int n_min = 1) {
    std::vector<double> xs, ys;
    for (const auto& row : r.rows)
        if (row.n >= n_min && row.sup_error > 0.0) {
            xs.push_back(row.n);
            ys.push_back(row.sup_error);
        }
    if (xs.size() >= 2) {
        const LineFit f = fit_loglog(xs, ys);
        r.fitted_slope = f.slope;
        r.prefactor = std::exp(f.intercept);
    }
}

/// sup_z |F_n(z) - edgeworth(z)| over the lattice nodes of S_n.
inline double edgeworth_sup_error(const TiltedMeasure& tm, const ConvolvedDensity& c, EdgeworthVariant v) {
    const EdgeworthCoeffs co = edgeworth_coeffs(tm, c.n, v);
    const double s = c.sigma * std::sqrt(static_cast<double>(c.n));
    double worst = 0.0;
    for (std::size_t i = 0; i < c.density.size(); ++i) {
        const double x = c.density.node(i);
        worst = std::max(worst, std::abs(s * c.density.values[i] - edgeworth_density(co, x / s)));
    }
    return worst;
}

inline ScalingReport clt_scaling(const TiltedMeasure& tm, const std::vector<int>& n_list,
                                 EdgeworthVariant v = EdgeworthVariant::verbatim,
                                 int resolution = kDefaultResolution) {
    ScalingReport r;
    for (int n : n_list) {
        const ConvolvedDensity c = convolve_density(tm, n, resolution);
        r.rows.push_back({n, edgeworth_sup_error(tm, c, v), resolution});
    }
    fit_scaling(r);
    return r;
}

// ---------------------------------------------------------------------------
// Canonical lattice: h together with S_{N-2}, S_{N-1}, S_N
// ---------------------------------------------------------------------------

struct CanonicalLattice {
    int n = 0;
    double rho = 0.0;
    double sigma = 1.0;
    DensityGrid h;
    DensityGrid s_nm2;   // empty when n == 2
    DensityGrid s_nm1;
    DensityGrid s_n;

    double dx() const { return h.dx; }
    std::size_t size() const { return h.size(); }
    std::int64_t index(std::size_t i) const { return h.first + static_cast<std::int64_t>(i); }
    double node(std::size_t i) const { return h.node(i); }
};

namespace detail {

inline void extend_canonical(CanonicalLattice& c, double b) {
    PowerOptions opt;
    opt.window = power_window(c.sigma, c.n, b) + std::abs(c.h.offset) * c.n;
    if (c.n == 2) {
        c.s_nm1 = c.h;
    } else {
        c.s_nm2 = convolution_power(c.h, c.n - 2, opt);
        c.s_nm1 = convolve(c.s_nm2, c.h);
        trim(c.s_nm1);
    }
    c.s_n = convolve(c.s_nm1, c.h);
    trim(c.s_n);
}

}  // namespace detail

/// S_{N-1} and S_N are built from S_{N-2} by exact lattice products with h, so
/// the marginal and pair densities are consistent to rounding.
inline CanonicalLattice build_canonical(const TiltedMeasure& tm, int n, int resolution = kDefaultResolution,
                                        double b = kDefaultB) {
    if (n < 2) throw std::invalid_argument("build_canonical: n must be >= 2");
    CanonicalLattice c;
    c.n = n;
    c.rho = tm.rho;
    c.sigma = tm.sigma();
    c.h = sample_lattice(tm, lattice_spacing(tm, resolution));
    detail::extend_canonical(c, b);
    return c;
}

/// Same construction on a prescribed lattice offset + k*dx, k in [first, last].
inline CanonicalLattice build_canonical_on(const TiltedMeasure& tm, int n, double dx, double offset,
                                           std::int64_t first, std::int64_t last, double b = kDefaultB) {
    if (n < 2) throw std::invalid_argument("build_canonical_on: n must be >= 2");
    CanonicalLattice c;
    c.n = n;
    c.rho = tm.rho;
    c.sigma = tm.sigma();
    c.h = sample_lattice_range(tm, dx, offset, first, last);
    detail::extend_canonical(c, b);
    return c;
}

/// Lattice index of -x for a point of S_m whose lattice carries offset m*c.
inline std::int64_t neg_index(const DensityGrid& s, double x) {
    return static_cast<std::int64_t>(std::llround((-x - s.offset) / s.dx));
}

struct MarginalDensity {
    int n = 0;
    double rho = 0.0;
    DensityGrid density;        // g_{N,rho} in the centered coordinate x - rho
    double eqe_sup_error = 0.0; // sup |G_{N-1}(x)/G_N(0) - exp(-x^2/(2 sigma^2 (N-1)))|
    double eqe_c = 0.0;         // max g / h

    double mean() const { return rho + density.moment(1) / density.mass(); }
    double variance() const {
        const double m = density.mass();
        const double m1 = density.moment(1) / m;
        return density.moment(2) / m - m1 * m1;
    }
};

inline MarginalDensity marginal_from(const CanonicalLattice& c) {
    const double s_n0 = c.s_n.at(neg_index(c.s_n, 0.0));
    if (!(s_n0 > 1e-300)) throw NumericalError("degenerate_grid", "G_N(0) below 1e-300");
    MarginalDensity m;
    m.n = c.n;
    m.rho = c.rho;
    m.density = c.h;
    const double var_scale = 2.0 * c.sigma * c.sigma * (c.n - 1);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double x = c.node(i);
        const double ratio = c.s_nm1.at(neg_index(c.s_nm1, x)) / s_n0;
        m.density.values[i] = c.h.values[i] * ratio;
        m.eqe_sup_error = std::max(m.eqe_sup_error, std::abs(ratio - std::exp(-x * x / var_scale)));
        if (c.h.values[i] > 0.0) m.eqe_c = std::max(m.eqe_c, ratio);
    }
    const double mass = m.density.mass();
    for (double& v : m.density.values) v /= mass;
    return m;
}

inline MarginalDensity marginal_density(const TiltedMeasure& tm, int n, int resolution = kDefaultResolution) {
    if (n < 2) throw std::invalid_argument("marginal_density: n must be >= 2");
    return marginal_from(build_canonical(tm, n, resolution));
}

struct PairKernel {
    int n = 0;
    double rho = 0.0;
    double sigma = 1.0;
    double dx = 1.0;
    std::vector<double> nodes;      // centered coordinate x - rho
    std::vector<double> marginal;   // g_{N,rho} at the nodes (density)
    Eigen::MatrixXd q;              // Q_{N,rho}(x_i, x_j)
    Eigen::MatrixXd joint;          // tilde g_{N,rho}(x_i, x_j) (density)
};

inline PairKernel pair_kernel_from(const CanonicalLattice& c) {
    if (c.n < 3) throw std::invalid_argument("pair_kernel: n must be >= 3");
    const std::size_t m = c.size();
    const double log_sn0 = std::log(c.s_n.at(neg_index(c.s_n, 0.0)));
    PairKernel p;
    p.n = c.n;
    p.rho = c.rho;
    p.sigma = c.sigma;
    p.dx = c.dx();
    p.nodes.resize(m);
    p.marginal.resize(m);
    std::vector<double> log_s1(m), log_h(m);
    for (std::size_t i = 0; i < m; ++i) {
        p.nodes[i] = c.node(i);
        log_h[i] = std::log(c.h.values[i]);
        log_s1[i] = std::log(c.s_nm1.at(neg_index(c.s_nm1, p.nodes[i])));
        p.marginal[i] = std::exp(log_h[i] + log_s1[i] - log_sn0);
    }
    p.q.resize(m, m);
    p.joint.resize(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double s2 = c.s_nm2.at(neg_index(c.s_nm2, p.nodes[i] + p.nodes[j]));
            double q = -1.0, joint = 0.0;
            if (s2 > 0.0) {
                const double ls2 = std::log(s2);
                q = std::expm1(ls2 + log_sn0 - log_s1[i] - log_s1[j]);
                joint = std::exp(log_h[i] + log_h[j] + ls2 - log_sn0);
            }
            if (!std::isfinite(q) || !std::isfinite(joint))
                throw NumericalError("pair_kernel_finite", "non-finite kernel entry");
            p.q(i, j) = p.q(j, i) = q;
            p.joint(i, j) = p.joint(j, i) = joint;
        }
    }
    return p;
}

inline PairKernel pair_kernel(const TiltedMeasure& tm, int n, int resolution = kDefaultResolution) {
    return pair_kernel_from(build_canonical(tm, n, resolution));
}

/// max_i |sum_j g(x_j) Q(x_i, x_j) dx|: both margins of the centered pair kernel vanish.
inline double pair_kernel_margin_residual(const PairKernel& p) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.q.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < p.q.cols(); ++j) s += p.marginal[j] * p.q(i, j) * p.dx;
        worst = std::max(worst, std::abs(s));
    }
    return worst;
}

struct KernelExpansionRow {
    int n = 0;
    double sup_error = 0.0;         // sup over B_rho of |Q + x y/(sigma^2 n)|
    double discretization = 0.0;    // same quantity, change under halving the resolution
    std::size_t region_points = 0;
    bool resolution_warning = false;
};

struct KernelExpansionReport {
    double b = kDefaultB;
    std::vector<KernelExpansionRow> rows;
    double fitted_slope = 0.0;
    double prefactor = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

inline double kernel_expansion_sup(const PairKernel& p, double b, std::size_t* count = nullptr,
                                   std::vector<double>* values = nullptr) {
    const double radius = b * p.sigma * std::log(static_cast<double>(p.n));
    const double s2n = p.sigma * p.sigma * p.n;
    double worst = 0.0;
    std::size_t cnt = 0;
    for (Eigen::Index i = 0; i < p.q.rows(); ++i)
        for (Eigen::Index j = 0; j < p.q.cols(); ++j) {
            if (std::abs(p.nodes[i]) + std::abs(p.nodes[j]) > radius) continue;
            const double e = std::abs(p.q(i, j) + p.nodes[i] * p.nodes[j] / s2n);
            worst = std::max(worst, e);
            ++cnt;
            if (values) values->push_back(e);
        }
    if (count) *count = cnt;
    return worst;
}

}  // namespace detail

inline KernelExpansionReport verify_kernel_expansion(const TiltedMeasure& tm, const std::vector<int>& n_list,
                                                     double b = kDefaultB, int resolution = kDefaultResolution) {
    if (!(b > 0.0)) throw std::invalid_argument("verify_kernel_expansion: B must be positive");
    KernelExpansionReport rep;
    rep.b = b;
    std::vector<double> xs, ys;
    for (int n : n_list) {
        if (n < 3) throw std::invalid_argument("verify_kernel_expansion: n must be >= 3");
        KernelExpansionRow row;
        row.n = n;
        const PairKernel fine = pair_kernel(tm, n, resolution);
        row.sup_error = detail::kernel_expansion_sup(fine, b, &row.region_points);
        // coarse lattice nodes are every other fine node
        const PairKernel coarse = pair_kernel(tm, n, resolution / 2);
        const double radius = b * fine.sigma * std::log(static_cast<double>(n));
        for (std::size_t i = 0; i < coarse.nodes.size(); ++i)
            for (std::size_t j = 0; j < coarse.nodes.size(); ++j) {
                if (std::abs(coarse.nodes[i]) + std::abs(coarse.nodes[j]) > radius) continue;
                const auto fi = std::llround((coarse.nodes[i] - fine.nodes[0]) / fine.dx);
                const auto fj = std::llround((coarse.nodes[j] - fine.nodes[0]) / fine.dx);
                if (fi < 0 || fj < 0 || fi >= (long long)fine.nodes.size() || fj >= (long long)fine.nodes.size()) continue;
                row.discretization = std::max(row.discretization, std::abs(coarse.q(i, j) - fine.q(fi, fj)));
            }
        row.resolution_warning = row.sup_error < 10.0 * row.discretization;
        if (row.resolution_warning)
            rep.warnings.push_back("n=" + std::to_string(n) + ": expansion error within 10x of the discretization estimate");
        rep.rows.push_back(row);
        if (n >= 8) {
            xs.push_back(n);
            ys.push_back(row.sup_error);
        }
    }
    if (xs.size() >= 2) {
        const LineFit f = fit_loglog(xs, ys);
        rep.fitted_slope = f.slope;
        rep.prefactor = std::exp(f.intercept);
    }
    return rep;
}

/// A_ij = dx tilde g(x_i, x_j) / sqrt(g_i g_j) on the complement of B_rho: the
/// pair density as a bilinear form on L^2(g), in the whitened basis sqrt(g) f.
inline Eigen::MatrixXd masked_tail_matrix(const PairKernel& p, double b) {
    const double radius = b * p.sigma * std::log(static_cast<double>(p.n));
    const Eigen::Index m = p.q.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            if (std::abs(p.nodes[i]) + std::abs(p.nodes[j]) <= radius) continue;
            if (p.marginal[i] <= 0.0 || p.marginal[j] <= 0.0) continue;
            a(i, j) = p.dx * p.joint(i, j) / std::sqrt(p.marginal[i] * p.marginal[j]);
        }
    return a;
}

struct TailNorm {
    int n = 0;
    double b = kDefaultB;
    double value = 0.0;       // sharp constant of the claim
    double ratio = 0.0;       // value * n^{3/2}
    std::size_t masked_entries = 0;
};

/// Perron eigenvalue of a nonnegative symmetric matrix by power iteration.
inline double perron_eigenvalue(const Eigen::MatrixXd& a, int max_iter = 20000, double tol = 1e-13) {
    if (a.rows() == 0 || a.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(a.rows()).normalized();
    double lam = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = a * v;
        const double next = v.dot(w);
        const double nrm = w.norm();
        if (nrm == 0.0) return 0.0;
        w /= nrm;
        if (std::abs(next - lam) <= tol * std::abs(next) && it > 10) return next;
        lam = next;
        // averaging damps a -lambda_max partner
        v = 0.5 * (v + w);
        v.normalize();
    }
    return lam;
}

inline TailNorm tail_operator_norm(const TiltedMeasure& tm, int n, double b = kDefaultB,
                                   int resolution = kDefaultResolution) {
    if (n < 3) throw std::invalid_argument("tail_operator_norm: n must be >= 3");
    const PairKernel p = pair_kernel(tm, n, resolution);
    const Eigen::MatrixXd a = masked_tail_matrix(p, b);
    TailNorm t;
    t.n = n;
    t.b = b;
    t.masked_entries = static_cast<std::size_t>((a.array() > 0.0).count());
    t.value = perron_eigenvalue(a);
    t.ratio = t.value * std::pow(static_cast<double>(n), 1.5);
    return t;
}

}  // namespace spingap
