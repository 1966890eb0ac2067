#pragma once

// Tilted single-site measure h^rho(x) = exp(-V(x+rho) - lambda x)/Z_rho on the
// centered coordinate x = eta - rho, with lambda fixed by the zero-mean
// condition. Everything downstream (convolution powers, the K operator, the
// samplers' truncation rule) is built on top of this object.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "potential.hpp"

namespace spingap {

struct SolverOptions {
    double tol = 1e-12;                 // |int x h(x) dx| target
    int points = 4096;                  // initial trapezoid resolution
    int max_refinements = 3;            // resolution doublings
    double refine_rel_change = 1e-9;    // stop once sigma^2 moves less than this
    double boundary_ratio = 1e-16;      // integrand at the grid ends vs peak
    double lambda_range = 1e12;         // give up bracketing beyond |lambda| = this
    int k_max = 8;                      // moments stored on the measure
};

struct TiltedMeasure {
    PotentialSpec potential;
    double rho = 0.0;
    double lambda = 0.0;
    double log_z = 0.0;     // log Z_rho
    double sigma2 = 0.0;
    std::vector<double> moments;  // moments[k] = m_{k,rho}, k = 0..k_max
    QuadratureGrid grid;          // nodes in the centered coordinate
    std::vector<double> values;   // h^rho at the nodes

    double sigma() const { return std::sqrt(sigma2); }
    double z() const { return std::exp(log_z); }

    double log_density(double x) const { return -value(potential, x + rho) - lambda * x - log_z; }
    double density(double x) const { return std::exp(log_density(x)); }

    /// Weighted sum of f(x_i) h(x_i).
    template <class F>
    double expect(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += grid.weights[i] * values[i] * f(grid.nodes[i]);
        return s;
    }
};

namespace detail {

struct Window {
    double lo = 0.0;
    double hi = 0.0;
    double peak = 0.0;  // max of the unnormalized log density
};

inline double tilted_log(const PotentialSpec& pot, double rho, double lambda, double x) {
    return -value(pot, x + rho) - lambda * x;
}

/// Finds the mode of -V(x+rho) - lambda x and the two points where the log
/// density has dropped by `cutoff` below the peak.
inline Window find_window(const PotentialSpec& pot, double rho, double lambda, double cutoff) {
    const auto ell = [&](double x) { return tilted_log(pot, rho, lambda, x); };
    const auto slope = [&](double x) { return -eval(pot, x + rho, 1) - lambda; };

    // bracket a sign change of the slope
    const double dir = slope(0.0) > 0.0 ? 1.0 : -1.0;
    double prev = 0.0, step = 1e-3;
    for (int it = 0; dir * slope(dir * step) > 0.0; ++it) {
        prev = step;
        step *= 2.0;
        if (it > 200) throw NumericalError("mode_bracket", "log density has no interior maximum");
    }
    double a = dir * prev, b = dir * step;
    if (a > b) std::swap(a, b);
    for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a)); ++it) {
        const double m = 0.5 * (a + b);
        if (slope(m) > 0.0) a = m; else b = m;
    }
    const double mode = 0.5 * (a + b);

    Window w;
    w.peak = ell(mode);
    const auto expand = [&](double sgn) {
        double s = 1e-6;
        double prev = 0.0;
        for (int it = 0;; ++it) {
            const double x = mode + sgn * s;
            const double l = ell(x);
            w.peak = std::max(w.peak, l);
            if (l < w.peak - cutoff && sgn * slope(x) < 0.0) break;
            prev = s;
            s *= 2.0;
            if (it > 200) throw NumericalError("grid_truncation", "log density does not decay");
        }
        double lo = prev, hi = s;
        for (int it = 0; it < 80; ++it) {
            const double m = 0.5 * (lo + hi);
            if (ell(mode + sgn * m) < w.peak - cutoff) hi = m; else lo = m;
        }
        return mode + sgn * hi;
    };
    w.hi = expand(1.0);
    w.lo = expand(-1.0);
    return w;
}

struct Evaluation {
    QuadratureGrid grid;
    std::vector<double> weights;  // unnormalized exp(ell - peak)
    double peak = 0.0;
    double mass = 0.0;            // sum w exp(ell - peak)
    double mean = 0.0;
    double var = 0.0;
    double tail_estimate = 0.0;   // mass lost to truncation, relative
};

inline Evaluation evaluate_tilt(const PotentialSpec& pot, double rho, double lambda, int points, double cutoff) {
    Evaluation e;
    const Window w = find_window(pot, rho, lambda, cutoff);
    e.grid = trapezoid_grid(w.lo, w.hi, points);
    e.weights.resize(points);
    std::vector<double> ell(points);
    double peak = w.peak;
    for (int i = 0; i < points; ++i) {
        ell[i] = tilted_log(pot, rho, lambda, e.grid.nodes[i]);
        peak = std::max(peak, ell[i]);
    }
    e.peak = peak;
    double s0 = 0.0, s1 = 0.0;
    for (int i = 0; i < points; ++i) {
        e.weights[i] = std::exp(ell[i] - peak);
        s0 += e.grid.weights[i] * e.weights[i];
        s1 += e.grid.weights[i] * e.weights[i] * e.grid.nodes[i];
    }
    e.mass = s0;
    e.mean = s1 / s0;
    double s2 = 0.0;
    for (int i = 0; i < points; ++i) {
        const double d = e.grid.nodes[i] - e.mean;
        s2 += e.grid.weights[i] * e.weights[i] * d * d;
    }
    e.var = s2 / s0;
    // Exponential-tail bound for the discarded mass beyond each end.
    const auto tail = [&](double x) {
        const double sl = std::abs(-eval(pot, x + rho, 1) - lambda);
        return std::exp(tilted_log(pot, rho, lambda, x) - peak) / std::max(sl, 1e-300);
    };
    e.tail_estimate = (tail(w.lo) + tail(w.hi)) / s0;
    return e;
}

}  // namespace detail

/// Centered moments m_k = sum w x^k h, k = 0..k_max.
inline std::vector<double> compute_moments(const TiltedMeasure& tm, int k_max,
                                           std::vector<std::string>* warnings = nullptr) {
    if (k_max < 2) throw std::invalid_argument("compute_moments: k_max must be >= 2");
    std::vector<double> m(k_max + 1, 0.0);
    for (std::size_t i = 0; i < tm.values.size(); ++i) {
        const double x = tm.grid.nodes[i];
        double xp = tm.grid.weights[i] * tm.values[i];
        for (int k = 0; k <= k_max; ++k) {
            m[k] += xp;
            xp *= x;
        }
    }
    if (warnings) {
        const double lo = tm.grid.lo(), hi = tm.grid.hi();
        const double edge = std::max(ipow(std::abs(lo), k_max) * tm.values.front(),
                                     ipow(std::abs(hi), k_max) * tm.values.back()) * (hi - lo);
        const double scale = std::max(std::abs(m[k_max]), ipow(std::sqrt(m[2]), k_max));
        if (edge > 1e-10 * scale)
            warnings->push_back("moment " + std::to_string(k_max) + " integrand not negligible at grid boundary");
    }
    return m;
}

/// Solves the zero-mean condition for lambda and returns the tilted measure.
inline TiltedMeasure solve_chemical_potential(const PotentialSpec& pot, double rho, const SolverOptions& opt = {}) {
    if (!std::isfinite(rho)) throw std::invalid_argument("solve_chemical_potential: rho must be finite");
    if (!(opt.tol > 0.0)) throw std::invalid_argument("solve_chemical_potential: tol must be positive");
    const double cutoff = -std::log(opt.boundary_ratio);

    const auto solve_at = [&](int points, double lambda0) {
        // mean(lambda) is strictly decreasing with derivative -variance.
        const auto mean_at = [&](double lam) { return detail::evaluate_tilt(pot, rho, lam, points, cutoff).mean; };
        const double pad = pot.psi_d1_sup + 10.0;
        double width = pad;
        double lo = lambda0 - width, hi = lambda0 + width;
        while (mean_at(lo) <= 0.0) {
            width *= 2.0;
            lo = lambda0 - width;
            if (std::abs(lo) > opt.lambda_range) throw NumericalError("lambda_bracket", "lower end of the lambda bracket escaped the allowed range");
        }
        width = pad;
        while (mean_at(hi) >= 0.0) {
            width *= 2.0;
            hi = lambda0 + width;
            if (std::abs(hi) > opt.lambda_range) throw NumericalError("lambda_bracket", "upper end of the lambda bracket escaped the allowed range");
        }
        double lam = std::clamp(lambda0, lo, hi);
        detail::Evaluation e;
        for (int it = 0; it < 300; ++it) {
            e = detail::evaluate_tilt(pot, rho, lam, points, cutoff);
            if (std::abs(e.mean) <= opt.tol) return std::pair{lam, e};
            if (e.mean > 0.0) lo = lam; else hi = lam;
            double next = lam + e.mean / e.var;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (next == lam || hi - lo <= 4e-16 * std::max(1.0, std::abs(lam))) break;
            lam = next;
        }
        if (std::abs(e.mean) > opt.tol)
            throw NumericalError("chemical_potential", "mean residual " + std::to_string(e.mean) + " above tolerance");
        return std::pair{lam, e};
    };

    int points = opt.points;
    auto [lambda, ev] = solve_at(points, -eval(pot, rho, 1));
    for (int r = 0; r < opt.max_refinements; ++r) {
        auto [lam2, ev2] = solve_at(2 * points - 1, lambda);
        const double change = std::abs(ev2.var - ev.var) / ev.var;
        lambda = lam2;
        ev = std::move(ev2);
        points = 2 * points - 1;
        if (change < opt.refine_rel_change) break;
    }
    if (ev.tail_estimate > 1e-9)
        throw NumericalError("quadrature_mass", "truncated tail mass " + std::to_string(ev.tail_estimate) + " exceeds 1e-9");

    TiltedMeasure tm;
    tm.potential = pot;
    tm.rho = rho;
    tm.lambda = lambda;
    tm.grid = std::move(ev.grid);
    tm.log_z = ev.peak + std::log(ev.mass);
    tm.values.resize(ev.weights.size());
    for (std::size_t i = 0; i < ev.weights.size(); ++i) tm.values[i] = ev.weights[i] / ev.mass;
    tm.moments = compute_moments(tm, std::max(opt.k_max, 2));
    tm.sigma2 = tm.moments[2];
    return tm;
}

// ---------------------------------------------------------------------------
// Bound checks over rho sweeps
// ---------------------------------------------------------------------------

struct MomentBoundReport {
    struct Row {
        double rho;
        int n;
        double ratio;   // m_{2n}/sigma^{2n}
        double bound;   // prod_{l=2}^n (1 + k l^2)
    };
    double k = 0.0;
    std::vector<Row> rows;
    double max_ratio = 0.0;
    double max_ratio_to_bound = 0.0;
    bool all_within = true;
};

/// m_{2n}/sigma^{2n} against prod_{l=2}^n (1 + k l^2) with k = 12 exp(6 |psi|_inf).
inline MomentBoundReport verify_moment_bounds(const PotentialSpec& pot, const std::vector<double>& rho_grid, int n_max,
                                              const SolverOptions& opt = {}) {
    if (rho_grid.empty()) throw std::invalid_argument("verify_moment_bounds: rho grid empty");
    MomentBoundReport rep;
    rep.k = 12.0 * std::exp(6.0 * pot.psi_sup);
    SolverOptions o = opt;
    o.k_max = std::max(o.k_max, 2 * n_max);
    for (double rho : rho_grid) {
        const TiltedMeasure tm = solve_chemical_potential(pot, rho, o);
        double bound = 1.0;
        for (int n = 2; n <= n_max; ++n) {
            bound *= 1.0 + rep.k * n * n;
            const double ratio = tm.moments[2 * n] / ipow(tm.sigma2, n);
            rep.rows.push_back({rho, n, ratio, bound});
            rep.max_ratio = std::max(rep.max_ratio, ratio);
            rep.max_ratio_to_bound = std::max(rep.max_ratio_to_bound, ratio / bound);
            rep.all_within = rep.all_within && ratio <= bound;
        }
    }
    return rep;
}

struct SigmaBoundReport {
    struct Row {
        double rho;
        double sigma2;          // full potential
        double phi2_at_rho;     // phi''(rho)
        double product;         // sigma2 * phi''(rho)
        double convex_sigma2;   // variance of the psi-free tilted measure
        double bl_upper;        // mu[1/phi''] (psi-free measure)
        double jensen_lower;    // 1/mu[phi''] (psi-free measure)
        bool bracket_ok;
    };
    std::vector<Row> rows;
    double min_product = INFINITY;
    double max_product = 0.0;
    double observed_k = 0.0;  // smallest k with product in [1/k, k] over the sweep
    bool all_brackets_ok = true;
};

inline SigmaBoundReport verify_sigma_bounds(const PotentialSpec& pot, const std::vector<double>& rho_grid,
                                            const SolverOptions& opt = {}) {
    if (rho_grid.empty()) throw std::invalid_argument("verify_sigma_bounds: rho grid empty");
    SigmaBoundReport rep;
    const PotentialSpec convex = convex_part(pot);
    for (double rho : rho_grid) {
        const TiltedMeasure full = solve_chemical_potential(pot, rho, opt);
        const TiltedMeasure cvx = has_perturbation(pot) ? solve_chemical_potential(convex, rho, opt) : full;
        SigmaBoundReport::Row r{};
        r.rho = rho;
        r.sigma2 = full.sigma2;
        r.phi2_at_rho = phi_jet(pot, rho).d2;
        r.product = r.sigma2 * r.phi2_at_rho;
        r.convex_sigma2 = cvx.sigma2;
        r.bl_upper = cvx.expect([&](double x) { return 1.0 / phi_jet(pot, x + rho).d2; });
        r.jensen_lower = 1.0 / cvx.expect([&](double x) { return phi_jet(pot, x + rho).d2; });
        const double slack = 1e-10 * cvx.sigma2;
        r.bracket_ok = r.jensen_lower <= cvx.sigma2 + slack && cvx.sigma2 <= r.bl_upper + slack;
        rep.min_product = std::min(rep.min_product, r.product);
        rep.max_product = std::max(rep.max_product, r.product);
        rep.all_brackets_ok = rep.all_brackets_ok && r.bracket_ok;
        rep.rows.push_back(r);
    }
    rep.observed_k = std::max(rep.max_product, 1.0 / rep.min_product);
    return rep;
}

// ---------------------------------------------------------------------------
// Tails and characteristic functions
// ---------------------------------------------------------------------------

struct TailReport {
    std::vector<double> t;
    std::vector<double> tail;   // mu[|xi| >= sigma T]
    double fitted_c = 0.0;      // smallest C with tail <= C exp(-T/C) on the grid
    std::vector<std::string> warnings;
};

/// Smallest C > 0 with C exp(-t/C) >= tail.
inline double exp_tail_constant(double t, double tail) {
    if (tail <= 0.0) return 0.0;
    double lo = 1e-8, hi = 1e8;
    for (int it = 0; it < 200; ++it) {
        const double m = std::sqrt(lo * hi);
        if (m * std::exp(-t / m) >= tail) hi = m; else lo = m;
    }
    return hi;
}

inline TailReport tail_estimate(const TiltedMeasure& tm, const std::vector<double>& t_grid) {
    TailReport rep;
    const double s = tm.sigma();
    const double lo = tm.grid.lo(), hi = tm.grid.hi();
    double t_max = 0.0;
    for (double t : t_grid) {
        if (t < 0.0) throw std::invalid_argument("tail_estimate: T must be nonnegative");
        t_max = std::max(t_max, t);
        const double cut = s * t;
        const auto dens = [&](double x) { return tm.density(x); };
        double mass = 0.0;
        if (cut < hi) mass += integrate(dens, std::max(cut, lo), hi, 128);
        if (-cut > lo) mass += integrate(dens, lo, std::min(-cut, hi), 128);
        if (cut == 0.0) mass = integrate(dens, lo, hi, 256);
        rep.t.push_back(t);
        rep.tail.push_back(mass);
        if (t > 0.0) rep.fitted_c = std::max(rep.fitted_c, exp_tail_constant(t, mass));
    }
    if (s * t_max > tm.grid.halfwidth)
        rep.warnings.push_back("sigma*max(T) exceeds the grid halfwidth; tail masses there are truncated to 0");
    return rep;
}

/// vbar(zeta) = int exp(i zeta x / sigma) h(x) dx.
inline std::vector<std::complex<double>> char_function(const TiltedMeasure& tm, const std::vector<double>& zeta_grid) {
    std::vector<std::complex<double>> out;
    out.reserve(zeta_grid.size());
    const double inv_s = 1.0 / tm.sigma();
    for (double zeta : zeta_grid) {
        double re = 0.0, im = 0.0;
        const double w = zeta * inv_s;
        for (std::size_t i = 0; i < tm.values.size(); ++i) {
            const double a = tm.grid.weights[i] * tm.values[i];
            re += a * std::cos(w * tm.grid.nodes[i]);
            im += a * std::sin(w * tm.grid.nodes[i]);
        }
        out.emplace_back(re, im);
    }
    return out;
}

struct CharFunctionBounds {
    double decay_c = 0.0;   // max zeta^2 |vbar(zeta)| on the scanned range
    double c_eps = 0.0;     // max |vbar(zeta)| for eps <= |zeta| <= zeta_max
};

inline CharFunctionBounds char_function_bounds(const TiltedMeasure& tm, double eps, double zeta_max, int samples = 2000) {
    std::vector<double> z(samples);
    for (int i = 0; i < samples; ++i) z[i] = eps + (zeta_max - eps) * i / (samples - 1);
    const auto v = char_function(tm, z);
    CharFunctionBounds b;
    for (int i = 0; i < samples; ++i) {
        const double a = std::abs(v[i]);
        b.c_eps = std::max(b.c_eps, a);
        b.decay_c = std::max(b.decay_c, z[i] * z[i] * a);
    }
    return b;
}

}  // namespace spingap
