#pragma once

// Single-site potentials V = phi + psi built from a closed set of parametric
// families, with pointwise evaluation of V, V' and V'' and a grid-scan
// certificate for the convex class (uniform convexity + polynomial growth of
// phi'') and the bounded-perturbation class (sup norms of psi, psi', psi'').

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace spingap {

// ---------------------------------------------------------------------------
// Convex part families
// ---------------------------------------------------------------------------

/// a x^2
struct Quadratic {
    double a = 0.5;
};

/// a x^2 + b x^4
struct Quartic {
    double a = 0.5;
    double b = 1.0 / 12.0;
};

/// sum_k c_k x^k, coefficients in increasing degree.
struct Polynomial {
    std::vector<double> coeffs;
};

/// |x|^{1+alpha}, replaced on [-eps, eps] by the even quadratic that matches
/// value and slope at +-eps.
struct SmoothedPower {
    double alpha = 0.5;
    double eps = 0.1;
};

using ConvexPart = std::variant<Quadratic, Quartic, Polynomial, SmoothedPower>;

// ---------------------------------------------------------------------------
// Bounded perturbation families
// ---------------------------------------------------------------------------

struct NoPerturbation {};

/// amplitude * cos(omega x)
struct Cosine {
    double amplitude = 0.3;
    double omega = 1.0;
};

/// amplitude * exp(1 - 1/(1-u^2)), u = (x - center)/width, zero for |u| >= 1.
struct Bump {
    double amplitude = 0.3;
    double center = 0.0;
    double width = 1.0;
};

using Perturbation = std::variant<NoPerturbation, Cosine, Bump>;

struct PotentialSpec {
    ConvexPart phi = Quadratic{};
    Perturbation psi = NoPerturbation{};
    double delta = 1.0;          // declared floor for phi''
    double beta_plus = 0.0;      // declared growth exponents of phi''
    double beta_minus = 0.0;
    double growth_constant = 10.0;  // C in 1/C <= phi''(+-x)/x^beta <= C
    double psi_sup = 0.0;
    double psi_d1_sup = 0.0;
    double psi_d2_sup = 0.0;
};

/// Value and first two derivatives at a point.
struct Jet {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;

    Jet& operator+=(const Jet& o) {
        v += o.v;
        d1 += o.d1;
        d2 += o.d2;
        return *this;
    }
};

namespace detail {

template <class>
inline constexpr bool always_false = false;

inline Jet jet(const Quadratic& q, double x) {
    return {q.a * x * x, 2.0 * q.a * x, 2.0 * q.a};
}

inline Jet jet(const Quartic& q, double x) {
    const double x2 = x * x;
    return {q.a * x2 + q.b * x2 * x2, 2.0 * q.a * x + 4.0 * q.b * x2 * x,
            2.0 * q.a + 12.0 * q.b * x2};
}

inline Jet jet(const Polynomial& p, double x) {
    // Horner on value, first and second derivative simultaneously.
    Jet j;
    for (auto it = p.coeffs.rbegin(); it != p.coeffs.rend(); ++it) {
        j.d2 = j.d2 * x + 2.0 * j.d1;
        j.d1 = j.d1 * x + j.v;
        j.v = j.v * x + *it;
    }
    return j;
}

inline Jet jet(const SmoothedPower& s, double x) {
    const double p = 1.0 + s.alpha;
    const double ax = std::abs(x);
    if (ax >= s.eps) {
        const double sgn = x < 0 ? -1.0 : 1.0;
        return {std::pow(ax, p), sgn * p * std::pow(ax, p - 1.0),
                p * (p - 1.0) * std::pow(ax, p - 2.0)};
    }
    const double b = 0.5 * p * std::pow(s.eps, p - 2.0);
    const double a = std::pow(s.eps, p) * (1.0 - 0.5 * p);
    return {a + b * x * x, 2.0 * b * x, 2.0 * b};
}

inline Jet jet(const NoPerturbation&, double) { return {}; }

inline Jet jet(const Cosine& c, double x) {
    const double w = c.omega;
    const double cs = std::cos(w * x);
    return {c.amplitude * cs, -c.amplitude * w * std::sin(w * x),
            -c.amplitude * w * w * cs};
}

inline Jet jet(const Bump& b, double x) {
    const double u = (x - b.center) / b.width;
    const double one_minus = 1.0 - u * u;
    if (one_minus <= 0.0) return {};
    const double g = 1.0 - 1.0 / one_minus;
    const double e = b.amplitude * std::exp(g);
    const double g1 = -2.0 * u / (one_minus * one_minus);
    const double g2 = -2.0 / (one_minus * one_minus) - 8.0 * u * u / (one_minus * one_minus * one_minus);
    const double w = b.width;
    return {e, e * g1 / w, e * (g1 * g1 + g2) / (w * w)};
}

// value only, skipping derivative work where it costs transcendental calls
template <class F>
double val(const F& f, double x) { return jet(f, x).v; }

inline double val(const Cosine& c, double x) { return c.amplitude * std::cos(c.omega * x); }

inline double val(const SmoothedPower& s, double x) {
    const double p = 1.0 + s.alpha;
    const double ax = std::abs(x);
    if (ax >= s.eps) return std::pow(ax, p);
    return std::pow(s.eps, p) * (1.0 - 0.5 * p) + 0.5 * p * std::pow(s.eps, p - 2.0) * x * x;
}

}  // namespace detail

inline Jet phi_jet(const PotentialSpec& pot, double x) {
    return std::visit([x](const auto& f) { return detail::jet(f, x); }, pot.phi);
}

inline Jet psi_jet(const PotentialSpec& pot, double x) {
    return std::visit([x](const auto& f) { return detail::jet(f, x); }, pot.psi);
}

inline Jet jet(const PotentialSpec& pot, double x) {
    Jet j = phi_jet(pot, x);
    j += psi_jet(pot, x);
    return j;
}

/// V(x), V'(x) or V''(x).
inline double eval(const PotentialSpec& pot, double x, int order) {
    if (order < 0 || order > 2) throw std::invalid_argument("eval: order must be 0, 1 or 2");
    const Jet j = jet(pot, x);
    return order == 0 ? j.v : (order == 1 ? j.d1 : j.d2);
}

inline double value(const PotentialSpec& pot, double x) {
    return std::visit([x](const auto& f) { return detail::val(f, x); }, pot.phi) +
           std::visit([x](const auto& f) { return detail::val(f, x); }, pot.psi);
}

inline bool has_perturbation(const PotentialSpec& pot) {
    return !std::holds_alternative<NoPerturbation>(pot.psi);
}

inline bool is_pure_quadratic(const PotentialSpec& pot) {
    return std::holds_alternative<Quadratic>(pot.phi) && !has_perturbation(pot);
}

/// Same potential with psi removed.
inline PotentialSpec convex_part(const PotentialSpec& pot) {
    PotentialSpec out = pot;
    out.psi = NoPerturbation{};
    out.psi_sup = out.psi_d1_sup = out.psi_d2_sup = 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Factories with the declared constants filled in.
// ---------------------------------------------------------------------------

namespace detail {

inline void declare_phi(PotentialSpec& pot) {
    std::visit(
        [&pot](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Quadratic>) {
                pot.delta = 2.0 * f.a;
                pot.beta_plus = pot.beta_minus = 0.0;
            } else if constexpr (std::is_same_v<T, Quartic>) {
                pot.delta = 2.0 * f.a;
                pot.beta_plus = pot.beta_minus = f.b > 0.0 ? 2.0 : 0.0;
            } else if constexpr (std::is_same_v<T, Polynomial>) {
                const int deg = static_cast<int>(f.coeffs.size()) - 1;
                pot.beta_plus = pot.beta_minus = std::max(0, deg - 2);
                // phi'' floor from a scan; polynomials are only certified, not assumed.
                double lo = INFINITY;
                for (int i = -4000; i <= 4000; ++i) lo = std::min(lo, jet(f, i * 0.01).d2);
                pot.delta = lo;
            } else if constexpr (std::is_same_v<T, SmoothedPower>) {
                // phi'' -> 0 at infinity: no uniform convexity floor exists.
                pot.delta = 0.0;
                pot.beta_plus = pot.beta_minus = 0.0;
            } else {
                static_assert(always_false<T>);
            }
        },
        pot.phi);
}

inline void declare_psi(PotentialSpec& pot) {
    std::visit(
        [&pot](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, NoPerturbation>) {
                pot.psi_sup = pot.psi_d1_sup = pot.psi_d2_sup = 0.0;
            } else if constexpr (std::is_same_v<T, Cosine>) {
                const double a = std::abs(f.amplitude);
                pot.psi_sup = a;
                pot.psi_d1_sup = a * std::abs(f.omega);
                pot.psi_d2_sup = a * f.omega * f.omega;
            } else if constexpr (std::is_same_v<T, Bump>) {
                double s0 = 0, s1 = 0, s2 = 0;
                const int n = 200001;
                for (int i = 0; i < n; ++i) {
                    const double x = f.center + f.width * (-1.0 + 2.0 * i / (n - 1));
                    const Jet j = jet(f, x);
                    s0 = std::max(s0, std::abs(j.v));
                    s1 = std::max(s1, std::abs(j.d1));
                    s2 = std::max(s2, std::abs(j.d2));
                }
                // scan resolution slack
                pot.psi_sup = s0 * (1 + 1e-6);
                pot.psi_d1_sup = s1 * (1 + 1e-6);
                pot.psi_d2_sup = s2 * (1 + 1e-6);
            } else {
                static_assert(always_false<T>);
            }
        },
        pot.psi);
}

}  // namespace detail

inline PotentialSpec make_potential(ConvexPart phi, Perturbation psi = NoPerturbation{}) {
    PotentialSpec pot;
    pot.phi = std::move(phi);
    pot.psi = std::move(psi);
    detail::declare_phi(pot);
    detail::declare_psi(pot);
    return pot;
}

/// x^2/2
inline PotentialSpec gaussian_potential() { return make_potential(Quadratic{0.5}); }

/// x^2/2 + x^4/12 (+ amplitude cos x when amplitude != 0)
inline PotentialSpec quartic_potential(double cos_amplitude = 0.0) {
    if (cos_amplitude == 0.0) return make_potential(Quartic{0.5, 1.0 / 12.0});
    return make_potential(Quartic{0.5, 1.0 / 12.0}, Cosine{cos_amplitude, 1.0});
}

inline PotentialSpec smoothed_power_potential(double alpha, double eps = 0.1) {
    return make_potential(SmoothedPower{alpha, eps});
}

// ---------------------------------------------------------------------------
// Class certification
// ---------------------------------------------------------------------------

struct ClassReport {
    double observed_delta = 0.0;   // min phi'' on the scan grid
    double ratio_plus = 0.0;       // phi''(+hw)/hw^beta_plus
    double ratio_minus = 0.0;      // phi''(-hw)/hw^beta_minus
    double psi_sup = 0.0;
    double psi_d1_sup = 0.0;
    double psi_d2_sup = 0.0;
    bool in_phi = false;
    bool in_psi = false;
};

/// Scans phi'' and psi on a uniform grid of [-halfwidth, halfwidth]; the
/// growth limits are read off at the two grid extremes.
inline ClassReport certify_classes(const PotentialSpec& pot, double grid_halfwidth, int grid_points) {
    if (grid_points < 2) throw std::invalid_argument("certify_classes: grid_points must be >= 2");
    if (!(grid_halfwidth > 0.0)) throw std::invalid_argument("certify_classes: grid_halfwidth must be positive");

    ClassReport r;
    r.observed_delta = INFINITY;
    const double h = 2.0 * grid_halfwidth / (grid_points - 1);
    for (int i = 0; i < grid_points; ++i) {
        const double x = -grid_halfwidth + i * h;
        r.observed_delta = std::min(r.observed_delta, phi_jet(pot, x).d2);
        const Jet p = psi_jet(pot, x);
        r.psi_sup = std::max(r.psi_sup, std::abs(p.v));
        r.psi_d1_sup = std::max(r.psi_d1_sup, std::abs(p.d1));
        r.psi_d2_sup = std::max(r.psi_d2_sup, std::abs(p.d2));
    }
    r.ratio_plus = phi_jet(pot, grid_halfwidth).d2 / std::pow(grid_halfwidth, pot.beta_plus);
    r.ratio_minus = phi_jet(pot, -grid_halfwidth).d2 / std::pow(grid_halfwidth, pot.beta_minus);

    const double c = pot.growth_constant;
    const auto within = [c](double ratio) { return ratio >= 1.0 / c && ratio <= c; };
    r.in_phi = pot.delta > 0.0 && r.observed_delta >= pot.delta * (1.0 - 1e-12) &&
               within(r.ratio_plus) && within(r.ratio_minus);
    r.in_psi = r.psi_sup <= pot.psi_sup * (1.0 + 1e-9) + 1e-300 &&
               r.psi_d1_sup <= pot.psi_d1_sup * (1.0 + 1e-9) + 1e-300 &&
               r.psi_d2_sup <= pot.psi_d2_sup * (1.0 + 1e-9) + 1e-300;
    return r;
}

}  // namespace spingap
