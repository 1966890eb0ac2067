// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <spingap/edgeworth.hpp>
#include <spingap/gap.hpp>
#include <spingap/gl.hpp>
#include <spingap/kop.hpp>
#include <spingap/sampler.hpp>
#include <spingap/single_site.hpp>

using namespace spingap;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
    return v;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Outcome c1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (double rho : linspace(-10, 10, 41))
        worst = std::max(worst, std::abs(solve_chemical_potential(gaussian_potential(), rho).lambda + rho));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-10 && secs < 5.0, fmt("max |lambda+rho| = %.3g, %.2f s", worst, secs)};
}

Outcome c2() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (const auto& pot : {gaussian_potential(), quartic_potential(0.3)})
        for (double rho : {0.0, 3.0}) {
            const TiltedMeasure tm = solve_chemical_potential(pot, rho);
            for (int n : {4, 16, 64}) worst = std::max(worst, verify_eig(build_k(tm, n)));
        }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-6 && secs < 120.0, fmt("max residual = %.3g, %.1f s", worst, secs)};
}

Outcome c3() {
    const std::vector<int> ns{8, 16, 32, 64, 128};
    // the verbatim and hermite6 corrections coincide when m3 = 0 (rho = 0)
    const ScalingReport q = clt_scaling(solve_chemical_potential(quartic_potential(0.3), 0.0), ns);
    const ScalingReport v1 = clt_scaling(solve_chemical_potential(quartic_potential(0.3), 1.0), ns);
    const ScalingReport h1 =
        clt_scaling(solve_chemical_potential(quartic_potential(0.3), 1.0), ns, EdgeworthVariant::hermite6);
    double gauss = 0.0;
    const ScalingReport g = clt_scaling(solve_chemical_potential(gaussian_potential(), 0.7), ns);
    for (const auto& r : g.rows) gauss = std::max(gauss, r.sup_error);
    return {q.fitted_slope <= -1.25 && gauss <= 1e-6,
            fmt("slope rho=0: %.3f; rho=1 verbatim %.3f, hermite6 %.3f; gaussian max err %.2g", q.fitted_slope,
                v1.fitted_slope, h1.fitted_slope, gauss)};
}

Outcome c4() {
    const ConfinementReport q =
        spectral_confinement(solve_chemical_potential(quartic_potential(0.3), 1.0), {8, 16, 32, 64});
    const ConfinementReport g = spectral_confinement(solve_chemical_potential(gaussian_potential(), 1.0), {8, 16, 32, 64});
    double rel = 0.0;
    for (const auto& r : g.rows) {
        const double exact = 1.0 / ((r.n - 1.0) * (r.n - 1.0));
        rel = std::max(rel, std::abs(r.projected_norm - exact) / exact);
    }
    return {q.fitted_slope <= -1.25 && rel <= 1e-4, fmt("quartic slope %.3f; gaussian max rel err %.2g", q.fitted_slope, rel)};
}

Outcome c5() {
    const KernelExpansionReport r =
        verify_kernel_expansion(solve_chemical_potential(quartic_potential(0.3), 1.0), {16, 32, 64}, 10.0);
    return {r.fitted_slope <= -1.25, fmt("slope %.3f", r.fitted_slope)};
}

Outcome c6() {
    const SigmaBoundReport r = verify_sigma_bounds(quartic_potential(0.3), linspace(-30, 30, 61));
    return {std::isfinite(r.observed_k) && r.all_brackets_ok,
            fmt("k = %.4f, product in [%.4f, %.4f], brackets ", r.observed_k, r.min_product, r.max_product) +
                (r.all_brackets_ok ? "ok" : "violated")};
}

Outcome c7() {
    const MomentBoundReport r = verify_moment_bounds(quartic_potential(0.3), linspace(-20, 20, 41), 4);
    return {r.all_within, fmt("k = %.2f, max ratio %.3f, max ratio/bound %.3g", r.k, r.max_ratio, r.max_ratio_to_bound)};
}

Outcome c8() {
    const PotentialSpec p = quartic_potential(0.3);
    bool bound_ok = true;
    std::string detail;
    bool spread_ok = true;
    for (int n : {2, 3}) {
        double lo = INFINITY, hi = 0.0;
        const double bound = std::exp(4.0 * n * p.psi_sup) / p.delta;
        for (double rho : linspace(-10, 10, 21)) {
            const double g = exact_gap_small_n(p, n, rho).value;
            lo = std::min(lo, g);
            hi = std::max(hi, g);
            bound_ok = bound_ok && g <= bound;
        }
        spread_ok = spread_ok && hi / lo < 3.0;
        detail += fmt("N=%.0f: gamma in [%.4g, %.4g], ratio %.1f", n, lo, hi, hi / lo) + fmt(", bound %.3g; ", bound);
    }
    return {spread_ok && bound_ok, detail + (bound_ok ? "bound holds" : "bound violated")};
}

Outcome c9() {
    KBuildOptions o;
    o.cross_check = false;
    const KOperator k = build_k(solve_chemical_potential(quartic_potential(0.3), 1.0), 3, o);
    const IdentityReport r = verify_variance_decomposition(k, random_trials(k, 20, 2024));
    return {r.used_direct_oracle && r.max_residual <= 1e-8,
            fmt("max residual %.3g over %.0f trials", r.max_residual, r.trials)};
}

Outcome c10() {
    double worst = 0.0, ratio_max = 0.0;
    for (int l = 2; l <= 8; ++l) {
        const double chi = chi_exact_small(gaussian_potential(), 1, l, 0.0).value;
        worst = std::max(worst, std::abs(chi - 1.0 / (2.0 * (1.0 - std::cos(std::numbers::pi / l)))));
        ratio_max = std::max(ratio_max, chi / (l * l));
    }
    // the closed form is below L^2 / 4 for every L >= 2
    return {worst <= 1e-6 && ratio_max <= 0.25, fmt("max error %.3g, max chi/L^2 %.4f", worst, ratio_max)};
}

Outcome c11() {
    bool ok = true;
    std::string detail;
    for (int d = 1; d <= 3; ++d) {
        double k = 0.0;
        for (int l = 2; l <= 8; ++l) {
            const PathProps p = verify_path_props(build_paths(d, l));
            ok = ok && p.valid && p.max_length <= d * (l - 1);
            k = std::max(k, static_cast<double>(p.max_congestion) / std::pow(l, d + 1));
        }
        ok = ok && k <= 0.5;
        detail += fmt("d=%.0f: max congestion/L^{d+1} = %.4f; ", d, k);
    }
    return {ok, detail + "k = 1/2"};
}

Outcome c12() {
    const PotentialSpec p = smoothed_power_potential(0.5);
    std::vector<double> rho, s2;
    for (double r : linspace(std::log(10.0), std::log(300.0), 25)) {
        rho.push_back(std::exp(r));
        s2.push_back(solve_chemical_potential(p, rho.back()).sigma2);
    }
    const double slope = fit_loglog(rho, s2).slope;
    return {std::abs(slope - 0.5) <= 0.15, fmt("exponent %.4f", slope)};
}

Outcome c13() {
    const PotentialSpec p = quartic_potential();
    const int n = 8;
    const double rho = 1.0;
    SamplerConfig cfg;
    cfg.steps = 1000000;
    cfg.burn_in = 10000;
    cfg.thin = 10;
    std::vector<double> x;
    double drift = 0.0;
    const ChainState end = run_chain(p, n, rho, 20240601, cfg, [&](const std::vector<double>& eta) {
        x.push_back(eta[0]);
        double s = 0.0;
        for (double v : eta) s += v;
        drift = std::max(drift, std::abs(s - n * rho));
    });
    const SeriesSummary m = summarize(x);
    std::vector<double> dev(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dev[i] = (x[i] - m.mean) * (x[i] - m.mean);
    const SeriesSummary v = summarize(dev);
    const MarginalDensity g = marginal_density(solve_chemical_potential(p, rho), n);
    const double zm = (m.mean - g.mean()) / m.mean_se;
    const double zv = (v.mean - g.variance()) / v.mean_se;
    double final_sum = 0.0;
    for (double e : end.eta) final_sum += e;
    const bool conserved = drift <= 1e-12 && std::abs(final_sum - n * rho) <= 1e-12;
    return {std::abs(zm) <= 3.0 && std::abs(zv) <= 3.0 && conserved,
            fmt("mean z = %.2f, variance z = %.2f, max sum drift %.2g", zm, zv, drift)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"1 chemical potential, Gaussian closed form", c1},
        {"2 K eigen-identity", c2},
        {"3 local CLT scaling", c3},
        {"4 spectral confinement of K", c4},
        {"5 pair kernel expansion", c5},
        {"6 variance vs curvature", c6},
        {"7 moment ratio bounds", c7},
        {"8 uniform Poincare constant, N = 2, 3", c8},
        {"9 variance decomposition identities", c9},
        {"10 GL gap, quadratic", c10},
        {"11 staircase paths", c11},
        {"12 power-law counterexample exponent", c12},
        {"13 sampler marginal and conservation", c13},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s  criterion %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
