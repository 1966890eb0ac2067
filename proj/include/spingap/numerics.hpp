#pragma once

// Shared numerical plumbing: error type, quadrature rules, least-squares line
// fits and a few log-space helpers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace spingap {

/// Raised when a numerical self-check fails; `invariant` names the check.
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::string invariant, const std::string& what)
        : std::runtime_error(invariant + ": " + what), invariant_(std::move(invariant)) {}

    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

/// Uniform trapezoidal rule on [center - halfwidth, center + halfwidth].
struct QuadratureGrid {
    double center = 0.0;
    double halfwidth = 1.0;
    int points = 2;
    std::vector<double> nodes;
    std::vector<double> weights;

    double lo() const { return center - halfwidth; }
    double hi() const { return center + halfwidth; }
    double spacing() const { return 2.0 * halfwidth / (points - 1); }
};

inline QuadratureGrid trapezoid_grid(double lo, double hi, int points) {
    if (points < 2 || !(hi > lo)) throw std::invalid_argument("trapezoid_grid: need points >= 2 and hi > lo");
    QuadratureGrid g;
    g.center = 0.5 * (lo + hi);
    g.halfwidth = 0.5 * (hi - lo);
    g.points = points;
    g.nodes.resize(points);
    g.weights.assign(points, (hi - lo) / (points - 1));
    for (int i = 0; i < points; ++i) g.nodes[i] = lo + (hi - lo) * i / (points - 1);
    g.weights.front() *= 0.5;
    g.weights.back() *= 0.5;
    return g;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(n), w(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

/// Composite Gauss-Legendre (16 points per panel) of f over [a, b].
template <class F>
double integrate(F&& f, double a, double b, int panels = 64) {
    static const auto rule = gauss_legendre(16);
    if (b == a) return 0.0;
    const double h = (b - a) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (std::size_t k = 0; k < rule.first.size(); ++k)
            sum += rule.second[k] * f(mid + 0.5 * h * rule.first[k]);
    }
    return 0.5 * h * sum;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms_residual = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        ss += r * r;
    }
    f.rms_residual = std::sqrt(ss / n);
    return f;
}

/// Least-squares fit of log y = intercept + slope log x.
inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx(x.size()), ly(y.size());
    std::transform(x.begin(), x.end(), lx.begin(), [](double v) { return std::log(v); });
    std::transform(y.begin(), y.end(), ly.begin(), [](double v) { return std::log(v); });
    return fit_line(lx, ly);
}

inline double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// x^k by repeated multiplication (k small).
inline double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

/// Runs body(i) for i = 0..count-1 on up to `threads` workers; the first
/// exception is rethrown after all workers finish.
template <class Body>
void parallel_for(int count, int threads, Body&& body) {
    const int workers = std::clamp(threads, 1, std::max(count, 1));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next++) < count;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace spingap
