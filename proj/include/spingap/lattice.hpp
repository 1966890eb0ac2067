#pragma once

// Densities sampled on a uniform lattice offset + k*dx. Convolution powers of
// the tilted density are computed on this lattice by direct (positivity
// preserving) discrete convolution, so sums of lattice variables stay on the
// lattice and the conditional structure of the canonical measure is exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "single_site.hpp"

namespace spingap {

struct DensityGrid {
    double dx = 1.0;
    double offset = 0.0;       // node k sits at offset + k*dx
    std::int64_t first = 0;    // index of values[0]
    std::vector<double> values;

    std::int64_t last() const { return first + static_cast<std::int64_t>(values.size()) - 1; }
    std::size_t size() const { return values.size(); }
    double node(std::size_t i) const { return offset + static_cast<double>(first + static_cast<std::int64_t>(i)) * dx; }
    double lo() const { return node(0); }
    double hi() const { return node(values.size() - 1); }

    /// Value at lattice index k (0 outside the stored range).
    double at(std::int64_t k) const {
        if (k < first || k > last()) return 0.0;
        return values[static_cast<std::size_t>(k - first)];
    }

    double mass() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * dx;
    }

    double moment(int k) const {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * ipow(node(i), k);
        return s * dx;
    }

    /// Catmull-Rom cubic interpolation; 0 outside the support.
    double interpolate(double x) const {
        const double t = (x - offset) / dx;
        const double fl = std::floor(t);
        const auto k = static_cast<std::int64_t>(fl);
        const double u = t - fl;
        const double p0 = at(k - 1), p1 = at(k), p2 = at(k + 1), p3 = at(k + 2);
        const double v = p1 + 0.5 * u * (p2 - p0 + u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + u * (3.0 * (p1 - p2) + p3 - p0)));
        return std::max(v, 0.0);
    }
};

/// Samples h^rho at offset + k*dx over the measure's truncation window and
/// renormalizes to unit lattice mass.
inline DensityGrid sample_lattice(const TiltedMeasure& tm, double dx, double offset = 0.0) {
    if (!(dx > 0.0)) throw std::invalid_argument("sample_lattice: dx must be positive");
    DensityGrid g;
    g.dx = dx;
    g.offset = offset;
    g.first = static_cast<std::int64_t>(std::ceil((tm.grid.lo() - offset) / dx));
    const auto last = static_cast<std::int64_t>(std::floor((tm.grid.hi() - offset) / dx));
    if (last < g.first) throw std::invalid_argument("sample_lattice: dx wider than the support");
    g.values.resize(static_cast<std::size_t>(last - g.first + 1));
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = tm.density(g.node(i));
    const double m = g.mass();
    for (double& v : g.values) v /= m;
    return g;
}

/// Samples h^rho on the fixed index range [first, last] of offset + k*dx.
inline DensityGrid sample_lattice_range(const TiltedMeasure& tm, double dx, double offset, std::int64_t first,
                                        std::int64_t last) {
    if (last < first) throw std::invalid_argument("sample_lattice_range: empty index range");
    DensityGrid g;
    g.dx = dx;
    g.offset = offset;
    g.first = first;
    g.values.resize(static_cast<std::size_t>(last - first + 1));
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = tm.density(g.node(i));
    const double m = g.mass();
    for (double& v : g.values) v /= m;
    return g;
}

/// Lattice spacing giving `resolution` nodes across the truncation window.
inline double lattice_spacing(const TiltedMeasure& tm, int resolution) {
    if (resolution < 8) throw std::invalid_argument("lattice_spacing: resolution must be >= 8");
    return 2.0 * tm.grid.halfwidth / resolution;
}

/// Drops leading/trailing entries that are zero or below `floor` * max.
inline void trim(DensityGrid& g, double floor = 0.0) {
    if (g.values.empty()) return;
    const double cut = floor * *std::max_element(g.values.begin(), g.values.end());
    std::size_t b = 0, e = g.values.size();
    while (b < e && g.values[b] <= cut) ++b;
    while (e > b && g.values[e - 1] <= cut) --e;
    g.values = std::vector<double>(g.values.begin() + static_cast<std::ptrdiff_t>(b), g.values.begin() + static_cast<std::ptrdiff_t>(e));
    g.first += static_cast<std::int64_t>(b);
}

/// Restricts to nodes with |node| <= halfwidth.
inline void clip(DensityGrid& g, double halfwidth) {
    const auto lo = static_cast<std::int64_t>(std::ceil((-halfwidth - g.offset) / g.dx));
    const auto hi = static_cast<std::int64_t>(std::floor((halfwidth - g.offset) / g.dx));
    const std::int64_t b = std::max(lo, g.first), e = std::min(hi, g.last());
    if (e < b) throw NumericalError("convolution_window", "clip window misses the support");
    g.values = std::vector<double>(g.values.begin() + (b - g.first), g.values.begin() + (e - g.first + 1));
    g.first = b;
}

/// Discrete convolution (a*b)(x) = sum_y a(y) b(x-y) dx; offsets add.
inline DensityGrid convolve(const DensityGrid& a, const DensityGrid& b) {
    if (std::abs(a.dx - b.dx) > 1e-14 * a.dx) throw std::invalid_argument("convolve: lattice spacings differ");
    DensityGrid c;
    c.dx = a.dx;
    c.offset = a.offset + b.offset;
    c.first = a.first + b.first;
    c.values.assign(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a.values[i] * a.dx;
        if (ai == 0.0) continue;
        double* out = c.values.data() + i;
        for (std::size_t j = 0; j < b.size(); ++j) out[j] += ai * b.values[j];
    }
    return c;
}

struct PowerOptions {
    double window = INFINITY;   // keep |x| <= window after every product
    double drift_tol = 1e-6;    // max |mass - 1| tolerated before renormalizing
    bool renormalize = true;
};

/// n-fold convolution power by binary exponentiation.
inline DensityGrid convolution_power(const DensityGrid& h, int n, const PowerOptions& opt = {}) {
    if (n < 1) throw std::invalid_argument("convolution_power: n must be >= 1");
    const auto fix = [&](DensityGrid& g) {
        if (std::isfinite(opt.window)) clip(g, opt.window);
        trim(g);
        const double m = g.mass();
        if (std::abs(m - 1.0) > opt.drift_tol)
            throw NumericalError("renormalization_drift", "mass " + std::to_string(m) + " after a convolution doubling");
        if (opt.renormalize)
            for (double& v : g.values) v /= m;
    };
    DensityGrid result;
    bool have = false;
    DensityGrid base = h;
    for (int k = n;;) {
        if (k & 1) {
            if (!have) {
                result = base;
                have = true;
            } else {
                result = convolve(result, base);
                fix(result);
            }
        }
        k >>= 1;
        if (!k) break;
        base = convolve(base, base);
        fix(base);
    }
    return result;
}

}  // namespace spingap
