#pragma once

// Ginzburg-Landau (nearest-neighbour exchange) Dirichlet form on the box
// {0..L-1}^d: staircase paths between sites, their congestion, and the
// comparison of its inverse gap chi with the full-gradient constant gamma.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gap.hpp"
#include "numerics.hpp"
#include "potential.hpp"
#include "sampler.hpp"

namespace spingap {

struct Lattice {
    int d = 1;
    int l = 1;

    Lattice(int dim, int side) : d(dim), l(side) {
        if (dim < 1 || dim > 3) throw std::invalid_argument("Lattice: d must be 1, 2 or 3");
        if (side < 1) throw std::invalid_argument("Lattice: L must be >= 1");
    }

    int sites() const { return ipow_int(l, d); }
    int bonds() const { return d * ipow_int(l, d - 1) * (l - 1); }

    std::vector<int> coords(int site) const {
        std::vector<int> c(static_cast<std::size_t>(d));
        for (int a = 0; a < d; ++a) {
            c[static_cast<std::size_t>(a)] = site % l;
            site /= l;
        }
        return c;
    }

    int site(const std::vector<int>& c) const {
        int s = 0;
        for (int a = d - 1; a >= 0; --a) s = s * l + c[static_cast<std::size_t>(a)];
        return s;
    }

    /// Unordered bond {site, site + e_axis}, site at position < L-1 along axis.
    int bond_id(int site, int axis) const {
        // bonds of one axis: L^{d-1} lines of L-1 bonds
        const std::vector<int> c = coords(site);
        int line = 0, stride = 1;
        for (int a = 0; a < d; ++a) {
            if (a == axis) continue;
            line += c[static_cast<std::size_t>(a)] * stride;
            stride *= l;
        }
        return axis * ipow_int(l, d - 1) * (l - 1) + line * (l - 1) + c[static_cast<std::size_t>(axis)];
    }

    std::pair<int, int> bond_ends(int bond) const {
        const int per_axis = ipow_int(l, d - 1) * (l - 1);
        const int axis = bond / per_axis;
        const int rem = bond % per_axis;
        const int line = rem / (l - 1);
        const int pos = rem % (l - 1);
        std::vector<int> c(static_cast<std::size_t>(d));
        int q = line;
        for (int a = 0; a < d; ++a) {
            if (a == axis) continue;
            c[static_cast<std::size_t>(a)] = q % l;
            q /= l;
        }
        c[static_cast<std::size_t>(axis)] = pos;
        const int s0 = site(c);
        c[static_cast<std::size_t>(axis)] = pos + 1;
        return {s0, site(c)};
    }

private:
    static int ipow_int(int b, int e) {
        int r = 1;
        for (int i = 0; i < e; ++i) r *= b;
        return r;
    }
};

/// Staircase paths for all ordered pairs x != y: fix coordinate 1 first, then 2, ...
struct PathTable {
    Lattice lattice;
    std::vector<std::int32_t> offsets;   // pair (x, y) -> [offsets[x*S+y], offsets[x*S+y+1])
    std::vector<std::int32_t> bonds;
    std::vector<std::int32_t> steps;     // visited sites, one more than bonds per path, same layout shifted by pair index

    explicit PathTable(Lattice lat) : lattice(lat) {}

    std::size_t pair(int x, int y) const {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(lattice.sites()) + static_cast<std::size_t>(y);
    }
    int length(int x, int y) const { return offsets[pair(x, y) + 1] - offsets[pair(x, y)]; }
};

inline PathTable build_paths(int d, int l) {
    PathTable pt{Lattice(d, l)};
    const Lattice& lat = pt.lattice;
    const int s = lat.sites();
    pt.offsets.assign(static_cast<std::size_t>(s) * s + 1, 0);
    for (int x = 0; x < s; ++x)
        for (int y = 0; y < s; ++y) {
            std::vector<int> c = lat.coords(x);
            const std::vector<int> t = lat.coords(y);
            pt.steps.push_back(x);
            for (int a = 0; a < d; ++a) {
                auto& ca = c[static_cast<std::size_t>(a)];
                const int target = t[static_cast<std::size_t>(a)];
                while (ca != target) {
                    const int from = lat.site(c);
                    const int dir = target > ca ? 1 : -1;
                    ca += dir;
                    const int to = lat.site(c);
                    pt.bonds.push_back(lat.bond_id(dir > 0 ? from : to, a));
                    pt.steps.push_back(to);
                }
            }
            pt.offsets[pt.pair(x, y) + 1] = static_cast<std::int32_t>(pt.bonds.size());
        }
    return pt;
}

struct PathProps {
    int max_length = 0;
    std::int64_t max_congestion = 0;
    double implied_k = 0.0;
    bool valid = true;            // endpoints, adjacency and length identity
};

inline PathProps verify_path_props(const PathTable& pt) {
    const Lattice& lat = pt.lattice;
    const int s = lat.sites();
    PathProps r;
    std::vector<std::int64_t> load(static_cast<std::size_t>(std::max(lat.bonds(), 0)), 0);
    std::size_t step_base = 0;
    for (int x = 0; x < s; ++x)
        for (int y = 0; y < s; ++y) {
            const std::size_t p = pt.pair(x, y);
            const int b0 = pt.offsets[p], b1 = pt.offsets[p + 1];
            const int len = b1 - b0;
            r.max_length = std::max(r.max_length, len);
            const std::vector<int> cx = lat.coords(x), cy = lat.coords(y);
            int manhattan = 0;
            for (int a = 0; a < lat.d; ++a) manhattan += std::abs(cx[static_cast<std::size_t>(a)] - cy[static_cast<std::size_t>(a)]);
            if (manhattan != len) r.valid = false;
            // visited sites: pt.steps[step_base .. step_base + len]
            if (pt.steps[step_base] != x || pt.steps[step_base + static_cast<std::size_t>(len)] != y) r.valid = false;
            for (int k = 0; k < len; ++k) {
                const int bond = pt.bonds[static_cast<std::size_t>(b0 + k)];
                const auto [u, v] = lat.bond_ends(bond);
                const int a = pt.steps[step_base + static_cast<std::size_t>(k)];
                const int b = pt.steps[step_base + static_cast<std::size_t>(k) + 1];
                if (!((u == a && v == b) || (u == b && v == a))) r.valid = false;
                ++load[static_cast<std::size_t>(bond)];
            }
            step_base += static_cast<std::size_t>(len) + 1;
        }
    for (auto c : load) r.max_congestion = std::max(r.max_congestion, c);
    const double ld = static_cast<double>(lat.l);
    r.implied_k = std::max(r.max_length / ld, static_cast<double>(r.max_congestion) / std::pow(ld, lat.d + 1));
    return r;
}

/// sum over the path from y to x of (dF/d eta_next - dF/d eta_prev); equals
/// dF/d eta_x - dF/d eta_y by telescoping. Returns the largest deviation.
inline double telescoping_residual(const PathTable& pt, const std::vector<double>& grad) {
    const int s = pt.lattice.sites();
    double worst = 0.0;
    std::size_t step_base = 0;
    for (int x = 0; x < s; ++x)
        for (int y = 0; y < s; ++y) {
            const int len = pt.length(x, y);
            // path x -> y reversed is a path y -> x
            double acc = 0.0;
            for (int k = len; k > 0; --k) {
                const int prev = pt.steps[step_base + static_cast<std::size_t>(k)];
                const int next = pt.steps[step_base + static_cast<std::size_t>(k) - 1];
                acc += grad[static_cast<std::size_t>(next)] - grad[static_cast<std::size_t>(prev)];
            }
            worst = std::max(worst, std::abs(acc - (grad[static_cast<std::size_t>(x)] - grad[static_cast<std::size_t>(y)])));
            step_base += static_cast<std::size_t>(len) + 1;
        }
    return worst;
}

/// Laplacian of the box graph: sum over unordered bonds of (e_u - e_v)(e_u - e_v)^T.
inline Eigen::MatrixXd bond_laplacian(const Lattice& lat) {
    const int s = lat.sites();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s, s);
    for (int b = 0; b < lat.bonds(); ++b) {
        const auto [u, v] = lat.bond_ends(b);
        m(u, u) += 1.0;
        m(v, v) += 1.0;
        m(u, v) -= 1.0;
        m(v, u) -= 1.0;
    }
    return m;
}

/// Inverse gap chi(L, rho) of the bond Dirichlet form sum_b (d_u F - d_v F)^2
/// against the canonical variance, d = 1.
inline GapEstimate chi_exact_small(const PotentialSpec& pot, int d, int l, double rho, const SliceOptions& opt = {}) {
    if (d != 1) throw std::invalid_argument("chi_exact_small: only d = 1 is supported");
    if (l < 1) throw std::invalid_argument("chi_exact_small: L must be >= 1");
    if (l == 1) throw NumericalError("empty_dirichlet_form", "empty Dirichlet form: a single site has no bonds");
    const Lattice lat(d, l);
    const Eigen::MatrixXd lap = bond_laplacian(lat);
    GapEstimate g;
    g.size = lat.sites();
    g.rho = rho;
    g.kind = GapKind::gl_chi;
    if (is_pure_quadratic(pot)) {
        // Gaussian with covariance (2a)^{-1} on the slice: chi = 1/(2a lambda_1)
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap, Eigen::EigenvaluesOnly);
        const double lambda1 = es.eigenvalues()[1];
        g.value = 1.0 / (2.0 * std::get<Quadratic>(pot.phi).a * lambda1);
        return g;
    }
    if (l > 3) throw std::invalid_argument("chi_exact_small: L <= 3 required for non-quadratic potentials");
    g.value = detail::slice_with_check(pot, l, rho, lap, opt);
    return g;
}

struct ComparisonRow {
    int l = 0;
    double chi = 0.0;
    double gamma = 0.0;
    GapMethod gamma_method = GapMethod::exact_eigen;
    double implied_k = 0.0;
    double c = 0.0;              // k^2
    double rhs = 0.0;            // C L^2 gamma
    double margin = 0.0;         // rhs - chi
    double chi_over_l2 = 0.0;
    bool ok = true;
};

struct ComparisonReport {
    int d = 1;
    double rho = 0.0;
    std::vector<ComparisonRow> rows;
    bool all_ok = true;
};

/// chi(L) <= k^2 L^2 gamma(L^d) with k from the staircase path enumeration.
inline ComparisonReport comparison_check(const PotentialSpec& pot, int d, const std::vector<int>& l_list, double rho,
                                         const SliceOptions& slice = {},
                                         const std::optional<SamplerConfig>& mcmc = std::nullopt) {
    ComparisonReport rep;
    rep.d = d;
    rep.rho = rho;
    for (int l : l_list) {
        ComparisonRow row;
        row.l = l;
        row.chi = chi_exact_small(pot, d, l, rho, slice).value;
        const int n = Lattice(d, l).sites();
        if (is_pure_quadratic(pot)) row.gamma = quadratic_gap(pot, n, rho).value;
        else if (n <= 3) row.gamma = exact_gap_small_n(pot, n, rho, slice).value;
        else if (mcmc) {
            row.gamma = mcmc_gap_bound(pot, n, rho, *mcmc).estimate.value;
            row.gamma_method = GapMethod::mcmc_rayleigh;
        } else {
            throw std::invalid_argument("comparison_check: gamma for N >= 4 needs a sampler configuration");
        }
        const PathProps pp = verify_path_props(build_paths(d, l));
        row.implied_k = pp.implied_k;
        row.c = pp.implied_k * pp.implied_k;
        row.rhs = row.c * l * l * row.gamma;
        row.margin = row.rhs - row.chi;
        row.chi_over_l2 = row.chi / (static_cast<double>(l) * l);
        row.ok = row.margin >= 0.0;
        rep.all_ok = rep.all_ok && row.ok;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace spingap
