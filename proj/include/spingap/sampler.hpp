#pragma once

// Pair heat-bath sampler for the canonical measure: pick two sites, keep their
// sum s and redraw eta_i from the density proportional to exp(-V(x) - V(s-x)).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "potential.hpp"

namespace spingap {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Uniform in [0, 1) with 53 random bits.
inline double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ChainState {
    std::vector<double> eta;
    double target_sum = 0.0;
    std::mt19937_64 rng;
    std::uint64_t step_count = 0;
};

inline ChainState init_state(int n, double rho, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("init_state: n must be >= 2");
    ChainState s;
    s.eta.assign(static_cast<std::size_t>(n), rho);
    s.target_sum = rho * n;
    s.rng.seed(splitmix64(seed));
    return s;
}

struct SamplerConfig {
    int grid_points = 1024;          // inverse-CDF grid, symmetric about s/2
    double log_drop = 40.0;          // support ends where the log density fell this much
    std::uint64_t reproject_every = 10000;
    std::uint64_t steps = 1000000;
    std::uint64_t burn_in = 10000;
    std::uint64_t thin = 10;
    int chains = 4;
    std::uint64_t seed = 1;
    int batches = 20;                // bootstrap batches per chain
    int bootstrap = 200;
    int threads = 1;                 // chains run concurrently on this many workers
};

/// Inverse-CDF sampler for the pair slice; reuses its buffers across calls.
class PairSlice {
public:
    explicit PairSlice(const PotentialSpec& pot, int grid_points = 1024, double log_drop = 40.0)
        : pot_(pot), half_(std::max(grid_points / 2, 8)), drop_(log_drop), f_(half_ + 1), cdf_(half_ + 1) {}

    /// Draws eta_i given eta_i + eta_j = s.
    double draw(double s, std::mt19937_64& rng) {
        const double c = 0.5 * s;
        // on normalization failure widen the support once
        if (!tabulate(c, drop_) && !tabulate(c, 2.0 * drop_))
            throw NumericalError("pair_slice_cdf", "grid CDF normalization failed");
        const double r = u01(rng) * cdf_[half_];
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), r);
        const int k = std::clamp(static_cast<int>(it - cdf_.begin()) - 1, 0, half_ - 1);
        // linear density inside the cell: a tau^2 + b tau = rem
        const double rem = r - cdf_[k];
        const double b = f_[k];
        const double a = 0.5 * (f_[k + 1] - f_[k]) / h_;
        const double disc = std::max(b * b + 4.0 * a * rem, 0.0);
        const double denom = b + std::sqrt(disc);
        double tau = denom > 0.0 ? 2.0 * rem / denom : 0.0;
        tau = std::clamp(tau, 0.0, h_);
        const double t = k * h_ + tau;
        return u01(rng) < 0.5 ? c + t : c - t;
    }

private:
    // density of |t| on [0, T], T where ell(t) = -V(c+t) - V(c-t) fell by `drop`
    bool tabulate(double c, double drop) {
        const auto ell = [&](double t) { return -value(pot_, c + t) - value(pot_, c - t); };
        const double top = ell(0.0);
        double lo = 0.0, hi = 1e-3;
        for (int it = 0; ell(hi) > top - drop; ++it) {
            lo = hi;
            hi *= 2.0;
            if (it > 200) throw NumericalError("pair_slice_support", "conditional density does not decay");
        }
        for (int it = 0; it < 24; ++it) {
            const double m = 0.5 * (lo + hi);
            if (ell(m) > top - drop) lo = m; else hi = m;
        }
        h_ = hi / half_;
        double peak = -INFINITY;
        for (int k = 0; k <= half_; ++k) {
            f_[k] = ell(k * h_);
            peak = std::max(peak, f_[k]);
        }
        cdf_[0] = 0.0;
        for (int k = 0; k <= half_; ++k) f_[k] = std::exp(f_[k] - peak);
        for (int k = 0; k < half_; ++k) cdf_[k + 1] = cdf_[k] + 0.5 * h_ * (f_[k] + f_[k + 1]);
        const double total = cdf_[half_];
        return total > 0.0 && std::isfinite(total);
    }

    PotentialSpec pot_;
    int half_;
    double h_ = 0.0;
    double drop_;
    std::vector<double> f_;
    std::vector<double> cdf_;
};

/// Subtracts the mean drift so that the coordinates sum to target_sum again.
inline void reproject(ChainState& state) {
    double sum = 0.0;
    for (double v : state.eta) sum += v;
    const double shift = (sum - state.target_sum) / static_cast<double>(state.eta.size());
    for (double& v : state.eta) v -= shift;
}

inline void pair_heatbath_step(ChainState& state, PairSlice& slice, std::uint64_t reproject_every = 10000) {
    const auto n = static_cast<std::uint64_t>(state.eta.size());
    const auto i = static_cast<std::size_t>(state.rng() % n);
    auto j = static_cast<std::size_t>(state.rng() % (n - 1));
    if (j >= i) ++j;
    const double s = state.eta[i] + state.eta[j];
    const double x = slice.draw(s, state.rng);
    // snap x so that s - x is exact
    const double xi = s - (s - x);
    state.eta[i] = xi;
    state.eta[j] = s - xi;
    ++state.step_count;
    if (reproject_every && state.step_count % reproject_every == 0) reproject(state);
}

inline void pair_heatbath_step(ChainState& state, const PotentialSpec& pot) {
    PairSlice slice(pot);
    pair_heatbath_step(state, slice);
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Integrated autocorrelation time with Sokal's self-consistent window (c = 5).
inline double autocorrelation_time(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 4) return 1.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    c0 /= static_cast<double>(n);
    if (c0 <= 0.0) return 1.0;
    double tau = 1.0;
    for (std::size_t lag = 1; lag < n / 2; ++lag) {
        double c = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) c += (x[t] - mean) * (x[t + lag] - mean);
        c /= static_cast<double>(n) * c0;
        tau += 2.0 * c;
        if (static_cast<double>(lag) >= 5.0 * tau) break;
    }
    return std::max(tau, 1.0);
}

struct SeriesSummary {
    double mean = 0.0;
    double variance = 0.0;
    double tau = 1.0;          // integrated autocorrelation time, in samples
    double mean_se = 0.0;      // sqrt(variance * tau / count)
    std::size_t count = 0;
};

inline SeriesSummary summarize(const std::vector<double>& x) {
    SeriesSummary s;
    s.count = x.size();
    if (x.empty()) return s;
    for (double v : x) s.mean += v;
    s.mean /= static_cast<double>(x.size());
    for (double v : x) s.variance += (v - s.mean) * (v - s.mean);
    s.variance /= static_cast<double>(x.size() > 1 ? x.size() - 1 : 1);
    s.tau = autocorrelation_time(x);
    s.mean_se = std::sqrt(s.variance * s.tau / static_cast<double>(x.size()));
    return s;
}

/// Split-chain potential scale reduction over a set of chains.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> parts;
    for (const auto& c : chains) {
        const std::size_t h = c.size() / 2;
        if (h < 2) continue;
        parts.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
        parts.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(h), c.begin() + static_cast<std::ptrdiff_t>(2 * h));
    }
    if (parts.size() < 2) return INFINITY;
    const double n = static_cast<double>(parts.front().size());
    std::vector<double> means, vars;
    for (const auto& p : parts) {
        const SeriesSummary s = summarize(p);
        means.push_back(s.mean);
        vars.push_back(s.variance);
    }
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= static_cast<double>(means.size());
    double b = 0.0, w = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
        b += (means[k] - grand) * (means[k] - grand);
        w += vars[k];
    }
    b *= n / static_cast<double>(means.size() - 1);
    w /= static_cast<double>(means.size());
    if (w <= 0.0) return 1.0;
    return std::sqrt(((n - 1.0) / n * w + b / n) / w);
}

/// Runs one chain; `visit(eta)` is called on every thinned sample after burn-in.
template <class Visit>
ChainState run_chain(const PotentialSpec& pot, int n, double rho, std::uint64_t seed, const SamplerConfig& cfg,
                     Visit&& visit) {
    ChainState st = init_state(n, rho, seed);
    PairSlice slice(pot, cfg.grid_points, cfg.log_drop);
    const std::uint64_t thin = std::max<std::uint64_t>(cfg.thin, 1);
    for (std::uint64_t t = 0; t < cfg.burn_in + cfg.steps; ++t) {
        pair_heatbath_step(st, slice, cfg.reproject_every);
        if (t >= cfg.burn_in && (t - cfg.burn_in + 1) % thin == 0) visit(static_cast<const std::vector<double>&>(st.eta));
    }
    return st;
}

/// Per-chain seed derived from the run seed.
inline std::uint64_t chain_seed(std::uint64_t seed, int chain) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(chain) + 1));
}

// ---------------------------------------------------------------------------
// Binary sample files: "SPGS", u32 version, u32 N, u64 count, then N columns
// of count little-endian doubles.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kSpgsVersion = 1;

struct SampleColumns {
    std::uint32_t n = 0;
    std::vector<std::vector<double>> columns;   // columns[i][t]
    std::uint64_t count() const { return columns.empty() ? 0 : columns.front().size(); }
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("spgs: truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

inline void write_spgs(std::ostream& os, const SampleColumns& s) {
    os.write("SPGS", 4);
    detail::put_le<std::uint32_t>(os, kSpgsVersion);
    detail::put_le<std::uint32_t>(os, s.n);
    detail::put_le<std::uint64_t>(os, s.count());
    for (const auto& col : s.columns)
        for (double v : col) detail::put_le<double>(os, v);
}

inline SampleColumns read_spgs(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SPGS", 4) != 0) throw std::runtime_error("spgs: bad magic");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kSpgsVersion) throw std::runtime_error("spgs: unsupported version " + std::to_string(version));
    SampleColumns s;
    s.n = detail::get_le<std::uint32_t>(is);
    const auto count = detail::get_le<std::uint64_t>(is);
    s.columns.assign(s.n, std::vector<double>(count));
    for (auto& col : s.columns)
        for (auto& v : col) v = detail::get_le<double>(is);
    return s;
}

}  // namespace spingap
