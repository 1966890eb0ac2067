// spingap: command-line driver for the experiments.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <spingap/edgeworth.hpp>
#include <spingap/gap.hpp>
#include <spingap/gl.hpp>
#include <spingap/io.hpp>
#include <spingap/kop.hpp>
#include <spingap/sampler.hpp>
#include <spingap/single_site.hpp>

#include "config.hpp"

#ifndef SPINGAP_VERSION
#define SPINGAP_VERSION "0.0.0"
#endif

namespace {

using namespace spingap;
using cli::ExperimentConfig;
using json = nlohmann::ordered_json;

struct Result {
    Table table;
    json summary = json::object();
};

std::int64_t i64(std::size_t v) { return static_cast<std::int64_t>(v); }

SliceOptions slice_options(const ExperimentConfig& c) {
    SliceOptions s;
    s.resolution = c.resolution;
    return s;
}

int lattice_resolution(const ExperimentConfig& c) { return c.resolution > 0 ? c.resolution : kDefaultResolution; }

Result run_tilt(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"rho", "lambda", "log_z", "sigma2", "m3", "m4", "phi2_at_rho", "sigma2_phi2", "bl_upper",
                       "jensen_lower", "bracket_ok", "ratio4", "ratio6", "ratio8", "tail_c"};
    const SigmaBoundReport sb = verify_sigma_bounds(c.potential, c.rho);
    const MomentBoundReport mb = verify_moment_bounds(c.potential, c.rho, 4);
    std::vector<std::vector<Cell>> rows(c.rho.size());
    parallel_for(static_cast<int>(c.rho.size()), c.threads, [&](int i) {
        const double rho = c.rho[static_cast<std::size_t>(i)];
        const TiltedMeasure tm = solve_chemical_potential(c.potential, rho);
        const auto& s = sb.rows[static_cast<std::size_t>(i)];
        double tail_c = 0.0;
        if (!c.tail_t.empty()) tail_c = tail_estimate(tm, c.tail_t).fitted_c;
        const auto ratio = [&](int n) { return tm.moments[2 * n] / ipow(tm.sigma2, n); };
        rows[static_cast<std::size_t>(i)] = {rho, tm.lambda, tm.log_z, tm.sigma2, tm.moments[3], tm.moments[4],
                                             s.phi2_at_rho, s.product, s.bl_upper, s.jensen_lower, s.bracket_ok,
                                             ratio(2), ratio(3), ratio(4), tail_c};
    });
    for (auto& row : rows) r.table.add(std::move(row));
    r.summary = {{"min_product", sb.min_product}, {"max_product", sb.max_product}, {"observed_k", sb.observed_k},
                 {"all_brackets_ok", sb.all_brackets_ok}, {"moment_k", mb.k},
                 {"moment_bounds_hold", mb.all_within}};
    return r;
}

Result run_clt(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"rho", "n", "sigma", "sup_error", "resolution"};
    std::vector<ScalingReport> reps(c.rho.size());
    std::vector<double> sig(c.rho.size());
    parallel_for(static_cast<int>(c.rho.size()), c.threads, [&](int i) {
        const TiltedMeasure tm = solve_chemical_potential(c.potential, c.rho[static_cast<std::size_t>(i)]);
        sig[static_cast<std::size_t>(i)] = tm.sigma();
        reps[static_cast<std::size_t>(i)] = clt_scaling(tm, c.n, c.variant, lattice_resolution(c));
    });
    json fits = json::array();
    for (std::size_t i = 0; i < c.rho.size(); ++i) {
        for (const auto& row : reps[i].rows)
            r.table.add({c.rho[i], std::int64_t{row.n}, sig[i], row.sup_error, std::int64_t{row.resolution}});
        fits.push_back({{"rho", c.rho[i]}, {"fitted_slope", reps[i].fitted_slope}, {"prefactor", reps[i].prefactor},
                        {"warnings", reps[i].warnings}});
    }
    r.summary = {{"variant", c.variant == EdgeworthVariant::verbatim ? "verbatim" : "hermite6"}, {"fits", fits}};
    return r;
}

Result run_kop(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"rho", "n", "size", "eig_residual", "stochasticity", "self_adjoint", "cross_check_error",
                       "projected_norm", "kappa_min", "s_ratio", "orth_ratio"};
    struct Cellout {
        std::vector<Cell> row;
        double norm = 0.0;
    };
    const std::size_t cells = c.rho.size() * c.n.size();
    std::vector<Cellout> out(cells);
    parallel_for(static_cast<int>(cells), c.threads, [&](int idx) {
        const double rho = c.rho[static_cast<std::size_t>(idx) / c.n.size()];
        const int n = c.n[static_cast<std::size_t>(idx) % c.n.size()];
        const TiltedMeasure tm = solve_chemical_potential(c.potential, rho);
        KBuildOptions o;
        o.resolution = lattice_resolution(c);
        const KOperator k = build_k(tm, n, o);
        const PGapReport pg = verify_p_gap(k);
        const double norm = projected_norm(k);
        out[static_cast<std::size_t>(idx)] = {{rho, std::int64_t{n}, std::int64_t{k.size()}, verify_eig(k),
                                               stochasticity_residual(k), self_adjoint_residual(k), k.cross_check_error,
                                               norm, pg.kappa_min, pg.s_ratio, pg.orth_ratio},
                                              norm};
    });
    json fits = json::array();
    for (std::size_t i = 0; i < c.rho.size(); ++i) {
        std::vector<double> xs, ys;
        for (std::size_t j = 0; j < c.n.size(); ++j) {
            auto& cell = out[i * c.n.size() + j];
            r.table.add(std::move(cell.row));
            xs.push_back(c.n[j]);
            ys.push_back(cell.norm);
        }
        if (xs.size() >= 2) {
            const LineFit f = fit_loglog(xs, ys);
            fits.push_back({{"rho", c.rho[i]}, {"fitted_slope", f.slope}, {"prefactor", std::exp(f.intercept)}});
        }
    }
    r.summary = {{"fits", fits}};
    return r;
}

Result run_gap(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"rho", "n", "gamma", "kind", "method", "uncertainty"};
    const std::size_t cells = c.rho.size() * c.n.size();
    std::vector<GapEstimate> out(cells);
    parallel_for(static_cast<int>(cells), c.threads, [&](int idx) {
        const double rho = c.rho[static_cast<std::size_t>(idx) / c.n.size()];
        const int n = c.n[static_cast<std::size_t>(idx) % c.n.size()];
        out[static_cast<std::size_t>(idx)] =
            is_pure_quadratic(c.potential) ? quadratic_gap(c.potential, n, rho) : exact_gap_small_n(c.potential, n, rho, slice_options(c));
    });
    for (const auto& g : out)
        r.table.add({g.rho, std::int64_t{g.size}, g.value, std::string(to_string(g.kind)), std::string(to_string(g.method)),
                     g.uncertainty});
    return r;
}

Result run_recursion(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"n", "gamma", "argmax_rho", "method", "uncertainty"};
    RecursionOptions o;
    o.slice = slice_options(c);
    o.sampler = c.sampler;
    o.mcmc_rho_grid = c.mcmc_rho;
    const RecursionReport rep = recursion_check(c.potential, c.rho, c.n_max, o);
    for (const auto& row : rep.rows)
        r.table.add({std::int64_t{row.n}, row.gamma, row.argmax_rho, std::string(to_string(row.method)), row.uncertainty});
    r.summary = {{"fitted_c", rep.fitted_c}, {"c_prime", rep.c_prime}, {"mcmc_valid", rep.mcmc_valid}};
    return r;
}

Result run_paths(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"d", "l", "max_length", "max_congestion", "implied_k", "valid"};
    double sup_k = 0.0;
    for (int l : c.l) {
        const PathProps p = verify_path_props(build_paths(c.d, l));
        sup_k = std::max(sup_k, p.implied_k);
        r.table.add({std::int64_t{c.d}, std::int64_t{l}, std::int64_t{p.max_length}, p.max_congestion, p.implied_k, p.valid});
    }
    r.summary = {{"sup_implied_k", sup_k}};
    return r;
}

Result run_compare(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"rho", "l", "chi", "gamma", "gamma_method", "implied_k", "c", "rhs", "margin", "chi_over_l2", "ok"};
    bool all_ok = true;
    for (double rho : c.rho) {
        std::optional<SamplerConfig> mc;
        if (c.mcmc) mc = c.sampler;
        const ComparisonReport rep = comparison_check(c.potential, c.d, c.l, rho, slice_options(c), mc);
        all_ok = all_ok && rep.all_ok;
        for (const auto& row : rep.rows)
            r.table.add({rho, std::int64_t{row.l}, row.chi, row.gamma, std::string(to_string(row.gamma_method)),
                         row.implied_k, row.c, row.rhs, row.margin, row.chi_over_l2, row.ok});
    }
    r.summary = {{"all_ok", all_ok}};
    return r;
}

Result run_sample(const ExperimentConfig& c) {
    Result r;
    r.table.columns = {"rho", "n", "chain", "mean", "variance", "tau", "mean_se", "count", "max_sum_error"};
    if (!c.samples_out.empty() && (c.rho.size() != 1 || c.n.size() != 1))
        throw cli::ConfigError(0, "samples_out needs a single rho and a single n");
    json rhat = json::array();
    for (double rho : c.rho)
        for (int n : c.n) {
            const int chains = c.sampler.chains;
            std::vector<std::vector<double>> traces(static_cast<std::size_t>(chains));
            std::vector<double> sum_err(static_cast<std::size_t>(chains), 0.0);
            std::vector<SampleColumns> cols(static_cast<std::size_t>(chains));
            parallel_for(chains, c.threads, [&](int ch) {
                auto& tr = traces[static_cast<std::size_t>(ch)];
                auto& col = cols[static_cast<std::size_t>(ch)];
                col.n = static_cast<std::uint32_t>(n);
                col.columns.assign(static_cast<std::size_t>(n), {});
                double& err = sum_err[static_cast<std::size_t>(ch)];
                const bool keep = !c.samples_out.empty();
                run_chain(c.potential, n, rho, chain_seed(c.sampler.seed, ch), c.sampler, [&](const std::vector<double>& eta) {
                    tr.push_back(eta[0]);
                    double s = 0.0;
                    for (double v : eta) s += v;
                    err = std::max(err, std::abs(s - rho * n));
                    if (keep)
                        for (int i = 0; i < n; ++i) col.columns[static_cast<std::size_t>(i)].push_back(eta[static_cast<std::size_t>(i)]);
                });
            });
            std::vector<double> pooled;
            double worst = 0.0;
            for (int ch = 0; ch < chains; ++ch) {
                const auto& tr = traces[static_cast<std::size_t>(ch)];
                const SeriesSummary s = summarize(tr);
                r.table.add({rho, std::int64_t{n}, std::int64_t{ch}, s.mean, s.variance, s.tau, s.mean_se, i64(s.count),
                             sum_err[static_cast<std::size_t>(ch)]});
                pooled.insert(pooled.end(), tr.begin(), tr.end());
                worst = std::max(worst, sum_err[static_cast<std::size_t>(ch)]);
            }
            // pooled row: standard error from the per-chain autocorrelation times
            const SeriesSummary p = summarize(pooled);
            double tau = 0.0;
            for (const auto& tr : traces) tau += autocorrelation_time(tr) / chains;
            r.table.add({rho, std::int64_t{n}, std::int64_t{-1}, p.mean, p.variance, tau,
                         std::sqrt(p.variance * tau / static_cast<double>(pooled.size())), i64(pooled.size()), worst});
            rhat.push_back({{"rho", rho}, {"n", n}, {"split_rhat", split_rhat(traces)}});
            if (!c.samples_out.empty()) {
                SampleColumns all;
                all.n = static_cast<std::uint32_t>(n);
                all.columns.assign(static_cast<std::size_t>(n), {});
                for (const auto& col : cols)
                    for (int i = 0; i < n; ++i)
                        all.columns[static_cast<std::size_t>(i)].insert(all.columns[static_cast<std::size_t>(i)].end(),
                                                                        col.columns[static_cast<std::size_t>(i)].begin(),
                                                                        col.columns[static_cast<std::size_t>(i)].end());
                std::ostringstream os;
                write_spgs(os, all);
                write_atomic(c.samples_out, os.str());
            }
        }
    r.summary = {{"convergence", rhat}};
    return r;
}

json cell_json(const Cell& c) {
    return std::visit([](const auto& v) { return json(v); }, c);
}

std::string render(const Result& r, const std::string& command, const std::string& format) {
    if (format == "csv") return to_csv(r.table);
    json rows = json::array();
    for (const auto& row : r.table.rows) {
        json o = json::object();
        for (std::size_t i = 0; i < row.size(); ++i) o[r.table.columns[i]] = cell_json(row[i]);
        rows.push_back(o);
    }
    json doc = {{"command", command}, {"columns", r.table.columns}, {"rows", rows}, {"summary", r.summary}};
    return doc.dump(2) + "\n";
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral gap experiments for conservative spin systems"};
    app.set_version_flag("--version", SPINGAP_VERSION);
    app.require_subcommand(1);

    std::string config_path, out;
    std::string format;
    int threads = 0;
    std::uint64_t seed = 0;
    for (const std::string& name : cli::kinds()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "YAML experiment file")->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output path (stdout when absent)");
        sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "random seed");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    const CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();

    const auto start = std::chrono::steady_clock::now();
    std::string text;
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) {
            std::cerr << "error: cannot read " << config_path << "\n";
            return 2;
        }
        std::ostringstream ss;
        ss << is.rdbuf();
        text = ss.str();
    }
    cli::Overrides ov;
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--threads")) ov.threads = threads;
    if (sub->count("--format")) ov.format = format;
    if (sub->count("--out")) ov.out = out;

    ExperimentConfig cfg;
    try {
        cfg = cli::parse_config(text, command, ov);
    } catch (const cli::ConfigError& e) {
        std::cerr << "config error: " << (config_path.empty() ? "" : config_path + ": ") << e.what() << "\n";
        return 2;
    }

    Result result;
    try {
        if (command == "tilt") result = run_tilt(cfg);
        else if (command == "clt") result = run_clt(cfg);
        else if (command == "kop") result = run_kop(cfg);
        else if (command == "gap") result = run_gap(cfg);
        else if (command == "recursion") result = run_recursion(cfg);
        else if (command == "paths") result = run_paths(cfg);
        else if (command == "compare") result = run_compare(cfg);
        else result = run_sample(cfg);
    } catch (const cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical check failed: invariant '" << e.invariant() << "': " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    const std::string body = render(result, command, cfg.format);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"command", command},
                     {"config", config_path},
                     {"config_hash", hex64(fnv1a(command + "\n" + text))},
                     {"output_hash", hex64(fnv1a(body))},
                     {"version", SPINGAP_VERSION},
                     {"format", cfg.format},
                     {"threads", cfg.threads},
                     {"wall_time_s", wall},
                     {"timestamp", utc_now()},
                     {"summary", result.summary}};
    if (cfg.seed) manifest["seed"] = *cfg.seed;
    try {
        if (cfg.out.empty()) {
            std::cout << body;
            std::cerr << manifest.dump() << "\n";
        } else {
            manifest["output"] = cfg.out;
            write_atomic(cfg.out, body);
            write_atomic(cfg.out + ".manifest.json", manifest.dump(2) + "\n");
            std::cout << manifest.dump() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
