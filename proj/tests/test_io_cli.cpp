#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <spingap/io.hpp>

#include "config.hpp"

using namespace spingap;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run_cli(const std::string& args) {
    const std::string cmd = std::string(SPINGAP_CLI) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "spingap_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

int error_line(const std::string& text, const std::string& kind) {
    try {
        cli::parse_config(text, kind);
    } catch (const cli::ConfigError& e) {
        return e.line;
    }
    return -1;
}

}  // namespace

TEST(Io, DoublesRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 3.398795081561766}) {
        EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
    }
}

TEST(Io, CsvEscaping) {
    Table t{{"name", "x", "ok", "k"}, {}};
    t.add({std::string("a,b"), 0.5, true, std::int64_t{-3}});
    t.add({std::string("say \"hi\""), 0.1, false, std::int64_t{0}});
    EXPECT_EQ(to_csv(t), "name,x,ok,k\n\"a,b\",0.5,true,-3\n\"say \"\"hi\"\"\",0.10000000000000001,false,0\n");
    EXPECT_THROW(t.add({1.0}), std::invalid_argument);
}

TEST(Io, AtomicWriteReplaces) {
    const fs::path p = scratch("atomic.txt");
    write_atomic(p, "first");
    write_atomic(p, "second");
    EXPECT_EQ(slurp(p), "second");
    EXPECT_FALSE(fs::exists(fs::path(p.string() + ".tmp")));
    EXPECT_THROW(write_atomic(scratch("missing_dir") / "x" / "y.txt", "z"), std::runtime_error);
}

TEST(Io, Fnv1aVectors) {
    EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
    EXPECT_EQ(hex64(fnv1a("foobar")), "85944171f73967e8");
}

TEST(Config, ReportsLineNumbers) {
    EXPECT_EQ(error_line("potential:\n  family: quartic\nrho: []\n", "tilt"), 3);
    EXPECT_EQ(error_line("rho: [0]\n\nbogus: 1\n", "tilt"), 3);
    EXPECT_EQ(error_line("rho: [0]\npotential:\n  family: sextic\n", "tilt"), 3);
    EXPECT_EQ(error_line("rho: [0]\nresolution: 8\n", "gap"), 2);
    EXPECT_EQ(error_line("experiment: gap\n", "tilt"), 1);
    EXPECT_EQ(error_line("rho: [0\n", "tilt") > 0, true);
}

TEST(Config, SeedRequiredForStochasticKinds) {
    try {
        cli::parse_config("n: [4]\nrho: [0]\n", "sample");
        FAIL();
    } catch (const cli::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("seed missing"), std::string::npos);
    }
    cli::Overrides ov;
    ov.seed = 17;
    ov.threads = 2;
    const auto c = cli::parse_config("n: [4]\nrho: [0]\n", "sample", ov);
    EXPECT_EQ(c.sampler.seed, 17u);
    EXPECT_EQ(c.sampler.threads, 2);
}

TEST(Config, RangesAndDefaults) {
    const auto c = cli::parse_config("rho: {from: -1, to: 1, points: 5}\n", "gap");
    ASSERT_EQ(c.rho.size(), 5u);
    EXPECT_DOUBLE_EQ(c.rho[1], -0.5);
    EXPECT_EQ(c.n, (std::vector<int>{2, 3}));
    EXPECT_EQ(c.format, "csv");
}

TEST(Cli, ExitCodes) {
    const fs::path ok = write_config("ok.yaml", "potential:\n  family: quadratic\n  a: 0.5\nrho: [0, 1]\nn: [2, 5]\n");
    const CliRun good = run_cli("gap --config " + ok.string());
    EXPECT_EQ(good.code, 0);
    EXPECT_NE(good.out.find("gamma"), std::string::npos);
    const fs::path empty = write_config("empty.yaml", "potential:\n  family: quartic\nrho: []\n");
    EXPECT_EQ(run_cli("tilt --config " + empty.string()).code, 2);
    EXPECT_EQ(run_cli("sample --config " + ok.string()).code, 2);
    const fs::path single = write_config("single.yaml", "potential:\n  family: quadratic\nrho: 0\nl: [1]\n");
    EXPECT_EQ(run_cli("compare --config " + single.string()).code, 3);
    EXPECT_EQ(run_cli("nosuch").code, 2);
}

TEST(Cli, SeededRunsAreByteIdentical) {
    const fs::path cfg = write_config(
        "sample.yaml",
        "potential:\n  family: quartic\n  perturbation: {type: cosine, amplitude: 0.3}\nrho: [1]\nn: [4]\n"
        "sampler: {steps: 4000, burn_in: 100, thin: 10, chains: 2, batches: 4, bootstrap: 10}\n");
    const fs::path a = scratch("a.csv"), b = scratch("b.csv");
    ASSERT_EQ(run_cli("sample --seed 5 --config " + cfg.string() + " --out " + a.string()).code, 0);
    ASSERT_EQ(run_cli("sample --seed 5 --threads 2 --config " + cfg.string() + " --out " + b.string()).code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_FALSE(slurp(a).empty());
    const std::string manifest = slurp(a.string() + ".manifest.json");
    EXPECT_NE(manifest.find("\"output_hash\": \"" + hex64(fnv1a(slurp(a))) + "\""), std::string::npos);
    EXPECT_NE(manifest.find("\"seed\": 5"), std::string::npos);
}
