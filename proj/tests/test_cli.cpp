#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "experiments.hpp"
#include "output.hpp"

using namespace gausscalc;
using namespace gausscalc::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gausscalc_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << body;
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GAUSSCALC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

}  // namespace

TEST_CASE("config parsing", "[cli]") {
    const auto c = Config::parse_string("# comment\nmodel = fbm  # trailing\nH=0.3\n\nH_list = 0.1, 0.2 ,0.3\nseed = 18446744073709551615\n");
    CHECK(c.str("model", "") == "fbm");
    CHECK(c.num("H", 0.0) == 0.3);
    CHECK(c.num("missing", 4.5) == 4.5);
    CHECK(c.list("H_list", {}) == std::vector<double>{0.1, 0.2, 0.3});
    CHECK(c.seed("seed", 0) == 18446744073709551615ull);
    CHECK(c.keys() == std::vector<std::string>{"model", "H", "H_list", "seed"});
    CHECK_THROWS_AS(Config::parse_string("novalue\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string(" = 1\n"), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("H = abc\n").num("H", 0.0), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("N = 2.5\n").count("N", 0), ConfigError);
    CHECK_THROWS_AS(Config::parse_string("seed = -1\n").seed("seed", 0), ConfigError);
    CHECK_THROWS_AS(Config::load("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("models and grids from configs", "[cli]") {
    CHECK(model_from_config(Config::parse_string("model = bm\n")).is_martingale());
    CHECK(model_from_config(Config::parse_string("model = fbm\nH = 0.3\n")).describe() == "fbm(H=0.300000)");
    const auto w = model_from_config(Config::parse_string("model = weighted_fbm\nH = 0.7\nbreaks = 0,0.5,1\nsigma = 1,2\n"));
    CHECK(w.describe() == "weighted_fbm(H=0.700000)");
    const auto s = model_from_config(Config::parse_string("model = sum\nmodel1 = bm\nmodel2 = fbm\nH2 = 0.3\ngamma = 2\n"));
    CHECK(s.describe().rfind("sum(bm, fbm(H=0.300000)", 0) == 0);
    CHECK_THROWS_AS(model_from_config(Config::parse_string("model = levy\n")), ConfigError);
    const auto grid = grid_from_config(Config::parse_string("N = 8\nT = 2\n"));
    CHECK(grid.size() == 8);
    CHECK(aligned_time(Config::parse_string("r = 0.75\n"), grid, "r", 0.0) == 0.75);
    CHECK_THROWS_AS(aligned_time(Config::parse_string("r = 0.3\n"), grid, "r", 0.0), ConfigError);
    CHECK_THROWS_AS(grid_from_config(Config::parse_string("N = 0\n")), ConfigError);
}

TEST_CASE("CSV formatting", "[cli]") {
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(-2.5e-300) == "-2.5e-300");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
    CsvTable t({"a", "b"});
    t.add({1.5, std::string("x")});
    t.add({std::numeric_limits<double>::infinity(), 2.0});
    CHECK(t.str() == "a,b\n1.5,x\ninf,2\n");
    CHECK_THROWS_AS(t.add({1.0}), ShapeError);
    CHECK(num(std::nan("")) == "nan");
}

TEST_CASE("parallel sweeps keep their order", "[cli]") {
    std::vector<std::size_t> out(100, 0);
    parallel_for(out.size(), 8, [&](std::size_t i) { out[i] = i * i; });
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == i * i);
    }
    CHECK_THROWS_AS(parallel_for(10, 4, [](std::size_t i) {
                        if (i == 7) {
                            throw ParameterError("boom");
                        }
                    }),
                    ParameterError);
}

TEST_CASE("every experiment is registered", "[cli]") {
    for (const char* name : {"gram", "opnorm-sweep", "dr-sweep", "jensen", "qce-check", "domain-diagnostic",
                             "skorokhod-check", "bsde-solve", "bsde-verify", "nonexist-cert", "example33",
                             "frac-verify", "mc-crosscheck"}) {
        CHECK(experiments().count(name) == 1);
    }
}

TEST_CASE("opnorm sweep marks the martingale point", "[cli][binary]") {
    const auto dir = scratch("opnorm");
    const auto cfg = write_config(dir, "N = 16\nH_list = 0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9\n");
    REQUIRE(run_cli("opnorm-sweep --config " + cfg.string() + " --out " + (dir / "out").string()) == 0);
    std::istringstream csv(slurp(dir / "out" / "opnorm_sweep.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "H,opnorm,d_r");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string h, op;
        std::getline(ss, h, ',');
        std::getline(ss, op, ',');
        if (std::abs(std::stod(h) - 0.5) < 1e-12) {
            CHECK(std::abs(std::stod(op) - 1.0) <= 1e-9);
        } else {
            CHECK(std::stod(op) > 1.0);
        }
        ++rows;
    }
    CHECK(rows == 9);
    const auto manifest = read_json(dir / "out" / "run-manifest.json");
    CHECK(manifest["experiment"] == "opnorm-sweep");
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest.contains("wall_time_seconds"));
    CHECK(manifest["versions"].contains("eigen"));
    CHECK(manifest["config"]["N"] == "16");
}

TEST_CASE("nonexistence certificate from the default config", "[cli][binary]") {
    const auto dir = scratch("cert");
    const auto cfg = write_config(dir, "# defaults\n");
    REQUIRE(run_cli("nonexist-cert --config " + cfg.string() + " --out " + dir.string()) == 0);
    const auto rep = read_json(dir / "nonexist_cert.json");
    CHECK(rep["refused"] == false);
    CHECK(rep["rho"].get<double>() > 1.0);
    CHECK(rep["bound_holds"] == true);
    const auto bm = write_config(dir, "model = bm\n");
    REQUIRE(run_cli("nonexist-cert --config " + bm.string() + " --out " + dir.string()) == 0);
    const auto refusal = read_json(dir / "nonexist_cert.json");
    CHECK(refusal["refused"] == true);
    CHECK(refusal["note"].get<std::string>().find("Brownian") != std::string::npos);
}

TEST_CASE("same config and seed give identical outputs", "[cli][binary]") {
    const auto dir = scratch("determinism");
    const auto cfg = write_config(dir, "model = fbm\nH = 0.3\nN = 6\nseed = 99\n");
    for (const char* exp : {"bsde-verify", "qce-check", "mc-crosscheck"}) {
        const std::string base = std::string(exp) + " --config " + cfg.string() + " --threads 3 --out ";
        REQUIRE(run_cli(base + (dir / "a").string()) == 0);
        REQUIRE(run_cli(base + (dir / "b").string()) == 0);
        for (const auto& entry : fs::directory_iterator(dir / "a")) {
            const auto name = entry.path().filename();
            if (name != "run-manifest.json") {
                CHECK(slurp(entry.path()) == slurp(dir / "b" / name));
            }
        }
    }
    // the command-line seed overrides the config
    const auto o1 = dir / "s1";
    const auto o2 = dir / "s2";
    REQUIRE(run_cli("mc-crosscheck --config " + cfg.string() + " --seed 1 --out " + o1.string()) == 0);
    REQUIRE(run_cli("mc-crosscheck --config " + cfg.string() + " --seed 2 --out " + o2.string()) == 0);
    CHECK(read_json(o1 / "run-manifest.json")["seed"] == 1);
    CHECK(slurp(o1 / "mc_crosscheck.json") != slurp(o2 / "mc_crosscheck.json"));
}

TEST_CASE("exit codes", "[cli][binary]") {
    const auto dir = scratch("codes");
    const auto ok = write_config(dir, "N = 4\n");
    CHECK(run_cli("no-such-experiment --config " + ok.string() + " --out " + dir.string()) == 64);
    CHECK(run_cli("gram --out " + dir.string()) == 64);
    CHECK(run_cli("gram --config /nonexistent.cfg --out " + dir.string()) == 1);
    const auto misaligned = dir / "misaligned.cfg";
    std::ofstream(misaligned) << "N = 4\nr = 0.3\n";
    CHECK(run_cli("jensen --config " + misaligned.string() + " --out " + dir.string()) == 1);
    CHECK(read_json(dir / "run-manifest.json")["exit_code"] == 1);
    const auto coarse = dir / "coarse.cfg";
    std::ofstream(coarse) << "H = 0.2\nM = 20\n";
    CHECK(run_cli("frac-verify --config " + coarse.string() + " --out " + dir.string()) == 2);
    CHECK(run_cli("gram --config " + ok.string() + " --out " + dir.string()) == 0);
}
