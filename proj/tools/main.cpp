#include <chrono>
#include <ctime>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>

#include "experiments.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_error = 1;
constexpr int exit_check_failed = 2;
constexpr int exit_usage = 64;

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string experiment_list() {
    std::string s;
    for (const auto& [name, run] : gausscalc::cli::experiments()) {
        s += (s.empty() ? "" : " | ") + name;
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace gausscalc::cli;
    CLI::App app{"Gaussian calculus experiments"};
    std::string experiment;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("experiment", experiment, experiment_list())->required();
    app.add_option("--config", config_path, "flat key = value config file")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "seed, overrides the config");
    app.add_option("--threads", threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    const auto& table = experiments();
    const auto it = table.find(experiment);
    if (it == table.end()) {
        std::cerr << "unknown experiment '" << experiment << "'; expected one of: " << experiment_list() << "\n";
        return exit_usage;
    }

    const auto start = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    RunContext rc;
    rc.threads = threads;
    rc.out_dir = out_dir;
    Config cfg;
    int code = exit_ok;
    Json report;
    std::string error;
    try {
        cfg = Config::load(config_path);
        rc.seed = seed ? *seed : cfg.seed("seed", rc.seed);
        std::filesystem::create_directories(rc.out_dir);
        const Outcome o = it->second(cfg, rc);
        report = o.report;
        code = o.passed ? exit_ok : exit_check_failed;
    } catch (const std::exception& e) {
        error = e.what();
        code = exit_error;
        std::cerr << "error: " << error << "\n";
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    Json config_echo = Json::object();
    for (const auto& k : cfg.keys()) {
        config_echo[k] = cfg.str(k, "");
    }
    Json manifest{{"experiment", experiment},
                  {"config_path", config_path},
                  {"config", config_echo},
                  {"seed", rc.seed},
                  {"threads", rc.threads},
                  {"versions",
                   {{"gausscalc", GAUSSCALC_VERSION},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"boost", BOOST_LIB_VERSION},
                    {"compiler", __VERSION__}}},
                  {"started_utc", started},
                  {"wall_time_seconds", wall},
                  {"artifacts", rc.artifacts},
                  {"exit_code", code}};
    if (!error.empty()) {
        manifest["error"] = error;
    }
    try {
        std::filesystem::create_directories(rc.out_dir);
        write_text(rc.out_dir / "run-manifest.json", dump(manifest));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_error;
    }
    if (code == exit_ok || code == exit_check_failed) {
        std::cout << dump(report);
    }
    return code;
}
