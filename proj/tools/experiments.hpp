#ifndef GAUSSCALC_TOOLS_EXPERIMENTS_HPP
#define GAUSSCALC_TOOLS_EXPERIMENTS_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "gausscalc/gausscalc.hpp"
#include "config.hpp"
#include "output.hpp"

namespace gausscalc::cli {

struct RunContext {
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 20240101;
    unsigned threads = 1;
    std::vector<std::string> artifacts;

    void write(const std::string& name, const std::string& body) {
        write_text(out_dir / name, body);
        artifacts.push_back(name);
    }
};

struct Outcome {
    bool passed = true;
    Json report = Json::object();
};

/// Runs fn(i) for i < n on up to `threads` workers; results are stored by index.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

namespace detail {

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index n, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = nd(rng);
    }
    return v;
}

inline SymmetricTensor gaussian_tensor(std::mt19937_64& rng, int n, int k, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    SymmetricTensor t(n, k);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = nd(rng);
    }
    return t;
}

inline ChaosVector gaussian_chaos(std::mt19937_64& rng, int n, int K, double scale) {
    ChaosVector x(n, K);
    for (int k = 0; k <= K; ++k) {
        x.coeff_mut(k) = gaussian_tensor(rng, n, k, scale);
    }
    return x;
}

inline Vector unit_direction(const GramContext& ctx, std::mt19937_64& rng, double norm) {
    Vector h = gaussian_vector(rng, static_cast<Eigen::Index>(ctx.size()), 1.0);
    return h * (norm / std::sqrt(ctx.norm2(h)));
}

/// Random problem of chaos order <= 3 with nonzero a, G and c.
inline BSDEProblem random_problem(const GramContext& ctx, std::mt19937_64& rng) {
    const int n = static_cast<int>(ctx.size());
    BSDEProblem p;
    p.ctx = &ctx;
    p.a = gaussian_vector(rng, n, 0.8);
    p.gamma = Vector(n + 1);
    p.gamma(0) = 0.0;
    std::normal_distribution<double> nd(0.0, 0.3);
    for (int i = 1; i <= n; ++i) {
        p.gamma(i) = p.gamma(i - 1) + nd(rng);
    }
    p.c = gaussian_vector(rng, n, 0.5);
    for (int i = 0; i <= n; ++i) {
        ChaosVector g = gaussian_chaos(rng, n, 2, 0.5);
        for (int k = 0; k <= 2; ++k) {
            g.coeff_mut(k) = project(g.coeff(k), static_cast<std::size_t>(i));
        }
        p.G.push_back(std::move(g));
    }
    p.xi = gaussian_chaos(rng, n, 3, 0.5);
    return p;
}

inline double partial_exp(double b, int n) {
    double s = 0.0;
    double t = 1.0;
    for (int j = 0; j <= n; ++j) {
        s += t;
        t *= b / (j + 1);
    }
    return s;
}

inline Json geometry_json(const SubspaceGeometry& g) {
    return Json{{"r", g.r}, {"d_r", num(g.d_r)}, {"opnorm", num(g.opnorm)}};
}

inline Json model_json(const CovarianceModel& m, const TimeGrid& grid) {
    return Json{{"model", m.describe()}, {"N", grid.size()}, {"T", grid.T()}};
}

}  // namespace detail

inline Outcome run_gram(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    CsvTable t({"i", "j", "gram"});
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        for (std::size_t j = 0; j < ctx.size(); ++j) {
            t.add({static_cast<double>(i), static_cast<double>(j),
                   ctx.gram()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
        }
    }
    rc.write("gram.csv", t.str());
    Outcome o;
    o.report = detail::model_json(model, grid);
    o.report["positive_definite"] = ctx.positive_definite();
    o.report["ill_conditioned"] = ctx.ill_conditioned();
    o.report["cond_estimate"] = num(ctx.cond_estimate());
    o.report["min_eigenvalue"] = num(ctx.eigenvalues().minCoeff());
    o.report["max_eigenvalue"] = num(ctx.eigenvalues().maxCoeff());
    o.report["martingale"] = model.is_martingale();
    rc.write("gram.json", dump(o.report));
    return o;
}

inline Outcome run_opnorm_sweep(const Config& cfg, RunContext& rc) {
    const auto grid = grid_from_config(cfg);
    const double r = aligned_time(cfg, grid, "r", 0.5 * grid.T());
    const auto Hs = cfg.list("H_list", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
    std::vector<SubspaceGeometry> res(Hs.size());
    parallel_for(Hs.size(), rc.threads, [&](std::size_t i) {
        const auto ctx = build_gram(CovarianceModel::fbm(Hs[i]), grid);
        res[i] = subspace_geometry(ctx, r);
    });
    Outcome o;
    CsvTable t({"H", "opnorm", "d_r"});
    Json pts = Json::array();
    for (std::size_t i = 0; i < Hs.size(); ++i) {
        const bool martingale = std::abs(Hs[i] - 0.5) < 1e-12;
        const bool ok = martingale ? std::abs(res[i].opnorm - 1.0) <= 1e-9 && res[i].d_r <= 1e-12
                                   : res[i].opnorm > 1.0 + 1e-6 && res[i].d_r > 1e-6;
        o.passed = o.passed && ok;
        t.add({Hs[i], res[i].opnorm, res[i].d_r});
        pts.push_back({{"H", Hs[i]}, {"opnorm", res[i].opnorm}, {"d_r", res[i].d_r}, {"passed", ok}});
    }
    rc.write("opnorm_sweep.csv", t.str());
    o.report = Json{{"N", grid.size()}, {"T", grid.T()}, {"r", r}, {"points", pts}, {"passed", o.passed}};
    rc.write("opnorm_sweep.json", dump(o.report));
    return o;
}

inline Outcome run_dr_sweep(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    if (grid.size() < 2) {
        throw ConfigError("dr-sweep needs N >= 2");
    }
    std::vector<SubspaceGeometry> res(grid.size() - 1);
    parallel_for(res.size(), rc.threads, [&](std::size_t i) { res[i] = subspace_geometry(ctx, grid[i + 1]); });
    Outcome o;
    CsvTable t({"r", "d_r", "opnorm"});
    Json pts = Json::array();
    for (const auto& g : res) {
        if (model.is_martingale()) {
            o.passed = o.passed && std::abs(g.opnorm - 1.0) <= 1e-9 && g.d_r <= 1e-12;
        }
        t.add({g.r, g.d_r, g.opnorm});
        pts.push_back(detail::geometry_json(g));
    }
    rc.write("dr_sweep.csv", t.str());
    o.report = detail::model_json(model, grid);
    o.report["martingale"] = model.is_martingale();
    o.report["points"] = pts;
    o.report["passed"] = o.passed;
    rc.write("dr_sweep.json", dump(o.report));
    return o;
}

inline Outcome run_jensen(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const double r = aligned_time(cfg, grid, "r", 0.5 * grid.T());
    const double eps = cfg.num("eps", 1e-3);
    const auto w = jensen_counterexample(ctx, r, eps);
    Outcome o;
    o.passed = w.ratio >= w.bound - 1e-9 && w.ratio > 1.0;
    o.report = detail::model_json(model, grid);
    o.report.update(Json{{"r", r},
                         {"eps", eps},
                         {"d_r", w.d_r},
                         {"correlation", w.correlation},
                         {"ratio", w.ratio},
                         {"bound", w.bound},
                         {"h", vec(w.h)},
                         {"qce", vec(w.qce)},
                         {"passed", o.passed}});
    rc.write("jensen.json", dump(o.report));
    return o;
}

inline Outcome run_qce_check(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const double r = aligned_time(cfg, grid, "r", 0.5 * grid.T());
    const int K = static_cast<int>(cfg.count("K_max", 12));
    const int trials = static_cast<int>(cfg.count("trials", 3));
    std::mt19937_64 rng(rc.seed);
    double first_err = 0.0;
    double wick_err = 0.0;
    CsvTable t({"trial", "first_chaos_error", "wick_error"});
    for (int trial = 0; trial < trials; ++trial) {
        const ShiftContext sc(ctx, r, detail::gaussian_vector(rng, static_cast<Eigen::Index>(ctx.size()), 0.5));
        double fe = 0.0;
        for (std::size_t i = 0; i <= ctx.size(); ++i) {
            const Vector f = indicator(grid, grid[i]);
            fe = std::max(fe, max_abs_diff(shifted_qce(sc, ChaosVector::first_chaos(f)),
                                           qce_first_chaos_closed_form(sc, f)));
        }
        const Vector f = detail::unit_direction(ctx, rng, 0.9);
        const auto got = shifted_qce(sc, wick_exponential_chaos(ctx, f, K));
        const auto exact = to_chaos(ctx, qce_wick_exponential_closed_form(sc, f), K);
        const double beta = ctx.inner(f, sc.c_r());
        double we = 0.0;
        for (int n = 0; n <= K; ++n) {
            // truncating the input at K keeps sum_{j <= K-n} beta^j / j! of e^beta in order n
            const double keep = detail::partial_exp(beta, K - n) / std::exp(beta);
            we = std::max(we, max_abs(got.coeff(n) - exact.coeff(n) * keep));
        }
        first_err = std::max(first_err, fe);
        wick_err = std::max(wick_err, we);
        t.add({static_cast<double>(trial), fe, we});
    }
    Outcome o;
    o.passed = first_err <= 1e-12 && wick_err <= 1e-8;
    rc.write("qce_check.csv", t.str());
    o.report = detail::model_json(model, grid);
    o.report.update(Json{{"r", r},
                         {"K_max", K},
                         {"trials", trials},
                         {"first_chaos_max_error", first_err},
                         {"wick_max_error", wick_err},
                         {"passed", o.passed}});
    rc.write("qce_check.json", dump(o.report));
    return o;
}

inline void write_domain_table(RunContext& rc, const std::string& name, const std::vector<double>& s,
                               const std::vector<double>& logs, const std::vector<double>& ratios,
                               const std::vector<double>* bounds) {
    std::vector<std::string> head{"K", "S_K", "log_S_K", "ratio"};
    if (bounds) {
        head.push_back("lower_bound");
    }
    CsvTable t(head);
    for (std::size_t k = 0; k < s.size(); ++k) {
        std::vector<Cell> row{static_cast<double>(k), s[k], logs[k],
                              k == 0 ? std::numeric_limits<double>::quiet_NaN() : ratios[k - 1]};
        if (bounds) {
            row.emplace_back((*bounds)[k]);
        }
        t.add(row);
    }
    rc.write(name, t.str());
}

inline Outcome run_domain_diagnostic(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const double r = aligned_time(cfg, grid, "r", 0.5 * grid.T());
    const int K = static_cast<int>(cfg.count("K_max", 12));
    const ShiftContext sc = ShiftContext::unshifted(ctx, r);
    Outcome o;
    o.report = detail::model_json(model, grid);
    o.report["r"] = r;
    const double opnorm = operator_norm(ctx, r).opnorm;
    o.report["opnorm"] = opnorm;
    if (!(opnorm > 1.0 + 1e-9)) {
        o.report["refused"] = true;
        o.report["note"] = "operator norm is one: every element of the grid span lies in the domain";
        rc.write("domain_diagnostic.json", dump(o.report));
        return o;
    }
    const Vector f = escape_direction(sc);
    const auto rep = domain_diagnostic<RankOneTensor>(sc, escape_generator(f), K);
    const double rho = ctx.norm2(project_past(f, sc.index()));
    o.report.update(Json{{"refused", false},
                         {"rho", rho},
                         {"direction", vec(f)},
                         {"geometric_rate", num(rep.geometric_rate)},
                         {"partial_sums", vec(rep.partial_sums)},
                         {"log_partial_sums", vec(rep.log_partial_sums)},
                         {"ratios", vec(rep.ratios)},
                         {"truncation_note", rep.truncation_note},
                         {"scope_note", rep.scope_note}});
    write_domain_table(rc, "domain_diagnostic.csv", rep.partial_sums, rep.log_partial_sums, rep.ratios, nullptr);
    rc.write("domain_diagnostic.json", dump(o.report));
    return o;
}

inline Outcome run_skorokhod_check(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const int trials = static_cast<int>(cfg.count("trials", 20));
    const int n = static_cast<int>(grid.size());
    std::mt19937_64 rng(rc.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    SimpleIntegrand z;
    for (int p = 0; p < 3; ++p) {
        const int i = pick(rng);
        const int j = i + 1 + pick(rng) % (n - i);
        WickCombo c = WickCombo::exponential(detail::gaussian_vector(rng, n, 0.4), 1.0 + p);
        c += WickCombo::exponential(detail::gaussian_vector(rng, n, 0.4), -0.5);
        z.pieces.push_back({grid[static_cast<std::size_t>(i)], grid[static_cast<std::size_t>(j)], c});
    }
    const double s_err = verify_s_transform_identity(ctx, z, trials, rc.seed + 1);

    // zero shifted QCE of future integrals, and the quasi-adapted identity
    ChaosField field(n, 2);
    ChaosField adapted(n, 2);
    for (int k = 0; k <= 2; ++k) {
        for (int j = 0; j < n; ++j) {
            const auto tj = detail::gaussian_tensor(rng, n, k, 0.5);
            field.slot(k, static_cast<std::size_t>(j)) = tj;
            adapted.slot(k, static_cast<std::size_t>(j)) = project(tj, static_cast<std::size_t>(j));
        }
    }
    const Vector c = detail::gaussian_vector(rng, n, 1.0);
    auto integral = [&](const ChaosField& zf, double a, double b) {
        return skorokhod_chaos(ctx, zf, a, b) + cm_pathwise_integral(ctx, zf, c, a, b);
    };
    const ChaosVector zero(n, 3);
    double future_err = 0.0;
    double adapted_err = 0.0;
    for (std::size_t ti = 0; ti <= grid.size(); ++ti) {
        const ShiftContext sc(ctx, grid[ti], c);
        for (std::size_t ai = ti; ai <= grid.size(); ++ai) {
            future_err = std::max(future_err, max_abs_diff(shifted_qce(sc, integral(field, grid[ti], grid[ai])), zero));
            adapted_err = std::max(adapted_err, max_abs_diff(shifted_qce(sc, integral(adapted, 0.0, grid[ai])),
                                                             integral(adapted, 0.0, grid[ti])));
        }
    }
    Outcome o;
    o.passed = s_err <= 1e-10 && future_err <= 1e-9 && adapted_err <= 1e-9;
    o.report = detail::model_json(model, grid);
    o.report.update(Json{{"trials", trials},
                         {"s_transform_max_error", s_err},
                         {"future_integral_qce_max_error", future_err},
                         {"quasi_adapted_max_error", adapted_err},
                         {"passed", o.passed}});
    rc.write("skorokhod_check.json", dump(o.report));
    return o;
}

inline Outcome run_bsde_solve(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    std::mt19937_64 rng(rc.seed);
    const BSDEProblem p = detail::random_problem(ctx, rng);
    const auto sol = solve(p);
    CsvTable t({"t", "A", "mean_Y", "second_moment_Y"});
    for (std::size_t i = 0; i <= grid.size(); ++i) {
        t.add({grid[i], sol.A(static_cast<Eigen::Index>(i)), sol.Y[i].expectation(), norm2(ctx, sol.Y[i])});
    }
    rc.write("bsde_solution.csv", t.str());
    Outcome o;
    o.report = detail::model_json(model, grid);
    const double term = max_abs_diff(sol.Y.back(), p.xi);
    o.passed = term == 0.0;
    o.report.update(Json{{"terminal_error", term},
                         {"mean_Y0", sol.Y.front().expectation()},
                         {"A", vec(sol.A)},
                         {"passed", o.passed}});
    rc.write("bsde_solve.json", dump(o.report));
    return o;
}

inline Outcome run_bsde_verify(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const int trials = static_cast<int>(cfg.count("trials", 20));
    std::mt19937_64 rng(rc.seed);
    const BSDEProblem p = detail::random_problem(ctx, rng);
    const auto rep = verify_solution_weak(p, solve(p), trials, rc.seed + 1);

    BSDEProblem q = p;
    q.G.clear();
    const Vector f = detail::unit_direction(ctx, rng, 0.5);
    const auto wsol = wick_exponential_solution(q, f);
    const auto wrep = verify_solution_weak(q, wsol, trials, rc.seed + 2);

    Outcome o;
    o.passed = rep.terminal_error == 0.0 && rep.max_residual <= 1e-8 && wrep.max_residual <= 1e-9 &&
               wrep.max_z_residual <= 1e-9;
    o.report = detail::model_json(model, grid);
    o.report.update(Json{{"trials", trials},
                         {"pairs", rep.pairs},
                         {"terminal_error", num(rep.terminal_error)},
                         {"max_residual", rep.max_residual},
                         {"wick_max_residual", wrep.max_residual},
                         {"wick_max_z_residual", num(wrep.max_z_residual)},
                         {"passed", o.passed}});
    rc.write("bsde_verify.json", dump(o.report));
    return o;
}

inline Outcome run_nonexist_cert(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const double r = aligned_time(cfg, grid, "r", 0.5 * grid.T());
    const int K = static_cast<int>(cfg.count("K_max", 12));
    const auto n = static_cast<Eigen::Index>(grid.size());
    BSDEProblem p;
    p.ctx = &ctx;
    p.a = Vector::Constant(n, cfg.num("a", 0.0));
    p.gamma = Vector(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i) {
        p.gamma(i) = grid[static_cast<std::size_t>(i)];
    }
    p.c = Vector::Constant(n, cfg.num("c", 0.0));
    p.xi = ChaosVector(static_cast<int>(n), 0);
    const auto cert = nonexistence_certificate(p, r, K);
    Outcome o;
    o.report = detail::model_json(model, grid);
    o.report["refused"] = cert.refused;
    o.report["note"] = cert.note;
    o.report["r"] = cert.r;
    o.report["opnorm"] = cert.opnorm;
    if (!cert.refused) {
        const double last_ratio = cert.ratios.empty() ? std::numeric_limits<double>::quiet_NaN() : cert.ratios.back();
        const bool ratio_ok = !cert.ratios.empty() && last_ratio >= cert.rho * (1.0 - 1e-6);
        o.passed = cert.rho > 1.0 && cert.bound_holds && ratio_ok;
        o.report.update(Json{{"rho", cert.rho},
                             {"pairing", cert.pairing},
                             {"direction", vec(cert.direction)},
                             {"partial_sums", vec(cert.partial_sums)},
                             {"log_partial_sums", vec(cert.log_partial_sums)},
                             {"lower_bounds", vec(cert.lower_bounds)},
                             {"ratios", vec(cert.ratios)},
                             {"bound_holds", cert.bound_holds},
                             {"final_ratio_check", ratio_ok},
                             {"scope_note", cert.domain.scope_note}});
        write_domain_table(rc, "nonexist_cert.csv", cert.partial_sums, cert.log_partial_sums, cert.ratios,
                           &cert.lower_bounds);
    }
    o.report["passed"] = o.passed;
    rc.write("nonexist_cert.json", dump(o.report));
    return o;
}

inline Outcome run_example33(const Config& cfg, RunContext& rc) {
    const double T = cfg.num("T", 1.0);
    const auto Hs = cfg.list("H_list", {0.5, 0.35, 0.2});
    std::vector<std::size_t> Ns;
    for (double v : cfg.list("N_list", {16, 32, 64, 128, 256, 512})) {
        if (!(v >= 1.0) || v != std::floor(v)) {
            throw ConfigError("N_list entries must be positive integers");
        }
        Ns.push_back(static_cast<std::size_t>(v));
    }
    std::vector<Example33Result> res(Hs.size());
    parallel_for(Hs.size(), rc.threads, [&](std::size_t i) { res[i] = example33_experiment(Hs[i], Ns, T); });
    Outcome o;
    CsvTable t({"H", "N", "residual"});
    Json per = Json::array();
    for (const auto& r : res) {
        for (const auto& pt : r.points) {
            t.add({r.H, static_cast<double>(pt.N), pt.residual});
        }
        Json e{{"H", r.H}, {"slope", num(r.slope)}};
        if (std::abs(r.H - 0.5) < 1e-12) {
            e["passed"] = r.slope <= -0.4;
        } else if (std::abs(r.H - 0.35) < 1e-12) {
            e["passed"] = r.slope < -0.05;
        } else if (std::abs(r.H - 0.2) < 1e-12) {
            e["passed"] = r.slope >= -0.02;
        }
        if (e.contains("passed")) {
            o.passed = o.passed && e["passed"].get<bool>();
        }
        per.push_back(e);
    }
    rc.write("example33.csv", t.str());
    o.report = Json{{"T", T}, {"slopes", per}, {"passed", o.passed}};
    rc.write("example33.json", dump(o.report));
    return o;
}

inline Outcome run_frac_verify(const Config& cfg, RunContext& rc) {
    const double H = cfg.num("H", 0.2);
    const double T = cfg.num("T", 1.0);
    const std::size_t M = cfg.count("M", 2000);
    const auto app = appendix_reconstruction_check(H, T, M);

    CsvTable gt({"t", "g"});
    for (const double t : FuncOnGrid::uniform_nodes(0.0, T, std::min<std::size_t>(M, 201))) {
        gt.add({t, t > 0.0 && t < T ? gausscalc::detail::appendix_g(H, T, t) : std::numeric_limits<double>::quiet_NaN()});
    }
    rc.write("frac_appendix_g.csv", gt.str());

    const double Ht = cfg.num("H_trunc", 0.3);
    const auto phi = FuncOnGrid::sample([](double) { return 1.0; }, FuncOnGrid::uniform_nodes(0.0, T, 2001));
    const auto tr = cm_truncate_fbm(phi, 0.5 * T, Ht);
    CsvTable tt({"t", "phi_r"});
    for (std::size_t i = 0; i < tr.truncated.size(); i += 10) {
        tt.add({tr.truncated.x[i], tr.truncated.y[i]});
    }
    rc.write("frac_phi_r.csv", tt.str());

    const double Hh = cfg.num("H_high", 0.75);
    const auto psi = FuncOnGrid::sample([](double) { return 1.0; }, FuncOnGrid::uniform_nodes(0.0, T, 4001));
    const auto hi = cm_truncate_fbm_high(psi, 0.5 * T, Hh);

    const double Hk = cfg.num("H_kstar", 0.3);
    const auto cal = calibrate_kstar(Hk, T);
    const auto ctx = build_gram(CovarianceModel::fbm(Hk), TimeGrid::uniform(128, T));
    std::mt19937_64 rng(rc.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    double iso = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const double a = nd(rng);
        const double b = nd(rng);
        const auto g = FuncOnGrid::sample([&](double s) { return 1.0 + a * std::sin(2.0 * s / T) + b * s * s / (T * T); },
                                          FuncOnGrid::uniform_nodes(0.0, T, 4097));
        FuncOnGrid g2 = g;
        for (auto& v : g2.y) {
            v *= v;
        }
        iso = std::max(iso, std::abs(grid_hh_norm(ctx, kstar(g, Hk, cal.c_H)) / std::sqrt(integrate(g2)) - 1.0));
    }

    Outcome o;
    const bool l2_ok = std::abs(app.g_l2_refined / app.g_l2 - 1.0) <= 0.01;
    o.passed = app.max_error <= 1e-3 && std::isfinite(app.factor_at_zero) && l2_ok && tr.max_error <= 1e-3 &&
               hi.max_error <= 1e-2 && iso <= 0.02;
    o.report = Json{{"appendix", {{"H", H}, {"T", T}, {"M", M}, {"max_error", app.max_error},
                                  {"g_l2", app.g_l2}, {"g_l2_refined", app.g_l2_refined},
                                  {"factor_at_zero", app.factor_at_zero}}},
                    {"truncation", {{"H", Ht}, {"M", 2001}, {"r", 0.5 * T}, {"max_error", tr.max_error}}},
                    {"truncation_high", {{"H", Hh}, {"M", 4001}, {"r", 0.5 * T}, {"max_error", hi.max_error},
                                         {"singular_coeff", hi.singular_coeff}}},
                    {"kstar", {{"H", Hk}, {"c_H", cal.c_H}, {"calibration_spread", cal.spread},
                               {"isometry_max_deviation", iso}}},
                    {"passed", o.passed}};
    rc.write("frac_verify.json", dump(o.report));
    return o;
}

inline Outcome run_mc_crosscheck(const Config& cfg, RunContext& rc) {
    const auto model = model_from_config(cfg);
    const auto grid = grid_from_config(cfg);
    const auto ctx = build_gram(model, grid);
    const std::size_t paths = cfg.count("trials", 100000);
    const int n = static_cast<int>(grid.size());
    std::mt19937_64 rng(rc.seed);
    const Vector h = detail::unit_direction(ctx, rng, 0.5);
    const WickCombo e = WickCombo::exponential(h);
    const ChaosVector xi = detail::gaussian_chaos(rng, n, 3, 0.5);
    const ChaosVector eta = detail::gaussian_chaos(rng, n, 3, 0.5);
    const ChaosEvaluator ex(ctx, xi);
    const ChaosEvaluator ey(ctx, eta);
    const Matrix s = sample_increments(ctx, paths, rc.seed + 1);
    double m1 = 0, q1 = 0, m2 = 0, q2 = 0;
    for (std::size_t p = 0; p < paths; ++p) {
        const Vector row = s.row(static_cast<Eigen::Index>(p)).transpose();
        const double a = evaluate_on_sample(ctx, e, row);
        const double prod = ex(row) * ey(row);
        m1 += a;
        q1 += a * a;
        m2 += prod;
        q2 += prod * prod;
    }
    const double dn = static_cast<double>(paths);
    m1 /= dn;
    m2 /= dn;
    const double se1 = std::sqrt((q1 / dn - m1 * m1) / dn);
    const double se2 = std::sqrt((q2 / dn - m2 * m2) / dn);
    const double exact = inner(ctx, xi, eta);
    Outcome o;
    o.passed = std::abs(m1 - 1.0) <= 3.0 * se1 && std::abs(m2 - exact) <= 3.0 * se2;
    o.report = detail::model_json(model, grid);
    o.report.update(Json{{"paths", paths},
                         {"wick_exponential_mean", m1},
                         {"wick_exponential_se", se1},
                         {"inner_product_exact", exact},
                         {"inner_product_sampled", m2},
                         {"inner_product_se", se2},
                         {"passed", o.passed}});
    rc.write("mc_crosscheck.json", dump(o.report));
    return o;
}

using Runner = Outcome (*)(const Config&, RunContext&);

inline const std::map<std::string, Runner>& experiments() {
    static const std::map<std::string, Runner> table{
        {"gram", run_gram},
        {"opnorm-sweep", run_opnorm_sweep},
        {"dr-sweep", run_dr_sweep},
        {"jensen", run_jensen},
        {"qce-check", run_qce_check},
        {"domain-diagnostic", run_domain_diagnostic},
        {"skorokhod-check", run_skorokhod_check},
        {"bsde-solve", run_bsde_solve},
        {"bsde-verify", run_bsde_verify},
        {"nonexist-cert", run_nonexist_cert},
        {"example33", run_example33},
        {"frac-verify", run_frac_verify},
        {"mc-crosscheck", run_mc_crosscheck},
    };
    return table;
}

}  // namespace gausscalc::cli

#endif  // GAUSSCALC_TOOLS_EXPERIMENTS_HPP
