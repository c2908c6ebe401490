#ifndef GAUSSCALC_BSDE_HPP
#define GAUSSCALC_BSDE_HPP

/**
 * @file bsde.hpp
 * @brief Linear Gaussian BSDEs on a grid: representation through the shifted
 * quasi-conditional expectation, weak verification, closed-form solutions for
 * Wick-exponential terminal data, and the non-existence certificate.
 */

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gausscalc/qce.hpp"
#include "gausscalc/skorokhod.hpp"

namespace gausscalc {

/**
 * dY = (a Y + G) dgamma + Z dc + Z d<>X, Y_T = xi. a[j] is the value on
 * increment j (nodes j to j+1), gamma holds N+1 node values, G holds one
 * chaos vector per node (empty means G = 0).
 */
struct BSDEProblem {
    const GramContext* ctx = nullptr;
    Vector a;
    Vector gamma;
    Vector c;
    std::vector<ChaosVector> G;
    ChaosVector xi{1, 0};

    const GramContext& context() const {
        if (ctx == nullptr) {
            throw ParameterError("problem has no Gram context");
        }
        return *ctx;
    }
};

namespace detail {

/// (e^x - 1) / x.
inline double exprel(double x) { return x == 0.0 ? 1.0 : std::expm1(x) / x; }

inline std::size_t steps(const BSDEProblem& p) { return p.context().size(); }

inline void validate(const BSDEProblem& p) {
    const std::size_t n = steps(p);
    const auto ni = static_cast<Eigen::Index>(n);
    if (p.a.size() != ni || p.gamma.size() != ni + 1 || p.c.size() != ni) {
        throw ShapeError("a and c need N entries and gamma needs N+1 node values");
    }
    if (!p.gamma.allFinite() || !p.a.allFinite()) {
        throw ParameterError("a and gamma must be finite");
    }
    if (p.xi.dim() != static_cast<int>(n)) {
        throw ShapeError("terminal condition does not match the grid");
    }
    if (!p.G.empty()) {
        if (p.G.size() != n + 1) {
            throw ShapeError("G needs one chaos vector per grid node");
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (p.G[i].dim() != static_cast<int>(n)) {
                throw ShapeError("G entry does not match the grid");
            }
            if (mass_beyond(p.G[i], i) > 0.0) {
                throw ParameterError("G must be adapted: node i may only use the first i increments");
            }
        }
    }
}

inline double dgamma(const BSDEProblem& p, std::size_t j) {
    return p.gamma(static_cast<Eigen::Index>(j) + 1) - p.gamma(static_cast<Eigen::Index>(j));
}

inline double exponent(const BSDEProblem& p, std::size_t j) {
    return p.a(static_cast<Eigen::Index>(j)) * dgamma(p, j);
}

}  // namespace detail

/// A(t_i) = exp(sum over increments after node i of a dgamma); A(T) = 1.
inline Vector integrating_factor(const BSDEProblem& p) {
    detail::validate(p);
    const std::size_t n = detail::steps(p);
    Vector A(static_cast<Eigen::Index>(n) + 1);
    double s = 0.0;
    A(static_cast<Eigen::Index>(n)) = 1.0;
    for (std::size_t j = n; j-- > 0;) {
        s += detail::exponent(p, j);
        A(static_cast<Eigen::Index>(j)) = std::exp(s);
    }
    return A;
}

/**
 * Weights w_j of the integral of A G dgamma over increment j with a and the
 * integrand frozen there: w_j = (A_j - A_{j+1}) / a_j = A_{j+1} dgamma_j exprel(a_j dgamma_j).
 */
inline Vector bv_weights(const BSDEProblem& p) {
    const Vector A = integrating_factor(p);
    const std::size_t n = detail::steps(p);
    Vector w(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        const auto ji = static_cast<Eigen::Index>(j);
        w(ji) = A(ji + 1) * detail::dgamma(p, j) * detail::exprel(detail::exponent(p, j));
    }
    return w;
}

/// sum over increments j < i of w_j G_{t_j}.
inline ChaosVector bv_integral(const BSDEProblem& p, std::size_t i) {
    ChaosVector out(static_cast<int>(detail::steps(p)), 0);
    if (p.G.empty()) {
        return out;
    }
    const Vector w = bv_weights(p);
    for (std::size_t j = 0; j < i; ++j) {
        out += p.G[j] * w(static_cast<Eigen::Index>(j));
    }
    return out;
}

/// xi - integral of A G dgamma over (0,T].
inline ChaosVector modified_terminal(const BSDEProblem& p) {
    return p.xi - bv_integral(p, detail::steps(p));
}

/// Y at the grid node t.
inline ChaosVector represent_Y(const BSDEProblem& p, double t) {
    detail::validate(p);
    const GramContext& ctx = p.context();
    const std::size_t i = ctx.grid().index_of(t);
    if (i == ctx.size()) {
        return p.xi;
    }
    const Vector A = integrating_factor(p);
    ChaosVector y = shifted_qce(ShiftContext(ctx, t, p.c), modified_terminal(p));
    y += bv_integral(p, i);
    return y * (1.0 / A(static_cast<Eigen::Index>(i)));
}

struct WeakReport {
    double max_residual = 0.0;                                  ///< weak equation over all v <= t
    double max_z_residual = std::numeric_limits<double>::quiet_NaN();  ///< full equation, when Z is known
    double terminal_error = std::numeric_limits<double>::quiet_NaN();
    std::size_t pairs = 0;
    int trials = 0;
};

/// (S Z_j)(h) for increment j.
using ZTransform = std::function<double(std::size_t, const Vector&)>;

struct BSDESolution {
    std::vector<ChaosVector> Y;       ///< one per grid node; may be empty when Y_wick is set
    std::vector<WickCombo> Y_wick;    ///< exact Y per node, when available
    std::optional<ChaosField> Z;
    ZTransform z_s_transform;         ///< closed-form (S Z_j)(h), when available
    Vector A;
    ChaosVector xi_tilde{1, 0};
    WeakReport diagnostics;

    double y_s_transform(const GramContext& ctx, std::size_t i, const Vector& h) const {
        if (!Y_wick.empty()) {
            return s_transform(ctx, Y_wick.at(i), h);
        }
        return s_transform(ctx, Y.at(i), h);
    }
};

/// Y at every node through the representation formula.
inline BSDESolution solve(const BSDEProblem& p) {
    detail::validate(p);
    BSDESolution s;
    s.A = integrating_factor(p);
    s.xi_tilde = modified_terminal(p);
    const GramContext& ctx = p.context();
    for (std::size_t i = 0; i <= ctx.size(); ++i) {
        s.Y.push_back(represent_Y(p, ctx.grid()[i]));
    }
    return s;
}

/**
 * Independent backward recursion Y_j = e^{-x} Ehat[Y_{j+1} | F_j] - ((1 - e^{-x}) / a) G_j
 * with x = a_j dgamma_j, one quasi-conditional step per increment.
 */
inline std::vector<ChaosVector> backward_recursion(const BSDEProblem& p) {
    detail::validate(p);
    const GramContext& ctx = p.context();
    const std::size_t n = ctx.size();
    std::vector<ChaosVector> y(n + 1, ChaosVector(static_cast<int>(n), 0));
    y[n] = p.xi;
    for (std::size_t j = n; j-- > 0;) {
        const double x = detail::exponent(p, j);
        y[j] = shifted_qce(ShiftContext(ctx, ctx.grid()[j], p.c), y[j + 1]) * std::exp(-x);
        if (!p.G.empty()) {
            const double wg = std::exp(-x) * detail::dgamma(p, j) * detail::exprel(x);
            y[j] -= p.G[j] * wg;
        }
    }
    return y;
}

/**
 * Closed-form solution for xi = e^{<>I(f)} and G = 0:
 * Y_i = beta_i e^{<>I(P_i f)}, beta_i = exp(-sum_{j >= i} a_j dgamma_j - <(I - P_i) f, c>).
 */
inline BSDESolution wick_exponential_solution(const BSDEProblem& p, const Vector& f) {
    const GramContext& ctx = p.context();
    ctx.check(f);
    BSDEProblem q = p;
    q.xi = ChaosVector(static_cast<int>(ctx.size()), 0);
    detail::validate(q);
    for (const auto& g : p.G) {
        if (max_abs_diff(g, ChaosVector(g.dim(), 0)) != 0.0) {
            throw UnsupportedOperation("closed form needs G = 0; use represent_Y");
        }
    }
    const std::size_t n = ctx.size();
    BSDESolution s;
    s.A = integrating_factor(q);
    const Vector gf = ctx.gram() * f;
    const Vector gc = ctx.gram() * p.c;
    std::vector<double> beta(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        double tail = 0.0;
        for (std::size_t l = i; l < n; ++l) {
            tail += f(static_cast<Eigen::Index>(l)) * gc(static_cast<Eigen::Index>(l));
        }
        beta[i] = std::exp(-tail) / s.A(static_cast<Eigen::Index>(i));
        s.Y_wick.push_back(WickCombo::exponential(project_past(f, i), beta[i]));
    }
    s.xi_tilde = wick_exponential_chaos(ctx, f, 0);
    const Matrix G = ctx.gram();
    const Vector fc = f;
    s.z_s_transform = [beta, fc, gc, G](std::size_t j, const Vector& h) {
        const auto ji = static_cast<Eigen::Index>(j);
        const Vector y = G * h;
        double past = 0.0;
        for (Eigen::Index l = 0; l < ji; ++l) {
            past += fc(l) * y(l);
        }
        const double fj = fc(ji);
        return beta[j + 1] * std::exp(past - fj * gc(ji)) * fj * detail::exprel(fj * (y(ji) + gc(ji)));
    };
    return s;
}

/**
 * Residual of (S Y_t)(h_v) = (S xi)(h_v) - integral over (t,T] of [a (S Y) + (S G)](h_v) dgamma
 * at h_v = Gamma_v^* (h + c) - c, for all grid pairs v <= t and `trials` random h. With a
 * closed-form Z also checks s_{j+1} - e^{x_j} s_j = (S Z_j)(h) ((G h)_j + (G c)_j).
 */
inline WeakReport verify_solution_weak(const BSDEProblem& p, const BSDESolution& sol, int trials,
                                       std::uint64_t seed) {
    const GramContext& ctx = p.context();
    const std::size_t n = ctx.size();
    if ((sol.Y_wick.empty() && sol.Y.size() != n + 1) ||
        (!sol.Y_wick.empty() && sol.Y_wick.size() != n + 1)) {
        throw ShapeError("solution needs Y at every grid node");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    WeakReport rep;
    rep.trials = trials;
    if (!sol.Y.empty()) {
        rep.terminal_error = max_abs_diff(sol.Y.back(), p.xi);
    }
    std::vector<double> wg(n);
    std::vector<double> ex(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double x = detail::exponent(p, j);
        ex[j] = std::exp(x);
        wg[j] = detail::dgamma(p, j) * detail::exprel(x);
    }
    std::vector<TruncationOperator> trunc;
    for (std::size_t v = 0; v <= n; ++v) {
        trunc.push_back(TruncationOperator::at_index(ctx, v));
    }
    const Vector gc = ctx.gram() * p.c;
    for (int t = 0; t < trials; ++t) {
        Vector h(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            h(i) = nd(rng);
        }
        h /= std::sqrt(ctx.norm2(h));
        for (std::size_t v = 0; v <= n; ++v) {
            const Vector hv = trunc[v].adjoint(Vector(h + p.c)) - p.c;
            std::vector<double> s(n + 1);
            std::vector<double> g(n + 1, 0.0);
            for (std::size_t i = v; i <= n; ++i) {
                s[i] = sol.y_s_transform(ctx, i, hv);
                if (!p.G.empty()) {
                    g[i] = s_transform(ctx, p.G[i], hv);
                }
            }
            const double sxi = sol.Y_wick.empty() ? s_transform(ctx, p.xi, hv) : s[n];
            // the integral over (t_i, T] accumulated from the right
            double integral = 0.0;
            for (std::size_t i = n + 1; i-- > v;) {
                if (i < n) {
                    integral += (p.a(static_cast<Eigen::Index>(i)) * s[i] + g[i]) * wg[i];
                }
                const double rhs = sxi - integral;
                rep.max_residual = std::max(rep.max_residual, std::abs(s[i] - rhs));
                ++rep.pairs;
            }
        }
        if (sol.z_s_transform) {
            double worst = 0.0;
            const Vector y = ctx.gram() * h;
            std::vector<double> s(n + 1);
            for (std::size_t i = 0; i <= n; ++i) {
                s[i] = sol.y_s_transform(ctx, i, h);
            }
            for (std::size_t j = 0; j < n; ++j) {
                const auto ji = static_cast<Eigen::Index>(j);
                const double lhs = s[j + 1] - ex[j] * s[j];
                const double rhs = sol.z_s_transform(j, h) * (y(ji) + gc(ji));
                worst = std::max(worst, std::abs(lhs - rhs));
            }
            rep.max_z_residual = std::isnan(rep.max_z_residual) ? worst : std::max(rep.max_z_residual, worst);
        }
    }
    return rep;
}

struct CertificateReport {
    bool refused = false;
    std::string note;
    double r = 0.0;
    double opnorm = 0.0;
    double rho = 0.0;                 ///< ||Gamma_r f||^2
    double pairing = 0.0;             ///< <f, c_r>
    Vector direction;
    std::vector<double> partial_sums;
    std::vector<double> log_partial_sums;
    std::vector<double> lower_bounds;  ///< sum_{k <= K} rho^k
    std::vector<double> ratios;
    bool bound_holds = false;
    ChaosVector bv_part{1, 0};         ///< integral of A G dgamma added to obtain xi
    DomainReport domain;
};

/**
 * Terminal value without a mild solution: xi~ = sum_k I_k(f^{tensor k} / sqrt(k!)) along the
 * escape direction f, and xi = xi~ + integral of A G dgamma.
 */
inline CertificateReport nonexistence_certificate(const BSDEProblem& p, double r, int K_max) {
    BSDEProblem q = p;
    q.xi = ChaosVector(static_cast<int>(p.context().size()), 0);
    detail::validate(q);
    const GramContext& ctx = p.context();
    CertificateReport rep;
    rep.r = ctx.grid()[ctx.grid().index_of(r)];
    const ShiftContext sc(ctx, r, p.c);
    rep.opnorm = operator_norm(ctx, r).opnorm;
    if (!(rep.opnorm > 1.0 + 1e-9)) {
        rep.refused = true;
        rep.note =
            "martingale case: the operator norm is one, the time-changed process is a Brownian "
            "motion and a solution exists for every terminal value";
        return rep;
    }
    rep.direction = escape_direction(sc);
    rep.rho = ctx.norm2(project_past(rep.direction, sc.index()));
    rep.pairing = rep.direction.dot(sc.pairing());
    rep.domain = domain_diagnostic<RankOneTensor>(sc, escape_generator(rep.direction), K_max);
    rep.partial_sums = rep.domain.partial_sums;
    rep.log_partial_sums = rep.domain.log_partial_sums;
    rep.ratios = rep.domain.ratios;
    rep.bv_part = bv_integral(q, ctx.size());
    rep.bound_holds = true;
    double log_bound = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= K_max; ++k) {
        const double lt = k * std::log(rep.rho);
        const double hi = std::max(log_bound, lt);
        log_bound = hi + std::log(std::exp(log_bound - hi) + std::exp(lt - hi));
        rep.lower_bounds.push_back(log_bound > std::log(1e300) ? std::numeric_limits<double>::infinity()
                                                               : std::exp(log_bound));
        if (rep.log_partial_sums[static_cast<std::size_t>(k)] < log_bound - 1e-12) {
            rep.bound_holds = false;
        }
    }
    rep.note = "partial sums grow at least geometrically with ratio rho > 1; grid span only";
    return rep;
}

struct Example33Point {
    std::size_t N = 0;
    double residual = 0.0;
};

struct Example33Result {
    double H = 0.0;
    std::vector<Example33Point> points;
    double slope = std::numeric_limits<double>::quiet_NaN();
};

/// (E[q], E[q^2]) for q = x^T A x + b^T x + c0 with x ~ N(0, G).
inline std::pair<double, double> gaussian_quadratic_moments(const Matrix& G, const Matrix& A,
                                                            const Vector& b, double c0) {
    const Matrix S = 0.5 * (A + A.transpose());
    const Matrix AG = S * G;
    const double mean = AG.trace() + c0;
    const double var = 2.0 * (AG * AG).trace() + b.dot(G * b);
    return {mean, var + mean * mean};
}

/**
 * L2 norm at t = 0 of the residual of the grid identity for Y = (X + V)^2, Z the left-point
 * value 2 (X + V), drift 1 dV and shift V:
 * Y_T - Y_0 - sum dV - sum Z dV - sum Z <> dX.
 */
inline double example33_residual(double H, std::size_t N, double T = 1.0) {
    const auto ctx = build_gram(CovarianceModel::fbm(H), TimeGrid::uniform(N, T));
    const auto n = static_cast<Eigen::Index>(N);
    const Matrix& G = ctx.gram();
    const auto& pts = ctx.grid().points();
    Vector V(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i) {
        V(i) = std::pow(pts[static_cast<std::size_t>(i)], 2.0 * H);
    }
    auto cumul = [&](Eigen::Index i) {
        Vector l = Vector::Zero(n);
        l.head(i).setOnes();
        return l;
    };
    const Vector LN = cumul(n);
    Matrix A = LN * LN.transpose();
    Vector b = 2.0 * V(n) * LN;
    double c0 = V(n) * V(n) - V(0) * V(0) - (V(n) - V(0));
    for (Eigen::Index j = 1; j <= n; ++j) {
        const double dv = V(j) - V(j - 1);
        const Vector L = cumul(j - 1);
        Vector e = Vector::Zero(n);
        e(j - 1) = 1.0;
        // Z dV = 2 (X_{j-1} + V_{j-1}) dV
        b -= 2.0 * dv * L;
        c0 -= 2.0 * V(j - 1) * dv;
        // Z <> dX = Z dX - 2 E[X_{j-1} dX_j]
        A -= 2.0 * L * e.transpose();
        b -= 2.0 * V(j - 1) * e;
        c0 += 2.0 * L.dot(G * e);
    }
    return std::sqrt(std::max(0.0, gaussian_quadratic_moments(G, A, b, c0).second));
}

/// Residuals over the supplied grid sizes and the fitted log-log slope.
inline Example33Result example33_experiment(double H, const std::vector<std::size_t>& Ns,
                                            double T = 1.0) {
    Example33Result out;
    out.H = H;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t N : Ns) {
        const double res = example33_residual(H, N, T);
        out.points.push_back({N, res});
        const double x = std::log(static_cast<double>(N));
        const double y = std::log(res);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(Ns.size());
    if (Ns.size() >= 2) {
        out.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
    return out;
}

}  // namespace gausscalc

#endif  // GAUSSCALC_BSDE_HPP
