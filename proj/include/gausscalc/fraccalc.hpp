#ifndef GAUSSCALC_FRACCALC_HPP
#define GAUSSCALC_FRACCALC_HPP

/**
 * @file fraccalc.hpp
 * @brief Riemann-Liouville integrals by product integration, the Gauss
 * hypergeometric function, time truncation of Cameron-Martin functions of
 * fBm, and the K* operator.
 */

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "gausscalc/covariance.hpp"
#include "gausscalc/error.hpp"

namespace gausscalc {

/**
 * Piecewise-linear function on increasing nodes. An end exponent p marks a
 * singular end cell where f behaves like f(x_1) ((s - x_0) / h)^p (left) or
 * f(x_{M-2}) ((x_{M-1} - s) / h)^p (right); the end value is then unused.
 */
struct FuncOnGrid {
    std::vector<double> x;
    std::vector<double> y;
    std::optional<double> left_exponent;
    std::optional<double> right_exponent;

    static FuncOnGrid sample(const std::function<double(double)>& f, const std::vector<double>& nodes) {
        FuncOnGrid g;
        g.x = nodes;
        for (double t : nodes) {
            g.y.push_back(f(t));
        }
        return g;
    }

    static std::vector<double> uniform_nodes(double a, double b, std::size_t M) {
        if (M < 2) {
            throw ParameterError("a function grid needs at least two nodes");
        }
        std::vector<double> n(M);
        for (std::size_t i = 0; i < M; ++i) {
            n[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(M - 1);
        }
        n.back() = b;
        return n;
    }

    std::size_t size() const { return x.size(); }

    void validate() const {
        if (x.size() < 2 || x.size() != y.size()) {
            throw ShapeError("a function grid needs M >= 2 nodes and one value per node");
        }
        if (left_exponent && right_exponent && x.size() < 3) {
            throw ShapeError("two singular end cells need at least three nodes");
        }
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (!(x[i] > x[i - 1])) {
                throw ShapeError("function grid nodes must increase strictly");
            }
        }
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool skip = (i == 0 && left_exponent) || (i + 1 == y.size() && right_exponent);
            if (!skip && !std::isfinite(y[i])) {
                throw ParameterError("function values must be finite");
            }
        }
        if ((left_exponent && !(*left_exponent > -1.0)) || (right_exponent && !(*right_exponent > -1.0))) {
            throw ParameterError("end exponents must exceed -1");
        }
    }

    double operator()(double t) const {
        if (t <= x.front()) {
            return y.front();
        }
        if (t >= x.back()) {
            return y.back();
        }
        const auto it = std::upper_bound(x.begin(), x.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - x.begin()) - 1;
        const double w = (t - x[k]) / (x[k + 1] - x[k]);
        return (1.0 - w) * y[k] + w * y[k + 1];
    }

    /// Index of a node within 1e-12 of t relative to the span.
    std::size_t node_index(double t) const {
        const double tol = 1e-12 * (x.back() - x.front());
        const auto it = std::lower_bound(x.begin(), x.end(), t - tol);
        if (it == x.end() || std::abs(*it - t) > tol) {
            throw GridAlignmentError("time is not a node of the function grid");
        }
        return static_cast<std::size_t>(it - x.begin());
    }
};

enum class Side { left, right };

namespace detail {

/// A^b - (A - h)^b without cancellation, A >= h > 0.
inline double pow_diff(double A, double h, double b) {
    if (A - h <= 0.0) {
        return std::pow(A, b);
    }
    return -std::pow(A, b) * std::expm1(b * std::log1p(-h / A));
}

/// int over cell k of f(s) (t - s)^{alpha-1} ds, t >= x_{k+1}.
inline double rl_cell(const FuncOnGrid& f, std::size_t k, double t, double alpha) {
    const double x0 = f.x[k];
    const double h = f.x[k + 1] - x0;
    const double A = t - x0;
    if (k == 0 && f.left_exponent) {
        const double p = *f.left_exponent;
        const double c = f.y[1];
        if (A - h <= 1e-15 * A) {
            return c * std::pow(h, alpha) * boost::math::beta(p + 1.0, alpha);
        }
        return c * std::pow(A, alpha + p) * std::pow(h, -p) * boost::math::beta(p + 1.0, alpha, h / A);
    }
    if (k + 2 == f.size() && f.right_exponent) {
        const double q = *f.right_exponent;
        const double c = f.y[k];
        if (A - h <= 1e-15 * A) {
            return c * std::pow(h, alpha) / (alpha + q);
        }
        // (t - s)^{alpha-1} is smooth on the cell here; integrate the power profile exactly
        const double B = A - h;
        return c * std::pow(h, -q) *
               boost::math::quadrature::tanh_sinh<double>().integrate(
                   [&](double u) { return std::pow(u, q) * std::pow(B + u, alpha - 1.0); }, 0.0, h);
    }
    const double f0 = f.y[k];
    const double m = (f.y[k + 1] - f0) / h;
    const double M0 = pow_diff(A, h, alpha) / alpha;
    // int (s - x0)(t - s)^{alpha-1} ds = A M0 - M1
    const double lin = A * M0 - pow_diff(A, h, alpha + 1.0) / (alpha + 1.0);
    return f0 * M0 + m * lin;
}

inline FuncOnGrid mirror(const FuncOnGrid& f) {
    FuncOnGrid g;
    const double s = f.x.front() + f.x.back();
    for (std::size_t i = f.size(); i-- > 0;) {
        g.x.push_back(s - f.x[i]);
        g.y.push_back(f.y[i]);
    }
    g.x.front() = f.x.front();
    g.x.back() = f.x.back();
    g.left_exponent = f.right_exponent;
    g.right_exponent = f.left_exponent;
    return g;
}

}  // namespace detail

/// (1/Gamma(alpha)) int over cells [lo, hi) of f(s) (t - s)^{alpha-1} ds, t >= x_hi.
inline double rl_point(const FuncOnGrid& f, double alpha, double t, std::size_t lo, std::size_t hi) {
    if (!(alpha > 0.0)) {
        throw ParameterError("fractional order must be positive");
    }
    if (hi >= f.size() || lo > hi || t < f.x[hi] - 1e-14 * std::abs(f.x.back())) {
        throw ParameterError("evaluation point must lie right of the integrated cells");
    }
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
        s += detail::rl_cell(f, k, std::max(t, f.x[k + 1]), alpha);
    }
    return s / std::tgamma(alpha);
}

/// I^alpha_{a+} f (left) or I^alpha_{b-} f (right) at every node.
inline FuncOnGrid rl_integral(const FuncOnGrid& f, double alpha, Side side = Side::left) {
    if (!(alpha > 0.0)) {
        throw ParameterError("fractional order must be positive");
    }
    f.validate();
    if (side == Side::right) {
        const FuncOnGrid g = rl_integral(detail::mirror(f), alpha, Side::left);
        FuncOnGrid out = detail::mirror(g);
        out.x = f.x;
        out.left_exponent.reset();
        out.right_exponent.reset();
        return out;
    }
    FuncOnGrid out;
    out.x = f.x;
    out.y.assign(f.size(), 0.0);
    const double ga = std::tgamma(alpha);
    for (std::size_t i = 1; i < f.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < i; ++k) {
            s += detail::rl_cell(f, k, f.x[i], alpha);
        }
        out.y[i] = s / ga;
    }
    return out;
}

/// int f over the whole grid, honouring singular end cells.
inline double integrate(const FuncOnGrid& f) {
    f.validate();
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        const double h = f.x[k + 1] - f.x[k];
        if (k == 0 && f.left_exponent) {
            s += f.y[1] * h / (*f.left_exponent + 1.0);
        } else if (k + 2 == f.size() && f.right_exponent) {
            s += f.y[k] * h / (*f.right_exponent + 1.0);
        } else {
            s += 0.5 * h * (f.y[k] + f.y[k + 1]);
        }
    }
    return s;
}

namespace detail {

inline bool nonpositive_integer(double x) { return x <= 0.0 && x == std::floor(x); }

inline double rgamma(double x) { return nonpositive_integer(x) ? 0.0 : 1.0 / std::tgamma(x); }

inline double hyp_series(double a, double b, double c, double z) {
    double term = 1.0;
    double sum = 1.0;
    for (int n = 0; n < 2000000; ++n) {
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if (term == 0.0 || std::abs(term) <= 1e-16 * std::abs(sum)) {
            return sum;
        }
    }
    throw DomainError("hypergeometric series did not converge");
}

}  // namespace detail

/// Gauss hypergeometric function 2F1(a, b; c; z) for real z in [-1, 1].
inline double gauss_2f1(double a, double b, double c, double z) {
    if (detail::nonpositive_integer(c)) {
        throw DomainError("c must not be a nonpositive integer");
    }
    if (z == 0.0) {
        return 1.0;
    }
    if (!(std::abs(z) <= 1.0)) {
        throw DomainError("argument outside the unit interval");
    }
    const double s = c - a - b;
    const bool terminating = detail::nonpositive_integer(a) || detail::nonpositive_integer(b);
    if (terminating) {
        return detail::hyp_series(a, b, c, z);
    }
    if (z == 1.0) {
        if (!(s > 0.0)) {
            throw DomainError("series diverges at z = 1 unless c - a - b > 0");
        }
        return std::tgamma(c) * std::tgamma(s) * detail::rgamma(c - a) * detail::rgamma(c - b);
    }
    if (z < -0.5) {
        // Pfaff: (1 - z)^{-a} 2F1(a, c - b; c; z / (z - 1))
        return std::pow(1.0 - z, -a) * gauss_2f1(a, c - b, c, z / (z - 1.0));
    }
    if (z > 0.9 && s != std::floor(s)) {
        const double w = 1.0 - z;
        const double t1 = std::tgamma(c) * std::tgamma(s) * detail::rgamma(c - a) * detail::rgamma(c - b);
        const double t2 = std::tgamma(c) * std::tgamma(-s) * detail::rgamma(a) * detail::rgamma(b);
        double out = 0.0;
        if (t1 != 0.0) {
            out += t1 * detail::hyp_series(a, b, 1.0 - s, w);
        }
        if (t2 != 0.0) {
            out += t2 * std::pow(w, s) * detail::hyp_series(c - a, c - b, 1.0 + s, w);
        }
        return out;
    }
    if (s < 0.0) {
        // Euler: (1 - z)^{c-a-b} 2F1(c - a, c - b; c; z)
        return std::pow(1.0 - z, s) * detail::hyp_series(c - a, c - b, c, z);
    }
    return detail::hyp_series(a, b, c, z);
}

struct AppendixReport {
    double max_error = 0.0;     ///< sup over t in [0.05T, 0.95T] of the reconstruction error
    double g_l2 = 0.0;          ///< ||g||_{L2} on M nodes
    double g_l2_refined = 0.0;  ///< same on 2M nodes
    double factor_at_zero = 0.0;  ///< 2F1(4H, H - 1/2; H + 1/2; 1), finite since 1 - 4H > 0
    std::size_t checked = 0;
};

namespace detail {

/// g of the representation t^{2H} = t^{1/2-H} I_{T-}^{1/2-H}[s^{H-1/2} g](t).
inline double appendix_g(double H, double T, double t) {
    return std::pow(t, 3.0 * H - 0.5) * std::pow(T, 0.5 - H) / std::tgamma(H + 0.5) *
           std::pow(T - t, H - 0.5) * gauss_2f1(4.0 * H, H - 0.5, H + 0.5, (T - t) / T);
}

inline double appendix_g_l2(double H, double T, std::size_t M) {
    FuncOnGrid g2 = FuncOnGrid::sample(
        [&](double t) {
            if (t <= 0.0 || t >= T) {
                return 0.0;
            }
            const double v = appendix_g(H, T, t);
            return v * v;
        },
        FuncOnGrid::uniform_nodes(0.0, T, M));
    g2.left_exponent = 6.0 * H - 1.0;
    g2.right_exponent = 2.0 * H - 1.0;
    return std::sqrt(integrate(g2));
}

}  // namespace detail

/// Checks t^{2H} = t^{1/2-H} I_{T-}^{1/2-H}[s^{H-1/2} g](t) on a uniform M-node grid.
inline AppendixReport appendix_reconstruction_check(double H, double T, std::size_t M) {
    if (!(H > 0.0 && H < 0.25)) {
        throw ParameterError("the representation check needs 0 < H < 1/4");
    }
    if (!(T > 0.0) || M < 3) {
        throw ParameterError("need T > 0 and M >= 3");
    }
    FuncOnGrid u = FuncOnGrid::sample(
        [&](double s) {
            if (s <= 0.0 || s >= T) {
                return 0.0;
            }
            return std::pow(s, H - 0.5) * detail::appendix_g(H, T, s);
        },
        FuncOnGrid::uniform_nodes(0.0, T, M));
    u.left_exponent = 4.0 * H - 1.0;
    u.right_exponent = H - 0.5;
    const double alpha = 0.5 - H;
    const FuncOnGrid I = rl_integral(u, alpha, Side::right);
    AppendixReport rep;
    for (std::size_t i = 0; i < M; ++i) {
        const double t = I.x[i];
        if (t < 0.05 * T - 1e-12 || t > 0.95 * T + 1e-12) {
            continue;
        }
        const double err = std::abs(std::pow(t, alpha) * I.y[i] - std::pow(t, 2.0 * H));
        rep.max_error = std::max(rep.max_error, err);
        ++rep.checked;
    }
    rep.g_l2 = detail::appendix_g_l2(H, T, M);
    rep.g_l2_refined = detail::appendix_g_l2(H, T, 2 * M);
    rep.factor_at_zero = gauss_2f1(4.0 * H, H - 0.5, H + 0.5, 1.0);
    return rep;
}

struct TruncationResult {
    FuncOnGrid truncated;
    double singular_coeff = 0.0;  ///< coefficient of (x - r)^{-beta} contained in truncated for x > r
    double max_error = 0.0;       ///< sup-norm error of the truncation identity over all nodes
};

/**
 * phi_r = phi on [0, r] and, for x > r,
 * phi_r(x) = 1/(Gamma(1-alpha) Gamma(alpha)) int_0^r phi(s) ((r-s)/(x-r))^{alpha-1} / (x-s) ds
 * with alpha = H + 1/2; checks I^alpha phi_r = (I^alpha phi)(. ^ r).
 */
inline TruncationResult cm_truncate_fbm(const FuncOnGrid& phi, double r, double H) {
    if (!(H > 0.0 && H < 0.5)) {
        throw ParameterError("this truncation needs 0 < H < 1/2");
    }
    phi.validate();
    if (phi.left_exponent || phi.right_exponent) {
        throw ParameterError("phi must be regular at both ends");
    }
    const std::size_t m = phi.node_index(r);
    const double alpha = H + 0.5;
    const double norm = std::tgamma(1.0 - alpha) * std::tgamma(alpha);
    TruncationResult res;
    res.truncated = phi;
    for (std::size_t i = m + 1; i < phi.size(); ++i) {
        const double d = phi.x[i] - r;
        double s = 0.0;
        // cells in w = r - s, ordered from w = 0
        for (std::size_t k = m; k-- > 0;) {
            const double w0 = r - phi.x[k + 1];
            const double w1 = r - phi.x[k];
            // phi(r - w) = A + B w on the cell
            const double B = (phi.y[k] - phi.y[k + 1]) / (w1 - w0);
            const double A = phi.y[k + 1] - B * w0;
            const double powmom = (std::pow(w1, alpha) - std::pow(w0, alpha)) / alpha;
            // int w^{alpha-1} / (d + w) dw = d^{alpha-1} B_v(alpha, 1 - alpha), v = w / (w + d)
            const double ib = boost::math::beta(alpha, 1.0 - alpha, w1 / (w1 + d)) -
                              boost::math::beta(alpha, 1.0 - alpha, w0 / (w0 + d));
            s += (A - B * d) * std::pow(d, alpha - 1.0) * ib + B * powmom;
        }
        res.truncated.y[i] = std::pow(d, 1.0 - alpha) * s / norm;
    }
    const FuncOnGrid y = rl_integral(phi, alpha);
    const FuncOnGrid yr = rl_integral(res.truncated, alpha);
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double want = y.y[std::min(i, m)];
        res.max_error = std::max(res.max_error, std::abs(yr.y[i] - want));
    }
    return res;
}

/**
 * psi^r with I^beta psi^r = 1_[0,r] I^beta psi, beta = H - 1/2. With q = I^beta psi,
 * psi^r(x) = -beta/Gamma(1-beta) int_0^r q(s) (x-s)^{-beta-1} ds for x > r, split as
 * -q(r)(x-r)^{-beta}/Gamma(1-beta) (whose I^beta is -q(r) beyond r) plus a regular part
 * built from the Marchaud-type difference q(s) - q(r).
 */
inline TruncationResult cm_truncate_fbm_high(const FuncOnGrid& psi, double r, double H) {
    if (!(H > 0.5 && H < 1.0)) {
        throw ParameterError("this truncation needs 1/2 < H < 1");
    }
    psi.validate();
    if (psi.left_exponent || psi.right_exponent) {
        throw ParameterError("psi must be regular at both ends");
    }
    const std::size_t m = psi.node_index(r);
    const double beta = H - 0.5;
    const double g1 = std::tgamma(1.0 - beta);
    const FuncOnGrid q = rl_integral(psi, beta);
    const double qr = q.y[m];
    TruncationResult res;
    res.truncated = psi;
    res.singular_coeff = -qr / g1;
    // regular part on the nodes right of r
    FuncOnGrid reg;
    reg.x.assign(psi.x.begin() + static_cast<std::ptrdiff_t>(m), psi.x.end());
    reg.y.assign(reg.x.size(), 0.0);
    for (std::size_t i = m + 1; i < psi.size(); ++i) {
        const double x = psi.x[i];
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double a = psi.x[k];
            const double h = psi.x[k + 1] - a;
            const double d0 = q.y[k] - qr;
            const double slope = (q.y[k + 1] - q.y[k]) / h;
            const double A = x - a;
            // int (x-s)^{-beta-1} ds and int (s-a)(x-s)^{-beta-1} ds over the cell
            const double m0 = -detail::pow_diff(A, h, -beta) / beta;
            const double m1 = A * m0 - detail::pow_diff(A, h, 1.0 - beta) / (1.0 - beta);
            s += d0 * m0 + slope * m1;
        }
        const double value = qr * std::pow(x, -beta) / g1 - beta / g1 * s;
        reg.y[i - m] = value;
        res.truncated.y[i] = value + res.singular_coeff * std::pow(x - r, -beta);
    }
    // (r, x_{m+1}]: the first regular value is extrapolated from the neighbouring cell
    if (reg.size() >= 3) {
        reg.y[0] = 2.0 * reg.y[1] - reg.y[2];
    } else {
        reg.y[0] = reg.y.back();
    }
    for (std::size_t i = 0; i < psi.size(); ++i) {
        double got = q.y[i];
        if (i > m) {
            const double t = psi.x[i];
            got = rl_point(psi, beta, t, 0, m) + rl_point(reg, beta, t, 0, i - m) - qr;
        }
        const double want = i <= m ? q.y[i] : 0.0;
        res.max_error = std::max(res.max_error, std::abs(got - want));
    }
    return res;
}

/// (K* g)(t) = c_H t^{1/2-H} I_{T-}^{1/2-H}[s^{H-1/2} g](t).
inline FuncOnGrid kstar_apply(const FuncOnGrid& g, double H, double c_H) {
    if (!(H > 0.0 && H < 0.5)) {
        throw ParameterError("K* needs 0 < H < 1/2");
    }
    g.validate();
    const double gam = 0.5 - H;
    FuncOnGrid u = g;
    const double x0 = g.x.front();
    if (x0 != 0.0) {
        throw ParameterError("K* acts on functions on [0, T]");
    }
    for (std::size_t i = 1; i < g.size(); ++i) {
        u.y[i] = std::pow(g.x[i], -gam) * g.y[i];
    }
    u.y[0] = 0.0;
    u.left_exponent = g.left_exponent.value_or(0.0) - gam;
    const FuncOnGrid I = rl_integral(u, gam, Side::right);
    FuncOnGrid out = I;
    for (std::size_t i = 0; i < g.size(); ++i) {
        out.y[i] = c_H * std::pow(g.x[i], gam) * I.y[i];
    }
    out.y[0] = 0.0;
    return out;
}

/**
 * g_t with t^{1/2-H} I_{T-}^{1/2-H}[s^{H-1/2} g_t] = 1_(0,t]:
 * g_t(s) = s^gam / Gamma(1-gam) [t^{-gam} (t-s)^{-gam} + gam s^{-2gam} B((t-s)/t; 1-gam, 2gam)], s < t.
 */
inline double kstar_indicator_preimage(double H, double t, double s) {
    if (!(s > 0.0 && s < t)) {
        return 0.0;
    }
    const double gam = 0.5 - H;
    return std::pow(s, gam) / std::tgamma(1.0 - gam) *
           (std::pow(t, -gam) * std::pow(t - s, -gam) +
            gam * std::pow(s, -2.0 * gam) * boost::math::beta(1.0 - gam, 2.0 * gam, (t - s) / t));
}

struct KstarCalibration {
    double c_H = 0.0;
    double spread = 0.0;  ///< max relative deviation of the per-t constants from c_H
    std::vector<double> t;
    std::vector<double> per_t;
};

/// c_H such that ||K* g_t|| matches t^H, least squares over t in {1/4, 1/2, 3/4, 1} T.
inline KstarCalibration calibrate_kstar(double H, double T) {
    if (!(H > 0.0 && H < 0.5)) {
        throw ParameterError("K* needs 0 < H < 1/2");
    }
    KstarCalibration cal;
    boost::math::quadrature::tanh_sinh<double> q;
    double num = 0.0;
    double den = 0.0;
    for (double frac : {0.25, 0.5, 0.75, 1.0}) {
        const double t = frac * T;
        const double n2 = q.integrate(
            [&](double s) {
                const double v = kstar_indicator_preimage(H, t, s);
                return v * v;
            },
            0.0, t);
        const double norm = std::sqrt(n2);
        cal.t.push_back(t);
        cal.per_t.push_back(norm / std::pow(t, H));
        num += norm * std::pow(t, H);
        den += std::pow(t, 2.0 * H);
    }
    cal.c_H = num / den;
    for (double c : cal.per_t) {
        cal.spread = std::max(cal.spread, std::abs(c / cal.c_H - 1.0));
    }
    if (cal.spread > 0.05) {
        throw CalibrationError("K* calibration residual above 5%");
    }
    return cal;
}

/// K* with c_H given, or calibrated when absent.
inline FuncOnGrid kstar(const FuncOnGrid& g, double H, std::optional<double> c_H = std::nullopt) {
    const double c = c_H ? *c_H : calibrate_kstar(H, g.x.back()).c_H;
    return kstar_apply(g, H, c);
}

/// Integrand norm of f on the Gram grid, from cell averages of f.
inline double grid_hh_norm(const GramContext& ctx, const FuncOnGrid& f, int samples = 32) {
    const auto n = static_cast<Eigen::Index>(ctx.size());
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = ctx.grid()[static_cast<std::size_t>(i)];
        const double b = ctx.grid()[static_cast<std::size_t>(i) + 1];
        double s = 0.0;
        for (int j = 0; j < samples; ++j) {
            s += f(a + (b - a) * (j + 0.5) / samples);
        }
        v(i) = s / samples;
    }
    return std::sqrt(std::max(0.0, ctx.norm2(v)));
}

}  // namespace gausscalc

#endif  // GAUSSCALC_FRACCALC_HPP
