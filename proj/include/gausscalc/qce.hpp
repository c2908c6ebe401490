#ifndef GAUSSCALC_QCE_HPP
#define GAUSSCALC_QCE_HPP

/**
 * @file qce.hpp
 * @brief Shifted quasi-conditional expectation on chaos coefficients.
 */

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gausscalc/chaos.hpp"

namespace gausscalc {

/// The pair (r, c) with c_r = Gamma_r^* c - c.
class ShiftContext {
public:
    ShiftContext(const GramContext& ctx, double r, Vector c)
        : ctx_(&ctx), m_(ctx.grid().index_of(r)), c_(std::move(c)) {
        ctx.check(c_);
        const Vector gc = ctx.gram() * c_;
        // G c_r = P G c - G c
        w_ = project_past(gc, m_) - gc;
        if (w_.isZero(0.0)) {
            c_r_ = Vector::Zero(c_.size());
        } else {
            c_r_ = TruncationOperator(ctx, r).adjoint(c_) - c_;
        }
    }

    static ShiftContext unshifted(const GramContext& ctx, double r) {
        return ShiftContext(ctx, r, Vector::Zero(static_cast<Eigen::Index>(ctx.size())));
    }

    const GramContext& context() const { return *ctx_; }
    std::size_t index() const { return m_; }
    double r() const { return ctx_->grid()[m_]; }
    const Vector& c() const { return c_; }
    const Vector& c_r() const { return c_r_; }
    /// G c_r, the Euclidean vector that realises <., c_r>_G.
    const Vector& pairing() const { return w_; }

private:
    const GramContext* ctx_;
    std::size_t m_;
    Vector c_;
    Vector c_r_;
    Vector w_;
};

/// <f, c_r^{tensor (k-i)}> over the last k-i axes.
template <class Tensor>
Tensor contract_with_shift(const ShiftContext& sc, const Tensor& f, int i) {
    if (i > f.order() || i < 0) {
        throw ShapeError("target order must lie in [0, k]");
    }
    Tensor t = f;
    for (int j = f.order(); j > i; --j) {
        t = contract(t, sc.pairing());
    }
    return t;
}

/// f~_n = sum_{k >= n} C(k,n) Gamma_r^{tensor n} C_{r,k,n} f_k for the supplied f_0..f_K.
template <class Tensor>
std::vector<Tensor> shifted_coefficients(const ShiftContext& sc, const std::vector<Tensor>& f) {
    std::vector<Tensor> out;
    const int n = static_cast<int>(sc.context().size());
    for (int k = 0; k < static_cast<int>(f.size()); ++k) {
        out.emplace_back(n, k);
    }
    for (int k = 0; k < static_cast<int>(f.size()); ++k) {
        Tensor t = f[static_cast<std::size_t>(k)];
        for (int j = k; j >= 0; --j) {
            out[static_cast<std::size_t>(j)] += project(t, sc.index()) * binomial(k, j);
            if (j > 0) {
                t = contract(t, sc.pairing());
            }
        }
    }
    return out;
}

inline ChaosVector shifted_qce(const ShiftContext& sc, const ChaosVector& xi) {
    if (static_cast<std::size_t>(xi.dim()) != sc.context().size()) {
        throw ShapeError("chaos vector does not match the grid");
    }
    return ChaosVector::from_coeffs(shifted_coefficients(sc, xi.coeffs()));
}

/// Closed form on the first chaos: I(f) -> I(P f) - <(I-P) f, c>.
inline ChaosVector qce_first_chaos_closed_form(const ShiftContext& sc, const Vector& f) {
    const Vector pf = project_past(f, sc.index());
    ChaosVector out = ChaosVector::first_chaos(pf);
    out.coeff_mut(0)[0] = -sc.context().inner(Vector(f - pf), sc.c());
    return out;
}

/// Closed form for a Wick exponential: e^{<>I(f)} -> e^{-<(I-P) f, c>} e^{<>I(P f)}.
inline WickCombo qce_wick_exponential_closed_form(const ShiftContext& sc, const Vector& f) {
    const Vector pf = project_past(f, sc.index());
    return WickCombo::exponential(pf, std::exp(-sc.context().inner(Vector(f - pf), sc.c())));
}

/// Quasi-conditional expectation in the S-domain: (S xi)((h + c)^r - c).
inline double shifted_qce_s_transform(const ShiftContext& sc, const ChaosVector& xi,
                                      const Vector& h) {
    const Vector shifted = TruncationOperator(sc.context(), sc.r()).adjoint(Vector(h + sc.c())) -
                           sc.c();
    return s_transform(sc.context(), xi, shifted);
}

struct DomainReport {
    std::vector<double> partial_sums;      ///< S_0, ..., S_Kmax (inf once above 1e300)
    std::vector<double> log_partial_sums;  ///< log S_K, always finite when S_K > 0
    std::vector<double> ratios;            ///< S_K / S_{K-1}, K >= 1
    double geometric_rate = std::numeric_limits<double>::quiet_NaN();
    std::string truncation_note;
    std::string scope_note;
};

/**
 * Partial sums S_K = sum_{n <= K} n! ||f~_n||^2, with f~ built from the
 * supplied f_0..f_Kmax. Terms are accumulated in log space.
 */
template <class Tensor>
DomainReport domain_diagnostic(const ShiftContext& sc, const std::function<Tensor(int)>& coeff_gen,
                               int K_max) {
    if (K_max < 0) {
        throw ParameterError("K_max must be nonnegative");
    }
    std::vector<Tensor> f;
    for (int k = 0; k <= K_max; ++k) {
        f.push_back(coeff_gen(k));
        if (f.back().order() != k) {
            throw ShapeError("generated coefficient has the wrong order");
        }
    }
    const std::vector<Tensor> ft = shifted_coefficients(sc, f);
    DomainReport rep;
    double log_s = -std::numeric_limits<double>::infinity();
    std::vector<double> log_terms;
    for (int n = 0; n <= K_max; ++n) {
        const double q = inner(sc.context(), ft[static_cast<std::size_t>(n)],
                               ft[static_cast<std::size_t>(n)]);
        const double lt = q > 0.0 ? std::lgamma(n + 1.0) + std::log(q)
                                  : -std::numeric_limits<double>::infinity();
        log_terms.push_back(lt);
        if (std::isfinite(lt)) {
            const double hi = std::max(log_s, lt);
            log_s = hi + std::log(std::exp(log_s - hi) + std::exp(lt - hi));
        }
        rep.log_partial_sums.push_back(log_s);
        rep.partial_sums.push_back(log_s > std::log(1e300) ? std::numeric_limits<double>::infinity()
                                                           : std::exp(log_s));
        if (n >= 1) {
            rep.ratios.push_back(std::exp(log_s - rep.log_partial_sums[static_cast<std::size_t>(n - 1)]));
        }
    }
    // least-squares slope of log(n! ||f~_n||^2) against n over finite terms, n >= 1
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int n = 1; n <= K_max; ++n) {
        const double y = log_terms[static_cast<std::size_t>(n)];
        if (std::isfinite(y)) {
            sx += n;
            sy += y;
            sxx += static_cast<double>(n) * n;
            sxy += n * y;
            ++cnt;
        }
    }
    if (cnt >= 2) {
        rep.geometric_rate = std::exp((cnt * sxy - sx * sy) / (cnt * sxx - sx * sx));
    }
    rep.truncation_note = "coefficients of order above " + std::to_string(K_max) +
                          " are not generated; each f~_n omits their contributions";
    rep.scope_note = "membership is probed on the grid span only";
    return rep;
}

/// Direction f with ||f|| = lambda^{-1/4} < 1 < lambda^{1/4} = ||Gamma_r f||, <f, c_r> >= 0.
inline Vector escape_direction(const ShiftContext& sc) {
    const SubspaceGeometry g = operator_norm(sc.context(), sc.r());
    if (!(g.opnorm > 1.0 + 1e-9)) {
        throw MartingaleCaseError("operator norm is one at r: every element lies in the domain");
    }
    const double lam = g.opnorm * g.opnorm;
    Vector v = g.extremal_direction;
    const double pair = v.dot(sc.pairing());
    const double tol = 1e-13 * std::max(1.0, sc.pairing().cwiseAbs().maxCoeff());
    if (pair < -tol) {
        v = -v;
    } else if (std::abs(pair) <= tol) {
        v = normalize_sign(v);
    }
    return v * (std::pow(lam, -0.25) / std::sqrt(sc.context().norm2(v)));
}

/// f_k = f^{tensor k} / sqrt(k!).
inline std::function<RankOneTensor(int)> escape_generator(const Vector& f) {
    return [f](int k) { return RankOneTensor(f, k, 1.0 / std::sqrt(factorial(k))); };
}

}  // namespace gausscalc

#endif  // GAUSSCALC_QCE_HPP
