#ifndef GAUSSCALC_CHAOS_HPP
#define GAUSSCALC_CHAOS_HPP

/**
 * @file chaos.hpp
 * @brief Finite Wiener-chaos expansions and the affine-times-exponential
 *        Wick-term algebra.
 */

#include <cmath>
#include <optional>
#include <vector>

#include "gausscalc/tensor.hpp"

namespace gausscalc {

/// xi = sum_k I_k(f_k) with symmetric coefficient tensors f_0, ..., f_K.
class ChaosVector {
public:
    explicit ChaosVector(int dim, int max_order = 0) : dim_(dim) {
        if (max_order < 0) {
            throw ShapeError("max order must be nonnegative");
        }
        for (int k = 0; k <= max_order; ++k) {
            coeffs_.emplace_back(dim, k);
        }
    }

    static ChaosVector constant(int dim, double v) {
        ChaosVector x(dim, 0);
        x.coeffs_[0][0] = v;
        return x;
    }

    /// I(f).
    static ChaosVector first_chaos(const Vector& f) {
        ChaosVector x(static_cast<int>(f.size()), 1);
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            x.coeffs_[1][static_cast<std::size_t>(i)] = f(i);
        }
        return x;
    }

    static ChaosVector from_coeffs(std::vector<SymmetricTensor> c) {
        if (c.empty()) {
            throw ShapeError("a chaos vector needs at least the order-0 coefficient");
        }
        ChaosVector x(c.front().dim(), 0);
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (c[k].order() != static_cast<int>(k) || c[k].dim() != x.dim_) {
                throw ShapeError("coefficient k must have order k and a common dimension");
            }
        }
        x.coeffs_ = std::move(c);
        return x;
    }

    int dim() const { return dim_; }
    int max_order() const { return static_cast<int>(coeffs_.size()) - 1; }
    const std::vector<SymmetricTensor>& coeffs() const { return coeffs_; }

    const SymmetricTensor& coeff(int k) const { return coeffs_.at(static_cast<std::size_t>(k)); }

    /// Mutable coefficient; grows the expansion with zeros if needed.
    SymmetricTensor& coeff_mut(int k) {
        extend(k);
        return coeffs_[static_cast<std::size_t>(k)];
    }

    void extend(int k) {
        while (max_order() < k) {
            coeffs_.emplace_back(dim_, max_order() + 1);
        }
    }

    double expectation() const { return coeffs_[0][0]; }

    ChaosVector truncated(int K) const {
        ChaosVector x(dim_, 0);
        x.coeffs_.assign(coeffs_.begin(),
                         coeffs_.begin() + std::min<std::ptrdiff_t>(K + 1, coeffs_.size()));
        return x;
    }

    ChaosVector& operator+=(const ChaosVector& o) {
        check(o);
        extend(o.max_order());
        for (int k = 0; k <= o.max_order(); ++k) {
            coeffs_[static_cast<std::size_t>(k)] += o.coeff(k);
        }
        return *this;
    }
    ChaosVector& operator-=(const ChaosVector& o) {
        check(o);
        extend(o.max_order());
        for (int k = 0; k <= o.max_order(); ++k) {
            coeffs_[static_cast<std::size_t>(k)] -= o.coeff(k);
        }
        return *this;
    }
    ChaosVector& operator*=(double s) {
        for (auto& c : coeffs_) {
            c *= s;
        }
        return *this;
    }

private:
    void check(const ChaosVector& o) const {
        if (o.dim_ != dim_) {
            throw ShapeError("chaos vectors live on different grids");
        }
    }

    int dim_;
    std::vector<SymmetricTensor> coeffs_;
};

inline ChaosVector operator+(ChaosVector a, const ChaosVector& b) { return a += b; }
inline ChaosVector operator-(ChaosVector a, const ChaosVector& b) { return a -= b; }
inline ChaosVector operator*(ChaosVector a, double s) { return a *= s; }
inline ChaosVector operator*(double s, ChaosVector a) { return a *= s; }

/// E[xi eta] = sum_k k! <f_k, g_k>.
inline double inner(const GramContext& ctx, const ChaosVector& a, const ChaosVector& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError("chaos vectors live on different grids");
    }
    CompensatedSum s;
    const int K = std::min(a.max_order(), b.max_order());
    for (int k = 0; k <= K; ++k) {
        s.add(factorial(k) * inner(ctx, a.coeff(k), b.coeff(k)));
    }
    return s.value();
}

inline double norm2(const GramContext& ctx, const ChaosVector& a) { return inner(ctx, a, a); }

/// Largest coefficient entry touching coordinate m or beyond, over all orders.
inline double mass_beyond(const ChaosVector& a, std::size_t m) {
    double mx = 0.0;
    for (const auto& c : a.coeffs()) {
        mx = std::max(mx, mass_beyond(c, m));
    }
    return mx;
}

inline double max_abs_diff(const ChaosVector& a, const ChaosVector& b) {
    const ChaosVector d = a - b;
    double mx = 0.0;
    for (const auto& c : d.coeffs()) {
        mx = std::max(mx, max_abs(c));
    }
    return mx;
}

/// Truncation of e^{<>I(h)}: f_k = h^{tensor k} / k! for k <= K.
inline ChaosVector wick_exponential_chaos(const GramContext& ctx, const Vector& h, int K) {
    ctx.check(h);
    ChaosVector x(static_cast<int>(h.size()), K);
    for (int k = 0; k <= K; ++k) {
        x.coeff_mut(k) = SymmetricTensor::rank_one(h, k, 1.0 / factorial(k));
    }
    return x;
}

/// L2 error of the order-K truncation: sum_{k>K} ||h||^{2k} / k!.
inline double wick_exponential_tail(const GramContext& ctx, const Vector& h, int K) {
    const double x = ctx.norm2(h);
    double term = 1.0;
    for (int k = 1; k <= K; ++k) {
        term *= x / k;
    }
    double s = 0.0;
    for (int k = K + 1; k < K + 400; ++k) {
        term *= x / k;
        s += term;
        if (term < 1e-18 * s || term == 0.0) {
            break;
        }
    }
    return s;
}

/// (S xi)(h) = sum_k <f_k, h^{tensor k}>.
inline double s_transform(const GramContext& ctx, const ChaosVector& xi, const Vector& h) {
    ctx.check(h);
    const Vector y = ctx.gram() * h;
    CompensatedSum s;
    for (const auto& c : xi.coeffs()) {
        s.add(full_contract(c, y));
    }
    return s.value();
}

/**
 * Pathwise evaluation of a chaos expansion. I_k(f) at a sample x expands as
 * sum_j (-1)^j k! / (j! (k-2j)! 2^j) <f, G^{tensor j} (x) x^{tensor (k-2j)}>,
 * the closed form of the recursive Wick-product rule; the G-traces are
 * precomputed once.
 */
class ChaosEvaluator {
public:
    ChaosEvaluator(const GramContext& ctx, const ChaosVector& xi) : n_(ctx.size()) {
        if (static_cast<std::size_t>(xi.dim()) != n_) {
            throw ShapeError("chaos vector does not match the grid");
        }
        for (int k = 0; k <= xi.max_order(); ++k) {
            SymmetricTensor t = xi.coeff(k);
            for (int j = 0; 2 * j <= k; ++j) {
                const double w = (j % 2 == 0 ? 1.0 : -1.0) * factorial(k) /
                                 (factorial(j) * factorial(k - 2 * j) * std::pow(2.0, j));
                terms_.push_back(t * w);
                if (2 * j + 2 <= k) {
                    t = trace_contract(t, ctx.gram());
                }
            }
        }
    }

    double operator()(const Vector& x) const {
        if (static_cast<std::size_t>(x.size()) != n_) {
            throw ShapeError("increment vector length does not match the grid");
        }
        CompensatedSum s;
        for (const auto& t : terms_) {
            s.add(full_contract(t, x));
        }
        return s.value();
    }

private:
    std::size_t n_;
    std::vector<SymmetricTensor> terms_;
};

inline double evaluate_chaos_on_sample(const GramContext& ctx, const ChaosVector& xi,
                                       const Vector& increments) {
    return ChaosEvaluator(ctx, xi)(increments);
}

/// (alpha + I(f)) e^{<>I(g)}; an absent f means alpha e^{<>I(g)}.
struct WickTerm {
    double alpha = 1.0;
    std::optional<Vector> f;
    Vector g;
};

/// Finite sum of affine-times-Wick-exponential terms; closed under the exact rules below.
class WickCombo {
public:
    explicit WickCombo(int dim) : dim_(dim) {}

    static WickCombo exponential(const Vector& g, double alpha = 1.0) {
        WickCombo c(static_cast<int>(g.size()));
        c.terms_.push_back({alpha, std::nullopt, g});
        return c;
    }

    static WickCombo term(double alpha, const Vector& f, const Vector& g) {
        WickCombo c(static_cast<int>(g.size()));
        c.add_term({alpha, f, g});
        return c;
    }

    void add_term(WickTerm t) {
        if (t.g.size() != dim_ || (t.f && t.f->size() != dim_)) {
            throw ShapeError("Wick term does not match the grid");
        }
        terms_.push_back(std::move(t));
    }

    int dim() const { return dim_; }
    const std::vector<WickTerm>& terms() const { return terms_; }

    WickCombo& operator+=(const WickCombo& o) {
        if (o.dim_ != dim_) {
            throw ShapeError("Wick combos live on different grids");
        }
        terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
        return *this;
    }

    WickCombo& operator*=(double s) {
        for (auto& t : terms_) {
            t.alpha *= s;
            if (t.f) {
                *t.f *= s;
            }
        }
        return *this;
    }

private:
    int dim_;
    std::vector<WickTerm> terms_;
};

inline WickCombo operator+(WickCombo a, const WickCombo& b) { return a += b; }
inline WickCombo operator*(WickCombo a, double s) { return a *= s; }
inline WickCombo operator*(double s, WickCombo a) { return a *= s; }

/// E[(alpha + I(f)) e^{<>g}] = alpha + <f, g>.
inline double expectation(const GramContext& ctx, const WickCombo& c) {
    CompensatedSum s;
    for (const auto& t : c.terms()) {
        s.add(t.alpha + (t.f ? ctx.inner(*t.f, t.g) : 0.0));
    }
    return s.value();
}

/// (S c)(h) = sum (alpha + <f,h> + <f,g>) e^{<g,h>}.
inline double s_transform(const GramContext& ctx, const WickCombo& c, const Vector& h) {
    CompensatedSum s;
    for (const auto& t : c.terms()) {
        const double lin = t.f ? ctx.inner(*t.f, h) + ctx.inner(*t.f, t.g) : 0.0;
        s.add((t.alpha + lin) * std::exp(ctx.inner(t.g, h)));
    }
    return s.value();
}

/// Ordinary product with I(x): alpha I(x) e^{<>g} is representable, I(f) I(x) e^{<>g} is not.
inline WickCombo multiply_first_chaos(const GramContext& ctx, const WickCombo& c, const Vector& x) {
    ctx.check(x);
    WickCombo out(c.dim());
    for (const auto& t : c.terms()) {
        if (t.f && t.f->squaredNorm() > 0.0 && x.squaredNorm() > 0.0) {
            throw UnsupportedOperation(
                "product of an affine Wick term with a first-chaos factor leaves the algebra");
        }
        out.add_term({0.0, Vector(t.alpha * x), t.g});
    }
    return out;
}

/// Ordinary product; e^{<>g1} e^{<>g2} = e^{<g1,g2>} e^{<>(g1+g2)}.
inline WickCombo multiply(const GramContext& ctx, const WickCombo& a, const WickCombo& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError("Wick combos live on different grids");
    }
    WickCombo out(a.dim());
    for (const auto& s : a.terms()) {
        for (const auto& t : b.terms()) {
            if (s.f && t.f) {
                throw UnsupportedOperation("product of two terms with affine parts");
            }
            const double e = std::exp(ctx.inner(s.g, t.g));
            const Vector g = s.g + t.g;
            std::optional<Vector> f;
            if (s.f) {
                f = Vector(*s.f * t.alpha * e);
            } else if (t.f) {
                f = Vector(*t.f * s.alpha * e);
            }
            out.add_term({s.alpha * t.alpha * e, f, g});
        }
    }
    return out;
}

/// Value at a sample of increments.
inline double evaluate_on_sample(const GramContext& ctx, const WickCombo& c, const Vector& x) {
    CompensatedSum s;
    for (const auto& t : c.terms()) {
        const double lin = t.f ? t.f->dot(x) : 0.0;
        s.add((t.alpha + lin) * std::exp(t.g.dot(x) - 0.5 * ctx.norm2(t.g)));
    }
    return s.value();
}

/**
 * Chaos coefficients up to order K. Order n collects alpha g^n/n!,
 * <f,g> g^n/n! and sym(f (x) g^{n-1})/(n-1)!.
 */
inline ChaosVector to_chaos(const GramContext& ctx, const WickCombo& c, int K) {
    ChaosVector x(c.dim(), K);
    for (const auto& t : c.terms()) {
        const double a = t.alpha + (t.f ? ctx.inner(*t.f, t.g) : 0.0);
        for (int n = 0; n <= K; ++n) {
            SymmetricTensor coef = SymmetricTensor::rank_one(t.g, n, a / factorial(n));
            if (t.f && n >= 1) {
                coef += sym_linear_power(*t.f, t.g, n) * (1.0 / factorial(n - 1));
            }
            x.coeff_mut(n) += coef;
        }
    }
    return x;
}

/**
 * E[c | F_{t_m}] for a model with independent increments. Each term maps to
 * (alpha + <(I-P)f, (I-P)g> + I(Pf)) e^{<>Pg}.
 */
inline WickCombo conditional_expectation_independent(const GramContext& ctx, const WickCombo& c,
                                                       std::size_t m) {
    const auto n = static_cast<Eigen::Index>(ctx.size());
    const auto mm = static_cast<Eigen::Index>(m);
    if (mm > 0 && mm < n) {
        const double off = ctx.gram().topRightCorner(mm, n - mm).cwiseAbs().maxCoeff();
        if (off > 1e-14 * ctx.gram().cwiseAbs().maxCoeff()) {
            throw UnsupportedOperation(
                "classical conditional expectation needs uncorrelated past and future increments");
        }
    }
    WickCombo out(c.dim());
    for (const auto& t : c.terms()) {
        const Vector pg = project_past(t.g, m);
        double alpha = t.alpha;
        std::optional<Vector> f;
        if (t.f) {
            const Vector pf = project_past(*t.f, m);
            alpha += ctx.inner(Vector(*t.f - pf), Vector(t.g - pg));
            f = pf;
        }
        out.add_term({alpha, f, pg});
    }
    return out;
}

}  // namespace gausscalc

#endif  // GAUSSCALC_CHAOS_HPP
