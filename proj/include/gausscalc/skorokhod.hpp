#ifndef GAUSSCALC_SKOROKHOD_HPP
#define GAUSSCALC_SKOROKHOD_HPP

/**
 * @file skorokhod.hpp
 * @brief Skorokhod integrals of simple and chaos-expanded integrands, and the
 * pathwise integral against a Cameron-Martin function.
 */

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gausscalc/chaos.hpp"

namespace gausscalc {

/// One piece 1_(a,b] times a combination of pure Wick exponentials.
struct SimplePiece {
    double a = 0.0;
    double b = 0.0;
    WickCombo coeff;
};

struct SimpleIntegrand {
    std::vector<SimplePiece> pieces;
};

/**
 * Z in L^2 (x) H on the grid span: order-k chaos coefficients of slot j are
 * slots(k)[j], so Z = sum_j (sum_k I_k(slots(k)[j])) e_j.
 */
class ChaosField {
public:
    ChaosField(int dim, int max_order) : dim_(dim) {
        if (max_order < 0) {
            throw ShapeError("max order must be nonnegative");
        }
        for (int k = 0; k <= max_order; ++k) {
            slots_.emplace_back(static_cast<std::size_t>(dim), SymmetricTensor(dim, k));
        }
    }

    /// Deterministic integrand with slot values g.
    static ChaosField deterministic(const Vector& g) {
        ChaosField z(static_cast<int>(g.size()), 0);
        for (Eigen::Index j = 0; j < g.size(); ++j) {
            z.slot(0, static_cast<std::size_t>(j))[0] = g(j);
        }
        return z;
    }

    int dim() const { return dim_; }
    int max_order() const { return static_cast<int>(slots_.size()) - 1; }
    const std::vector<SymmetricTensor>& slots(int k) const { return slots_.at(static_cast<std::size_t>(k)); }
    SymmetricTensor& slot(int k, std::size_t j) { return slots_.at(static_cast<std::size_t>(k)).at(j); }
    const SymmetricTensor& slot(int k, std::size_t j) const {
        return slots_.at(static_cast<std::size_t>(k)).at(j);
    }

    /// Chaos expansion of the slot-j component.
    ChaosVector component(std::size_t j) const {
        std::vector<SymmetricTensor> c;
        for (const auto& s : slots_) {
            c.push_back(s.at(j));
        }
        return ChaosVector::from_coeffs(std::move(c));
    }

    ChaosField& operator+=(const ChaosField& o) {
        if (o.dim_ != dim_ || o.max_order() != max_order()) {
            throw ShapeError("chaos fields differ in shape");
        }
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            for (std::size_t j = 0; j < slots_[k].size(); ++j) {
                slots_[k][j] += o.slots_[k][j];
            }
        }
        return *this;
    }

    ChaosField& operator*=(double s) {
        for (auto& v : slots_) {
            for (auto& t : v) {
                t *= s;
            }
        }
        return *this;
    }

private:
    int dim_;
    std::vector<std::vector<SymmetricTensor>> slots_;
};

inline ChaosField operator+(ChaosField a, const ChaosField& b) { return a += b; }
inline ChaosField operator*(ChaosField a, double s) { return a *= s; }

/// (S Z)(h) as a vector of slot values.
inline Vector s_transform(const GramContext& ctx, const ChaosField& z, const Vector& h) {
    ctx.check(h);
    const Vector y = ctx.gram() * h;
    Vector out = Vector::Zero(z.dim());
    for (int k = 0; k <= z.max_order(); ++k) {
        for (int j = 0; j < z.dim(); ++j) {
            out(j) += full_contract(z.slot(k, static_cast<std::size_t>(j)), y);
        }
    }
    return out;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> slot_range(const GramContext& ctx, double a, double b) {
    const std::size_t ia = ctx.grid().index_of(a);
    const std::size_t ib = ctx.grid().index_of(b);
    if (ia > ib) {
        throw IntervalError("interval endpoints out of order");
    }
    return {ia, ib};
}

inline void check_field(const GramContext& ctx, const ChaosField& z) {
    if (static_cast<std::size_t>(z.dim()) != ctx.size()) {
        throw ShapeError("chaos field does not match the grid");
    }
}

}  // namespace detail

/// Gamma_(a,b] applied to the slot axis.
inline ChaosField restrict_slots(const GramContext& ctx, const ChaosField& z, double a, double b) {
    detail::check_field(ctx, z);
    const auto [ia, ib] = detail::slot_range(ctx, a, b);
    ChaosField out = z;
    for (int k = 0; k <= z.max_order(); ++k) {
        for (std::size_t j = 0; j < ctx.size(); ++j) {
            if (j < ia || j >= ib) {
                out.slot(k, j) *= 0.0;
            }
        }
    }
    return out;
}

/// Skorokhod integral over (a,b]: order k+1 coefficient is the symmetrized slot tensor.
inline ChaosVector skorokhod_chaos(const GramContext& ctx, const ChaosField& z, double a, double b) {
    const ChaosField zr = restrict_slots(ctx, z, a, b);
    ChaosVector out(z.dim(), z.max_order() + 1);
    for (int k = 0; k <= z.max_order(); ++k) {
        out.coeff_mut(k + 1) = symmetrize_slots(zr.slots(k));
    }
    return out;
}

/// Integral of Z over (a,b] against the Cameron-Martin function of c.
inline ChaosVector cm_pathwise_integral(const GramContext& ctx, const ChaosField& z, const Vector& c,
                                        double a, double b) {
    ctx.check(c);
    const ChaosField zr = restrict_slots(ctx, z, a, b);
    const Vector gc = ctx.gram() * c;
    ChaosVector out(z.dim(), z.max_order());
    for (int k = 0; k <= z.max_order(); ++k) {
        SymmetricTensor& t = out.coeff_mut(k);
        for (std::size_t j = 0; j < ctx.size(); ++j) {
            if (gc(static_cast<Eigen::Index>(j)) != 0.0) {
                t += zr.slot(k, j) * gc(static_cast<Eigen::Index>(j));
            }
        }
    }
    return out;
}

/// Exact integral of a simple integrand: each alpha e^{<>h} 1_(a,b] becomes
/// (-alpha <h, 1_(a,b]> + alpha I(1_(a,b])) e^{<>h}.
inline WickCombo skorokhod_simple(const GramContext& ctx, const SimpleIntegrand& z) {
    WickCombo out(static_cast<int>(ctx.size()));
    for (const auto& p : z.pieces) {
        if (!(p.a < p.b)) {
            throw IntervalError("simple integrand pieces need a < b");
        }
        const Vector ind = interval_indicator(ctx.grid(), p.a, p.b);
        for (const auto& t : p.coeff.terms()) {
            if (t.f) {
                throw UnsupportedOperation("simple integrand coefficients must be pure Wick exponentials");
            }
            out.add_term({-t.alpha * ctx.inner(t.g, ind), Vector(t.alpha * ind), t.g});
        }
    }
    return out;
}

/// Order-K chaos field of a simple integrand.
inline ChaosField to_chaos_field(const GramContext& ctx, const SimpleIntegrand& z, int K) {
    ChaosField out(static_cast<int>(ctx.size()), K);
    for (const auto& p : z.pieces) {
        const auto [ia, ib] = detail::slot_range(ctx, p.a, p.b);
        for (const auto& t : p.coeff.terms()) {
            if (t.f) {
                throw UnsupportedOperation("simple integrand coefficients must be pure Wick exponentials");
            }
            for (int k = 0; k <= K; ++k) {
                const SymmetricTensor c = SymmetricTensor::rank_one(t.g, k, t.alpha / factorial(k));
                for (std::size_t j = ia; j < ib; ++j) {
                    out.slot(k, j) += c;
                }
            }
        }
    }
    return out;
}

/// Right-hand side of the S-transform identity for a simple integrand.
inline double simple_s_transform_rhs(const GramContext& ctx, const SimpleIntegrand& z,
                                     const Vector& h) {
    const Vector cm = cameron_martin(ctx, h);
    CompensatedSum s;
    for (const auto& p : z.pieces) {
        const double inc = cm(static_cast<Eigen::Index>(ctx.grid().index_of(p.b))) -
                           cm(static_cast<Eigen::Index>(ctx.grid().index_of(p.a)));
        for (const auto& t : p.coeff.terms()) {
            s.add(t.alpha * std::exp(ctx.inner(t.g, h)) * inc);
        }
    }
    return s.value();
}

/// Largest scaled deviation between both sides at `trials` random directions.
inline double verify_s_transform_identity(const GramContext& ctx, const SimpleIntegrand& z,
                                          int trials, std::uint64_t seed) {
    const WickCombo integral = skorokhod_simple(ctx, z);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(ctx.size());
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Vector h(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            h(i) = nd(rng);
        }
        const double norm = std::sqrt(ctx.norm2(h));
        if (norm > 0.0) {
            h /= norm;
        }
        const double lhs = s_transform(ctx, integral, h);
        const double rhs = simple_s_transform_rhs(ctx, z, h);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    return worst;
}

}  // namespace gausscalc

#endif  // GAUSSCALC_SKOROKHOD_HPP
