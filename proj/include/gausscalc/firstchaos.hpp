#ifndef GAUSSCALC_FIRSTCHAOS_HPP
#define GAUSSCALC_FIRSTCHAOS_HPP

/**
 * @file firstchaos.hpp
 * @brief Truncation operator, its adjoint, and past/future subspace geometry.
 */

#include <algorithm>
#include <cmath>
#include <limits>

#include "gausscalc/covariance.hpp"

namespace gausscalc {

/// Coefficient vector in the increment basis; pairs through the Gram matrix.
using FirstChaosElement = Vector;

/// Coefficient vector of 1_(0,t].
inline Vector indicator(const TimeGrid& grid, double t) {
    const std::size_t m = grid.index_of(t);
    Vector v = Vector::Zero(static_cast<Eigen::Index>(grid.size()));
    v.head(static_cast<Eigen::Index>(m)).setOnes();
    return v;
}

/// Coefficient vector of 1_(a,b].
inline Vector interval_indicator(const TimeGrid& grid, double a, double b) {
    const std::size_t ia = grid.index_of(a);
    const std::size_t ib = grid.index_of(b);
    if (ia > ib) {
        throw IntervalError("interval endpoints out of order");
    }
    Vector v = Vector::Zero(static_cast<Eigen::Index>(grid.size()));
    v.segment(static_cast<Eigen::Index>(ia), static_cast<Eigen::Index>(ib - ia)).setOnes();
    return v;
}

/// Cameron-Martin function t_j -> E[X_{t_j} I(h)] at all N+1 grid nodes.
inline Vector cameron_martin(const GramContext& ctx, const Vector& h) {
    ctx.check(h);
    const Vector gh = ctx.gram() * h;
    Vector out = Vector::Zero(gh.size() + 1);
    for (Eigen::Index i = 0; i < gh.size(); ++i) {
        out(i + 1) = out(i) + gh(i);
    }
    return out;
}

/// Flips v so that its first coordinate of non-negligible size is positive.
inline Vector normalize_sign(Vector v) {
    const double scale = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-12 * scale) {
            if (v(i) < 0.0) {
                v = -v;
            }
            break;
        }
    }
    return v;
}

/// Keeps the first m coordinates.
inline Vector project_past(const Vector& x, std::size_t m) {
    Vector y = x;
    y.tail(x.size() - static_cast<Eigen::Index>(m)).setZero();
    return y;
}

enum class TruncationMode { forward, adjoint };

/**
 * Gamma_r on the grid span: the coordinate projection onto the first m
 * increments (r = t_m), together with its adjoint G^{-1} P G.
 */
class TruncationOperator {
public:
    TruncationOperator(const GramContext& ctx, double r)
        : ctx_(&ctx), m_(ctx.grid().index_of(r)) {
        build();
    }

    static TruncationOperator at_index(const GramContext& ctx, std::size_t m) {
        if (m > ctx.size()) {
            throw GridAlignmentError("grid index out of range");
        }
        return TruncationOperator(ctx, ctx.grid()[m]);
    }

    const GramContext& context() const { return *ctx_; }
    std::size_t index() const { return m_; }
    double r() const { return ctx_->grid()[m_]; }
    const Matrix& adjoint_matrix() const { return adj_; }

    Vector forward(const Vector& x) const {
        ctx_->check(x);
        return project_past(x, m_);
    }

    Vector adjoint(const Vector& x) const {
        ctx_->check(x);
        return adj_ * x;
    }

    Vector apply(const Vector& x, TruncationMode mode) const {
        return mode == TruncationMode::forward ? forward(x) : adjoint(x);
    }

private:
    void build() {
        const auto n = static_cast<Eigen::Index>(ctx_->size());
        const auto m = static_cast<Eigen::Index>(m_);
        if (m == n) {
            adj_ = Matrix::Identity(n, n);
            return;
        }
        if (m == 0) {
            adj_ = Matrix::Zero(n, n);
            return;
        }
        Matrix pg = ctx_->gram();
        pg.bottomRows(n - m).setZero();
        adj_ = ctx_->inverse() * pg;
    }

    const GramContext* ctx_;
    std::size_t m_;
    Matrix adj_;
};

inline Vector truncate(const TruncationOperator& op, const Vector& x, TruncationMode mode) {
    return op.apply(x, mode);
}

struct Decomposition {
    Vector past;
    Vector future;
};

inline Decomposition decompose(const TruncationOperator& op, const Vector& x) {
    Vector past = op.forward(x);
    Vector future = x - past;
    return {std::move(past), std::move(future)};
}

/// Geometry of the split of the grid span at r.
struct SubspaceGeometry {
    double r = 0.0;
    double d_r = std::numeric_limits<double>::quiet_NaN();
    double opnorm = std::numeric_limits<double>::quiet_NaN();
    Vector upsilon;             ///< unit past element of the top canonical pair
    Vector psi;                 ///< unit future-increment element of the pair
    Vector extremal_direction;  ///< unit element attaining the operator norm
};

/// ||Gamma_r||_op via the whitened generalized eigenproblem (P^T G P, G).
inline SubspaceGeometry operator_norm(const GramContext& ctx, double r) {
    ctx.require_pd();
    const std::size_t m = ctx.grid().index_of(r);
    const auto n = static_cast<Eigen::Index>(ctx.size());
    Matrix pgp = ctx.gram();
    pgp.bottomRows(n - static_cast<Eigen::Index>(m)).setZero();
    pgp.rightCols(n - static_cast<Eigen::Index>(m)).setZero();
    const Matrix& W = ctx.whitening();
    Matrix M = W.transpose() * pgp * W;
    M = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    SubspaceGeometry g;
    g.r = ctx.grid()[m];
    const double lam = std::max(0.0, es.eigenvalues()(n - 1));
    g.opnorm = std::sqrt(lam);
    Vector x = W * es.eigenvectors().col(n - 1);
    x /= std::sqrt(ctx.norm2(x));
    g.extremal_direction = normalize_sign(std::move(x));
    return g;
}

/// Largest canonical correlation between span{dX_i : i <= m} and span{dX_i : i > m}.
inline SubspaceGeometry max_correlation(const GramContext& ctx, double r) {
    const std::size_t mi = ctx.grid().index_of(r);
    const auto n = static_cast<Eigen::Index>(ctx.size());
    const auto m = static_cast<Eigen::Index>(mi);
    if (m == 0 || m == n) {
        throw DegenerateSplitError("max_correlation needs 0 < r < T");
    }
    ctx.require_pd();
    const Matrix& G = ctx.gram();
    const Matrix g11 = G.topLeftCorner(m, m);
    const Matrix g22 = G.bottomRightCorner(n - m, n - m);
    const Matrix g12 = G.topRightCorner(m, n - m);
    Eigen::SelfAdjointEigenSolver<Matrix> e1(g11);
    Eigen::SelfAdjointEigenSolver<Matrix> e2(g22);
    const Matrix s1 = e1.operatorInverseSqrt();
    const Matrix s2 = e2.operatorInverseSqrt();
    Eigen::JacobiSVD<Matrix> svd(s1 * g12 * s2, Eigen::ComputeFullU | Eigen::ComputeFullV);

    SubspaceGeometry g;
    g.r = ctx.grid()[mi];
    g.d_r = std::min(svd.singularValues()(0), 1.0);
    Vector ups = Vector::Zero(n);
    Vector psi = Vector::Zero(n);
    ups.head(m) = s1 * svd.matrixU().col(0);
    psi.tail(n - m) = s2 * svd.matrixV().col(0);
    ups /= std::sqrt(ctx.norm2(ups));
    psi /= std::sqrt(ctx.norm2(psi));
    const Vector ups_n = normalize_sign(ups);
    if (ups_n.dot(ups) < 0.0) {
        psi = -psi;
    }
    g.upsilon = ups_n;
    g.psi = psi;
    return g;
}

/// Both halves of the geometry in one record.
inline SubspaceGeometry subspace_geometry(const GramContext& ctx, double r) {
    SubspaceGeometry g = max_correlation(ctx, r);
    const SubspaceGeometry o = operator_norm(ctx, r);
    g.opnorm = o.opnorm;
    g.extremal_direction = o.extremal_direction;
    return g;
}

struct JensenWitness {
    Vector h;            ///< Upsilon - d_r Psi
    Vector upsilon;
    Vector psi;
    Vector qce;          ///< Gamma_r h, the quasi-conditional expectation of h
    double d_r = 0.0;
    double correlation = 0.0;  ///< E[Upsilon Psi]
    double ratio = 0.0;        ///< E[qce^2] / E[h^2]
    double bound = 0.0;        ///< 1 / (1 - d^2 + 2 d eps)
};

/// Element whose quasi-conditional expectation has a larger second moment than itself.
inline JensenWitness jensen_counterexample(const GramContext& ctx, double r, double eps = 1e-3) {
    if (!(eps > 0.0)) {
        throw ParameterError("epsilon must be positive");
    }
    const SubspaceGeometry g = max_correlation(ctx, r);
    if (g.d_r <= 1e-9) {
        throw MartingaleCaseError(
            "past and future increments are uncorrelated at r: no counterexample exists");
    }
    JensenWitness w;
    w.d_r = g.d_r;
    w.upsilon = g.upsilon;
    w.psi = g.psi;
    w.correlation = ctx.inner(g.upsilon, g.psi);
    w.h = g.upsilon - g.d_r * g.psi;
    w.qce = project_past(w.h, ctx.grid().index_of(r));
    w.ratio = ctx.norm2(w.qce) / ctx.norm2(w.h);
    w.bound = 1.0 / (1.0 - g.d_r * g.d_r + 2.0 * g.d_r * eps);
    return w;
}

}  // namespace gausscalc

#endif  // GAUSSCALC_FIRSTCHAOS_HPP
