#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gausscalc/firstchaos.hpp"
#include "support.hpp"

using namespace gausscalc;
using Catch::Approx;
using testing_support::random_vector;

namespace {

// Rayleigh-quotient maximum from the nonsymmetric matrix G^{-1} P^T G P.
double brute_opnorm(const GramContext& ctx, std::size_t m) {
    const auto n = static_cast<Eigen::Index>(ctx.size());
    Matrix P = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
        P(i, i) = 1.0;
    }
    const Matrix A = ctx.gram().fullPivLu().solve(P.transpose() * ctx.gram() * P);
    Eigen::EigenSolver<Matrix> es(A);
    return std::sqrt(es.eigenvalues().real().maxCoeff());
}

}  // namespace

TEST_CASE("truncate examples", "[firstchaos]") {
    const auto ctx = build_gram(CovarianceModel::fbm(0.3), TimeGrid::uniform(8, 1.0));
    const TruncationOperator op(ctx, 0.5);
    SECTION("basis vectors below m are fixed") {
        for (Eigen::Index i = 0; i < 4; ++i) {
            const Vector e = Vector::Unit(8, i);
            CHECK(op.forward(e) == e);
        }
    }
    SECTION("1_(0,t] maps to 1_(0,t^r]") {
        CHECK(op.forward(indicator(ctx.grid(), 0.875)) == indicator(ctx.grid(), 0.5));
        CHECK(op.forward(indicator(ctx.grid(), 0.25)) == indicator(ctx.grid(), 0.25));
    }
    SECTION("off-grid r") {
        CHECK_THROWS_AS(TruncationOperator(ctx, 0.3), GridAlignmentError);
    }
    SECTION("bm adjoint equals forward") {
        const auto bctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(8, 1.0));
        const TruncationOperator bop(bctx, 0.375);
        std::mt19937_64 rng(3);
        const Vector x = random_vector(rng, 8);
        CHECK((bop.adjoint(x) - bop.forward(x)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("decompose examples", "[firstchaos]") {
    const auto ctx = build_gram(CovarianceModel::fbm(0.7), TimeGrid::uniform(6, 1.0));
    const TruncationOperator op = TruncationOperator::at_index(ctx, 2);
    Vector past = Vector::Zero(6);
    past << 1.0, -2.0, 0, 0, 0, 0;
    Vector fut = Vector::Zero(6);
    fut << 0, 0, 3.0, 0.5, 0, 1.0;
    auto d1 = decompose(op, past);
    CHECK(d1.past == past);
    CHECK(d1.future.isZero());
    auto d2 = decompose(op, fut);
    CHECK(d2.past.isZero());
    CHECK(d2.future == fut);
    auto d3 = decompose(op, past + fut);
    CHECK(d3.past + d3.future == past + fut);
}

TEST_CASE("operator_norm", "[firstchaos]") {
    SECTION("bm has norm one") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(10, 1.0));
        for (std::size_t m = 1; m < 10; ++m) {
            CHECK(std::abs(operator_norm(ctx, ctx.grid()[m]).opnorm - 1.0) < 1e-10);
        }
    }
    SECTION("fbm(0.75), N=8, r=T/2 against the nonsymmetric eigensolve") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid::uniform(8, 1.0));
        const auto g = operator_norm(ctx, 0.5);
        CHECK(g.opnorm > 1.0);
        CHECK(g.opnorm == Approx(brute_opnorm(ctx, 4)).epsilon(1e-10));
        const Vector& v = g.extremal_direction;
        CHECK(ctx.norm2(v) == Approx(1.0).epsilon(1e-12));
        CHECK(std::sqrt(ctx.norm2(project_past(v, 4))) == Approx(g.opnorm).epsilon(1e-10));
    }
    SECTION("fbm(0.25) nondecreasing under dyadic refinement") {
        double prev = 0.0;
        for (std::size_t n : {2u, 4u, 8u, 16u, 32u}) {
            const auto ctx = build_gram(CovarianceModel::fbm(0.25), TimeGrid::uniform(n, 1.0));
            const double v = operator_norm(ctx, 0.5).opnorm;
            CHECK(v >= prev - 1e-9);
            prev = v;
        }
    }
    SECTION("norm and correlation satisfy opnorm^2 = 1/(1-d^2)") {
        for (double H : {0.2, 0.4, 0.6, 0.85}) {
            const auto ctx = build_gram(CovarianceModel::fbm(H), TimeGrid::uniform(12, 1.0));
            for (std::size_t m = 1; m < 12; ++m) {
                const auto g = subspace_geometry(ctx, ctx.grid()[m]);
                CHECK(g.opnorm * g.opnorm == Approx(1.0 / (1.0 - g.d_r * g.d_r)).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("max_correlation", "[firstchaos]") {
    SECTION("bm is zero") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(16, 1.0));
        CHECK(max_correlation(ctx, 0.5).d_r <= 1e-12);
    }
    SECTION("two-cell closed form") {
        for (double H : {0.1, 0.25, 0.4, 0.6, 0.75, 0.9}) {
            const auto ctx = build_gram(CovarianceModel::fbm(H), TimeGrid({0.0, 1.0, 2.0}));
            CHECK(std::abs(max_correlation(ctx, 1.0).d_r - std::abs(std::pow(2.0, 2 * H - 1) - 1)) <=
                  1e-12);
        }
    }
    SECTION("fbm(0.75), N=16 positive with a unit canonical pair") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid::uniform(16, 1.0));
        const auto g = max_correlation(ctx, 0.5);
        CHECK(g.d_r > 0.0);
        CHECK(ctx.norm2(g.upsilon) == Approx(1.0).epsilon(1e-12));
        CHECK(ctx.norm2(g.psi) == Approx(1.0).epsilon(1e-12));
        CHECK(ctx.inner(g.upsilon, g.psi) == Approx(g.d_r).epsilon(1e-10));
        CHECK(g.upsilon.tail(8).isZero());
        CHECK(g.psi.head(8).isZero());
    }
    SECTION("degenerate split") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid::uniform(4, 1.0));
        CHECK_THROWS_AS(max_correlation(ctx, 0.0), DegenerateSplitError);
        CHECK_THROWS_AS(max_correlation(ctx, 1.0), DegenerateSplitError);
    }
}

TEST_CASE("jensen_counterexample", "[firstchaos]") {
    SECTION("bm has none") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(8, 1.0));
        CHECK_THROWS_AS(jensen_counterexample(ctx, 0.5), MartingaleCaseError);
    }
    SECTION("two-cell fbm(0.75) ratio") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid({0.0, 1.0, 2.0}));
        const auto w = jensen_counterexample(ctx, 1.0, 1e-3);
        const double d = std::sqrt(2.0) - 1.0;
        CHECK(w.d_r == Approx(d).epsilon(1e-12));
        // exact canonical pair: E[Upsilon Psi] = d, so the ratio is 1/(1-d^2)
        CHECK(w.ratio == Approx(1.0 / (1.0 - d * d)).epsilon(1e-12));
        CHECK(w.ratio >= 1.0 / (1.0 - d * d + 2.0 * d * 1e-3));
    }
    SECTION("fbm(0.25), N=16") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.25), TimeGrid::uniform(16, 1.0));
        const auto w = jensen_counterexample(ctx, 0.5, 1e-3);
        CHECK(w.ratio > 1.0);
        CHECK(w.correlation >= w.d_r - 1e-3);
        CHECK((w.qce - w.upsilon).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("oblique projection laws", "[firstchaos][property]") {
    std::mt19937_64 rng(42);
    for (const auto& model : {CovarianceModel::bm(), CovarianceModel::fbm(0.25),
                              CovarianceModel::fbm(0.75)}) {
        const auto ctx = build_gram(model, TimeGrid::uniform(16, 1.0));
        for (std::size_t m : {3u, 8u, 13u}) {
            const auto op = TruncationOperator::at_index(ctx, m);
            for (int trial = 0; trial < 20; ++trial) {
                const Vector x = random_vector(rng, 16);
                const Vector y = random_vector(rng, 16);
                const double nx = std::sqrt(ctx.norm2(x));
                const double ny = std::sqrt(ctx.norm2(y));
                CHECK(op.forward(op.forward(x)) == op.forward(x));
                CHECK((op.adjoint(op.adjoint(x)) - op.adjoint(x)).cwiseAbs().maxCoeff() <=
                      1e-10 * x.cwiseAbs().maxCoeff() * ctx.cond_estimate());
                const double lhs = ctx.inner(op.forward(x), y);
                const double rhs = ctx.inner(x, op.adjoint(y));
                CHECK(std::abs(lhs - rhs) <= 1e-10 * nx * ny);
                Vector fut = x;
                fut.head(static_cast<Eigen::Index>(m)).setZero();
                const Vector pst = project_past(y, m);
                CHECK(std::abs(ctx.inner(op.adjoint(y), fut)) <=
                      1e-10 * ny * std::sqrt(ctx.norm2(fut)));
                CHECK(std::abs(ctx.inner(Vector(y - op.adjoint(y)), pst)) <=
                      1e-10 * ny * std::sqrt(ctx.norm2(pst)));
            }
            const auto small = TruncationOperator::at_index(ctx, m / 2);
            const Vector x = random_vector(rng, 16);
            CHECK(small.forward(op.forward(x)) == small.forward(x));
            CHECK(op.forward(small.forward(x)) == small.forward(x));
        }
    }
}

TEST_CASE("dichotomy on the grid", "[firstchaos][property]") {
    for (double H : {0.2, 0.5, 0.8}) {
        const auto ctx = build_gram(CovarianceModel::fbm(H), TimeGrid::uniform(8, 1.0));
        for (std::size_t m = 1; m < 8; ++m) {
            const auto g = subspace_geometry(ctx, ctx.grid()[m]);
            const double off = ctx.gram().topRightCorner(static_cast<Eigen::Index>(m),
                                                         static_cast<Eigen::Index>(8 - m))
                                   .cwiseAbs()
                                   .maxCoeff();
            const bool zero_d = g.d_r <= 1e-9;
            const bool unit_norm = std::abs(g.opnorm - 1.0) <= 1e-9;
            const bool zero_block = off <= 1e-14;
            CHECK(zero_d == unit_norm);
            CHECK(zero_d == zero_block);
            CHECK(zero_d == (H == 0.5));
        }
    }
}
