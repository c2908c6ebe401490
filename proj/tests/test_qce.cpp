#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "gausscalc/qce.hpp"
#include "chaos_support.hpp"
#include "support.hpp"

using namespace gausscalc;
using testing_support::random_chaos;
using testing_support::random_tensor;
using testing_support::random_vector;

namespace {

std::vector<CovarianceModel> models() {
    return {CovarianceModel::bm(), CovarianceModel::fbm(0.25), CovarianceModel::fbm(0.75),
            CovarianceModel::weighted_fbm(0.7, {0.0, 0.4, 1.0}, {1.0, 2.0})};
}

// sum_{j <= n} b^j / j!
double partial_exp(double b, int n) {
    double s = 0.0;
    double t = 1.0;
    for (int j = 0; j <= n; ++j) {
        s += t;
        t *= b / (j + 1);
    }
    return s;
}

// Full-tensor contraction oracle: sum over all index tuples of the last k-i axes.
double brute_contract_entry(const SymmetricTensor& f, const std::vector<int>& head, const Vector& w) {
    const int k = f.order();
    const int n = f.dim();
    const int rest = k - static_cast<int>(head.size());
    double s = 0.0;
    std::vector<int> tail(static_cast<std::size_t>(rest), 0);
    while (true) {
        std::vector<int> ix = head;
        double wt = 1.0;
        for (int t : tail) {
            ix.push_back(t);
            wt *= w(t);
        }
        s += wt * f.at(ix);
        int p = rest - 1;
        while (p >= 0 && ++tail[static_cast<std::size_t>(p)] == n) {
            tail[static_cast<std::size_t>(p)] = 0;
            --p;
        }
        if (p < 0) {
            break;
        }
    }
    return s;
}

}  // namespace

TEST_CASE("shift context basics", "[qce]") {
    const auto ctx = build_gram(CovarianceModel::fbm(0.3), TimeGrid::uniform(6, 1.0));
    const auto sc0 = ShiftContext::unshifted(ctx, 0.5);
    CHECK(sc0.index() == 3);
    CHECK(sc0.c_r().isZero(0.0));
    CHECK(sc0.pairing().isZero(0.0));

    std::mt19937_64 rng(11);
    const ShiftContext sc(ctx, 0.5, random_vector(rng, 6));
    // c_r is G-orthogonal to everything supported on the past
    for (int i = 0; i < 3; ++i) {
        Vector e = Vector::Zero(6);
        e(i) = 1.0;
        CHECK(std::abs(ctx.inner(e, sc.c_r())) < 1e-12);
    }
    CHECK((ctx.gram() * sc.c_r() - sc.pairing()).cwiseAbs().maxCoeff() < 1e-12);

    const ShiftContext end(ctx, 1.0, random_vector(rng, 6));
    CHECK(end.c_r().isZero(0.0));
    CHECK_THROWS_AS(ShiftContext(ctx, 0.45, Vector::Zero(6)), GridAlignmentError);
    CHECK_THROWS_AS(ShiftContext(ctx, 0.5, Vector::Zero(5)), ShapeError);
}

TEST_CASE("contract_with_shift", "[qce]") {
    const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid::uniform(4, 1.0));
    std::mt19937_64 rng(3);
    const ShiftContext sc(ctx, 0.5, random_vector(rng, 4));
    const auto f = random_tensor(rng, 4, 3);

    CHECK(max_abs(contract_with_shift(sc, f, 3) - f) == 0.0);
    CHECK(max_abs(contract_with_shift(ShiftContext::unshifted(ctx, 0.5), f, 1)) == 0.0);
    CHECK_THROWS_AS(contract_with_shift(sc, f, 4), ShapeError);

    const Vector a = random_vector(rng, 4);
    const double pa = ctx.inner(a, sc.c_r());
    for (int i = 0; i <= 3; ++i) {
        const auto got = contract_with_shift(sc, SymmetricTensor::rank_one(a, 3), i);
        const auto want = SymmetricTensor::rank_one(a, i, std::pow(pa, 3 - i));
        CHECK(max_abs(got - want) < 1e-12);
    }

    const auto got = contract_with_shift(sc, f, 1);
    for (int j = 0; j < 4; ++j) {
        CHECK(std::abs(got.at({j}) - brute_contract_entry(f, {j}, sc.pairing())) < 1e-12);
    }
}

TEST_CASE("unshifted quasi-conditional expectation projects each coefficient", "[qce]") {
    std::mt19937_64 rng(5);
    for (const auto& model : models()) {
        const auto ctx = build_gram(model, TimeGrid::uniform(5, 1.0));
        const auto xi = random_chaos(rng, 5, 3);
        const auto sc = ShiftContext::unshifted(ctx, 0.4);
        const auto out = shifted_qce(sc, xi);
        for (int k = 0; k <= 3; ++k) {
            CHECK(max_abs(out.coeff(k) - project(xi.coeff(k), 2)) == 0.0);
        }
        const Vector f = random_vector(rng, 5);
        const auto first = shifted_qce(sc, ChaosVector::first_chaos(f));
        CHECK((first.coeff(1).data().size() == 5));
        for (int i = 0; i < 5; ++i) {
            CHECK(first.coeff(1).at({i}) == (i < 2 ? f(i) : 0.0));
        }
    }
}

TEST_CASE("first-chaos closed form holds exactly", "[qce]") {
    std::mt19937_64 rng(7);
    for (const auto& model : models()) {
        const auto ctx = build_gram(model, TimeGrid::uniform(8, 2.0));
        for (double r : {0.0, 0.5, 1.25, 2.0}) {
            const ShiftContext sc(ctx, r, random_vector(rng, 8));
            for (double t : {0.25, 1.0, 2.0}) {
                const Vector f = indicator(ctx.grid(), t);
                const auto got = shifted_qce(sc, ChaosVector::first_chaos(f));
                const auto want = qce_first_chaos_closed_form(sc, f);
                CHECK(max_abs_diff(got, want) <= 1e-12);
                // X_{t ^ r} minus E[(X_t - X_{t ^ r}) I(c)]
                const Vector tr = indicator(ctx.grid(), std::min(t, r));
                CHECK(max_abs(got.coeff(1) - SymmetricTensor::rank_one(tr, 1)) == 0.0);
                const double drift = ctx.inner(Vector(f - tr), sc.c());
                CHECK(std::abs(got.expectation() + drift) <= 1e-12 * std::max(1.0, std::abs(drift)));
            }
        }
    }
}

TEST_CASE("Wick exponential closed form within truncation", "[qce]") {
    const int K = 12;
    std::mt19937_64 rng(13);
    for (const auto& model : models()) {
        const auto ctx = build_gram(model, TimeGrid::uniform(6, 1.0));
        for (int trial = 0; trial < 3; ++trial) {
            Vector f = random_vector(rng, 6);
            f /= std::sqrt(ctx.norm2(f));
            f *= 0.9;
            const ShiftContext sc(ctx, 0.5, random_vector(rng, 6, 0.5));
            const auto got = shifted_qce(sc, wick_exponential_chaos(ctx, f, K));
            const WickCombo closed = qce_wick_exponential_closed_form(sc, f);
            const auto exact = to_chaos(ctx, closed, K);
            const double beta = ctx.inner(f, sc.c_r());
            const Vector pf = project_past(f, sc.index());
            REQUIRE(closed.terms().size() == 1);
            CHECK(std::abs(std::log(closed.terms()[0].alpha) - beta) < 1e-12);
            double worst = 0.0;
            for (int n = 0; n <= K; ++n) {
                // truncating at K leaves sum_{j <= K-n} beta^j / j! in place of e^beta
                const double keep = partial_exp(beta, K - n) / std::exp(beta);
                const auto want = exact.coeff(n) * keep;
                worst = std::max(worst, max_abs(got.coeff(n) - want));
                const double tail = std::abs(1.0 - keep) * max_abs(exact.coeff(n));
                CHECK(max_abs(got.coeff(n) - exact.coeff(n)) <= tail + 1e-13);
            }
            CHECK(worst <= 1e-8);
            // the S-domain form of the same identity
            const Vector h = random_vector(rng, 6, 0.3);
            const double s_closed = s_transform(ctx, closed, h);
            const double s_trunc = s_transform(ctx, got, h);
            CHECK(std::abs(s_closed - s_trunc) <=
                  std::exp(std::abs(beta) + std::abs(ctx.inner(pf, h))) *
                      std::pow(std::abs(beta) + std::abs(ctx.inner(pf, h)), K + 1) / factorial(K + 1) +
                      1e-12);
        }
    }
}

TEST_CASE("S-transform of the shifted quasi-conditional expectation", "[qce]") {
    std::mt19937_64 rng(17);
    for (const auto& model : models()) {
        const auto ctx = build_gram(model, TimeGrid::uniform(5, 1.0));
        const auto xi = random_chaos(rng, 5, 3);
        for (double r : {0.2, 0.6}) {
            const ShiftContext sc(ctx, r, random_vector(rng, 5));
            const auto q = shifted_qce(sc, xi);
            for (int t = 0; t < 5; ++t) {
                const Vector h = random_vector(rng, 5);
                const double want = shifted_qce_s_transform(sc, xi, h);
                CHECK(testing_support::scaled_err(s_transform(ctx, q, h), want) < 1e-10);
            }
        }
    }
}

TEST_CASE("towering", "[qce][property]") {
    std::mt19937_64 rng(19);
    for (const auto& model : models()) {
        const auto ctx = build_gram(model, TimeGrid::uniform(6, 1.0));
        for (int trial = 0; trial < 4; ++trial) {
            const auto xi = random_chaos(rng, 6, 3);
            const Vector c = random_vector(rng, 6);
            const double r1 = ctx.grid()[1 + trial % 3];
            const double r2 = ctx.grid()[4 + trial % 3];
            const ShiftContext s1(ctx, r1, c);
            const ShiftContext s2(ctx, r2, c);
            const auto lhs = shifted_qce(s1, shifted_qce(s2, xi));
            const auto rhs = shifted_qce(s1, xi);
            const double scale = std::max(1.0, max_abs_diff(rhs, ChaosVector(6, 3)));
            CHECK(max_abs_diff(lhs, rhs) <= 1e-10 * scale);
        }
    }
}

TEST_CASE("measurability and fixed points", "[qce][property]") {
    std::mt19937_64 rng(23);
    for (const auto& model : models()) {
        const auto ctx = build_gram(model, TimeGrid::uniform(6, 1.0));
        const std::size_t m = 3;
        const ShiftContext sc(ctx, ctx.grid()[m], random_vector(rng, 6));
        for (int trial = 0; trial < 4; ++trial) {
            auto xi = random_chaos(rng, 6, 3);
            ChaosVector past(6, 3);
            for (int k = 0; k <= 3; ++k) {
                past.coeff_mut(k) = project(xi.coeff(k), m);
            }
            CHECK(max_abs_diff(shifted_qce(sc, past), past) <= 1e-10);

            // every output is supported on the past, so a fixed point must be too
            const auto q = shifted_qce(sc, xi);
            CHECK(mass_beyond(q, m) <= 1e-10);
            CHECK(max_abs_diff(q, xi) >= mass_beyond(xi, m) - 1e-10);
            CHECK(max_abs_diff(shifted_qce(sc, q), q) <= 1e-10);
        }
    }
}

TEST_CASE("measure change on Brownian motion", "[qce][property]") {
    const int K = 12;
    const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(6, 1.0));
    std::mt19937_64 rng(29);
    for (double r : {1.0 / 3.0, 0.5, 5.0 / 6.0}) {
        const Vector f = random_vector(rng, 6, 0.5);
        const Vector c = random_vector(rng, 6, 0.5);
        const ShiftContext sc(ctx, r, c);
        const std::size_t m = sc.index();
        const Vector future_c = c - project_past(c, m);
        // E[xi e^{<>I(-c 1_(r,T])} | F_r]; the density process is 1 at r
        const WickCombo density = WickCombo::exponential(Vector(-future_c));
        const WickCombo bayes = conditional_expectation_independent(
            ctx, multiply(ctx, WickCombo::exponential(f), density), m);
        const auto got = shifted_qce(sc, wick_exponential_chaos(ctx, f, K));
        const auto want = to_chaos(ctx, bayes, K);
        const double beta = -ctx.inner(f, future_c);
        double worst = 0.0;
        for (int n = 0; n <= K; ++n) {
            const double keep = partial_exp(beta, K - n) / std::exp(beta);
            worst = std::max(worst, max_abs(got.coeff(n) - want.coeff(n) * keep));
        }
        CHECK(worst <= 1e-8);
        CHECK(std::abs(expectation(ctx, bayes) - std::exp(beta)) < 1e-14);
    }
}

TEST_CASE("domain diagnostic", "[qce]") {
    SECTION("divergence lower bound along the escape direction") {
        for (double H : {0.75, 0.25}) {
            const auto ctx = build_gram(CovarianceModel::fbm(H), TimeGrid::uniform(8, 1.0));
            std::mt19937_64 rng(31);
            for (const Vector& c : {Vector(Vector::Zero(8)), random_vector(rng, 8, 0.3)}) {
                const ShiftContext sc(ctx, 0.5, c);
                const Vector fe = escape_direction(sc);
                const double rho = ctx.norm2(project_past(fe, 4));
                CHECK(rho > 1.0);
                const auto rep = domain_diagnostic<RankOneTensor>(sc, escape_generator(fe), 12);
                REQUIRE(rep.partial_sums.size() == 13);
                double bound = 0.0;
                for (int k = 0; k <= 12; ++k) {
                    bound += std::pow(rho, k);
                    CHECK(rep.partial_sums[static_cast<std::size_t>(k)] >= bound * (1 - 1e-12));
                }
                CHECK(rep.ratios.back() >= rho * (1 - 1e-6));
                CHECK(rep.geometric_rate >= rho * (1 - 1e-6));
                CHECK(!rep.truncation_note.empty());
                CHECK(!rep.scope_note.empty());
            }
        }
    }
    SECTION("Brownian motion: partial sums are second moments of the truncation") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(6, 1.0));
        std::mt19937_64 rng(37);
        Vector f = random_vector(rng, 6);
        f *= 1.5 / std::sqrt(ctx.norm2(f));
        const auto sc = ShiftContext::unshifted(ctx, 0.5);
        const auto rep = domain_diagnostic<RankOneTensor>(sc, escape_generator(f), 8);
        for (int K = 0; K <= 8; ++K) {
            ChaosVector xi(6, K);
            for (int k = 0; k <= K; ++k) {
                xi.coeff_mut(k) = SymmetricTensor::rank_one(f, k, 1.0 / std::sqrt(factorial(k)));
            }
            const double want = norm2(ctx, shifted_qce(sc, xi));
            CHECK(testing_support::scaled_err(rep.partial_sums[static_cast<std::size_t>(K)], want) <
                  1e-12);
        }
    }
    SECTION("contraction below one gives a bounded series") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid::uniform(8, 1.0));
        std::mt19937_64 rng(41);
        Vector f = random_vector(rng, 8);
        const auto sc = ShiftContext::unshifted(ctx, 0.5);
        f *= 0.8 / std::sqrt(ctx.norm2(project_past(f, 4)));
        const double rho = ctx.norm2(project_past(f, 4));
        const auto rep = domain_diagnostic<RankOneTensor>(sc, escape_generator(f), 30);
        for (std::size_t k = 0; k < rep.partial_sums.size(); ++k) {
            CHECK(rep.partial_sums[k] <= 1.0 / (1.0 - rho) + 1e-12);
        }
        CHECK(rep.geometric_rate == Catch::Approx(rho).epsilon(1e-9));
    }
    SECTION("dense and rank-one coefficients agree and sums are monotone") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.3), TimeGrid::uniform(4, 1.0));
        std::mt19937_64 rng(43);
        const ShiftContext sc(ctx, 0.5, random_vector(rng, 4));
        const Vector f = random_vector(rng, 4);
        const auto gen = escape_generator(f);
        const auto r1 = domain_diagnostic<RankOneTensor>(sc, gen, 6);
        const auto rd = domain_diagnostic<SymmetricTensor>(
            sc, [&](int k) { return gen(k).to_dense(); }, 6);
        for (std::size_t k = 0; k < r1.partial_sums.size(); ++k) {
            CHECK(testing_support::scaled_err(r1.partial_sums[k], rd.partial_sums[k]) < 1e-10);
            if (k > 0) {
                CHECK(r1.partial_sums[k] >= r1.partial_sums[k - 1]);
                CHECK(r1.ratios[k - 1] >= 1.0);
            }
        }
    }
    SECTION("overflow is guarded in log space") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(4, 1.0));
        const auto sc = ShiftContext::unshifted(ctx, 1.0);
        const Vector a = Vector::Constant(4, 1e15);
        const std::function<RankOneTensor(int)> gen = [&](int k) { return RankOneTensor(a, k); };
        const auto rep = domain_diagnostic<RankOneTensor>(sc, gen, 10);
        CHECK(std::isinf(rep.partial_sums.back()));
        CHECK(std::isfinite(rep.log_partial_sums.back()));
        CHECK(rep.log_partial_sums.back() ==
              Catch::Approx(std::lgamma(11.0) + 300 * std::log(10.0)).epsilon(1e-9));
    }
    SECTION("errors") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(4, 1.0));
        const auto sc = ShiftContext::unshifted(ctx, 0.5);
        CHECK_THROWS_AS(domain_diagnostic<RankOneTensor>(sc, escape_generator(Vector::Ones(4)), -1),
                        ParameterError);
        const std::function<RankOneTensor(int)> bad = [](int) { return RankOneTensor(4, 0); };
        CHECK_THROWS_AS(domain_diagnostic<RankOneTensor>(sc, bad, 2), ShapeError);
    }
}

TEST_CASE("escape direction", "[qce]") {
    SECTION("martingale case is refused") {
        const auto ctx = build_gram(CovarianceModel::bm(), TimeGrid::uniform(8, 1.0));
        CHECK_THROWS_AS(escape_direction(ShiftContext::unshifted(ctx, 0.5)), MartingaleCaseError);
    }
    SECTION("both strict inequalities against a generalized eigensolve") {
        const auto ctx = build_gram(CovarianceModel::fbm(0.75), TimeGrid::uniform(8, 1.0));
        Matrix pgp = ctx.gram();
        pgp.bottomRows(4).setZero();
        pgp.rightCols(4).setZero();
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(pgp, ctx.gram());
        const double lam = es.eigenvalues().maxCoeff();
        REQUIRE(lam > 1.0);
        std::mt19937_64 rng(47);
        for (const Vector& c : {Vector(Vector::Zero(8)), random_vector(rng, 8)}) {
            const ShiftContext sc(ctx, 0.5, c);
            const Vector fe = escape_direction(sc);
            const double n0 = std::sqrt(ctx.norm2(fe));
            const double n1 = std::sqrt(ctx.norm2(project_past(fe, 4)));
            CHECK(n0 == Catch::Approx(std::pow(lam, -0.25)).epsilon(1e-10));
            CHECK(n1 == Catch::Approx(std::pow(lam, 0.25)).epsilon(1e-10));
            CHECK(n0 < 1.0);
            CHECK(n1 > 1.0);
            CHECK(ctx.inner(fe, sc.c_r()) >= 0.0);
        }
        const Vector f0 = escape_direction(ShiftContext::unshifted(ctx, 0.5));
        CHECK(normalize_sign(f0) == f0);
    }
}
