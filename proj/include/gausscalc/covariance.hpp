#ifndef GAUSSCALC_COVARIANCE_HPP
#define GAUSSCALC_COVARIANCE_HPP

/**
 * @file covariance.hpp
 * @brief Covariance models, time grids and increment Gram matrices.
 *
 * Everything downstream works in the increment basis: coordinate i stands
 * for X(t_i) - X(t_{i-1}), so 1_(0,t_i] is the vector (1,...,1,0,...,0).
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gausscalc/error.hpp"

namespace gausscalc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) {
            throw ParameterError("TimeGrid needs at least two points");
        }
        if (points_.front() != 0.0) {
            throw ParameterError("TimeGrid must start at 0");
        }
        for (std::size_t i = 1; i < points_.size(); ++i) {
            if (!(points_[i] > points_[i - 1]) || !std::isfinite(points_[i])) {
                throw ParameterError("TimeGrid points must be finite and strictly increasing");
            }
        }
    }

    static TimeGrid uniform(std::size_t n, double T) {
        if (n == 0 || !(T > 0.0)) {
            throw ParameterError("uniform grid needs n >= 1 and T > 0");
        }
        std::vector<double> p(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            p[i] = T * static_cast<double>(i) / static_cast<double>(n);
        }
        p[n] = T;
        return TimeGrid(std::move(p));
    }

    /// Splits every cell into k equal subcells.
    TimeGrid refine(std::size_t k) const {
        if (k == 0) {
            throw ParameterError("refinement factor must be positive");
        }
        std::vector<double> p{0.0};
        for (std::size_t i = 1; i < points_.size(); ++i) {
            const double a = points_[i - 1];
            const double b = points_[i];
            for (std::size_t j = 1; j < k; ++j) {
                p.push_back(a + (b - a) * static_cast<double>(j) / static_cast<double>(k));
            }
            p.push_back(b);
        }
        return TimeGrid(std::move(p));
    }

    /// Number of increments N.
    std::size_t size() const { return points_.size() - 1; }
    double T() const { return points_.back(); }
    double operator[](std::size_t i) const { return points_[i]; }
    const std::vector<double>& points() const { return points_; }

    /// Index m with t_m == t up to a relative tolerance of 1e-12.
    std::size_t index_of(double t) const {
        const double tol = 1e-12 * T();
        auto it = std::lower_bound(points_.begin(), points_.end(), t - tol);
        if (it != points_.end() && std::abs(*it - t) <= tol) {
            return static_cast<std::size_t>(it - points_.begin());
        }
        throw GridAlignmentError("time " + std::to_string(t) + " is not a grid point");
    }

    bool contains(double t) const {
        try {
            index_of(t);
            return true;
        } catch (const GridAlignmentError&) {
            return false;
        }
    }

private:
    std::vector<double> points_;
};

class CovarianceModel;

namespace detail {

struct BmModel {};

struct FbmModel {
    double H;
};

struct WeightedFbmModel {
    double H;
    std::vector<double> breaks;  ///< 0 = b_0 < ... < b_n; sigma_i holds on (b_{i-1}, b_i]
    std::vector<double> sigma;   ///< last value is extended beyond b_n
};

struct SumModel {
    std::shared_ptr<const CovarianceModel> first;
    std::shared_ptr<const CovarianceModel> second;
    double gamma;
};

inline double fbm_increment_cov(double H, double a1, double b1, double a2, double b2) {
    const double h2 = 2.0 * H;
    auto p = [h2](double x) { return std::pow(std::abs(x), h2); };
    return 0.5 * (p(b1 - a2) + p(a1 - b2) - p(b1 - b2) - p(a1 - a2));
}

}  // namespace detail

/// Covariance of a centered Gaussian process with X_0 = 0.
class CovarianceModel {
public:
    using Variant = std::variant<detail::BmModel, detail::FbmModel, detail::WeightedFbmModel,
                                 detail::SumModel>;

    static CovarianceModel bm() { return CovarianceModel(detail::BmModel{}); }

    static CovarianceModel fbm(double H) {
        check_hurst(H);
        return CovarianceModel(detail::FbmModel{H});
    }

    /// X_t = int_0^t sigma dB^H for a step function sigma, H > 1/2.
    static CovarianceModel weighted_fbm(double H, std::vector<double> breaks,
                                        std::vector<double> sigma) {
        check_hurst(H);
        if (!(H > 0.5)) {
            throw ParameterError("weighted_fbm is only defined for H > 1/2");
        }
        if (breaks.size() != sigma.size() + 1 || sigma.empty()) {
            throw ParameterError("weighted_fbm needs one sigma value per break interval");
        }
        if (breaks.front() != 0.0) {
            throw ParameterError("weighted_fbm breaks must start at 0");
        }
        for (std::size_t i = 1; i < breaks.size(); ++i) {
            if (!(breaks[i] > breaks[i - 1])) {
                throw ParameterError("weighted_fbm breaks must be strictly increasing");
            }
        }
        for (double s : sigma) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw ParameterError("weighted_fbm sigma must be positive and finite");
            }
        }
        return CovarianceModel(detail::WeightedFbmModel{H, std::move(breaks), std::move(sigma)});
    }

    /// X = X1 + gamma X2 with X1, X2 independent.
    static CovarianceModel sum(const CovarianceModel& first, const CovarianceModel& second,
                               double gamma) {
        if (gamma == 0.0 || !std::isfinite(gamma)) {
            throw ParameterError("sum model needs a finite nonzero gamma");
        }
        return CovarianceModel(detail::SumModel{std::make_shared<const CovarianceModel>(first),
                                                std::make_shared<const CovarianceModel>(second),
                                                gamma});
    }

    const Variant& variant() const { return v_; }

    /// True iff the model has independent increments.
    bool is_martingale() const {
        return std::visit(
            [](const auto& m) -> bool {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, detail::BmModel>) {
                    return true;
                } else if constexpr (std::is_same_v<M, detail::FbmModel>) {
                    return m.H == 0.5;
                } else if constexpr (std::is_same_v<M, detail::WeightedFbmModel>) {
                    return false;
                } else {
                    return m.first->is_martingale() && m.second->is_martingale();
                }
            },
            v_);
    }

    std::string describe() const {
        return std::visit(
            [](const auto& m) -> std::string {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, detail::BmModel>) {
                    return "bm";
                } else if constexpr (std::is_same_v<M, detail::FbmModel>) {
                    return "fbm(H=" + std::to_string(m.H) + ")";
                } else if constexpr (std::is_same_v<M, detail::WeightedFbmModel>) {
                    return "weighted_fbm(H=" + std::to_string(m.H) + ")";
                } else {
                    return "sum(" + m.first->describe() + ", " + m.second->describe() +
                           ", gamma=" + std::to_string(m.gamma) + ")";
                }
            },
            v_);
    }

    /// E[(X_b1 - X_a1)(X_b2 - X_a2)] for a1 <= b1, a2 <= b2.
    double increment_covariance(double a1, double b1, double a2, double b2) const {
        return std::visit(
            [&](const auto& m) -> double {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, detail::BmModel>) {
                    return std::max(0.0, std::min(b1, b2) - std::max(a1, a2));
                } else if constexpr (std::is_same_v<M, detail::FbmModel>) {
                    return detail::fbm_increment_cov(m.H, a1, b1, a2, b2);
                } else if constexpr (std::is_same_v<M, detail::WeightedFbmModel>) {
                    return weighted_increment_cov(m, a1, b1, a2, b2);
                } else {
                    return m.first->increment_covariance(a1, b1, a2, b2) +
                           m.gamma * m.gamma * m.second->increment_covariance(a1, b1, a2, b2);
                }
            },
            v_);
    }

private:
    explicit CovarianceModel(Variant v) : v_(std::move(v)) {}

    static void check_hurst(double H) {
        if (!(H > 0.0 && H < 1.0)) {
            throw ParameterError("Hurst parameter must lie in (0,1)");
        }
    }

    // Pieces of (a,b] on which sigma is constant, as (lo, hi, sigma).
    static std::vector<std::array<double, 3>> pieces(const detail::WeightedFbmModel& m, double a,
                                                     double b) {
        std::vector<std::array<double, 3>> out;
        const std::size_t n = m.sigma.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double lo = std::max(a, m.breaks[i]);
            const double hi = (i + 1 == n) ? b : std::min(b, m.breaks[i + 1]);
            if (hi > lo) {
                out.push_back({lo, hi, m.sigma[i]});
            }
        }
        return out;
    }

    static double weighted_increment_cov(const detail::WeightedFbmModel& m, double a1, double b1,
                                         double a2, double b2) {
        const auto p1 = pieces(m, a1, b1);
        const auto p2 = pieces(m, a2, b2);
        double s = 0.0;
        for (const auto& u : p1) {
            for (const auto& v : p2) {
                s += u[2] * v[2] * detail::fbm_increment_cov(m.H, u[0], u[1], v[0], v[1]);
            }
        }
        return s;
    }

    Variant v_;
};

/// R(s,t) of the model.
inline double covariance_eval(const CovarianceModel& model, double s, double t) {
    if (!(s >= 0.0) || !(t >= 0.0)) {
        throw ParameterError("covariance_eval needs nonnegative times");
    }
    return model.increment_covariance(0.0, s, 0.0, t);
}

struct GramOptions {
    double cond_cap = 1e12;  ///< above this the context is flagged ill-conditioned
};

/**
 * Increment Gram matrix of a model on a grid, with its floored symmetric
 * eigendecomposition. Immutable after construction.
 */
class GramContext {
public:
    GramContext(CovarianceModel model, TimeGrid grid, GramOptions opts = {})
        : model_(std::move(model)), grid_(std::move(grid)) {
        const std::size_t n = grid_.size();
        G_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = model_.increment_covariance(grid_[i], grid_[i + 1], grid_[j],
                                                             grid_[j + 1]);
                G_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
                G_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
            }
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(G_);
        if (es.info() != Eigen::Success) {
            throw ConditioningError("eigendecomposition of the Gram matrix failed");
        }
        const double floor = 1e-10 * G_.trace() / static_cast<double>(n);
        evals_ = es.eigenvalues();
        evecs_ = es.eigenvectors();
        for (Eigen::Index i = 0; i < evals_.size(); ++i) {
            if (evals_(i) < -floor) {
                throw ParameterError("Gram matrix has a negative eigenvalue below the floor: "
                                     "model and grid are inconsistent");
            }
            evals_(i) = std::max(0.0, evals_(i));
        }
        const double lmax = evals_.maxCoeff();
        const double lmin = evals_.minCoeff();
        cond_ = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
        ill_conditioned_ = cond_ > opts.cond_cap;
        positive_definite_ = lmin > 0.0 && cond_ < 1e15;
        sample_factor_ = evecs_ * evals_.cwiseSqrt().asDiagonal();
        if (positive_definite_) {
            whiten_ = evecs_ * evals_.cwiseSqrt().cwiseInverse().asDiagonal();
            inverse_ = evecs_ * evals_.cwiseInverse().asDiagonal() * evecs_.transpose();
        }
    }

    const CovarianceModel& model() const { return model_; }
    const TimeGrid& grid() const { return grid_; }
    std::size_t size() const { return grid_.size(); }
    const Matrix& gram() const { return G_; }
    const Vector& eigenvalues() const { return evals_; }
    const Matrix& eigenvectors() const { return evecs_; }
    double cond_estimate() const { return cond_; }
    bool ill_conditioned() const { return ill_conditioned_; }
    bool positive_definite() const { return positive_definite_; }

    /// L with L L^T = G (floored), used for sampling.
    const Matrix& sample_factor() const { return sample_factor_; }

    /// W with W^T G W = I.
    const Matrix& whitening() const {
        require_pd();
        return whiten_;
    }

    const Matrix& inverse() const {
        require_pd();
        return inverse_;
    }

    double inner(const Vector& x, const Vector& y) const {
        check(x);
        check(y);
        return x.dot(G_ * y);
    }

    double norm2(const Vector& x) const { return inner(x, x); }

    void check(const Vector& x) const {
        if (static_cast<std::size_t>(x.size()) != size()) {
            throw ShapeError("coefficient vector length does not match the grid");
        }
    }

    void require_pd() const {
        if (!positive_definite_) {
            throw ConditioningError("Gram matrix is singular beyond the eigenvalue floor");
        }
    }

private:
    CovarianceModel model_;
    TimeGrid grid_;
    Matrix G_;
    Vector evals_;
    Matrix evecs_;
    Matrix sample_factor_;
    Matrix whiten_;
    Matrix inverse_;
    double cond_ = 0.0;
    bool ill_conditioned_ = false;
    bool positive_definite_ = false;
};

inline GramContext build_gram(const CovarianceModel& model, const TimeGrid& grid,
                              GramOptions opts = {}) {
    return GramContext(model, grid, opts);
}

/// n_paths x N matrix of independent increment vectors; deterministic in seed.
inline Matrix sample_increments(const GramContext& ctx, std::size_t n_paths, std::uint64_t seed) {
    const auto n = static_cast<Eigen::Index>(ctx.size());
    Matrix out(static_cast<Eigen::Index>(n_paths), n);
    if (n_paths == 0) {
        return out;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(static_cast<Eigen::Index>(n_paths), n);
    for (Eigen::Index p = 0; p < z.rows(); ++p) {
        for (Eigen::Index i = 0; i < n; ++i) {
            z(p, i) = normal(rng);
        }
    }
    out.noalias() = z * ctx.sample_factor().transpose();
    return out;
}

}  // namespace gausscalc

#endif  // GAUSSCALC_COVARIANCE_HPP
