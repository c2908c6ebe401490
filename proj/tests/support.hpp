#ifndef GAUSSCALC_TEST_SUPPORT_HPP
#define GAUSSCALC_TEST_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace testing_support {

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = nd(rng);
    }
    return v;
}

// Relative error for |want| >= 1, absolute below.
inline double scaled_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace testing_support

#endif
