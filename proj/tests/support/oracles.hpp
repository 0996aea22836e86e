#pragma once

#include <Eigen/Core>

#include <cmath>

#include "nrsfm/rng.hpp"
#include "nrsfm/tensor.hpp"

namespace testsupport {

// Dense matrix exponential via scaling-and-squaring of the Taylor series;
// slow, implementation-independent reference.
inline Eigen::Matrix3d expm_series(const Eigen::Matrix3d& a) {
    int s = 0;
    double norm = a.cwiseAbs().sum();
    while (norm > 0.25) {
        norm /= 2;
        ++s;
    }
    const Eigen::Matrix3d x = a / std::pow(2.0, s);
    Eigen::Matrix3d term = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d sum = Eigen::Matrix3d::Identity();
    for (int k = 1; k <= 40; ++k) {
        term = term * x / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

// CDF of the rotation angle of a Haar-uniform rotation on [0, pi].
inline double haar_angle_cdf(double phi) { return (phi - std::sin(phi)) / M_PI; }

inline nrsfm::Tensor random_tensor(nrsfm::Rng& rng, nrsfm::Shape shape, double lo = -1.0,
                                   double hi = 1.0) {
    nrsfm::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace testsupport
