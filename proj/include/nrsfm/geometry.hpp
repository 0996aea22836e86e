#pragma once

#include <Eigen/Core>

#include <array>
#include <utility>

#include "nrsfm/rng.hpp"

namespace nrsfm {

// One 2D observation: keypoint matrix y (2xK) and 0/1 visibility flags v (K).
// Invisible keypoints carry zeroed coordinates by convention.
struct KeypointView {
    Eigen::Matrix2Xd y;
    Eigen::VectorXd v;

    Eigen::Index keypoints() const { return y.cols(); }
    double visible_count() const { return v.sum(); }
};

namespace rodrigues {

// Coefficients of R = I + a(t) W + b(t) W^2 with W = hat(theta), t = |theta|^2.
// a = sin(r)/r, b = (1-cos r)/r^2 evaluated as functions of t. The Taylor
// branch below t = 1e-8 (|theta| < 1e-4) removes the 0/0 singularity and the
// catastrophic cancellation in the derivative coefficients near the origin;
// at the switch point the series error is below double rounding.
struct Coeffs {
    double a, b;    // values
    double da, db;  // derivatives w.r.t. t
};

Coeffs coeffs(double t);

}  // namespace rodrigues

// Cross-product (skew) matrix: hat(w) * x == w x x.
Eigen::Matrix3d hat(const Eigen::Vector3d& omega);

// Exponential map of so(3) via the closed-form Rodrigues formula.
Eigen::Matrix3d rot_expm(const Eigen::Vector3d& theta);

// d rot_expm / d theta_i, exact closed form (series branch near the origin).
std::array<Eigen::Matrix3d, 3> rot_expm_jacobian(const Eigen::Vector3d& theta);

// Log map: axis-angle vector of a rotation matrix, |result| in [0, pi].
Eigen::Vector3d so3_log(const Eigen::Matrix3d& r);

// Orthographic projection: first two rows of the structure.
Eigen::Matrix2Xd project(const Eigen::Matrix3Xd& x);

// Zero-center the visible keypoints; invisible columns are forced to zero.
// Throws std::invalid_argument when no point is visible.
KeypointView center_view(const KeypointView& view);

// Subtract the column mean.
Eigen::Matrix3Xd center_structure(const Eigen::Matrix3Xd& x);

// Haar-uniform rotation via a normalized 4D Gaussian quaternion.
Eigen::Matrix3d sample_rotation(Rng& rng);

// Rotation about the optical (z) axis, angle uniform on [0, 2*pi).
// Returns the 2x2 keypoint rotation and the matching 3x3 structure rotation.
std::pair<Eigen::Matrix2d, Eigen::Matrix3d> sample_inplane_rotation(Rng& rng);

std::pair<Eigen::Matrix2d, Eigen::Matrix3d> inplane_rotation(double angle);

}  // namespace nrsfm
