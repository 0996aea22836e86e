#include "nrsfm/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace nrsfm {

namespace rodrigues {

Coeffs coeffs(double t) {
    Coeffs c;
    if (t < 1e-8) {
        // a = 1 - t/6 + t^2/120, b = 1/2 - t/24 + t^2/720
        c.a = 1.0 - t / 6.0 + t * t / 120.0;
        c.b = 0.5 - t / 24.0 + t * t / 720.0;
        c.da = -1.0 / 6.0 + t / 60.0 - t * t / 1680.0;
        c.db = -1.0 / 24.0 + t / 360.0 - t * t / 13440.0;
    } else {
        const double r = std::sqrt(t);
        const double sr = std::sin(r);
        const double cr = std::cos(r);
        c.a = sr / r;
        c.b = (1.0 - cr) / t;
        c.da = (r * cr - sr) / (2.0 * t * r);
        c.db = (r * sr - 2.0 * (1.0 - cr)) / (2.0 * t * t);
    }
    return c;
}

}  // namespace rodrigues

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
    if (!w.allFinite()) throw std::invalid_argument("hat: non-finite input");
    Eigen::Matrix3d m;
    m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return m;
}

Eigen::Matrix3d rot_expm(const Eigen::Vector3d& theta) {
    if (!theta.allFinite()) throw std::invalid_argument("rot_expm: non-finite input");
    const double t = theta.squaredNorm();
    const auto c = rodrigues::coeffs(t);
    const Eigen::Matrix3d w = hat(theta);
    return Eigen::Matrix3d::Identity() + c.a * w + c.b * (w * w);
}

std::array<Eigen::Matrix3d, 3> rot_expm_jacobian(const Eigen::Vector3d& theta) {
    const double t = theta.squaredNorm();
    const auto c = rodrigues::coeffs(t);
    const Eigen::Matrix3d w = hat(theta);
    const Eigen::Matrix3d w2 = w * w;
    std::array<Eigen::Matrix3d, 3> jac;
    for (int i = 0; i < 3; ++i) {
        const Eigen::Matrix3d ei = hat(Eigen::Vector3d::Unit(i));
        const double dt = 2.0 * theta[i];
        jac[i] = c.da * dt * w + c.a * ei + c.db * dt * w2 + c.b * (ei * w + w * ei);
    }
    return jac;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
    const double tr = r.trace();
    const double cos_phi = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
    const double phi = std::acos(cos_phi);
    Eigen::Vector3d axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    if (phi < 1e-7) return 0.5 * axis;
    if (M_PI - phi < 1e-5) {
        // near pi the antisymmetric part vanishes; recover the axis from R + I
        const Eigen::Matrix3d s = 0.5 * (r + Eigen::Matrix3d::Identity());
        Eigen::Vector3d n;
        int k;
        s.diagonal().maxCoeff(&k);
        n = s.col(k) / std::sqrt(s(k, k));
        // fix the sign using the antisymmetric part when it is not exactly zero
        if (axis.dot(n) < 0) n = -n;
        return phi * n;
    }
    return (0.5 * phi / std::sin(phi)) * axis;
}

Eigen::Matrix2Xd project(const Eigen::Matrix3Xd& x) { return x.topRows<2>(); }

KeypointView center_view(const KeypointView& view) {
    const Eigen::Index k = view.keypoints();
    if (view.v.size() != k) throw std::invalid_argument("center_view: visibility length mismatch");
    double nvis = 0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (view.v[i] > 0) {
            mean += view.y.col(i);
            nvis += 1;
        }
    }
    if (nvis == 0) throw std::invalid_argument("center_view: no visible keypoints");
    mean /= nvis;
    KeypointView out;
    out.y = Eigen::Matrix2Xd::Zero(2, k);
    out.v = view.v;
    for (Eigen::Index i = 0; i < k; ++i)
        if (view.v[i] > 0) out.y.col(i) = view.y.col(i) - mean;
    return out;
}

Eigen::Matrix3Xd center_structure(const Eigen::Matrix3Xd& x) {
    return x.colwise() - Eigen::Vector3d(x.rowwise().mean());
}

Eigen::Matrix3d sample_rotation(Rng& rng) {
    Eigen::Vector4d q;
    for (int i = 0; i < 4; ++i) q[i] = rng.normal();
    q.normalize();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

std::pair<Eigen::Matrix2d, Eigen::Matrix3d> inplane_rotation(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix2d rz2;
    rz2 << c, -s, s, c;
    Eigen::Matrix3d rz3 = Eigen::Matrix3d::Identity();
    rz3.topLeftCorner<2, 2>() = rz2;
    return {rz2, rz3};
}

std::pair<Eigen::Matrix2d, Eigen::Matrix3d> sample_inplane_rotation(Rng& rng) {
    return inplane_rotation(rng.uniform(0.0, 2.0 * M_PI));
}

}  // namespace nrsfm
