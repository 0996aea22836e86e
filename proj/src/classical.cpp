#include "nrsfm/classical.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace nrsfm {

namespace {

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d(1, 1, (svd.matrixU() * svd.matrixV().transpose()).determinant());
    return svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
}

// row of the Gram-constraint system for a^T G b with symmetric G
Eigen::Matrix<double, 1, 6> gram_row(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b) {
    Eigen::Matrix<double, 1, 6> row;
    row << a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[2] * b[0], a[1] * b[1],
        a[1] * b[2] + a[2] * b[1], a[2] * b[2];
    return row;
}

}  // namespace

RigidSfmSolution rigid_factorize(const std::vector<KeypointView>& views) {
    const int n = static_cast<int>(views.size());
    if (n < 2) throw std::invalid_argument("rigid_factorize: needs at least 2 views");
    const Eigen::Index k = views.front().keypoints();
    if (k < 3) throw std::invalid_argument("rigid_factorize: needs at least 3 keypoints");
    for (const auto& view : views) {
        if (view.keypoints() != k)
            throw std::invalid_argument("rigid_factorize: ragged keypoint counts");
        if ((view.v.array() <= 0).any())
            throw std::invalid_argument("rigid_factorize: full visibility required");
    }

    // stacked centered observation matrix
    Eigen::MatrixXd y(2 * n, k);
    for (int i = 0; i < n; ++i) {
        Eigen::Matrix2Xd c = views[static_cast<std::size_t>(i)].y;
        const Eigen::Vector2d mean = c.rowwise().mean();
        y.middleRows(2 * i, 2) = c.colwise() - mean;
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv[2] < 1e-9 * sv[0])
        throw DegenerateStructureError(
            "rigid_factorize: observation matrix has rank < 3 (planar or degenerate structure)");

    const Eigen::Vector3d s3 = sv.head<3>();
    const Eigen::Vector3d rs = s3.array().sqrt();
    Eigen::MatrixXd m_affine = svd.matrixU().leftCols(3) * rs.asDiagonal();

    // metric upgrade: solve M_i G M_i^T = I2 in least squares for symmetric G
    Eigen::MatrixXd a(3 * n, 6);
    Eigen::VectorXd b(3 * n);
    for (int i = 0; i < n; ++i) {
        const Eigen::RowVector3d m1 = m_affine.row(2 * i);
        const Eigen::RowVector3d m2 = m_affine.row(2 * i + 1);
        a.row(3 * i) = gram_row(m1, m1);
        b[3 * i] = 1.0;
        a.row(3 * i + 1) = gram_row(m2, m2);
        b[3 * i + 1] = 1.0;
        a.row(3 * i + 2) = gram_row(m1, m2);
        b[3 * i + 2] = 0.0;
    }
    const Eigen::Matrix<double, 6, 1> g = a.colPivHouseholderQr().solve(b);
    Eigen::Matrix3d gram;
    gram << g[0], g[1], g[2], g[1], g[3], g[4], g[2], g[4], g[5];

    Eigen::LLT<Eigen::Matrix3d> llt(gram);
    if (llt.info() != Eigen::Success)
        throw MetricUpgradeError("rigid_factorize: Gram solution not positive definite");
    const Eigen::Matrix3d corr = llt.matrixL();

    Eigen::MatrixXd m_metric = m_affine * corr;

    // complete each view to a rotation
    std::vector<Eigen::Matrix3d> rotations;
    rotations.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d r0 = m_metric.row(2 * i).transpose();
        const Eigen::Vector3d r1 = m_metric.row(2 * i + 1).transpose();
        Eigen::Matrix3d r;
        r.row(0) = r0.transpose();
        r.row(1) = r1.transpose();
        r.row(2) = r0.cross(r1).transpose();
        rotations.push_back(nearest_rotation(r));
    }

    // gauge: rotate everything so the first view matrix is [I2 0]
    const Eigen::Matrix3d q = rotations.front().transpose();
    RigidSfmSolution out;
    out.rotations.reserve(rotations.size());
    out.m_stack.resize(2 * n, 3);
    for (int i = 0; i < n; ++i) {
        const Eigen::Matrix3d ri = rotations[static_cast<std::size_t>(i)] * q;
        out.rotations.push_back(ri);
        out.m_stack.middleRows(2 * i, 2) = ri.topRows<2>();
    }

    // re-solve the structure against the exactly orthonormal view stack
    out.structure = out.m_stack.colPivHouseholderQr().solve(y);
    out.max_residual = (y - out.m_stack * out.structure).cwiseAbs().maxCoeff();
    return out;
}

MonocularFit monocular_fit(const KeypointView& view, const ShapeBasis& basis, int restarts,
                           std::uint64_t seed) {
    const Eigen::Index k = view.keypoints();
    const int d = basis.rank();
    if (basis.keypoints() != k) throw std::invalid_argument("monocular_fit: basis/view mismatch");
    if (2 * k < 6 + d)
        throw std::invalid_argument("monocular_fit: infeasible, needs 2K >= 6 + D");
    std::vector<Eigen::Index> vis;
    for (Eigen::Index i = 0; i < k; ++i)
        if (view.v[i] > 0) vis.push_back(i);
    const int nv = static_cast<int>(vis.size());
    if (2 * nv < 6 + d)
        throw std::invalid_argument("monocular_fit: too few visible keypoints for 6 + D unknowns");
    if (restarts < 1) throw std::invalid_argument("monocular_fit: needs at least one restart");

    Rng rng(mix64(seed, 0x666974));  // "fit"

    // residual builder r(p) and Jacobian for p = [alpha; theta]
    const int np = d + 3;
    const int nr = 2 * nv;
    auto residual = [&](const Eigen::VectorXd& alpha, const Eigen::Vector3d& theta,
                        Eigen::VectorXd& r) {
        const Eigen::Matrix<double, 2, 3> m = camera_view(theta);
        const Eigen::Matrix3Xd x = reconstruct(alpha, basis);
        const Eigen::Matrix2Xd p = m * x;
        for (int i = 0; i < nv; ++i)
            r.segment<2>(2 * i) = view.y.col(vis[static_cast<std::size_t>(i)]) -
                                  p.col(vis[static_cast<std::size_t>(i)]);
    };
    auto jacobian = [&](const Eigen::VectorXd& alpha, const Eigen::Vector3d& theta,
                        Eigen::MatrixXd& jac) {
        const Eigen::Matrix3d rot = rot_expm(theta);
        const Eigen::Matrix<double, 2, 3> m = rot.topRows<2>();
        const Eigen::Matrix3Xd x = reconstruct(alpha, basis);
        const auto drot = rot_expm_jacobian(theta);
        for (int di = 0; di < d; ++di) {
            const Eigen::Matrix2Xd p_d = m * basis.block(di);
            for (int i = 0; i < nv; ++i)
                jac.block<2, 1>(2 * i, di) = -p_d.col(vis[static_cast<std::size_t>(i)]);
        }
        for (int ti = 0; ti < 3; ++ti) {
            const Eigen::Matrix2Xd p_t =
                drot[static_cast<std::size_t>(ti)].topRows<2>() * x;
            for (int i = 0; i < nv; ++i)
                jac.block<2, 1>(2 * i, d + ti) = -p_t.col(vis[static_cast<std::size_t>(i)]);
        }
    };
    // linear least-squares alpha given a fixed rotation
    auto solve_alpha = [&](const Eigen::Vector3d& theta) {
        const Eigen::Matrix<double, 2, 3> m = camera_view(theta);
        Eigen::MatrixXd a(nr, d);
        Eigen::VectorXd b(nr);
        for (int di = 0; di < d; ++di) {
            const Eigen::Matrix2Xd p_d = m * basis.block(di);
            for (int i = 0; i < nv; ++i)
                a.block<2, 1>(2 * i, di) = p_d.col(vis[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < nv; ++i)
            b.segment<2>(2 * i) = view.y.col(vis[static_cast<std::size_t>(i)]);
        return Eigen::VectorXd(a.colPivHouseholderQr().solve(b));
    };

    MonocularFit best;
    double best_cost = std::numeric_limits<double>::infinity();
    Eigen::VectorXd r(nr), r_try(nr);
    Eigen::MatrixXd jac(nr, np);

    for (int restart = 0; restart < restarts; ++restart) {
        Eigen::Vector3d theta =
            restart == 0 ? Eigen::Vector3d::Zero() : so3_log(sample_rotation(rng));
        Eigen::VectorXd alpha = solve_alpha(theta);
        residual(alpha, theta, r);
        double cost = r.squaredNorm();
        double lambda = 1e-3;
        int iter = 0;
        for (; iter < 200; ++iter) {
            jacobian(alpha, theta, jac);
            const Eigen::VectorXd grad = jac.transpose() * r;
            if (grad.lpNorm<Eigen::Infinity>() < 1e-12) break;
            const Eigen::MatrixXd h = jac.transpose() * jac;
            bool stepped = false;
            while (lambda <= 1e12) {
                const Eigen::VectorXd delta =
                    (h + lambda * Eigen::MatrixXd::Identity(np, np)).ldlt().solve(-grad);
                const Eigen::VectorXd alpha_try = alpha + delta.head(d);
                const Eigen::Vector3d theta_try = theta + delta.tail<3>();
                residual(alpha_try, theta_try, r_try);
                const double cost_try = r_try.squaredNorm();
                if (cost_try < cost) {
                    alpha = alpha_try;
                    theta = theta_try;
                    r = r_try;
                    cost = cost_try;
                    lambda = std::max(lambda / 10.0, 1e-12);
                    stepped = true;
                    break;
                }
                lambda *= 10.0;
            }
            if (!stepped) break;  // damping exhausted, restart converged or stuck
        }
        if (cost < best_cost) {
            best_cost = cost;
            best.pose.alpha = alpha;
            best.pose.theta = theta;
            best.iterations = iter;
            best.best_restart = restart;
        }
    }
    if (!std::isfinite(best_cost))
        throw std::runtime_error("monocular_fit: all restarts diverged");
    best.residual = std::sqrt(best_cost / static_cast<double>(nv));
    return best;
}

Eigen::Matrix3d optimal_rotation(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("optimal_rotation: size mismatch");
    const Eigen::Matrix3d h = b * a.transpose();
    return nearest_rotation(h);
}

double aligned_structure_error(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt) {
    const Eigen::Matrix3Xd p = center_structure(pred);
    const Eigen::Matrix3Xd g = center_structure(gt);
    double best = std::numeric_limits<double>::infinity();
    for (int flip = 0; flip < 2; ++flip) {
        Eigen::Matrix3Xd pf = p;
        if (flip) pf.row(2) = -pf.row(2);
        const Eigen::Matrix3d r = optimal_rotation(pf, g);
        best = std::min(best, ((r * pf) - g).colwise().norm().mean());
    }
    return best;
}

FeasibilityReport feasibility_check(int n_views, int keypoints, int basis_rank) {
    if (n_views < 1 || keypoints < 1 || basis_rank < 0)
        throw std::invalid_argument("feasibility_check: invalid arguments");
    const long long n = n_views, k = keypoints, d = basis_rank;
    FeasibilityReport rep;
    rep.constraints = 2 * n * k;
    rep.unknowns = d == 0 ? 6 * n + 3 * k : 6 * n + n * d + 3 * d * k;
    rep.gauge_dof = 9;
    rep.counting_feasible = rep.constraints >= rep.unknowns - rep.gauge_dof;
    rep.monocular_constraints = 2 * k;
    rep.monocular_unknowns = 6 + d;
    rep.keypoint_feasible = rep.monocular_constraints >= rep.monocular_unknowns;
    rep.feasible = d == 0 ? (rep.counting_feasible && k >= 3) : rep.keypoint_feasible;
    return rep;
}

}  // namespace nrsfm
