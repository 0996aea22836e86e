#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

#include "nrsfm/geometry.hpp"
#include "nrsfm/tape.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace nrsfm;

TEST_CASE("hat operator") {
    CHECK(hat(Eigen::Vector3d::Zero()).isZero(0));
    Eigen::Matrix3d expected;
    expected << 0, -1, 0, 1, 0, 0, 0, 0, 0;
    CHECK(hat(Eigen::Vector3d(0, 0, 1)).isApprox(expected, 1e-15));

    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const Eigen::Vector3d w(rng.normal(), rng.normal(), rng.normal());
        const Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
        CHECK((hat(w) * x - w.cross(x)).norm() < 1e-14);
        CHECK((hat(w) * w).norm() < 1e-14);  // cross product with itself
        CHECK((hat(w) + hat(w).transpose()).isZero(1e-15));
    }
    CHECK_THROWS_AS(hat(Eigen::Vector3d(std::nan(""), 0, 0)), std::invalid_argument);
}

TEST_CASE("rot_expm values against the dense series oracle") {
    CHECK(rot_expm(Eigen::Vector3d::Zero()).isIdentity(1e-15));

    Eigen::Matrix3d quarter_z;
    quarter_z << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Eigen::Vector3d tz(0, 0, M_PI / 2);
    CHECK((rot_expm(tz) - quarter_z).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rot_expm(tz) - testsupport::expm_series(hat(tz))).cwiseAbs().maxCoeff() < 1e-12);

    // full turn comes back to the identity
    const Eigen::Vector3d full = 2.0 * M_PI * Eigen::Vector3d(1, 2, 2).normalized();
    CHECK((rot_expm(full) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((rot_expm(full) - testsupport::expm_series(hat(full))).cwiseAbs().maxCoeff() < 1e-9);

    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector3d theta(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
        CHECK((rot_expm(theta) - testsupport::expm_series(hat(theta))).cwiseAbs().maxCoeff() <
              1e-11);
    }
}

TEST_CASE("rot_expm group properties over |theta| in [0, 10]") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        const Eigen::Vector3d theta = rng.uniform(0.0, 10.0) * dir;
        const Eigen::Matrix3d r = rot_expm(theta);
        CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK((r * rot_expm(-theta) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        if (theta.norm() > 1e-8) {
            // the axis is fixed by the rotation
            CHECK((r * theta - theta).norm() < 1e-9 * std::max(1.0, theta.norm()));
        }
    }
}

TEST_CASE("rot_expm gradient near the origin, pi and generic angles") {
    const std::vector<double> norms = {1e-9, 1e-6, 1e-4, 0.1, 1.0, M_PI - 1e-3, M_PI};
    Rng rng(4);
    for (double nrm : norms) {
        for (int rep = 0; rep < 5; ++rep) {
            Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
            dir.normalize();
            const Eigen::Vector3d theta = nrm * dir;
            Tensor t({3}, {theta[0], theta[1], theta[2]});
            Tensor weights = testsupport::random_tensor(rng, {3, 3});
            auto r = testsupport::check_gradients(
                {t}, [&weights](Tape& tape, const std::vector<Var>& v) {
                    return tape.sum(tape.mul(tape.rot_expm(v[0]), tape.constant(weights)));
                });
            CHECK_MESSAGE(r.ok, "|theta|=" << nrm << ": " << r.detail);
        }
    }
}

TEST_CASE("project takes the first two rows") {
    Rng rng(5);
    Eigen::Matrix3Xd x(3, 4);
    for (int i = 0; i < 12; ++i) x(i / 4, i % 4) = rng.normal();
    const Eigen::Matrix2Xd p = project(x);
    CHECK(p.row(0).isApprox(x.row(0), 1e-15));
    CHECK(p.row(1).isApprox(x.row(1), 1e-15));
    CHECK(project(Eigen::Matrix3Xd::Zero(3, 5)).isZero(0));

    // in-plane rotation commutes with projection
    const auto [rz2, rz3] = inplane_rotation(0.7);
    CHECK((project(rz3 * x) - rz2 * project(x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("center_view") {
    KeypointView view;
    view.y.resize(2, 2);
    view.y << 1, 3, 1, 3;
    view.v = Eigen::VectorXd::Ones(2);
    const KeypointView c = center_view(view);
    CHECK(c.y(0, 0) == doctest::Approx(-1.0));
    CHECK(c.y(0, 1) == doctest::Approx(1.0));
    CHECK(c.y(1, 0) == doctest::Approx(-1.0));
    CHECK(c.y(1, 1) == doctest::Approx(1.0));

    SUBCASE("all points at the same location center to zero") {
        view.y << 2, 2, 5, 5;
        CHECK(center_view(view).y.isZero(1e-15));
    }
    SUBCASE("mixed visibility: statistics over the visible subset, idempotent") {
        KeypointView m;
        m.y.resize(2, 4);
        m.y << 1, 2, 9, 4, 0, 1, 9, 3;
        m.v.resize(4);
        m.v << 1, 1, 0, 1;
        m.y.col(2).setZero();  // invisible coordinates are zero by convention
        const KeypointView c1 = center_view(m);
        // statistics recomputed directly over the visible subset
        Eigen::Vector2d mean = (m.y.col(0) + m.y.col(1) + m.y.col(3)) / 3.0;
        for (int i : {0, 1, 3})
            CHECK((c1.y.col(i) - (m.y.col(i) - mean)).norm() < 1e-14);
        CHECK(c1.y.col(2).isZero(0));
        CHECK(c1.v[2] == 0.0);
        const KeypointView c2 = center_view(c1);
        CHECK((c2.y - c1.y).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("no visible points is an error") {
        view.v.setZero();
        CHECK_THROWS_AS(center_view(view), std::invalid_argument);
    }
}

TEST_CASE("center_structure") {
    Eigen::Matrix3Xd single(3, 1);
    single << 1, 2, 3;
    CHECK(center_structure(single).isZero(1e-15));

    Rng rng(6);
    Eigen::Matrix3Xd x(3, 6);
    for (int i = 0; i < 18; ++i) x(i / 6, i % 6) = rng.normal();
    const Eigen::Matrix3Xd c = center_structure(x);
    CHECK(c.rowwise().mean().norm() < 1e-14);
    CHECK((center_structure(c) - c).cwiseAbs().maxCoeff() < 1e-15);

    // centering commutes with rotation
    Rng rr(7);
    const Eigen::Matrix3d r = sample_rotation(rr);
    CHECK((center_structure(r * x) - r * center_structure(x)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("centering lemma on rigid data with translation") {
    Rng rng(8);
    for (int inst = 0; inst < 100; ++inst) {
        const int k = 5 + static_cast<int>(rng.uniform_int(6));
        Eigen::Matrix3Xd x(3, k);
        for (int i = 0; i < 3 * k; ++i) x(i % 3, i / 3) = rng.normal();
        const Eigen::Matrix3d r = sample_rotation(rng);
        const Eigen::Vector3d t(rng.normal(), rng.normal(), rng.normal());
        // y = Pi R x + Pi T, translation nonzero
        const Eigen::Matrix2Xd y = (r * x).topRows<2>().colwise() + t.head<2>();

        // centered equations hold
        const Eigen::Matrix2Xd y_bar = y.colwise() - Eigen::Vector2d(y.rowwise().mean());
        const Eigen::Matrix3Xd x_bar = center_structure(x);
        const double residual = (y_bar - (r * x_bar).topRows<2>()).cwiseAbs().maxCoeff();
        CHECK(residual < 1e-10);

        // and fail to hold when the uncentered equations are perturbed
        Eigen::Matrix2Xd y_broken = y;
        y_broken(0, 0) += 0.5;
        const Eigen::Matrix2Xd yb_bar =
            y_broken.colwise() - Eigen::Vector2d(y_broken.rowwise().mean());
        CHECK((yb_bar - (r * x_bar).topRows<2>()).cwiseAbs().maxCoeff() > 1e-3);
    }
}

TEST_CASE("sample_rotation is Haar on SO(3)") {
    Rng rng(9);
    const int n = 10000;
    double trace_sum = 0;
    for (int i = 0; i < n; ++i) {
        const Eigen::Matrix3d r = sample_rotation(rng);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-10));
        if (i < 500)
            CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
                  1e-10);
        trace_sum += r.trace();
    }
    // Haar expectation of the trace is 0; light version of the acceptance test
    CHECK(std::abs(trace_sum / n) < 0.05);
}

TEST_CASE("sample_inplane_rotation") {
    const auto [i2, i3] = inplane_rotation(0.0);
    CHECK(i2.isIdentity(1e-15));
    CHECK(i3.isIdentity(1e-15));

    const auto [q2, q3] = inplane_rotation(M_PI / 2);
    Eigen::Matrix2d expected;
    expected << 0, -1, 1, 0;
    CHECK((q2 - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(q3.topLeftCorner<2, 2>().isApprox(q2, 1e-15));
    CHECK(q3(2, 2) == 1.0);

    Rng rng(10);
    for (int i = 0; i < 20; ++i) {
        const auto [r2, r3] = sample_inplane_rotation(rng);
        Eigen::Matrix3Xd x(3, 5);
        for (int j = 0; j < 15; ++j) x(j % 3, j / 3) = rng.normal();
        CHECK((project(r3 * x) - r2 * project(x)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("so3_log inverts rot_expm") {
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Matrix3d r = sample_rotation(rng);
        CHECK((rot_expm(so3_log(r)) - r).cwiseAbs().maxCoeff() < 1e-9);
    }
}
