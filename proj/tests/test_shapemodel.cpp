#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nrsfm/shape_model.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace nrsfm;

namespace {

ShapeBasis random_basis(Rng& rng, int d, int k) {
    ShapeBasis b;
    b.s.resize(3 * d, k);
    for (int i = 0; i < b.s.size(); ++i) b.s(i % b.s.rows(), i / b.s.rows()) = rng.normal();
    return b;
}

}  // namespace

TEST_CASE("reconstruct basics") {
    Rng rng(1);
    const ShapeBasis b1 = random_basis(rng, 1, 6);
    Eigen::VectorXd one(1);
    one << 1.0;
    CHECK(reconstruct(one, b1).isApprox(b1.block(0), 1e-15));

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    CHECK(reconstruct(zero, b1).isZero(0));

    // D=2 case against an independent per-point loop
    const ShapeBasis b2 = random_basis(rng, 2, 5);
    Eigen::VectorXd alpha(2);
    alpha << 2.0, -1.0;
    const Eigen::Matrix3Xd x = reconstruct(alpha, b2);
    for (int k = 0; k < 5; ++k)
        for (int r = 0; r < 3; ++r) {
            const double expected = 2.0 * b2.s(r, k) - 1.0 * b2.s(3 + r, k);
            CHECK(x(r, k) == doctest::Approx(expected).epsilon(1e-14));
        }

    Eigen::VectorXd bad(3);
    bad.setZero();
    CHECK_THROWS_AS(reconstruct(bad, b2), std::invalid_argument);
}

TEST_CASE("reconstruct is linear in alpha") {
    Rng rng(2);
    const ShapeBasis b = random_basis(rng, 4, 7);
    Eigen::VectorXd a1(4), a2(4);
    for (int i = 0; i < 4; ++i) {
        a1[i] = rng.normal();
        a2[i] = rng.normal();
    }
    CHECK((reconstruct(a1 + a2, b) - reconstruct(a1, b) - reconstruct(a2, b))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("tape reconstruct matches the numeric path and is differentiable") {
    Rng rng(3);
    const int d = 3, k = 4;
    const ShapeBasis basis = random_basis(rng, d, k);
    Eigen::VectorXd alpha(d);
    for (int i = 0; i < d; ++i) alpha[i] = rng.normal();

    Tensor alpha_t({1, static_cast<std::size_t>(d)});
    for (int i = 0; i < d; ++i) alpha_t[static_cast<std::size_t>(i)] = alpha[i];
    Tensor basis_t = Tensor::from_matrix(basis.s);

    Tape tape;
    Var va = tape.leaf(alpha_t);
    Var vb = tape.leaf(basis_t);
    Var bm = basis_matrix(tape, vb, d, k);
    Var x = reconstruct_on_tape(tape, va, bm, k);
    const Eigen::Matrix3Xd expected = reconstruct(alpha, basis);
    CHECK((tape.value(x).mat() - expected).cwiseAbs().maxCoeff() < 1e-13);

    Tensor w = testsupport::random_tensor(rng, {3, static_cast<std::size_t>(k)});
    auto r = testsupport::check_gradients(
        {alpha_t, basis_t}, [&](Tape& t, const std::vector<Var>& v) {
            Var m = basis_matrix(t, v[1], d, k);
            Var xx = reconstruct_on_tape(t, v[0], m, k);
            return t.sum(t.mul(xx, t.constant(w)));
        });
    CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("camera_view") {
    Eigen::Matrix<double, 2, 3> expected;
    expected << 1, 0, 0, 0, 1, 0;
    CHECK((camera_view(Eigen::Vector3d::Zero()) - expected).cwiseAbs().maxCoeff() < 1e-15);

    Eigen::Matrix<double, 2, 3> quarter;
    quarter << 0, -1, 0, 1, 0, 0;
    CHECK((camera_view(Eigen::Vector3d(0, 0, M_PI / 2)) - quarter).cwiseAbs().maxCoeff() < 1e-12);

    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector3d theta(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
        const auto m = camera_view(theta);
        CHECK((m * m.transpose() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("multiclass padding") {
    const MulticlassLayout layout = MulticlassLayout::from_counts({2, 2});
    KeypointView view;
    view.y.resize(2, 2);
    view.y << 1, 2, 3, 4;
    view.v.resize(2);
    view.v << 1, 0;
    view.y.col(1).setZero();

    const KeypointView padded = pad_multiclass(view, 0, layout);
    CHECK(padded.keypoints() == 4);
    CHECK(padded.y(0, 0) == 1.0);
    CHECK(padded.y(1, 0) == 3.0);
    CHECK(padded.y.col(2).isZero(0));
    CHECK(padded.y.col(3).isZero(0));
    CHECK(padded.v[2] == 0.0);
    CHECK(padded.v[3] == 0.0);
    CHECK(padded.v.sum() == doctest::Approx(view.v.sum()));

    const KeypointView back = extract_class(padded, 0, layout);
    CHECK((back.y - view.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.v - view.v).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(pad_multiclass(view, 2, layout), std::out_of_range);
    KeypointView wrong;
    wrong.y.resize(2, 3);
    wrong.y.setZero();
    wrong.v = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(pad_multiclass(wrong, 0, layout), std::invalid_argument);
}
