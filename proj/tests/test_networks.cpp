#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nrsfm/networks.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace nrsfm;

namespace {

TrunkConfig tiny_trunk() {
    TrunkConfig cfg;
    cfg.num_blocks = 2;
    cfg.outer = 16;
    cfg.bottleneck = 8;
    return cfg;
}

KeypointView zero_view(int k) {
    KeypointView v;
    v.y = Eigen::Matrix2Xd::Zero(2, k);
    v.v = Eigen::VectorXd::Ones(k);
    return v;
}

}  // namespace

TEST_CASE("init determinism") {
    const ModelWeights a = init_weights(123, 5, 3, tiny_trunk());
    const ModelWeights b = init_weights(123, 5, 3, tiny_trunk());
    const ModelWeights c = init_weights(124, 5, 3, tiny_trunk());
    auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool all_equal = true, any_differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        all_equal = all_equal && (*pa[i].second == *pb[i].second);
        any_differs = any_differs || !(*pa[i].second == *pc[i].second);
    }
    CHECK(all_equal);
    CHECK(any_differs);
}

TEST_CASE("near-zero heads give near-zero pose at initialization") {
    ModelWeights w = init_weights(7, 8, 4, tiny_trunk());
    Rng rng(3);
    KeypointView view = zero_view(8);
    for (Eigen::Index i = 0; i < 8; ++i) {
        view.y(0, i) = rng.normal();
        view.y(1, i) = rng.normal();
    }
    view.y = view.y.colwise() - Eigen::Vector2d(view.y.rowwise().mean());  // centered input
    const PoseEstimate pose = phi_eval(view, w);
    CHECK(pose.theta.norm() < 0.2);
    CHECK(pose.alpha.norm() < 0.5);
}

TEST_CASE("residual identity: zeroed blocks leave the embedding unchanged") {
    ModelWeights w = init_weights(11, 2, 6, tiny_trunk());
    for (auto& block : w.phi_trunk.blocks) {
        block.lin1.w.vec().setZero();
        block.lin1.b.vec().setZero();
        block.lin2.w.vec().setZero();
        block.lin2.b.vec().setZero();
        block.lin3.w.vec().setZero();
        block.lin3.b.vec().setZero();
    }
    Rng rng(4);
    Tensor input = testsupport::random_tensor(rng, {3, 6});
    for (bool training : {false, true}) {
        Tape tape;
        BoundModel model = BoundModel::bind(tape, w);
        Var in = tape.constant(input);
        Var h = trunk_forward(tape, in, model.phi_trunk, w.trunk, training);
        Var embed = tape.add_rowvec(tape.matmul(tape.constant(input), model.phi_trunk.embed.w),
                                    model.phi_trunk.embed.b);
        CHECK((tape.value(h).mat() - tape.value(embed).mat()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("eval-mode forward is a pure function") {
    ModelWeights w = init_weights(21, 6, 3, tiny_trunk());
    Rng rng(5);
    KeypointView view = zero_view(6);
    for (Eigen::Index i = 0; i < 6; ++i) {
        view.y(0, i) = rng.normal();
        view.y(1, i) = rng.normal();
    }
    const PoseEstimate p1 = phi_eval(view, w);
    const PoseEstimate p2 = phi_eval(view, w);
    CHECK(p1.alpha == p2.alpha);
    CHECK(p1.theta == p2.theta);
}

TEST_CASE("any visibility pattern with one visible point stays finite") {
    ModelWeights w = init_weights(33, 5, 4, tiny_trunk());
    Rng rng(6);
    for (int pattern = 1; pattern < 32; ++pattern) {
        KeypointView view = zero_view(5);
        for (int i = 0; i < 5; ++i) {
            if (pattern & (1 << i)) {
                view.y(0, i) = rng.normal();
                view.y(1, i) = rng.normal();
            } else {
                view.v[i] = 0;
            }
        }
        const PoseEstimate pose = phi_eval(view, w);
        CHECK(pose.alpha.allFinite());
        CHECK(pose.theta.allFinite());
    }
}

TEST_CASE("psi output has basis-rank coefficients and is deterministic") {
    ModelWeights w = init_weights(9, 7, 5, tiny_trunk());
    Rng rng(7);
    Eigen::Matrix3Xd x(3, 7);
    for (int i = 0; i < 21; ++i) x(i % 3, i / 3) = rng.normal();
    const Eigen::VectorXd a1 = psi_eval(x, w);
    const Eigen::VectorXd a2 = psi_eval(x, w);
    CHECK(a1.size() == 5);
    CHECK(a1 == a2);
}

TEST_CASE("golden regression: all-zero input under seed 1234") {
    ModelWeights w = init_weights(1234, 4, 2, tiny_trunk());
    const PoseEstimate pose = phi_eval(zero_view(4), w);
    CHECK(pose.alpha.allFinite());
    CHECK(pose.theta.allFinite());
    // frozen from the first run of this configuration
    CHECK(pose.alpha[0] == doctest::Approx(-0.0010433235475873161).epsilon(1e-12));
    CHECK(pose.alpha[1] == doctest::Approx(-0.0070290042469430582).epsilon(1e-12));
    CHECK(pose.theta[0] == doctest::Approx(-0.0088944466347725664).epsilon(1e-12));
    CHECK(pose.theta[1] == doctest::Approx(-0.0071352574669652398).epsilon(1e-12));
    CHECK(pose.theta[2] == doctest::Approx(-0.0054338336192752065).epsilon(1e-12));
}

TEST_CASE("network output gradients w.r.t. weights pass finite differences") {
    TrunkConfig cfg;
    cfg.num_blocks = 1;
    cfg.outer = 6;
    cfg.bottleneck = 3;
    ModelWeights w = init_weights(9, 3, 2, cfg);
    Rng rng(8);
    const Tensor input = testsupport::random_tensor(rng, {2, 9});

    auto loss_value = [&]() {
        Tape tape;
        BoundModel model = BoundModel::bind(tape, w);
        PhiOutput out = phi_forward(tape, tape.constant(input), model, cfg, true);
        return tape.value(tape.add(tape.sum(out.alpha), tape.sum(out.theta))).value();
    };

    Tape tape;
    BoundModel model = BoundModel::bind(tape, w);
    PhiOutput out = phi_forward(tape, tape.constant(input), model, cfg, true);
    tape.backward(tape.add(tape.sum(out.alpha), tape.sum(out.theta)));

    auto params = w.parameters();
    const double h = 1e-5;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (params[pi].first.rfind("psi", 0) == 0) continue;  // loss only touches phi
        Tensor* tensor = params[pi].second;
        const Tensor analytic = tape.grad(model.param_order[pi]);
        // a few elements per tensor keep the sweep fast
        for (std::size_t i = 0; i < std::min<std::size_t>(tensor->size(), 3); ++i) {
            const double orig = (*tensor)[i];
            (*tensor)[i] = orig + h;
            const double fp = loss_value();
            (*tensor)[i] = orig - h;
            const double fm = loss_value();
            (*tensor)[i] = orig;
            const double numeric = (fp - fm) / (2 * h);
            const double tol = 1e-8 + 1e-4 * std::max(std::abs(numeric), std::abs(analytic[i]));
            CHECK_MESSAGE(std::abs(numeric - analytic[i]) <= tol,
                          params[pi].first << "[" << i << "]: analytic " << analytic[i]
                                           << " numeric " << numeric);
        }
    }
}
