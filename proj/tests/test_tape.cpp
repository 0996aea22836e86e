#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nrsfm/rng.hpp"
#include "nrsfm/tape.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace nrsfm;
using testsupport::check_gradients;
using testsupport::random_tensor;

TEST_CASE("matmul against identity") {
    Tape tape;
    Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var id = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Var c = tape.matmul(a, id);
    CHECK(tape.value(c) == tape.value(a));
}

TEST_CASE("sum of elementwise square") {
    Tape tape;
    Var x = tape.leaf(Tensor({2}, {3, 4}));
    Var s = tape.sum(tape.mul(x, x));
    CHECK(tape.value(s).value() == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("seeded 2-layer MLP forward matches straight-line recomputation") {
    Rng rng(42);
    const int in = 5, hidden = 7, out = 3;
    Tensor w1 = random_tensor(rng, {static_cast<std::size_t>(in), static_cast<std::size_t>(hidden)});
    Tensor b1 = random_tensor(rng, {static_cast<std::size_t>(hidden)});
    Tensor w2 =
        random_tensor(rng, {static_cast<std::size_t>(hidden), static_cast<std::size_t>(out)});
    Tensor b2 = random_tensor(rng, {static_cast<std::size_t>(out)});
    Tensor x = random_tensor(rng, {1, static_cast<std::size_t>(in)});

    Tape tape;
    Var vx = tape.constant(x);
    Var h = tape.relu(tape.add_rowvec(tape.matmul(vx, tape.leaf(w1)), tape.leaf(b1)));
    Var y = tape.add_rowvec(tape.matmul(h, tape.leaf(w2)), tape.leaf(b2));
    const Tensor& got = tape.value(y);

    // independent straight-line evaluation of the same arithmetic
    for (int o = 0; o < out; ++o) {
        double acc = b2[static_cast<std::size_t>(o)];
        for (int j = 0; j < hidden; ++j) {
            double pre = b1[static_cast<std::size_t>(j)];
            for (int i = 0; i < in; ++i)
                pre += x[static_cast<std::size_t>(i)] * w1(static_cast<std::size_t>(i),
                                                           static_cast<std::size_t>(j));
            const double act = pre > 0 ? pre : 0.0;
            acc += act * w2(static_cast<std::size_t>(j), static_cast<std::size_t>(o));
        }
        CHECK(got(0, static_cast<std::size_t>(o)) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("d/dx (x*x) at x=3 is 6") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(3.0));
    Var y = tape.mul(x, x);
    tape.backward(y);
    CHECK(tape.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("gradient of a constant is exactly zero") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(2.0));
    Var c = tape.constant(Tensor::scalar(5.0));
    Var y = tape.sum(c);
    tape.backward(y);
    const Tensor g = tape.grad(x);
    CHECK(g.size() == 1);
    CHECK(g[0] == 0.0);
}

TEST_CASE("non-participating leaves get exact zero") {
    Tape tape;
    Var x = tape.leaf(Tensor({3}, {1, 2, 3}));
    Var unused = tape.leaf(Tensor({2, 2}, {1, 1, 1, 1}));
    tape.backward(tape.sum(x));
    const Tensor g = tape.grad(unused);
    CHECK(g.shape() == Shape{2, 2});
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

namespace {

// one gradient-check pass over every primitive with random shapes
void check_all_primitives(std::uint64_t seed) {
    Rng rng(seed);
    const auto dim = [&] { return 1 + static_cast<std::size_t>(rng.uniform_int(8)); };

    const std::size_t n = dim(), k = dim(), m = dim();
    {
        auto r = check_gradients({random_tensor(rng, {n, k}), random_tensor(rng, {k, m})},
                                 [](Tape& t, const std::vector<Var>& v) {
                                     return t.sum(t.matmul(v[0], v[1]));
                                 });
        CHECK_MESSAGE(r.ok, "matmul: " << r.detail);
    }
    {
        auto r = check_gradients({random_tensor(rng, {n, k}), random_tensor(rng, {n, k})},
                                 [](Tape& t, const std::vector<Var>& v) {
                                     return t.sum(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
                                 });
        CHECK_MESSAGE(r.ok, "add/sub/mul: " << r.detail);
    }
    {
        auto r = check_gradients({random_tensor(rng, {n, k}), random_tensor(rng, {k})},
                                 [](Tape& t, const std::vector<Var>& v) {
                                     return t.sum(t.add_rowvec(v[0], v[1]));
                                 });
        CHECK_MESSAGE(r.ok, "add_rowvec: " << r.detail);
    }
    {
        // keep relu inputs away from the kink so finite differences are valid
        Tensor x = random_tensor(rng, {n, k});
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(x[i]) < 1e-2) x[i] = x[i] < 0 ? x[i] - 1e-2 : x[i] + 1e-2;
        auto r = check_gradients(
            {x}, [](Tape& t, const std::vector<Var>& v) { return t.sum(t.relu(v[0])); });
        CHECK_MESSAGE(r.ok, "relu: " << r.detail);
    }
    {
        auto r = check_gradients(
            {random_tensor(rng, {n, k})},
            [](Tape& t, const std::vector<Var>& v) { return t.sum(t.tanh(v[0])); });
        CHECK_MESSAGE(r.ok, "tanh: " << r.detail);
    }
    {
        auto r = check_gradients({random_tensor(rng, {n, k})},
                                 [](Tape& t, const std::vector<Var>& v) {
                                     return t.sum(t.mul(t.colsum(v[0]), t.colsum(v[0])));
                                 });
        CHECK_MESSAGE(r.ok, "colsum: " << r.detail);
    }
    {
        auto r = check_gradients({random_tensor(rng, {n, k})},
                                 [n, k](Tape& t, const std::vector<Var>& v) {
                                     Var flat = t.reshape(v[0], {n * k});
                                     Var back = t.reshape(flat, {k, n});
                                     return t.sum(t.mul(back, back));
                                 });
        CHECK_MESSAGE(r.ok, "reshape: " << r.detail);
    }
    {
        const std::size_t rows = 2 + n;
        const std::size_t ri = rng.uniform_int(rows);
        auto r = check_gradients({random_tensor(rng, {rows, k})},
                                 [ri](Tape& t, const std::vector<Var>& v) {
                                     Var row = t.row(v[0], ri);
                                     Var sl = t.slice_rows(v[0], 0, 2);
                                     return t.add(t.sum(t.mul(row, row)), t.sum(sl));
                                 });
        CHECK_MESSAGE(r.ok, "row/slice_rows: " << r.detail);
    }
    {
        auto r = check_gradients({random_tensor(rng, {k}), random_tensor(rng, {k})},
                                 [](Tape& t, const std::vector<Var>& v) {
                                     std::vector<Var> rows = {v[0], v[1], v[0]};
                                     return t.sum(t.stack_rows(rows));
                                 });
        CHECK_MESSAGE(r.ok, "stack_rows: " << r.detail);
    }
    {
        // pseudo-Huber over squared norms (inputs kept non-negative)
        Tensor s = random_tensor(rng, {k}, 0.0, 2.0);
        auto r = check_gradients({s}, [](Tape& t, const std::vector<Var>& v) {
            return t.sum(t.pseudo_huber_sq(v[0], 0.01));
        });
        CHECK_MESSAGE(r.ok, "pseudo_huber_sq: " << r.detail);
    }
    {
        const std::size_t rows = 2 + n;  // batch statistics need a few rows
        BatchNormState state;
        state.running_mean = Tensor::zeros({k});
        state.running_var = Tensor::ones({k});
        for (bool training : {true, false}) {
            auto r = check_gradients(
                {random_tensor(rng, {rows, k}), random_tensor(rng, {k}, 0.5, 1.5),
                 random_tensor(rng, {k})},
                [&state, training](Tape& t, const std::vector<Var>& v) {
                    return t.sum(t.batchnorm(v[0], v[1], v[2], &state, training));
                });
            CHECK_MESSAGE(r.ok, "batchnorm training=" << training << ": " << r.detail);
        }
    }
    {
        Tensor theta = random_tensor(rng, {3});
        auto r = check_gradients({theta}, [](Tape& t, const std::vector<Var>& v) {
            Var r3 = t.rot_expm(v[0]);
            return t.sum(t.mul(r3, r3));
        });
        CHECK_MESSAGE(r.ok, "rot_expm: " << r.detail);
    }
}

}  // namespace

TEST_CASE("gradient checks for every primitive over random seeds") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) check_all_primitives(seed);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(7);
    Tensor x0 = random_tensor(rng, {4});
    const double a = 2.5, b = -1.25;

    auto grad_of = [&](auto make_loss) {
        Tape tape;
        Var x = tape.leaf(x0);
        tape.backward(make_loss(tape, x));
        return tape.grad(x);
    };
    auto f = [](Tape& t, Var x) { return t.sum(t.mul(x, x)); };
    auto g = [](Tape& t, Var x) { return t.sum(t.relu(x)); };
    const Tensor gf = grad_of(f);
    const Tensor gg = grad_of(g);
    const Tensor gc = grad_of([&](Tape& t, Var x) {
        return t.add(t.scale(f(t, x), a), t.scale(g(t, x), b));
    });
    for (std::size_t i = 0; i < gc.size(); ++i)
        CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("determinism: identical seeds give bit-identical values and gradients") {
    auto run = [] {
        Rng rng(99);
        Tape tape;
        Var w = tape.leaf(random_tensor(rng, {4, 4}));
        Var x = tape.constant(random_tensor(rng, {2, 4}));
        Var y = tape.sum(tape.relu(tape.matmul(x, w)));
        tape.backward(y);
        return std::make_pair(tape.value(y), tape.grad(w));
    };
    const auto [v1, g1] = run();
    const auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("error paths") {
    SUBCASE("shape mismatch") {
        Tape tape;
        Var a = tape.leaf(Tensor({2, 3}));
        Var b = tape.leaf(Tensor({3, 3}));
        CHECK_THROWS_AS(tape.add(a, b), std::invalid_argument);
        CHECK_THROWS_AS(tape.matmul(a, a), std::invalid_argument);
    }
    SUBCASE("backward on non-scalar") {
        Tape tape;
        Var a = tape.leaf(Tensor({2}, {1, 2}));
        CHECK_THROWS_AS(tape.backward(a), std::invalid_argument);
    }
    SUBCASE("tape consumed twice") {
        Tape tape;
        Var a = tape.leaf(Tensor::scalar(1.0));
        Var y = tape.mul(a, a);
        tape.backward(y);
        CHECK_THROWS_AS(tape.backward(y), std::logic_error);
    }
    SUBCASE("gradient before backward") {
        Tape tape;
        Var a = tape.leaf(Tensor::scalar(1.0));
        CHECK_THROWS_AS(tape.grad(a), std::logic_error);
    }
    SUBCASE("non-finite values are rejected") {
        Tape tape;
        CHECK_THROWS_AS(tape.leaf(Tensor({1}, {std::nan("")})), std::domain_error);
        Var big = tape.leaf(Tensor::scalar(1e308));
        CHECK_THROWS_AS(tape.mul(tape.scale(big, 10.0), big), std::domain_error);
    }
}
