// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "distar/array.hpp"
#include "distar/checkpoint.hpp"
#include "distar/mlp.hpp"
#include "distar/optim.hpp"
#include "distar/rng.hpp"
#include "test_helpers.hpp"

using namespace distar;
using distar::testing::fd_vs_backward;

TEST_SUITE_BEGIN("numerics");

TEST_CASE("matmul selects the identity column") {
    Array a(Shape{2, 2}, {1, 2, 3, 4});
    Array b(Shape{2, 1}, {1, 0});
    Array c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == 1.0);
    CHECK(c[1] == 3.0);
}

TEST_CASE("sum of squares") {
    Array v(Shape{2}, {3, 4});
    CHECK(sum(square(v)).item() == 25.0);
}

TEST_CASE("backward of x*x at 3") {
    Tape tape;
    Array x = Array::scalar(3.0);
    tape.watch(x);
    Array loss = mul(x, x);
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("stop-gradient contract of dot") {
    Tape tape;
    Array w(Shape{3}, {1, 2, 3});
    Array x(Shape{3}, {4, 5, 6});
    tape.watch(w);  // x stays detached
    Array loss = dot(w, x);
    tape.backward(loss);
    auto gw = tape.grad(w);
    CHECK(gw[0] == 4.0);
    CHECK(gw[1] == 5.0);
    CHECK(gw[2] == 6.0);
    CHECK(!x.attached());
    CHECK_THROWS_AS(tape.grad(x), tape_error);
}

TEST_CASE("least-squares derivative, single sample") {
    // loss = (w.x - y)^2, grad_w = 2 x (w.x - y)
    Tape tape;
    Array w(Shape{2}, {0.5, -1.0});
    Array x(Shape{2}, {2.0, 3.0});
    const double y = 1.5;
    tape.watch(w);
    Array resid = add_scalar(dot(w, x), -y);
    Array loss = mul(resid, resid);
    tape.backward(loss);
    const double r = 0.5 * 2.0 - 1.0 * 3.0 - y;
    auto gw = tape.grad(w);
    CHECK(gw[0] == doctest::Approx(2.0 * 2.0 * r));
    CHECK(gw[1] == doctest::Approx(2.0 * 3.0 * r));
}

TEST_CASE("finite differences validate every op") {
    Rng rng(7);
    auto randn = [&](Shape s) {
        Array a(s);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal();
        return a;
    };
    auto positive = [&](Shape s) {
        Array a(s);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5 + std::abs(rng.normal());
        return a;
    };

    SUBCASE("add/sub/mul with broadcasts") {
        std::vector<Array> ps{randn({3, 4}), randn({3, 4}), randn({3, 1}), randn({1, 4})};
        auto build = [](std::vector<Array>& p) {
            Array t = add(p[0], p[1]);
            t = mul(t, p[2]);            // column broadcast
            t = sub(t, p[3]);            // row broadcast
            t = mul(t, Array::scalar(0.7));  // scalar broadcast
            return mean(square(t));
        };
        CHECK(fd_vs_backward(ps, build) < 1e-4);
    }
    SUBCASE("matmul and affine") {
        std::vector<Array> ps{randn({2, 3}), randn({3}), randn({3, 2}), randn({4, 2})};
        auto build = [](std::vector<Array>& p) {
            Array h = affine(p[3], p[0], p[1]);  // [4,3]
            Array z = matmul(h, p[2]);           // [4,2]
            return add(mean(square(z)), sum(square(matmul(p[0], p[2]))));
        };
        CHECK(fd_vs_backward(ps, build) < 1e-4);
    }
    SUBCASE("reductions") {
        std::vector<Array> ps{randn({3, 4})};
        auto build = [](std::vector<Array>& p) {
            Array rs = rowsum(square(p[0]));
            return add(sum(rs), add(mean(p[0]), dot(p[0], p[0])));
        };
        CHECK(fd_vs_backward(ps, build) < 1e-4);
    }
    SUBCASE("unary chain: exp log sqrt square softplus tanh") {
        std::vector<Array> ps{positive({4})};
        auto build = [](std::vector<Array>& p) {
            Array t = log_op(add_scalar(square(p[0]), 1.0));
            t = add(t, sqrt_op(p[0]));
            t = add(t, exp_op(scale(p[0], -0.5)));
            t = add(t, softplus(p[0]));
            t = add(t, tanh_op(p[0]));
            return mean(t);
        };
        CHECK(fd_vs_backward(ps, build) < 1e-4);
    }
    SUBCASE("row_scale, concat, take_rows") {
        std::vector<Array> ps{randn({3, 2}), randn({3, 2}), randn({4, 2})};
        const std::vector<double> factors{0.5, -1.5, 2.0};
        const std::vector<int> idx{2, 0, 1};
        auto build = [&](std::vector<Array>& p) {
            Array t = row_scale(p[0], factors);
            t = concat_cols(t, p[1]);
            Array rows = take_rows(p[2], idx);
            return add(mean(square(t)), mean(square(rows)));
        };
        CHECK(fd_vs_backward(ps, build) < 1e-4);
    }
}

TEST_CASE("2-4-1 mlp loss matches finite differences over all parameters") {
    Rng rng(11);
    Mlp net = Mlp::create({2, 4, 1}, rng);
    Array x(Shape{5, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    Array target(Shape{5, 1});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = rng.normal();

    std::vector<Array> ps;
    for (Array* p : net.params()) ps.push_back(*p);
    auto build = [&](std::vector<Array>& p) {
        // rebuild a net sharing the test-owned parameter arrays
        Array h = affine(x, p[0], p[1]);
        h = softplus(h);
        h = affine(h, p[2], p[3]);
        return mean(square(sub(h, target)));
    };
    CHECK(fd_vs_backward(ps, build) < 1e-4);
}

TEST_CASE("detached path contributes exactly zero") {
    Tape tape;
    Array w(Shape{3}, {1.0, -2.0, 0.5});
    tape.watch(w);
    // route w through detachment; the result must not reach w's gradient
    Array blocked = detach(scale(w, 10.0));
    Array loss = add(mean(square(w)), mean(mul(blocked, w)));
    tape.backward(loss);
    // d/dw [mean(w^2) + mean(c*w)] = 2w/3 + c/3 with c treated as constant
    auto g = tape.grad(w);
    for (int i = 0; i < 3; ++i) {
        const double expect = 2.0 * w[i] / 3.0 + blocked[static_cast<std::size_t>(i)] / 3.0;
        CHECK(g[static_cast<std::size_t>(i)] == doctest::Approx(expect));
    }

    // gradient of a purely-detached loss is exactly zero
    Tape t2;
    Array v(Shape{2}, {1.0, 2.0});
    t2.watch(v);
    Array loss2 = add(mean(detach(square(v))), mul(Array::scalar(0.0), sum(v)));
    t2.backward(loss2);
    CHECK(t2.grad(v)[0] == 0.0);
    CHECK(t2.grad(v)[1] == 0.0);
}

TEST_CASE("shape errors report both shapes") {
    Array a(Shape{2, 3});
    Array b(Shape{4, 2});
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), shape_error);
    try {
        matmul(a, b);
        FAIL("expected throw");
    } catch (const shape_error& e) {
        CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
        CHECK(std::string(e.what()).find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("tape misuse is rejected") {
    Tape tape;
    Array x(Shape{2}, {1, 2});
    tape.watch(x);
    Array v = square(x);
    CHECK_THROWS_AS(tape.backward(v), shape_error);  // non-scalar loss
    Array loss = sum(v);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), tape_error);  // second sweep
    tape.reset();
    CHECK(!loss.attached());  // reset detaches recorded arrays
    CHECK_THROWS_AS(tape.backward(loss), tape_error);  // stale tape
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        Array p(Shape{3}, {1.0, -2.0, 3.0});
        std::vector<Array*> params{&p};
        AdamState st = AdamState::create(params, AdamConfig{});
        std::vector<double> zero(3, 0.0);
        st.apply(params, {std::span<const double>(zero)});
        CHECK(p[0] == 1.0);
        CHECK(p[1] == -2.0);
        CHECK(p[2] == 3.0);
        CHECK(st.step == 1);
    }
    SUBCASE("degenerate adam is sign descent") {
        Array p(Shape{2}, {0.0, 0.0});
        std::vector<Array*> params{&p};
        AdamState st = AdamState::create(params, AdamConfig{0.1, 0.0, 0.0, 0.0});
        std::vector<double> g{3.0, -0.25};
        st.apply(params, {std::span<const double>(g)});
        CHECK(p[0] == doctest::Approx(-0.1));
        CHECK(p[1] == doctest::Approx(0.1));
    }
    SUBCASE("converges on (w-3)^2 in 100 steps") {
        Array w = Array::scalar(0.0);
        std::vector<Array*> params{&w};
        AdamState st = AdamState::create(params, AdamConfig{0.1, 0.0, 0.999, 1e-8});
        for (int i = 0; i < 100; ++i) {
            std::vector<double> g{2.0 * (w[0] - 3.0)};
            st.apply(params, {std::span<const double>(g)});
        }
        CHECK(std::abs(w[0] - 3.0) < 0.05);
        CHECK(st.step == 100);
    }
    SUBCASE("NaN gradient aborts with a diagnostic") {
        Array p(Shape{1}, {0.0});
        std::vector<Array*> params{&p};
        AdamState st = AdamState::create(params, AdamConfig{});
        std::vector<double> g{std::nan("")};
        CHECK_THROWS_AS(st.apply(params, {std::span<const double>(g)}), numeric_error);
    }
}

TEST_CASE("ema") {
    Array p(Shape{1}, {0.0});
    std::vector<Array*> params{&p};
    SUBCASE("decay 0 tracks the parameters exactly") {
        p[0] = 42.0;
        EmaState st = EmaState::create(params, 0.0);
        p[0] = 7.0;
        st.update(params);
        CHECK(st.shadow[0][0] == 7.0);
    }
    SUBCASE("single step formula") {
        p[0] = 1.0;
        EmaState st = EmaState::create(params, 0.95);
        p[0] = 0.0;
        st.update(params);
        CHECK(st.shadow[0][0] == doctest::Approx(0.95));
    }
    SUBCASE("k updates toward a constant shrink the gap by decay^k") {
        p[0] = 1.0;
        EmaState st = EmaState::create(params, 0.9);
        p[0] = -2.0;  // constant target
        const double gap0 = st.shadow[0][0] - p[0];
        const int k = 13;
        for (int i = 0; i < k; ++i) st.update(params);
        const double expect = gap0 * std::pow(0.9, k);
        CHECK(st.shadow[0][0] - p[0] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("deterministic trajectories for a fixed seed") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Mlp net = Mlp::create({2, 8, 1}, rng);
        std::vector<Array*> params = net.params();
        AdamState st = AdamState::create(params, AdamConfig{});
        for (int it = 0; it < 20; ++it) {
            Array x(Shape{4, 2});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
            Tape tape;
            for (Array* p : params) tape.watch(*p);
            Array loss = mean(square(net.forward(x)));
            tape.backward(loss);
            std::vector<std::span<const double>> grads;
            for (Array* p : params) grads.push_back(tape.grad(*p));
            st.apply(params, grads);
        }
        std::vector<const Array*> cp(params.begin(), params.end());
        return param_hash(cp);
    };
    CHECK(run(123) == run(123));
    CHECK(run(123) != run(124));
}

TEST_CASE("checkpoint json round-trips bit-identically") {
    Rng rng(5);
    Mlp net = Mlp::create({3, 5, 2}, rng);
    Checkpoint ck;
    ck.meta["seed"] = 5;
    for (auto& [name, p] : net.named_params("net")) ck.add(name, *p);

    const auto path = std::filesystem::temp_directory_path() / "distar_ck_test.json";
    ck.save(path.string());
    Checkpoint back = Checkpoint::load(path.string());
    REQUIRE(back.params.size() == ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        CHECK(back.params[i].name == ck.params[i].name);
        CHECK(back.params[i].shape == ck.params[i].shape);
        REQUIRE(back.params[i].values.size() == ck.params[i].values.size());
        for (std::size_t k = 0; k < ck.params[i].values.size(); ++k)
            CHECK(back.params[i].values[k] == ck.params[i].values[k]);  // exact
    }
    std::filesystem::remove(path);
}

TEST_CASE("mlp parameter count matches the width formula") {
    Rng rng(1);
    Mlp net = Mlp::create({3, 7, 5, 2}, rng);
    std::size_t expect = 0;
    const std::vector<int> w{3, 7, 5, 2};
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
        expect += static_cast<std::size_t>(w[i]) * w[i + 1] + w[i + 1];
    CHECK(net.param_count() == expect);
}

TEST_CASE("rng substreams are independent and serializable") {
    RngPool pool(99);
    Rng& a = pool.stream("assistant-noise");
    Rng& t = pool.stream("time");
    const double a1 = a.normal();
    const auto t_state = t.state();
    (void)a.normal();  // consuming one stream
    CHECK(t.state().s == t_state.s);  // does not move the other

    RngPool pool2(99);
    CHECK(pool2.stream("assistant-noise").normal() == a1);

    Rng fresh(0);
    fresh.set_state(t_state);
    CHECK(fresh.normal() == pool.stream("time").normal());
}

TEST_SUITE_END();
