// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "distar/models.hpp"
#include "test_helpers.hpp"

using namespace distar;

namespace {

GaussianMixture two_class_1d() {
    GaussianMixture g;
    g.weights = {0.5, 0.5};
    g.means = {{-2.0}, {2.0}};
    g.covs = {Matrix(1, 1, {1.0}), Matrix(1, 1, {1.0})};
    g.labels = {0, 1};
    return g;
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("affine generator backbone returns Az + b exactly") {
    AffineGenerator aff;
    aff.a = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    aff.b = {0.0, 0.0};
    aff.sigma_init = 1.0;
    Generator gen = Generator::affine_backbone(aff);
    Array z(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
    std::vector<int> cls(3, -1);
    Array x = gen.generate(z, cls);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(x[i] == z[i]);

    AffineGenerator round = gen.affine_view();
    CHECK(round.a(0, 0) == 1.0);
    CHECK(round.a(1, 0) == 0.0);
}

TEST_CASE("generator default sigma_init is 2.5") {
    Rng rng(1);
    Generator gen = Generator::mlp_backbone(2, 2, 0, {8}, 2.5, rng);
    CHECK(gen.sigma_init() == 2.5);
    AffineGenerator aff;
    aff.a = Matrix::identity(2);
    aff.b = {0, 0};
    CHECK(aff.sigma_init == 2.5);  // type default
}

TEST_CASE("pushforward covariance of sampled latents matches sigma_init^2 A A^T") {
    AffineGenerator aff;
    aff.a = Matrix(2, 2, {1.0, 0.5, 0.0, 1.0});
    aff.b = {1.0, -1.0};
    aff.sigma_init = 2.5;
    Generator gen = Generator::affine_backbone(aff);
    Rng rng(42);
    const int n = 100000;
    Array z = gen.sample_latents(n, rng);
    std::vector<int> cls(static_cast<std::size_t>(n), -1);
    Array x = gen.generate(z, cls);
    Gaussian push = aff.pushforward();
    double c01 = 0, m0 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
        m0 += x[static_cast<std::size_t>(i) * 2];
        m1 += x[static_cast<std::size_t>(i) * 2 + 1];
    }
    m0 /= n;
    m1 /= n;
    for (int i = 0; i < n; ++i)
        c01 += (x[static_cast<std::size_t>(i) * 2] - m0) * (x[static_cast<std::size_t>(i) * 2 + 1] - m1);
    c01 /= n;
    const double se = std::sqrt((push.cov(0, 0) * push.cov(1, 1) + push.cov(0, 1) * push.cov(0, 1)) / n);
    CHECK(std::abs(c01 - push.cov(0, 1)) < 3 * se);
}

TEST_CASE("generator rejects unknown class ids") {
    Rng rng(2);
    Generator gen = Generator::mlp_backbone(2, 2, 3, {8}, 2.5, rng);
    Array z(Shape{1, 2}, {0.0, 0.0});
    std::vector<int> bad{7};
    CHECK_THROWS_AS(gen.generate(z, bad), config_error);
    std::vector<int> null_ok{-1};
    CHECK_NOTHROW(gen.generate(z, null_ok));
}

TEST_CASE("score model") {
    Rng rng(3);
    SUBCASE("edm denoiser with a zero network falls back to the prior score") {
        const double sd = 0.5;
        ScoreModel m = ScoreModel::create(2, 0, {8}, ScoreModel::Parameterization::edm_denoiser,
                                          sd, rng);
        auto ps = m.backbone.params();
        // zeroing the output layer makes the raw network identically zero
        for (std::size_t k = 0; k < ps[ps.size() - 2]->size(); ++k) (*ps[ps.size() - 2])[k] = 0;
        for (std::size_t k = 0; k < ps[ps.size() - 1]->size(); ++k) (*ps[ps.size() - 1])[k] = 0;
        Array x(Shape{2, 2}, {1.0, -2.0, 0.5, 3.0});
        std::vector<double> t{0.7, 2.0};
        std::vector<int> cls{-1, -1};
        Array s = m.score(x, t, cls);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * 2 + j;
                const double want = -x[k] / (sd * sd + t[static_cast<std::size_t>(i)] *
                                                           t[static_cast<std::size_t>(i)]);
                CHECK(s[k] == doctest::Approx(want).epsilon(1e-12));
            }
    }
    SUBCASE("an identity denoiser converts to a zero score") {
        Array x(Shape{1, 2}, {1.5, -0.3});
        std::vector<double> t{0.8};
        Array s = score_from_denoiser(x, t, x.detached());
        CHECK(s[0] == 0.0);
        CHECK(s[1] == 0.0);
    }
    SUBCASE("t <= 0 rejected") {
        ScoreModel m = ScoreModel::create(1, 0, {4}, ScoreModel::Parameterization::edm_denoiser,
                                          0.5, rng);
        Array x(Shape{1, 1}, {1.0});
        std::vector<double> t{0.0};
        std::vector<int> cls{-1};
        CHECK_THROWS_AS(m.score(x, t, cls), numeric_error);
    }
    SUBCASE("null class embedding differs from every real class") {
        ScoreModel m = ScoreModel::create(2, 3, {4}, ScoreModel::Parameterization::edm_denoiser,
                                          0.5, rng);
        const int e = m.class_embed.cols();
        for (int c = 0; c < 3; ++c) {
            double diff = 0;
            for (int j = 0; j < e; ++j)
                diff += std::abs(m.class_embed[static_cast<std::size_t>(c) * e + j] -
                                 m.class_embed[static_cast<std::size_t>(3) * e + j]);
            CHECK(diff > 1e-6);
        }
    }
}

TEST_CASE("denoiser/score conversion") {
    SUBCASE("round-trips exactly") {
        Rng rng(5);
        Array x(Shape{3, 2});
        Array d(Shape{3, 2});
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = rng.normal();
            d[i] = rng.normal();
        }
        std::vector<double> t{0.3, 1.0, 4.0};
        Array s = score_from_denoiser(x, t, d);
        Array back = denoiser_from_score(x, t, s);
        for (std::size_t i = 0; i < d.size(); ++i)
            CHECK(back[i] == doctest::Approx(d[i]).epsilon(1e-14));
    }
    SUBCASE("tweedie posterior mean for N(0, s^2 I) reproduces the diffused score") {
        const double sd = 0.8, t = 1.3;
        Array x(Shape{1, 2}, {1.5, -0.7});
        std::vector<double> ts{t};
        // perfect denoiser d(x,t) = s^2 x / (s^2 + t^2)
        const double shrink = sd * sd / (sd * sd + t * t);
        Array d(Shape{1, 2}, {shrink * x[0], shrink * x[1]});
        Array s = score_from_denoiser(x, ts, d);
        // analytic diffused gaussian score: -x / (s^2 + t^2)
        GaussianMixture g = GaussianMixture::single(
            {{0.0, 0.0}, scaled(Matrix::identity(2), sd * sd)});
        GaussianMixture dg = diffused_gmm(g, ForwardProcess::edm(), t);
        std::vector<double> want(2);
        gmm_score(dg, x.row(0), want);
        CHECK(s[0] == doctest::Approx(want[0]).epsilon(1e-12));
        CHECK(s[1] == doctest::Approx(want[1]).epsilon(1e-12));
    }
    SUBCASE("the map is affine in the denoiser argument") {
        Array x(Shape{1, 2}, {0.4, 0.6});
        std::vector<double> t{0.9};
        Array d1(Shape{1, 2}, {1.0, -1.0});
        Array d2(Shape{1, 2}, {0.3, 2.0});
        Array lhs = score_from_denoiser(x, t, sub(add(d1, d2), x));
        Array rhs = add(score_from_denoiser(x, t, d1), score_from_denoiser(x, t, d2));
        CHECK(lhs[0] == doctest::Approx(rhs[0]));
        CHECK(lhs[1] == doctest::Approx(rhs[1]));
    }
}

TEST_CASE("cfg score combination") {
    Rng rng(7);
    ScoreModel m = ScoreModel::create(2, 2, {8}, ScoreModel::Parameterization::edm_denoiser,
                                      0.5, rng);
    Array x(Shape{2, 2}, {0.5, -0.5, 1.0, 0.0});
    std::vector<double> t{0.8, 1.2};
    std::vector<int> cls{0, 1};
    std::vector<int> null_cls{-1, -1};
    Array s_c = m.score(x, t, cls).detached();
    Array s_n = m.score(x, t, null_cls).detached();

    SUBCASE("omega = 1 recovers the conditional score") {
        Array s = cfg_score(m, x, t, cls, CfgConfig{1.0});
        for (std::size_t i = 0; i < s.size(); ++i)
            CHECK(s[i] == doctest::Approx(s_c[i]).epsilon(1e-12));
    }
    SUBCASE("omega = 0 recovers the unconditional score") {
        Array s = cfg_score(m, x, t, cls, CfgConfig{0.0});
        for (std::size_t i = 0; i < s.size(); ++i)
            CHECK(s[i] == doctest::Approx(s_n[i]).epsilon(1e-12));
    }
    SUBCASE("result is detached even under a live tape") {
        Tape tape;
        Array xw = x.detached();
        tape.watch(xw);
        Array s = cfg_score(m, xw, t, cls, CfgConfig{4.5});
        CHECK(!s.attached());
    }
}

TEST_CASE("analytic reference serves diffused mixture scores and densities") {
    auto proc = ForwardProcess::edm();
    AnalyticReference ref(two_class_1d(), proc);
    CHECK(ref.n_classes() == 2);
    CHECK(ref.conditional());

    const double t = 1.5;
    std::vector<double> x{0.7};
    std::vector<double> s(1);
    ref.score_at(x, t, 0, s);
    GaussianMixture d0 = diffused_gmm(two_class_1d().conditioned_on(0), proc, t);
    std::vector<double> want(1);
    gmm_score(d0, x, want);
    CHECK(s[0] == doctest::Approx(want[0]).epsilon(1e-12));

    ref.score_at(x, t, -1, s);
    GaussianMixture dm = diffused_gmm(two_class_1d(), proc, t);
    gmm_score(dm, x, want);
    CHECK(s[0] == doctest::Approx(want[0]).epsilon(1e-12));

    CHECK(ref.log_density(x, t, 0) ==
          doctest::Approx(gmm_log_density(d0, x)).epsilon(1e-12));
}

TEST_CASE("model reference matches direct model evaluation") {
    Rng rng(11);
    auto model = std::make_shared<ScoreModel>(ScoreModel::create(
        2, 0, {8}, ScoreModel::Parameterization::edm_denoiser, 0.5, rng));
    ModelReference ref(model);
    Array x(Shape{1, 2}, {0.3, -0.9});
    std::vector<double> t{1.1};
    std::vector<int> cls{-1};
    Array want = model->score(x, t, cls);
    std::vector<double> got(2);
    ref.score_at(x.row(0), 1.1, -1, got);
    CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-14));
    CHECK(got[1] == doctest::Approx(want[1]).epsilon(1e-14));
}

TEST_SUITE_END();
