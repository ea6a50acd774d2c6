// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "distar/analytic.hpp"
#include "distar/process.hpp"
#include "distar/rng.hpp"
#include "test_helpers.hpp"

using namespace distar;

TEST_SUITE_BEGIN("processes");

TEST_CASE("edm diffuse matches the scale-and-noise formula") {
    auto p = ForwardProcess::edm();
    Array x0(Shape{1, 1}, {1.0});
    Array eps(Shape{1, 1}, {0.5});
    CHECK(diffuse(p, x0, 2.0, eps).item() == doctest::Approx(2.0));
}

TEST_CASE("diffuse approaches identity as t -> 0+") {
    auto p = ForwardProcess::edm(1e-12, 10.0);
    Array x0(Shape{2, 2}, {1.0, -2.0, 0.5, 3.0});
    Array eps(Shape{2, 2}, {1.0, 1.0, 1.0, 1.0});
    Array xt = diffuse(p, x0, 1e-12, eps);
    for (std::size_t i = 0; i < x0.size(); ++i)
        CHECK(xt[i] == doctest::Approx(x0[i]).epsilon(1e-9));
}

TEST_CASE("diffuse gradient flows through x0 only") {
    auto p = ForwardProcess::edm();
    Tape tape;
    Array x0(Shape{2, 1}, {1.0, 2.0});
    Array eps(Shape{2, 1}, {0.3, -0.7});
    tape.watch(x0);
    std::vector<double> ts{0.5, 2.0};
    Array xt = diffuse(p, x0, ts, eps);
    tape.backward(sum(xt));
    auto g = tape.grad(x0);
    CHECK(g[0] == doctest::Approx(1.0));  // alpha = 1 for EDM
    CHECK(g[1] == doctest::Approx(1.0));
    CHECK(!eps.attached());
}

TEST_CASE("diffused gaussian moments match the closed form (monte carlo)") {
    // x0 ~ N(mu, s^2) => x_t ~ N(alpha mu, alpha^2 s^2 + beta^2) for a general
    // linear process
    auto p = ForwardProcess::linear([](double t) { return 1.0 / (1.0 + t); },
                                    [](double t) { return 0.5 * t; }, 10.0);
    const double mu = 1.5, s = 0.7, t = 2.0;
    const double want_mean = p.alpha(t) * mu;
    const double want_var = p.alpha(t) * p.alpha(t) * s * s + p.beta(t) * p.beta(t);
    Rng rng(17);
    const int n = 100000;
    double sum1 = 0, sum2 = 0;
    Array x0(Shape{1, 1}), eps(Shape{1, 1});
    for (int i = 0; i < n; ++i) {
        x0[0] = mu + s * rng.normal();
        eps[0] = rng.normal();
        const double v = diffuse(p, x0, t, eps).item();
        sum1 += v;
        sum2 += v * v;
    }
    const double m = sum1 / n;
    const double var = sum2 / n - m * m;
    const double se_mean = std::sqrt(want_var / n);
    const double se_var = want_var * std::sqrt(2.0 / n);
    CHECK(std::abs(m - want_mean) < 3 * se_mean);
    CHECK(std::abs(var - want_var) < 3 * se_var);
}

TEST_CASE("transition score") {
    auto p = ForwardProcess::edm();
    SUBCASE("zero at the conditional mean") {
        Array x0(Shape{1, 2}, {1.0, -1.0});
        Array xt = x0.detached();  // alpha = 1: x_t = x0 exactly
        Array s = transition_score(p, xt, x0, 0.7);
        CHECK(s[0] == 0.0);
        CHECK(s[1] == 0.0);
    }
    SUBCASE("edm value -1/4") {
        Array x0(Shape{1, 1}, {0.0});
        Array xt(Shape{1, 1}, {1.0});
        CHECK(transition_score(p, xt, x0, 2.0).item() == doctest::Approx(-0.25));
    }
    SUBCASE("equals -eps/beta when x_t comes from diffuse") {
        Rng rng(3);
        Array x0(Shape{4, 2});
        Array eps(Shape{4, 2});
        for (std::size_t i = 0; i < x0.size(); ++i) {
            x0[i] = rng.normal();
            eps[i] = rng.normal();
        }
        std::vector<double> ts{0.3, 1.0, 2.5, 7.0};
        Array xt = diffuse(p, x0, ts, eps);
        Array s = transition_score(p, xt, x0, ts);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 2; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * 2 + j;
                CHECK(s[k] == doctest::Approx(-eps[k] / ts[static_cast<std::size_t>(i)])
                                  .epsilon(1e-12));
            }
    }
    SUBCASE("t = 0 rejected") {
        Array x(Shape{1, 1}, {1.0});
        CHECK_THROWS_AS(transition_score(p, x, x, 0.0), numeric_error);
    }
    SUBCASE("matches finite differences of the gaussian transition log-density") {
        const double t = 1.3, h = 1e-5;
        Array x0(Shape{1, 2}, {0.7, -0.2});
        Array xt(Shape{1, 2}, {1.5, 0.4});
        Array s = transition_score(p, xt, x0, t);
        Matrix cov = scaled(Matrix::identity(2), t * t);
        std::vector<double> mean{x0[0], x0[1]};
        for (int j = 0; j < 2; ++j) {
            std::vector<double> xp{xt[0], xt[1]}, xm{xt[0], xt[1]};
            xp[static_cast<std::size_t>(j)] += h;
            xm[static_cast<std::size_t>(j)] -= h;
            const double fd = (gaussian_log_density(mean, cov, xp) -
                               gaussian_log_density(mean, cov, xm)) /
                              (2 * h);
            CHECK(std::abs(s[static_cast<std::size_t>(j)] - fd) <=
                  1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("log-normal time sampling") {
    auto dist = TimeDistribution::log_normal();
    SUBCASE("n = 0 maps to exp(-2)") {
        // on the raw sampler, a zero normal draw gives exp(p_mean)
        CHECK(std::exp(dist.p_mean) == doctest::Approx(0.13533528).epsilon(1e-6));
    }
    SUBCASE("median of many draws is exp(-2) within 2 percent") {
        Rng rng(23);
        const int n = 1000000;
        std::vector<double> draws(n);
        for (auto& v : draws) v = sample_time(dist, rng);
        std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
        const double median = draws[n / 2];
        CHECK(std::abs(median - std::exp(-2.0)) / std::exp(-2.0) < 0.02);
    }
    SUBCASE("empirical log-moments match (p_mean, p_std)") {
        Rng rng(29);
        const int n = 200000;
        double s1 = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double lt = std::log(sample_time(dist, rng));
            s1 += lt;
            s2 += lt * lt;
        }
        const double m = s1 / n;
        const double sd = std::sqrt(s2 / n - m * m);
        CHECK(std::abs(m - dist.p_mean) < 3 * dist.p_std / std::sqrt(n));
        CHECK(std::abs(sd - dist.p_std) < 3 * dist.p_std * std::sqrt(0.5 / n));
    }
    SUBCASE("draws below sigma_min clamp to exactly sigma_min") {
        auto proc = ForwardProcess::vp_as_edm();
        Rng rng(31);
        bool saw_clamp = false;
        for (int i = 0; i < 4000; ++i) {
            const double t = sample_time(dist, proc, rng);
            CHECK(t >= proc.sigma_min);
            CHECK(t <= proc.sigma_max);
            if (t == proc.sigma_min) saw_clamp = true;
        }
        CHECK(saw_clamp);  // ~10% of mass sits below 0.01
    }
}

TEST_CASE("weighting functions") {
    SUBCASE("edm lambda at t=1, sigma_data=0.5") {
        auto w = WeightingFunction::edm_lambda(0.5);
        CHECK(weight(w, 1.0) == doctest::Approx(5.0));
    }
    SUBCASE("constant is 1 everywhere") {
        auto w = WeightingFunction::constant();
        for (double t : {0.01, 1.0, 156.0}) CHECK(weight(w, t) == 1.0);
    }
    SUBCASE("adaptive weight is the reciprocal gap norm") {
        auto w = WeightingFunction::adaptive_gen();
        std::vector<double> gap{3.0, 4.0};
        CHECK(weight(w, 1.0, gap) == doctest::Approx(0.2));
    }
    SUBCASE("zero gap hits the floor instead of dividing by zero") {
        auto w = WeightingFunction::adaptive_gen(1e-8);
        std::vector<double> gap{0.0, 0.0};
        CHECK(weight(w, 1.0, gap) == doctest::Approx(1e8));
    }
    SUBCASE("edm lambda positive for positive t") {
        auto w = WeightingFunction::edm_lambda(0.5);
        for (double t : {0.01, 0.5, 2.0, 150.0}) CHECK(weight(w, t) > 0);
    }
}

TEST_SUITE_END();
