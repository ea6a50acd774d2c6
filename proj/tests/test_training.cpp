// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "distar/training.hpp"
#include "test_helpers.hpp"

using namespace distar;

namespace {

GaussianMixture two_mode() {
    GaussianMixture g;
    g.weights = {0.5, 0.5};
    g.means = {{-2.0, 0.0}, {2.0, 0.0}};
    g.covs = {Matrix::identity(2), Matrix::identity(2)};
    return g;
}

AlignmentConfig small_config(std::uint64_t seed) {
    AlignmentConfig cfg;
    cfg.seed = seed;
    cfg.iterations = 8;
    cfg.batch_size = 16;
    cfg.k_ta = 2;
    cfg.assistant_warmup = 4;
    cfg.process = ForwardProcess::edm(0.05, 20.0);
    cfg.gen_hidden = {16};
    cfg.score_hidden = {16};
    cfg.sigma_data = 1.5;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("k_ta steps move only the assistant") {
    AlignmentConfig cfg = small_config(3);
    cfg.k_ta = 1;
    TrainState st = make_train_state(cfg);
    const auto gen_hash = st.gen.hash();
    const long step0 = st.assistant_opt.step;
    update_assistant(st, cfg);
    CHECK(st.assistant_opt.step == step0 + 1);  // exactly one optimizer step
    CHECK(st.gen.hash() == gen_hash);           // freeze contract

    cfg.k_ta = 3;
    update_assistant(st, cfg);
    CHECK(st.assistant_opt.step == step0 + 4);
    CHECK(st.gen.hash() == gen_hash);
}

TEST_CASE("generator update freezes the assistant and reports the breakdown") {
    AlignmentConfig cfg = small_config(5);
    AnalyticReference ref(two_mode(), cfg.process);
    TrainState st = make_train_state(cfg);
    const auto assistant_hash = st.assistant.hash();

    SUBCASE("pure distillation reports zero reward and cfg terms") {
        LossBreakdown bd = update_generator(st, cfg, ref);
        CHECK(bd.reward == 0.0);
        CHECK(bd.cfg == 0.0);
        CHECK(bd.total == bd.reg);
        CHECK(st.assistant.hash() == assistant_hash);
        CHECK(st.gen_opt.step == 1);
    }
    SUBCASE("total equals the sum of the three terms") {
        GaussianMixture labeled = two_mode();
        labeled.labels = {0, 1};
        AlignmentConfig acfg = small_config(6);
        AnalyticReference cref(labeled, acfg.process);
        acfg.n_classes = 2;
        acfg.alpha_rew = 10.0;
        acfg.alpha_cfg = 4.5;
        acfg.reward = RewardFunction::mode_affinity({2.0, 0.0}, 1.0);
        TrainState st2 = make_train_state(acfg);
        LossBreakdown bd = update_generator(st2, acfg, cref);
        CHECK(bd.total == doctest::Approx(bd.reg + bd.reward + bd.cfg).epsilon(1e-12));
        CHECK(bd.grad_norm_reward > 0);
        CHECK(bd.grad_norm_cfg > 0);
    }
}

TEST_CASE("zero iterations returns the initial state unchanged") {
    AlignmentConfig cfg = small_config(7);
    cfg.iterations = 0;
    cfg.assistant_warmup = 0;
    AnalyticReference ref(two_mode(), cfg.process);
    TrainState st = make_train_state(cfg);
    const auto gh = st.gen.hash();
    const auto ah = st.assistant.hash();
    RunResult res = run(st, cfg, ref, RunIo{});
    CHECK(res.metrics.empty());
    CHECK(st.gen.hash() == gh);
    CHECK(st.assistant.hash() == ah);
    CHECK(st.iteration == 0);
}

TEST_CASE("runs are deterministic for a fixed seed") {
    AlignmentConfig cfg = small_config(11);
    AnalyticReference ref(two_mode(), cfg.process);
    auto run_once = [&]() {
        TrainState st = make_train_state(cfg);
        return run(st, cfg, ref, RunIo{});
    };
    RunResult a = run_once();
    RunResult b = run_once();
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i)
        for (std::size_t k = 0; k < a.metrics[i].values.size(); ++k)
            CHECK(a.metrics[i].values[k] == b.metrics[i].values[k]);  // bitwise
}

TEST_CASE("checkpoint state round-trips bit-identically and resumes exactly") {
    namespace fs = std::filesystem;
    AlignmentConfig cfg = small_config(13);
    cfg.iterations = 10;
    AnalyticReference ref(two_mode(), cfg.process);

    // unbroken run
    TrainState full = make_train_state(cfg);
    RunResult full_res = run(full, cfg, ref, RunIo{});

    // split run with a checkpoint in the middle
    AlignmentConfig half = cfg;
    half.iterations = 5;
    TrainState st = make_train_state(half);
    run(st, half, ref, RunIo{});
    const auto path = (fs::temp_directory_path() / "distar_state.json").string();
    save_state(st, half, path);
    TrainState back = load_state(half, path);
    CHECK(back.gen.hash() == st.gen.hash());
    CHECK(back.assistant.hash() == st.assistant.hash());
    CHECK(back.iteration == st.iteration);
    for (std::size_t i = 0; i < st.gen_opt.m.size(); ++i)
        for (std::size_t k = 0; k < st.gen_opt.m[i].size(); ++k) {
            CHECK(back.gen_opt.m[i][k] == st.gen_opt.m[i][k]);
            CHECK(back.gen_opt.v[i][k] == st.gen_opt.v[i][k]);
        }

    AlignmentConfig rest = cfg;  // iterations = 10
    RunResult res2 = run(back, rest, ref, RunIo{});
    CHECK(back.gen.hash() == full.gen.hash());
    REQUIRE(res2.metrics.size() == 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < res2.metrics[i].values.size(); ++k)
            CHECK(res2.metrics[i].values[k] == full_res.metrics[i + 5].values[k]);
    fs::remove(path);
}

TEST_CASE("ema shadow stays within the geometric step bound") {
    AlignmentConfig cfg = small_config(17);
    cfg.iterations = 30;
    AnalyticReference ref(two_mode(), cfg.process);
    TrainState st = make_train_state(cfg);
    for (long i = 0; i < cfg.assistant_warmup; ++i) update_assistant(st, cfg);

    // bound: ||shadow - params|| <= decay/(1-decay) * max step, tracked online
    double max_step = 0;
    std::vector<std::vector<double>> prev;
    for (Array* p : st.gen.params()) prev.emplace_back(p->values().begin(), p->values().end());
    for (long it = 1; it <= cfg.iterations; ++it) {
        update_assistant(st, cfg);
        update_generator(st, cfg, ref);
        st.iteration = it;
        double step2 = 0;
        auto params = st.gen.params();
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t k = 0; k < params[i]->size(); ++k) {
                const double dv = (*params[i])[k] - prev[i][k];
                step2 += dv * dv;
                prev[i][k] = (*params[i])[k];
            }
        max_step = std::max(max_step, std::sqrt(step2));
        double gap2 = 0;
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t k = 0; k < params[i]->size(); ++k) {
                const double dv = st.gen_ema.shadow[i][k] - (*params[i])[k];
                gap2 += dv * dv;
            }
        const double bound = cfg.ema_decay / (1.0 - cfg.ema_decay) * max_step + 1e-12;
        CHECK(std::sqrt(gap2) <= bound);
    }
}

TEST_CASE("nan losses abort naming the term") {
    AlignmentConfig cfg = small_config(19);
    cfg.alpha_rew = 1.0;
    cfg.reward = RewardFunction::neg_squared_distance({0.0, 0.0});
    AnalyticReference ref(two_mode(), cfg.process);
    TrainState st = make_train_state(cfg);
    // poison the generator weights so a term overflows
    for (Array* p : st.gen.params())
        for (std::size_t k = 0; k < p->size(); ++k) (*p)[k] = 1e200;
    try {
        update_generator(st, cfg, ref);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("loss_") != std::string::npos);
    }
}

TEST_CASE("sample dumps are deterministic and carry labels") {
    AlignmentConfig cfg = small_config(23);
    cfg.n_classes = 2;
    TrainState st = make_train_state(cfg);
    Rng r1(42), r2(42);
    auto d1 = sample_dump(st.gen, 8, -1, r1);
    auto d2 = sample_dump(st.gen, 8, -1, r2);
    CHECK(d1.dump() == d2.dump());
    CHECK(d1["samples"].size() == 8);
    CHECK(d1["labels"].size() == 8);
    auto d0 = sample_dump(st.gen, 0, 1, r1);
    CHECK(d0["samples"].empty());  // n = 0 still yields a valid document
}

TEST_SUITE_END();
