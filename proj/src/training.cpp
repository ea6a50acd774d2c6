// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "distar/checkpoint.hpp"

namespace distar {

void AlignmentConfig::validate() const {
    if (alpha_rew < 0 || alpha_cfg < 0)
        throw config_error("alignment: reward/cfg scales must be >= 0");
    if (k_ta < 1) throw config_error("alignment: k_ta must be >= 1");
    if (batch_size < 1) throw config_error("alignment: batch_size must be >= 1");
    if (iterations < 0) throw config_error("alignment: iterations must be >= 0");
    if (baseline != "di-star" && baseline != "dipp-kl")
        throw config_error("alignment: baseline must be di-star or dipp-kl, got '" +
                           baseline + "'");
    if (!(ema_decay >= 0 && ema_decay < 1))
        throw config_error("alignment: ema decay must be in [0,1)");
    if (alpha_rew > 0 && !reward)
        throw config_error("alignment: alpha_rew > 0 needs a reward spec");
}

static std::vector<int> sample_classes(int n, int n_classes, Rng& rng) {
    std::vector<int> cls(static_cast<std::size_t>(n), -1);
    if (n_classes > 0)
        for (auto& c : cls)
            c = std::min(static_cast<int>(rng.uniform() * n_classes), n_classes - 1);
    return cls;
}

TrainState make_train_state(const AlignmentConfig& cfg,
                            const ScoreModel* warm_start_assistant) {
    cfg.validate();
    TrainState st;
    st.rng = RngPool(cfg.seed);
    Rng& init = st.rng.stream("init");
    st.gen = Generator::mlp_backbone(cfg.data_dim, cfg.latent_dim, cfg.n_classes,
                                     cfg.gen_hidden, cfg.sigma_init, init);
    if (warm_start_assistant != nullptr) {
        st.assistant = *warm_start_assistant;
    } else {
        st.assistant = ScoreModel::create(cfg.data_dim, cfg.n_classes, cfg.score_hidden,
                                          ScoreModel::Parameterization::edm_denoiser,
                                          cfg.sigma_data, init);
    }
    st.gen_opt = AdamState::create(st.gen.params(), cfg.gen_opt);
    st.assistant_opt = AdamState::create(st.assistant.params(), cfg.assistant_opt);
    st.gen_ema = EmaState::create(st.gen.params(), cfg.ema_decay);
    return st;
}

static AssistantLog assistant_dsm_step(TrainState& st, const AlignmentConfig& cfg,
                                       const Array& x0, std::span<const int> cls,
                                       Rng& noise, Rng& time) {
    AssistantLog log;
    auto params = st.assistant.params();
    Tape tape;
    for (Array* p : params) tape.watch(*p);
    SampleStreams streams{noise, time};
    Array loss = dsm_loss(st.assistant, x0, cls, cfg.process, cfg.time_dist,
                          cfg.lambda_w, streams);
    log.loss_dsm = loss.item();
    if (!std::isfinite(log.loss_dsm))
        throw numeric_error("assistant update at iteration " +
                            std::to_string(st.iteration) + ": dsm loss is not finite");
    tape.backward(loss);
    std::vector<std::span<const double>> grads;
    double gnorm = 0;
    for (Array* p : params) {
        grads.push_back(tape.grad(*p));
        gnorm += tape.grad_l2norm_sq(*p);
    }
    log.grad_norm = std::sqrt(gnorm);
    st.assistant_opt.apply(params, grads);
    return log;
}

AssistantLog update_assistant(TrainState& st, const AlignmentConfig& cfg) {
    AssistantLog log;
    Rng& noise = st.rng.stream("assistant-noise");
    Rng& time = st.rng.stream("time");
    if (cfg.assistant_lr_final_frac < 1.0 && cfg.iterations > 0) {
        const double frac =
            std::min(1.0, static_cast<double>(st.iteration) / cfg.iterations);
        st.assistant_opt.cfg.lr =
            cfg.assistant_opt.lr * (1.0 - (1.0 - cfg.assistant_lr_final_frac) * frac);
    }
    for (int round = 0; round < cfg.k_ta; ++round) {
        const auto cls = sample_classes(cfg.batch_size, cfg.n_classes, noise);
        Array z = st.gen.sample_latents(cfg.batch_size, noise);
        Array x0 = st.gen.generate(z, cls, true).detached();  // sg[g(z,c)]
        log = assistant_dsm_step(st, cfg, x0, cls, noise, time);
    }
    return log;
}

// The paper-analog warm start: the online score model begins as an
// approximation of the reference ("initialize online DM with teacher DM").
// With an analytic reference there is no network to copy, so the assistant is
// dsm-pretrained on reference draws before the alternating loop takes over.
static void warmup_assistant(TrainState& st, const AlignmentConfig& cfg,
                             const AnalyticReference* analytic) {
    Rng& noise = st.rng.stream("assistant-noise");
    Rng& time = st.rng.stream("time");
    std::vector<double> row(static_cast<std::size_t>(cfg.data_dim));
    for (long i = 0; i < cfg.assistant_warmup; ++i) {
        const auto cls = sample_classes(cfg.batch_size, cfg.n_classes, noise);
        Array x0(Shape{cfg.batch_size, cfg.data_dim});
        if (analytic != nullptr) {
            for (int b = 0; b < cfg.batch_size; ++b) {
                analytic->sample(noise, row, cls[static_cast<std::size_t>(b)]);
                for (int j = 0; j < cfg.data_dim; ++j)
                    x0[static_cast<std::size_t>(b) * cfg.data_dim + j] =
                        row[static_cast<std::size_t>(j)];
            }
        } else {
            Array z = st.gen.sample_latents(cfg.batch_size, noise);
            x0 = st.gen.generate(z, cls, true).detached();
        }
        assistant_dsm_step(st, cfg, x0, cls, noise, time);
    }
}

LossBreakdown update_generator(TrainState& st, const AlignmentConfig& cfg,
                               const ReferenceScore& ref) {
    Rng& noise = st.rng.stream("generator-noise");
    Rng& time = st.rng.stream("time");
    auto params = st.gen.params();
    const auto cls = sample_classes(cfg.batch_size, cfg.n_classes, noise);
    Array z = st.gen.sample_latents(cfg.batch_size, noise);

    std::vector<std::vector<double>> total(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        total[i].assign(params[i]->size(), 0.0);

    auto run_term = [&](const char* name, auto build) {
        Tape tape;
        for (Array* p : params) tape.watch(*p);
        Array loss = build();
        const double value = loss.item();
        if (!std::isfinite(value))
            throw numeric_error("generator step " + std::to_string(st.iteration + 1) +
                                ": " + name + " is not finite");
        tape.backward(loss);
        double gnorm = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto g = tape.grad(*params[i]);
            for (std::size_t k = 0; k < g.size(); ++k) total[i][k] += g[k];
            gnorm += tape.grad_l2norm_sq(*params[i]);
        }
        return std::make_pair(value, std::sqrt(gnorm));
    };

    LossBreakdown bd;
    {
        auto [v, g] = run_term("loss_reg", [&] {
            SampleStreams streams{noise, time};
            if (cfg.baseline == "dipp-kl")
                return dipp_kl_loss(st.gen, st.assistant, ref, cfg.process, cfg.time_dist,
                                    cfg.gen_w, z, cls, streams);
            return di_star_reg_loss(st.gen, st.assistant, ref, cfg.distance, cfg.process,
                                    cfg.time_dist, cfg.gen_w, z, cls, streams);
        });
        bd.reg = v;
        bd.grad_norm_reg = g;
    }
    if (cfg.alpha_rew > 0 && cfg.reward) {
        auto [v, g] = run_term("loss_reward", [&] {
            return scale(explicit_reward_loss(st.gen, *cfg.reward, z, cls), cfg.alpha_rew);
        });
        bd.reward = v;
        bd.grad_norm_reward = g;
    }
    if (cfg.alpha_cfg > 0 && ref.conditional()) {
        auto [v, g] = run_term("loss_cfg", [&] {
            SampleStreams streams{noise, time};
            // the adaptive weight is defined through the regularization term's
            // denoiser gap; the cfg term falls back to w = 1 under it
            const WeightingFunction w =
                cfg.gen_w.kind == WeightingFunction::Kind::adaptive_gen
                    ? WeightingFunction::constant()
                    : cfg.gen_w;
            return scale(cfg_reward_loss(st.gen, ref, cfg.process, cfg.time_dist, w, z,
                                         cls, streams),
                         cfg.alpha_cfg);
        });
        bd.cfg = v;
        bd.grad_norm_cfg = g;
    }
    bd.total = bd.reg + bd.reward + bd.cfg;

    if (cfg.gen_lr_final_frac < 1.0 && cfg.iterations > 0) {
        const double frac =
            std::min(1.0, static_cast<double>(st.iteration) / cfg.iterations);
        st.gen_opt.cfg.lr = cfg.gen_opt.lr * (1.0 - (1.0 - cfg.gen_lr_final_frac) * frac);
    }
    std::vector<std::span<const double>> grads;
    for (auto& g : total) grads.emplace_back(g);
    st.gen_opt.apply(params, grads);
    st.gen_ema.update(params);
    return bd;
}

int derive_target_component(const AlignmentConfig& cfg, const GaussianMixture& ref_gmm) {
    if (cfg.target_component >= 0) return cfg.target_component;
    if (cfg.reward && cfg.reward->kind == RewardFunction::Kind::mode_affinity) {
        int best = 0;
        double best_d = INFINITY;
        for (int c = 0; c < ref_gmm.components(); ++c) {
            double q = 0;
            for (std::size_t j = 0; j < cfg.reward->target.size(); ++j) {
                const double v =
                    cfg.reward->target[j] - ref_gmm.means[static_cast<std::size_t>(c)][j];
                q += v * v;
            }
            if (q < best_d) {
                best_d = q;
                best = c;
            }
        }
        return best;
    }
    return 0;
}

namespace {

double eval_reward_mean(const AlignmentConfig& cfg, const Array& x,
                        std::span<const int> cls) {
    if (!cfg.reward) return 0.0;
    double s = 0;
    for (int i = 0; i < x.rows(); ++i)
        s += cfg.reward->value(x.row(i), cls[static_cast<std::size_t>(i)]);
    return s / x.rows();
}

Array draw_reference(const AnalyticReference& ref, int n, Rng& rng) {
    const int d = ref.data_dim();
    Array out(Shape{n, d});
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        ref.sample(rng, row);
        for (int j = 0; j < d; ++j)
            out[static_cast<std::size_t>(i) * d + j] = row[static_cast<std::size_t>(j)];
    }
    return out;
}

}  // namespace

RunResult run(TrainState& st, const AlignmentConfig& cfg, const ReferenceScore& ref,
              const RunIo& io) {
    cfg.validate();
    RunResult result;
    const auto* analytic = dynamic_cast<const AnalyticReference*>(&ref);
    int target_component = 0;
    if (analytic != nullptr)
        target_component = derive_target_component(cfg, analytic->joint());

    std::unique_ptr<MetricsWriter> writer;
    const bool to_disk = !io.out_dir.empty();
    if (to_disk) {
        std::filesystem::create_directories(io.out_dir);
        writer = std::make_unique<MetricsWriter>(io.out_dir + "/metrics.csv",
                                                 st.iteration > 0);
    }

    if (st.iteration == 0) warmup_assistant(st, cfg, analytic);

    double last_energy = 0.0;
    Rng& eval = st.rng.stream("eval");
    const int eval_n = 256;

    for (long it = st.iteration + 1; it <= cfg.iterations; ++it) {
        AssistantLog alog = update_assistant(st, cfg);
        LossBreakdown bd = update_generator(st, cfg, ref);
        st.iteration = it;

        const auto cls = sample_classes(eval_n, cfg.n_classes, eval);
        Array z = st.gen.sample_latents(eval_n, eval);
        Array x = st.gen.generate(z, cls, true).detached();
        const double reward_mean = eval_reward_mean(cfg, x, cls);
        double mode_fraction = 0;
        if (analytic != nullptr)
            mode_fraction = target_mode_fraction(x, analytic->joint(), target_component);
        const bool energy_due = io.energy_every > 0 && (it % io.energy_every == 0);
        if (analytic != nullptr && energy_due) {
            const auto cls_e = sample_classes(io.energy_n, cfg.n_classes, eval);
            Array ze = st.gen.sample_latents(io.energy_n, eval);
            Array xe = st.gen.generate(ze, cls_e, true).detached();
            Array re = draw_reference(*analytic, io.energy_n, eval);
            last_energy = energy_distance(xe, re);
        }

        const double grad_norm_gen =
            std::sqrt(bd.grad_norm_reg * bd.grad_norm_reg +
                      bd.grad_norm_reward * bd.grad_norm_reward +
                      bd.grad_norm_cfg * bd.grad_norm_cfg);
        MetricsRow row;
        row.iter = it;
        row.values = {alog.loss_dsm, bd.reg,      bd.reward,     bd.cfg,
                      reward_mean,   mode_fraction, last_energy, grad_norm_gen,
                      alog.grad_norm};
        result.metrics.push_back(row);
        if (writer) writer->write_row(row.iter, row.values);

        if (to_disk && io.checkpoint_every > 0 && it % io.checkpoint_every == 0)
            save_state(st, cfg, io.out_dir + "/checkpoint_" + std::to_string(it) + ".json",
                       io.config_echo);
        if (to_disk && io.sample_every > 0 && it % io.sample_every == 0) {
            auto doc = sample_dump(st.gen, io.sample_count, -1, eval, io.config_echo);
            std::ofstream os(io.out_dir + "/samples_" + std::to_string(it) + ".json");
            os << doc.dump(1) << "\n";
        }

        result.final_reward_mean = reward_mean;
        result.final_mode_fraction = mode_fraction;
    }
    result.final_energy_distance = analytic != nullptr ? last_energy : -1.0;
    if (to_disk) {
        save_state(st, cfg, io.out_dir + "/checkpoint_final.json", io.config_echo);
        TrainState ema_state = st;  // EMA weights exported as a ready-to-sample generator
        ema_state.gen_ema.copy_to(ema_state.gen.params());
        save_state(ema_state, cfg, io.out_dir + "/checkpoint_final_ema.json",
                   io.config_echo);
        if (writer) writer->flush();
    }
    return result;
}

// ---- persistence ----

void save_state(const TrainState& st, const AlignmentConfig& cfg, const std::string& path,
                nlohmann::ordered_json meta) {
    Checkpoint ck;
    ck.meta = meta.is_null() ? nlohmann::ordered_json::object() : std::move(meta);
    ck.meta["iteration"] = st.iteration;
    ck.meta["seed"] = st.rng.seed();
    ck.meta["baseline"] = cfg.baseline;
    ck.meta["adam_gen_step"] = st.gen_opt.step;
    ck.meta["adam_assistant_step"] = st.assistant_opt.step;
    auto rng_meta = nlohmann::ordered_json::array();
    for (const auto& [name, state] : st.rng.states()) {
        nlohmann::ordered_json e;
        e["name"] = name;
        e["s"] = state.s;
        e["calls"] = state.calls;
        rng_meta.push_back(std::move(e));
    }
    ck.meta["rng"] = std::move(rng_meta);

    TrainState& mut = const_cast<TrainState&>(st);  // named_params are non-const views
    for (auto& [name, p] : mut.gen.named_params("gen")) ck.add(name, *p);
    for (auto& [name, p] : mut.assistant.named_params("assistant")) ck.add(name, *p);
    auto add_moments = [&](const std::string& prefix, const AdamState& opt,
                           std::vector<std::pair<std::string, Array*>> named) {
        for (std::size_t i = 0; i < named.size(); ++i) {
            ck.add_raw(prefix + ".m." + named[i].first, named[i].second->shape(), opt.m[i]);
            ck.add_raw(prefix + ".v." + named[i].first, named[i].second->shape(), opt.v[i]);
        }
    };
    add_moments("adam_gen", st.gen_opt, mut.gen.named_params("gen"));
    add_moments("adam_assistant", st.assistant_opt,
                mut.assistant.named_params("assistant"));
    {
        auto named = mut.gen.named_params("gen");
        for (std::size_t i = 0; i < named.size(); ++i)
            ck.add_raw("ema." + named[i].first, named[i].second->shape(),
                       st.gen_ema.shadow[i]);
    }
    ck.save(path);
}

TrainState load_state(const AlignmentConfig& cfg, const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    TrainState st = make_train_state(cfg);
    st.iteration = ck.meta.at("iteration").get<long>();
    st.gen_opt.step = ck.meta.at("adam_gen_step").get<long>();
    st.assistant_opt.step = ck.meta.at("adam_assistant_step").get<long>();
    if (ck.meta.at("baseline").get<std::string>() != cfg.baseline)
        throw config_error("checkpoint: baseline mismatch with the run config");

    for (auto& [name, p] : st.gen.named_params("gen")) ck.load_into(name, *p);
    for (auto& [name, p] : st.assistant.named_params("assistant")) ck.load_into(name, *p);
    auto load_moments = [&](const std::string& prefix, AdamState& opt,
                            std::vector<std::pair<std::string, Array*>> named) {
        for (std::size_t i = 0; i < named.size(); ++i) {
            const auto* m = ck.find(prefix + ".m." + named[i].first);
            const auto* v = ck.find(prefix + ".v." + named[i].first);
            if (m == nullptr || v == nullptr)
                throw config_error("checkpoint: missing optimizer state for " +
                                   named[i].first);
            opt.m[i] = m->values;
            opt.v[i] = v->values;
        }
    };
    load_moments("adam_gen", st.gen_opt, st.gen.named_params("gen"));
    load_moments("adam_assistant", st.assistant_opt,
                 st.assistant.named_params("assistant"));
    {
        auto named = st.gen.named_params("gen");
        for (std::size_t i = 0; i < named.size(); ++i) {
            const auto* e = ck.find("ema." + named[i].first);
            if (e == nullptr) throw config_error("checkpoint: missing ema state");
            st.gen_ema.shadow[i] = e->values;
        }
    }
    std::vector<std::pair<std::string, Rng::State>> states;
    for (const auto& e : ck.meta.at("rng")) {
        Rng::State s;
        const auto arr = e.at("s").get<std::vector<std::uint64_t>>();
        if (arr.size() != s.s.size()) throw config_error("checkpoint: bad rng state");
        std::copy(arr.begin(), arr.end(), s.s.begin());
        s.calls = e.at("calls").get<std::uint64_t>();
        states.emplace_back(e.at("name").get<std::string>(), s);
    }
    st.rng.restore(states);
    return st;
}

nlohmann::ordered_json sample_dump(const Generator& gen, int n, int cls, Rng& rng,
                                   nlohmann::ordered_json meta) {
    nlohmann::ordered_json doc;
    doc["format"] = "distar-samples";
    doc["version"] = 1;
    doc["meta"] = meta.is_null() ? nlohmann::ordered_json::object() : std::move(meta);
    doc["class"] = cls;
    std::vector<int> labels(static_cast<std::size_t>(n), cls);
    if (cls < 0 && gen.n_classes() > 0)
        for (auto& c : labels)
            c = std::min(static_cast<int>(rng.uniform() * gen.n_classes()),
                         gen.n_classes() - 1);
    Array z = gen.sample_latents(n, rng);
    auto samples = nlohmann::ordered_json::array();
    if (n > 0) {
        Array x = gen.generate(z, labels, true).detached();
        for (int i = 0; i < n; ++i) {
            auto row = nlohmann::ordered_json::array();
            for (int j = 0; j < x.cols(); ++j)
                row.push_back(x[static_cast<std::size_t>(i) * x.cols() + j]);
            samples.push_back(std::move(row));
        }
    }
    doc["samples"] = std::move(samples);
    doc["labels"] = labels;
    return doc;
}

}  // namespace distar
