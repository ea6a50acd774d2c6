// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness: train-score, align, verify, sample.
// Exit codes: 0 ok, 1 runtime failure, 2 config error, 3 verification failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "distar/checkpoint.hpp"
#include "distar/config.hpp"
#include "distar/verify.hpp"

namespace fs = std::filesystem;
using namespace distar;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutRootEnv = "DISTAR_OUT_ROOT";

nlohmann::ordered_json run_meta(const RunConfig& cfg, int n_classes) {
    nlohmann::ordered_json meta;
    meta["version"] = kVersion;
    meta["seed"] = cfg.seed;
    meta["config_hash"] = cfg.config_hash();
    meta["n_classes"] = n_classes;
    meta["config"] = cfg.resolved_text();
    return meta;
}

void write_manifest(const RunConfig& cfg, const std::string& out_dir, int n_classes) {
    fs::create_directories(out_dir);
    std::ofstream cfg_echo(out_dir + "/config.txt");
    cfg_echo << cfg.resolved_text();
    std::ofstream mf(out_dir + "/run_manifest.json");
    mf << run_meta(cfg, n_classes).dump(1) << "\n";
}

RunConfig load_config(const std::string& config_path, const std::string& preset,
                      const std::string& baseline, long seed_flag,
                      const std::string& out_flag) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::parse_file(config_path);
    if (!preset.empty()) cfg.apply_preset(preset);
    if (!baseline.empty()) cfg.baseline = baseline;
    if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
    if (!out_flag.empty()) cfg.out = out_flag;
    cfg.out = resolve_out_dir(cfg.out, std::getenv(kOutRootEnv));
    return cfg;
}

GaussianMixture require_reference_gmm(const RunConfig& cfg) {
    if (cfg.reference_gmm.empty())
        throw config_error("config: missing required key 'reference.gmm'");
    return load_gmm(cfg.reference_gmm);
}

int cmd_train_score(const RunConfig& cfg, const std::string& resume) {
    GaussianMixture data = require_reference_gmm(cfg);
    const int n_classes = static_cast<int>(data.distinct_labels().size());
    const std::string out_dir = cfg.out.empty() ? "train_score_out" : cfg.out;
    write_manifest(cfg, out_dir, n_classes);

    RngPool pool(cfg.seed);
    ScoreModel model = ScoreModel::create(data.dim(), n_classes, cfg.score_hidden,
                                          ScoreModel::Parameterization::edm_denoiser,
                                          cfg.sigma_data, pool.stream("init"));
    AdamState adam = AdamState::create(model.params(),
                                       AdamConfig{cfg.assistant_lr, cfg.adam_beta1,
                                                  cfg.adam_beta2, cfg.adam_eps});
    long start = 0;
    if (!resume.empty()) {
        Checkpoint ck = Checkpoint::load(resume);
        if (!ck.meta.contains("kind") || ck.meta["kind"] != "train-score-state")
            throw config_error("resume: '" + resume + "' is not a train-score state");
        start = ck.meta.at("iteration").get<long>();
        adam.step = ck.meta.at("adam_step").get<long>();
        for (auto& [name, p] : model.named_params("model")) ck.load_into(name, *p);
        auto named = model.named_params("model");
        for (std::size_t i = 0; i < named.size(); ++i) {
            const auto* m = ck.find("adam.m." + named[i].first);
            const auto* v = ck.find("adam.v." + named[i].first);
            if (m == nullptr || v == nullptr)
                throw config_error("resume: missing optimizer state");
            adam.m[i] = m->values;
            adam.v[i] = v->values;
        }
        std::vector<std::pair<std::string, Rng::State>> states;
        for (const auto& e : ck.meta.at("rng")) {
            Rng::State s;
            const auto arr = e.at("s").get<std::vector<std::uint64_t>>();
            std::copy(arr.begin(), arr.end(), s.s.begin());
            s.calls = e.at("calls").get<std::uint64_t>();
            states.emplace_back(e.at("name").get<std::string>(), s);
        }
        pool.restore(states);
    }

    PreparedMixture pm(data);
    Rng& data_rng = pool.stream("data");
    Rng& noise = pool.stream("assistant-noise");
    Rng& time = pool.stream("time");
    MetricsWriter metrics(out_dir + "/metrics.csv", start > 0);
    const auto lambda_w = cfg.lambda_kind == "constant"
                              ? WeightingFunction::constant()
                              : WeightingFunction::edm_lambda(cfg.sigma_data);
    const auto proc = cfg.process();
    const auto td = cfg.time_dist();
    std::vector<double> row(static_cast<std::size_t>(data.dim()));
    auto params = model.params();

    auto dump_state = [&](long iter, const std::string& path) {
        Checkpoint ck;
        ck.meta = run_meta(cfg, n_classes);
        ck.meta["kind"] = "train-score-state";
        ck.meta["iteration"] = iter;
        ck.meta["adam_step"] = adam.step;
        auto rng_meta = nlohmann::ordered_json::array();
        for (const auto& [name, state] : pool.states()) {
            nlohmann::ordered_json e;
            e["name"] = name;
            e["s"] = state.s;
            e["calls"] = state.calls;
            rng_meta.push_back(std::move(e));
        }
        ck.meta["rng"] = std::move(rng_meta);
        auto named = model.named_params("model");
        for (auto& [name, p] : named) ck.add(name, *p);
        for (std::size_t i = 0; i < named.size(); ++i) {
            ck.add_raw("adam.m." + named[i].first, named[i].second->shape(), adam.m[i]);
            ck.add_raw("adam.v." + named[i].first, named[i].second->shape(), adam.v[i]);
        }
        ck.save(path);
    };

    for (long it = start + 1; it <= cfg.iterations; ++it) {
        Array x0(Shape{cfg.batch_size, data.dim()});
        std::vector<int> cls(static_cast<std::size_t>(cfg.batch_size), -1);
        for (int i = 0; i < cfg.batch_size; ++i) {
            pm.sample(data_rng, row);
            for (int j = 0; j < data.dim(); ++j)
                x0[static_cast<std::size_t>(i) * data.dim() + j] = row[static_cast<std::size_t>(j)];
        }
        // labeled references train the conditional branches too
        if (n_classes > 0)
            for (auto& c : cls)
                c = noise.uniform() < 0.5 ? -1
                                          : std::min(static_cast<int>(noise.uniform() * n_classes),
                                                     n_classes - 1);
        Tape tape;
        for (Array* p : params) tape.watch(*p);
        SampleStreams streams{noise, time};
        Array loss = dsm_loss(model, x0, cls, proc, td, lambda_w, streams);
        tape.backward(loss);
        std::vector<std::span<const double>> grads;
        double gnorm = 0;
        for (Array* p : params) {
            grads.push_back(tape.grad(*p));
            gnorm += tape.grad_l2norm_sq(*p);
        }
        adam.apply(params, grads);
        metrics.write_row(it, {loss.item(), 0, 0, 0, 0, 0, 0, 0, std::sqrt(gnorm)});
        if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0)
            dump_state(it, out_dir + "/train_score_state_" + std::to_string(it) + ".json");
    }
    metrics.flush();
    dump_state(cfg.iterations, out_dir + "/train_score_state_final.json");
    save_score_model(model, out_dir + "/score_model.json", run_meta(cfg, n_classes));
    std::cout << "train-score: wrote " << out_dir << "/score_model.json\n";
    return 0;
}

int cmd_align(const RunConfig& cfg, const std::string& resume, bool export_curves) {
    const std::string out_dir = cfg.out.empty() ? "align_out" : cfg.out;

    std::unique_ptr<ReferenceScore> ref;
    std::unique_ptr<ScoreModel> warm;
    int n_classes = 0;
    if (cfg.reference_kind == "analytic") {
        GaussianMixture gmm = require_reference_gmm(cfg);
        n_classes = static_cast<int>(gmm.distinct_labels().size());
        ref = std::make_unique<AnalyticReference>(std::move(gmm), cfg.process());
    } else if (cfg.reference_kind == "checkpoint") {
        if (cfg.reference_checkpoint.empty())
            throw config_error("config: missing required key 'reference.checkpoint'");
        auto model = std::make_shared<ScoreModel>(load_score_model(cfg.reference_checkpoint));
        n_classes = model->n_classes();
        warm = std::make_unique<ScoreModel>(*model);  // assistant starts as the reference
        ref = std::make_unique<ModelReference>(model);
    } else {
        throw config_error("config: reference.kind must be analytic or checkpoint");
    }

    AlignmentConfig acfg = cfg.alignment(n_classes);
    if (warm != nullptr) acfg.assistant_warmup = 0;
    write_manifest(cfg, out_dir, n_classes);

    TrainState st = resume.empty() ? make_train_state(acfg, warm.get())
                                   : load_state(acfg, resume);
    RunIo io = cfg.io(out_dir);
    io.config_echo = run_meta(cfg, n_classes);
    RunResult res = run(st, acfg, *ref, io);

    if (export_curves) {
        std::ofstream rc(out_dir + "/curves_reward.csv");
        rc << "iteration,reward_mean\n";
        std::ofstream ec(out_dir + "/curves_energy.csv");
        ec << "iteration,energy_distance\n";
        for (const auto& row : res.metrics) {
            rc << row.iter << "," << format_double(row.values[4]) << "\n";
            ec << row.iter << "," << format_double(row.values[6]) << "\n";
        }
    }
    std::cout << "align: " << res.metrics.size() << " steps, final energy distance "
              << res.final_energy_distance << ", reward mean " << res.final_reward_mean
              << "\n";
    return 0;
}

int cmd_verify(const RunConfig& cfg, bool negative_controls, bool quick) {
    const std::string out_dir = cfg.out.empty() ? "verify_out" : cfg.out;
    fs::create_directories(out_dir);
    auto reports = run_battery(cfg.seed, negative_controls, quick);
    write_reports_jsonl(reports, out_dir + "/verify_report.jsonl");
    bool ok = true;
    for (const auto& r : reports) {
        const bool check_ok = negative_controls ? !r.pass : r.pass;
        ok = ok && check_ok;
        std::cout << (check_ok ? "PASS " : "FAIL ") << r.name << "  estimate="
                  << r.estimate << (r.mc_zero ? " se=" + std::to_string(r.se)
                                              : " tol=" + std::to_string(r.tolerance))
                  << (negative_controls ? " (control, must trip)" : "") << "\n";
    }
    std::cout << (ok ? "verify: all checks OK\n" : "verify: FAILURES\n");
    return ok ? 0 : 3;
}

int cmd_sample(const std::string& checkpoint, int n, int cls, long seed,
               const std::string& out_file, bool sweep) {
    Checkpoint ck = Checkpoint::load(checkpoint);
    if (!ck.meta.contains("config"))
        throw config_error("sample: checkpoint has no embedded config");
    RunConfig cfg = RunConfig::parse_text(ck.meta.at("config").get<std::string>());
    const int n_classes = ck.meta.value("n_classes", 0);
    AlignmentConfig acfg = cfg.alignment(n_classes);
    TrainState st = load_state(acfg, checkpoint);

    auto meta = run_meta(cfg, n_classes);
    meta["checkpoint"] = checkpoint;
    meta["sample_seed"] = seed;
    auto write_one = [&](int c, const std::string& path) {
        Rng rng(static_cast<std::uint64_t>(seed) ^ hash_name("sample") ^
                static_cast<std::uint64_t>(c + 1));
        auto doc = sample_dump(st.gen, n, c, rng, meta);
        std::ofstream os(path);
        if (!os) throw config_error("sample: cannot write '" + path + "'");
        os << doc.dump(1) << "\n";
        std::cout << "sample: wrote " << path << "\n";
    };
    if (sweep && n_classes > 0) {
        const fs::path base(out_file);
        const std::string stem = (base.parent_path() / base.stem()).string();
        const std::string ext = base.extension().empty() ? ".json" : base.extension().string();
        for (int c = 0; c < n_classes; ++c)
            write_one(c, stem + "_class" + std::to_string(c) + ext);
    } else {
        write_one(cls, out_file);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale one-step generator distillation and reward alignment"};
    app.require_subcommand(1);

    std::string config_path, preset, baseline, out_flag, resume;
    long seed_flag = -1;
    bool export_curves = false, negative_controls = false, quick = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (section.key = value)");
        sub->add_option("--seed", seed_flag, "seed override");
        sub->add_option("--out", out_flag, "output directory override");
    };

    auto* train_score = app.add_subcommand("train-score", "pretrain a reference score model by denoising score matching");
    add_common(train_score);
    train_score->add_option("--resume", resume, "continue from a train-score state checkpoint");

    auto* align = app.add_subcommand("align", "distill and align a one-step generator");
    add_common(align);
    align->add_option("--preset", preset, "hyperparameter preset: dit-style | sd15-style");
    align->add_option("--baseline", baseline, "regularization: di-star | dipp-kl")
        ->check(CLI::IsMember({"di-star", "dipp-kl"}));
    align->add_flag("--export-curves", export_curves, "write (iteration, reward) and (iteration, energy) csv curves");
    align->add_option("--resume", resume, "continue from an align checkpoint");

    auto* verify = app.add_subcommand("verify", "run the identity-check battery");
    add_common(verify);
    verify->add_flag("--negative-controls", negative_controls, "run the corrupted controls; they must trip");
    verify->add_flag("--quick", quick, "reduced sample sizes (smoke)");

    auto* sample = app.add_subcommand("sample", "draw generator samples from a checkpoint");
    std::string checkpoint, sample_out = "samples.json";
    int sample_n = 512, sample_class = -1;
    long sample_seed = 0;
    bool sweep = false;
    sample->add_option("--checkpoint", checkpoint, "align checkpoint")->required();
    sample->add_option("--n", sample_n, "number of samples");
    sample->add_option("--class", sample_class, "class id (-1 = mixed)");
    sample->add_option("--seed", sample_seed, "sampling seed");
    sample->add_option("--out", sample_out, "output json file");
    sample->add_flag("--sweep-classes", sweep, "one file per class");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_score->parsed())
            return cmd_train_score(load_config(config_path, "", "", seed_flag, out_flag),
                                   resume);
        if (align->parsed())
            return cmd_align(load_config(config_path, preset, baseline, seed_flag, out_flag),
                             resume, export_curves);
        if (verify->parsed())
            return cmd_verify(load_config(config_path, "", "", seed_flag, out_flag),
                              negative_controls, quick);
        if (sample->parsed())
            return cmd_sample(checkpoint, sample_n, sample_class, sample_seed, sample_out,
                              sweep);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
