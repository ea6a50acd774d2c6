// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "distar/losses.hpp"
#include "distar/metrics.hpp"
#include "distar/optim.hpp"

namespace distar {

// Alternating training: freeze the generator and run k_ta assistant updates on
// its samples, then freeze the assistant and take one generator step on
//   alpha_rew * reward loss + alpha_cfg * cfg loss + regularization loss.
struct AlignmentConfig {
    double alpha_rew = 0.0;
    double alpha_cfg = 0.0;
    int k_ta = 2;
    DistanceFunction distance = DistanceFunction::pseudo_huber(0.1);
    double omega = 1.0;  // sampling-guidance scale; not folded into the reward
    AdamConfig gen_opt{1e-3, 0.0, 0.999, 1e-8};
    AdamConfig assistant_opt{1e-3, 0.0, 0.999, 1e-8};
    double gen_lr_final_frac = 1.0;  // linear decay of the generator lr to this
                                     // fraction across the run; 1 = constant
    double assistant_lr_final_frac = 1.0;  // same schedule for the assistant
    double ema_decay = 0.95;
    ForwardProcess process = ForwardProcess::edm();
    TimeDistribution time_dist = TimeDistribution::log_normal();
    WeightingFunction lambda_w = WeightingFunction::edm_lambda(1.0);  // dsm
    WeightingFunction gen_w = WeightingFunction::constant();          // generator losses
    int batch_size = 128;
    long iterations = 1000;
    long assistant_warmup = 200;  // dsm pretraining of a fresh assistant
    std::uint64_t seed = 0;
    std::string baseline = "di-star";  // or "dipp-kl"

    // model shapes
    int data_dim = 2;
    int latent_dim = 2;
    std::vector<int> gen_hidden{64, 64};
    std::vector<int> score_hidden{64, 64};
    double sigma_init = 2.5;
    double sigma_data = 1.0;
    int n_classes = 0;  // set from the reference when conditional

    std::optional<RewardFunction> reward;
    int target_component = -1;  // mode-fraction metric; -1 derives it

    void validate() const;
};

struct TrainState {
    Generator gen;
    AdamState gen_opt;
    EmaState gen_ema;
    ScoreModel assistant;
    AdamState assistant_opt;
    long iteration = 0;
    RngPool rng{0};
};

// fresh state; when warm_start_assistant is given (reference backed by a
// trained score model) the assistant starts as its copy
TrainState make_train_state(const AlignmentConfig& cfg,
                            const ScoreModel* warm_start_assistant = nullptr);

struct AssistantLog {
    double loss_dsm = 0;  // last round
    double grad_norm = 0;
};

// k_ta Adam steps on dsm_loss over fresh (stop-gradient) generator samples;
// generator parameters untouched.
AssistantLog update_assistant(TrainState& st, const AlignmentConfig& cfg);

// one Adam step on the composed generator loss; assistant and reference enter
// frozen; EMA updated after the step. NaN in any term aborts naming the term.
LossBreakdown update_generator(TrainState& st, const AlignmentConfig& cfg,
                               const ReferenceScore& ref);

struct RunIo {
    std::string out_dir;        // empty: keep everything in memory
    long checkpoint_every = 0;  // 0: final only
    long sample_every = 0;
    int sample_count = 512;
    long energy_every = 100;
    int energy_n = 1024;
    nlohmann::ordered_json config_echo;  // embedded into outputs
};

struct RunResult {
    std::vector<MetricsRow> metrics;
    double final_energy_distance = -1;  // -1 when the reference cannot be sampled
    double final_reward_mean = 0;
    double final_mode_fraction = 0;
};

RunResult run(TrainState& st, const AlignmentConfig& cfg, const ReferenceScore& ref,
              const RunIo& io);

// full state round-trip: parameters, optimizer moments, ema, rng streams,
// iteration counter
void save_state(const TrainState& st, const AlignmentConfig& cfg, const std::string& path,
                nlohmann::ordered_json meta = {});
TrainState load_state(const AlignmentConfig& cfg, const std::string& path);

// generator samples with labels to a json document
nlohmann::ordered_json sample_dump(const Generator& gen, int n, int cls, Rng& rng,
                                   nlohmann::ordered_json meta = {});

int derive_target_component(const AlignmentConfig& cfg, const GaussianMixture& ref_gmm);

}  // namespace distar
