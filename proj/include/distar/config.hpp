// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "distar/training.hpp"

namespace distar {

// Flat structured text config: `section.key = value`, '#' comments. Unknown
// keys are rejected; every key has a default; the resolved config echoes back
// to text that re-parses to an identical config.
struct RunConfig {
    // run
    std::uint64_t seed = 0;
    std::string out;
    long iterations = 1000;
    int batch_size = 128;

    // process
    std::string process_kind = "edm";  // edm | vp-edm
    double sigma_min = 0.01;
    double sigma_max = 156.6155;

    // time
    std::string time_kind = "log-normal";  // log-normal | uniform
    double p_mean = -2.0;
    double p_std = 2.0;

    // model
    int data_dim = 2;
    int latent_dim = 2;
    std::vector<int> gen_hidden{64, 64};
    std::vector<int> score_hidden{64, 64};
    double sigma_init = 2.5;
    double sigma_data = 1.0;

    // train
    double alpha_rew = 0.0;
    double alpha_cfg = 0.0;
    int k_ta = 2;
    long assistant_warmup = 200;
    double gen_lr = 1e-3;
    double assistant_lr = 1e-3;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double ema_decay = 0.95;
    std::string baseline = "di-star";
    double omega = 1.0;

    // distance
    std::string distance_kind = "pseudo-huber";  // squared-l2 | pseudo-huber
    double distance_c = 0.1;

    // weighting
    std::string lambda_kind = "edm-lambda";  // edm-lambda | constant
    std::string gen_w_kind = "constant";     // constant | edm-lambda | adaptive-gen
    double gap_floor = 1e-8;

    // reference
    std::string reference_kind = "analytic";  // analytic | checkpoint
    std::string reference_gmm;                // gmm spec path
    std::string reference_checkpoint;

    // reward
    std::string reward_kind = "none";  // none | mode-affinity | neg-squared-distance | class-logit
    std::vector<double> reward_target{2.0, 0.0};
    double reward_bandwidth = 1.0;
    int target_component = -1;

    // io
    long checkpoint_every = 0;
    long sample_every = 0;
    int sample_count = 512;
    long energy_every = 100;
    int energy_n = 1024;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text);
    void set(const std::string& key, const std::string& value);  // one key
    std::string resolved_text() const;  // full echo, fixed key order
    std::uint64_t config_hash() const;

    void apply_preset(const std::string& name);  // dit-style | sd15-style

    ForwardProcess process() const;
    TimeDistribution time_dist() const;
    AlignmentConfig alignment(int n_classes) const;
    RunIo io(const std::string& out_dir) const;
    RewardFunction build_reward() const;  // reward_kind must not be none
};

// score-model persistence for train-score / reference checkpoints
void save_score_model(const ScoreModel& model, const std::string& path,
                      nlohmann::ordered_json meta = {});
ScoreModel load_score_model(const std::string& path);

// output root override: relative out dirs are joined under this env var
std::string resolve_out_dir(const std::string& out, const char* env_value);

}  // namespace distar
