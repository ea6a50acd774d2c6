// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "distar/checkpoint.hpp"
#include "distar/metrics.hpp"

namespace distar {

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: bad number for '" + key + "': '" + v + "'");
    }
}

long to_long(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: bad integer for '" + key + "': '" + v + "'");
    }
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    std::vector<int> out;
    int x;
    while (is >> x) out.push_back(x);
    if (!is.eof()) throw config_error("config: bad integer list for '" + key + "'");
    if (out.empty()) throw config_error("config: empty list for '" + key + "'");
    return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    std::vector<double> out;
    double x;
    while (is >> x) out.push_back(x);
    if (!is.eof()) throw config_error("config: bad number list for '" + key + "'");
    if (out.empty()) throw config_error("config: empty list for '" + key + "'");
    return out;
}

std::string ints_text(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

std::string doubles_text(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
    return s;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    auto num = [&] { return to_double(key, value); };
    auto inum = [&] { return to_long(key, value); };
    if (key == "run.seed") seed = static_cast<std::uint64_t>(inum());
    else if (key == "run.out") out = value;
    else if (key == "run.iterations") iterations = inum();
    else if (key == "run.batch_size") batch_size = static_cast<int>(inum());
    else if (key == "process.kind") process_kind = value;
    else if (key == "process.sigma_min") sigma_min = num();
    else if (key == "process.sigma_max") sigma_max = num();
    else if (key == "time.kind") time_kind = value;
    else if (key == "time.p_mean") p_mean = num();
    else if (key == "time.p_std") p_std = num();
    else if (key == "model.data_dim") data_dim = static_cast<int>(inum());
    else if (key == "model.latent_dim") latent_dim = static_cast<int>(inum());
    else if (key == "model.gen_hidden") gen_hidden = to_ints(key, value);
    else if (key == "model.score_hidden") score_hidden = to_ints(key, value);
    else if (key == "model.sigma_init") sigma_init = num();
    else if (key == "model.sigma_data") sigma_data = num();
    else if (key == "train.alpha_rew") alpha_rew = num();
    else if (key == "train.alpha_cfg") alpha_cfg = num();
    else if (key == "train.k_ta") k_ta = static_cast<int>(inum());
    else if (key == "train.assistant_warmup") assistant_warmup = inum();
    else if (key == "train.gen_lr") gen_lr = num();
    else if (key == "train.assistant_lr") assistant_lr = num();
    else if (key == "train.adam_beta1") adam_beta1 = num();
    else if (key == "train.adam_beta2") adam_beta2 = num();
    else if (key == "train.adam_eps") adam_eps = num();
    else if (key == "train.ema_decay") ema_decay = num();
    else if (key == "train.baseline") baseline = value;
    else if (key == "train.omega") omega = num();
    else if (key == "distance.kind") distance_kind = value;
    else if (key == "distance.c") distance_c = num();
    else if (key == "weighting.lambda") lambda_kind = value;
    else if (key == "weighting.gen") gen_w_kind = value;
    else if (key == "weighting.gap_floor") gap_floor = num();
    else if (key == "reference.kind") reference_kind = value;
    else if (key == "reference.gmm") reference_gmm = value;
    else if (key == "reference.checkpoint") reference_checkpoint = value;
    else if (key == "reward.kind") reward_kind = value;
    else if (key == "reward.target") reward_target = to_doubles(key, value);
    else if (key == "reward.bandwidth") reward_bandwidth = num();
    else if (key == "reward.target_component") target_component = static_cast<int>(inum());
    else if (key == "io.checkpoint_every") checkpoint_every = inum();
    else if (key == "io.sample_every") sample_every = inum();
    else if (key == "io.sample_count") sample_count = static_cast<int>(inum());
    else if (key == "io.energy_every") energy_every = inum();
    else if (key == "io.energy_n") energy_n = static_cast<int>(inum());
    else throw config_error("config: unknown key '" + key + "'");
}

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) +
                               ": expected 'key = value'");
        cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("config: cannot read '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

std::string RunConfig::resolved_text() const {
    std::ostringstream os;
    os << "run.seed = " << seed << "\n";
    os << "run.out = " << out << "\n";
    os << "run.iterations = " << iterations << "\n";
    os << "run.batch_size = " << batch_size << "\n";
    os << "process.kind = " << process_kind << "\n";
    os << "process.sigma_min = " << format_double(sigma_min) << "\n";
    os << "process.sigma_max = " << format_double(sigma_max) << "\n";
    os << "time.kind = " << time_kind << "\n";
    os << "time.p_mean = " << format_double(p_mean) << "\n";
    os << "time.p_std = " << format_double(p_std) << "\n";
    os << "model.data_dim = " << data_dim << "\n";
    os << "model.latent_dim = " << latent_dim << "\n";
    os << "model.gen_hidden = " << ints_text(gen_hidden) << "\n";
    os << "model.score_hidden = " << ints_text(score_hidden) << "\n";
    os << "model.sigma_init = " << format_double(sigma_init) << "\n";
    os << "model.sigma_data = " << format_double(sigma_data) << "\n";
    os << "train.alpha_rew = " << format_double(alpha_rew) << "\n";
    os << "train.alpha_cfg = " << format_double(alpha_cfg) << "\n";
    os << "train.k_ta = " << k_ta << "\n";
    os << "train.assistant_warmup = " << assistant_warmup << "\n";
    os << "train.gen_lr = " << format_double(gen_lr) << "\n";
    os << "train.assistant_lr = " << format_double(assistant_lr) << "\n";
    os << "train.adam_beta1 = " << format_double(adam_beta1) << "\n";
    os << "train.adam_beta2 = " << format_double(adam_beta2) << "\n";
    os << "train.adam_eps = " << format_double(adam_eps) << "\n";
    os << "train.ema_decay = " << format_double(ema_decay) << "\n";
    os << "train.baseline = " << baseline << "\n";
    os << "train.omega = " << format_double(omega) << "\n";
    os << "distance.kind = " << distance_kind << "\n";
    os << "distance.c = " << format_double(distance_c) << "\n";
    os << "weighting.lambda = " << lambda_kind << "\n";
    os << "weighting.gen = " << gen_w_kind << "\n";
    os << "weighting.gap_floor = " << format_double(gap_floor) << "\n";
    os << "reference.kind = " << reference_kind << "\n";
    os << "reference.gmm = " << reference_gmm << "\n";
    os << "reference.checkpoint = " << reference_checkpoint << "\n";
    os << "reward.kind = " << reward_kind << "\n";
    os << "reward.target = " << doubles_text(reward_target) << "\n";
    os << "reward.bandwidth = " << format_double(reward_bandwidth) << "\n";
    os << "reward.target_component = " << target_component << "\n";
    os << "io.checkpoint_every = " << checkpoint_every << "\n";
    os << "io.sample_every = " << sample_every << "\n";
    os << "io.sample_count = " << sample_count << "\n";
    os << "io.energy_every = " << energy_every << "\n";
    os << "io.energy_n = " << energy_n << "\n";
    return os.str();
}

std::uint64_t RunConfig::config_hash() const { return hash_name(resolved_text()); }

void RunConfig::apply_preset(const std::string& name) {
    if (name == "dit-style") {
        alpha_rew = 10.0;
        alpha_cfg = 4.5;
    } else if (name == "sd15-style") {
        alpha_rew = 1000.0;
        alpha_cfg = 1.5;
    } else {
        throw config_error("config: unknown preset '" + name + "'");
    }
}

ForwardProcess RunConfig::process() const {
    if (process_kind == "edm") return ForwardProcess::edm(sigma_min, sigma_max);
    if (process_kind == "vp-edm") return ForwardProcess::vp_as_edm();
    throw config_error("config: process.kind must be edm or vp-edm, got '" +
                       process_kind + "'");
}

TimeDistribution RunConfig::time_dist() const {
    if (time_kind == "log-normal") return TimeDistribution::log_normal(p_mean, p_std);
    if (time_kind == "uniform") return TimeDistribution::uniform();
    throw config_error("config: time.kind must be log-normal or uniform");
}

RewardFunction RunConfig::build_reward() const {
    if (reward_kind == "mode-affinity")
        return RewardFunction::mode_affinity(reward_target, reward_bandwidth);
    if (reward_kind == "neg-squared-distance")
        return RewardFunction::neg_squared_distance(reward_target);
    if (reward_kind == "class-logit") {
        // one tanh logit per class pointing at the target direction
        const int d = static_cast<int>(reward_target.size());
        Matrix w(2, d);
        for (int j = 0; j < d; ++j) {
            w(0, j) = -reward_target[static_cast<std::size_t>(j)];
            w(1, j) = reward_target[static_cast<std::size_t>(j)];
        }
        return RewardFunction::class_logit(w, {0.0, 0.0});
    }
    throw config_error("config: reward.kind '" + reward_kind + "' is not a reward");
}

AlignmentConfig RunConfig::alignment(int n_classes) const {
    AlignmentConfig a;
    a.alpha_rew = alpha_rew;
    a.alpha_cfg = alpha_cfg;
    a.k_ta = k_ta;
    if (distance_kind == "squared-l2") a.distance = DistanceFunction::squared_l2();
    else if (distance_kind == "pseudo-huber") a.distance = DistanceFunction::pseudo_huber(distance_c);
    else throw config_error("config: distance.kind must be squared-l2 or pseudo-huber");
    a.omega = omega;
    a.gen_opt = AdamConfig{gen_lr, adam_beta1, adam_beta2, adam_eps};
    a.assistant_opt = AdamConfig{assistant_lr, adam_beta1, adam_beta2, adam_eps};
    a.ema_decay = ema_decay;
    a.process = process();
    a.time_dist = time_dist();
    if (lambda_kind == "edm-lambda") a.lambda_w = WeightingFunction::edm_lambda(sigma_data);
    else if (lambda_kind == "constant") a.lambda_w = WeightingFunction::constant();
    else throw config_error("config: weighting.lambda must be edm-lambda or constant");
    if (gen_w_kind == "constant") a.gen_w = WeightingFunction::constant();
    else if (gen_w_kind == "edm-lambda") a.gen_w = WeightingFunction::edm_lambda(sigma_data);
    else if (gen_w_kind == "adaptive-gen") a.gen_w = WeightingFunction::adaptive_gen(gap_floor);
    else throw config_error("config: weighting.gen must be constant, edm-lambda or adaptive-gen");
    a.batch_size = batch_size;
    a.iterations = iterations;
    a.assistant_warmup = assistant_warmup;
    a.seed = seed;
    a.baseline = baseline;
    a.data_dim = data_dim;
    a.latent_dim = latent_dim;
    a.gen_hidden = gen_hidden;
    a.score_hidden = score_hidden;
    a.sigma_init = sigma_init;
    a.sigma_data = sigma_data;
    a.n_classes = n_classes;
    if (reward_kind != "none") a.reward = build_reward();
    a.target_component = target_component;
    return a;
}

RunIo RunConfig::io(const std::string& out_dir) const {
    RunIo io;
    io.out_dir = out_dir;
    io.checkpoint_every = checkpoint_every;
    io.sample_every = sample_every;
    io.sample_count = sample_count;
    io.energy_every = energy_every;
    io.energy_n = energy_n;
    return io;
}

void save_score_model(const ScoreModel& model, const std::string& path,
                      nlohmann::ordered_json meta) {
    Checkpoint ck;
    ck.meta = meta.is_null() ? nlohmann::ordered_json::object() : std::move(meta);
    ck.meta["kind"] = "score-model";
    ck.meta["data_dim"] = model.data_dim();
    ck.meta["n_classes"] = model.n_classes();
    ck.meta["sigma_data"] = model.sigma_data();
    ck.meta["parameterization"] =
        model.parameterization() == ScoreModel::Parameterization::edm_denoiser
            ? "edm-denoiser"
            : "direct-score";
    std::vector<int> hidden(model.backbone.widths().begin() + 1,
                            model.backbone.widths().end() - 1);
    ck.meta["hidden"] = hidden;
    ScoreModel& mut = const_cast<ScoreModel&>(model);
    for (auto& [name, p] : mut.named_params("model")) ck.add(name, *p);
    ck.save(path);
}

ScoreModel load_score_model(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (!ck.meta.contains("kind") || ck.meta["kind"] != "score-model")
        throw config_error("checkpoint: '" + path + "' is not a score model");
    Rng dummy(0);
    ScoreModel model = ScoreModel::create(
        ck.meta.at("data_dim").get<int>(), ck.meta.at("n_classes").get<int>(),
        ck.meta.at("hidden").get<std::vector<int>>(),
        ck.meta.at("parameterization").get<std::string>() == "edm-denoiser"
            ? ScoreModel::Parameterization::edm_denoiser
            : ScoreModel::Parameterization::direct_score,
        ck.meta.at("sigma_data").get<double>(), dummy);
    for (auto& [name, p] : model.named_params("model")) ck.load_into(name, *p);
    return model;
}

std::string resolve_out_dir(const std::string& out, const char* env_value) {
    if (out.empty()) return out;
    std::filesystem::path p(out);
    if (p.is_absolute() || env_value == nullptr || *env_value == '\0') return out;
    return (std::filesystem::path(env_value) / p).string();
}

}  // namespace distar
