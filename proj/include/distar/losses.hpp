// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "distar/distance.hpp"
#include "distar/models.hpp"

namespace distar {

// Toy stand-ins for a learned reward model. Bounded and smooth so large reward
// scales stay trainable.
struct RewardFunction {
    enum class Kind { mode_affinity, neg_squared_distance, class_logit };
    Kind kind = Kind::mode_affinity;
    std::vector<double> target;  // mu* for mode_affinity / neg_squared_distance
    double bandwidth = 1.0;
    Matrix class_w;               // [n_classes, d] for class_logit
    std::vector<double> class_b;  // [n_classes]

    static RewardFunction mode_affinity(std::vector<double> target, double bandwidth = 1.0);
    static RewardFunction neg_squared_distance(std::vector<double> target);
    static RewardFunction class_logit(Matrix w, std::vector<double> b);

    // per-sample rewards [n,1], differentiable through x0
    Array reward(const Array& x0, std::span<const int> cls) const;
    double value(std::span<const double> x, int cls) const;
};

// total = reg + reward + cfg; per-term gradient norms over generator params
struct LossBreakdown {
    double reg = 0, reward = 0, cfg = 0, total = 0;
    double grad_norm_reg = 0, grad_norm_reward = 0, grad_norm_cfg = 0;
};

// Per-loss sampling streams. Times come from the dedicated time stream so
// toggling a phase never shifts another phase's noise. Draw order inside each
// loss is fixed: all n times first, then the n x d noise matrix row-major.
struct SampleStreams {
    Rng& noise;
    Rng& time;
};

// d'(y) per sample (norms over the feature axis); plain values, no tape.
Array distance_grad(const DistanceFunction& d, const Array& y);

// Denoising regression over the model's own samples: mean over the batch of
// lambda(t) ||d_model(x_t, t, c) - x0||^2 with t ~ time_dist and
// x_t = x0 + t eps. x0 is detached inside; only model parameters train.
// Equivalently lambda(t) t^4 times the score residual against
// transition_score, which is what the lambda weighting is calibrated for.
Array dsm_loss(const ScoreModel& model, const Array& x0, std::span<const int> cls,
               const ForwardProcess& proc, const TimeDistribution& td,
               const WeightingFunction& lambda_w, SampleStreams rng);

// Score-divergence regularization: mean of
//   -w(t) d'(sg[s_phi - s_ref])^T { s_phi(x_t) - transition_score(x_t|x0) }
// with gradient flowing only through x_t = diffuse(g(z,c), t, eps). Both score
// networks enter with frozen parameters; the gap inside d' is evaluated at the
// detached x_t.
Array di_star_reg_loss(const Generator& gen, const ScoreField& assistant,
                       const ReferenceScore& ref, const DistanceFunction& dist,
                       const ForwardProcess& proc, const TimeDistribution& td,
                       const WeightingFunction& w, const Array& z,
                       std::span<const int> cls, SampleStreams rng);

// Implicit classifier-free reward: mean of
//   w(t) { s_ref(sg[x_t]|t,null) - s_ref(sg[x_t]|t,c) }^T x_t,
// whose gradient equals the gradient of the negative implicit reward
// -E[w(t) log p_ref(x_t|c)/p_ref(x_t)]; descending it raises the conditional
// over unconditional log-density ratio.
Array cfg_reward_loss(const Generator& gen, const ReferenceScore& ref,
                      const ForwardProcess& proc, const TimeDistribution& td,
                      const WeightingFunction& w, const Array& z,
                      std::span<const int> cls, SampleStreams rng);

// -mean r(g(z,c), c); fully differentiable through the generator. The reward
// scale is applied by the caller.
Array explicit_reward_loss(const Generator& gen, const RewardFunction& r, const Array& z,
                           std::span<const int> cls);

// Integral-KL gradient surrogate (the dipp-kl baseline): mean of
//   w(t) sg[s_phi(x_t) - s_ref(x_t)]^T x_t, gradient through x_t only.
Array dipp_kl_loss(const Generator& gen, const ScoreField& assistant,
                   const ReferenceScore& ref, const ForwardProcess& proc,
                   const TimeDistribution& td, const WeightingFunction& w, const Array& z,
                   std::span<const int> cls, SampleStreams rng);

}  // namespace distar
