// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "distar/losses.hpp"
#include "distar/training.hpp"

namespace distar {

// One executable identity check. For plain comparisons pass means
// |estimate - oracle| <= tolerance; for zero-mean Monte Carlo checks
// (mc_zero) it means |estimate| <= k_se * se.
struct CheckReport {
    std::string name;
    double estimate = 0;
    double oracle = 0;
    double tolerance = 0;
    double se = 0;
    bool mc_zero = false;
    double k_se = 4.0;
    bool pass = false;
    long n = 0;
    std::uint64_t seed = 0;
    std::string note;

    void judge();  // fills pass from the fields above
    nlohmann::ordered_json to_json() const;
};

// Analytic score of an affine generator's diffused pushforward, exposed as a
// frozen ScoreField (replaces the assistant in the gradient-identity checks so
// approximation error never enters them). All rows of one call must share t.
class AnalyticGeneratorField final : public ScoreField {
  public:
    AnalyticGeneratorField(AffineGenerator gen, ForwardProcess proc, double mean_shift = 0);
    Array operator()(const Array& x, std::span<const double> t,
                     std::span<const int> cls) const override;

  private:
    AffineGenerator gen_;
    ForwardProcess proc_;
    double mean_shift_;
};

enum class ProbeField { constant, linear, tanh_warp };

// E[u(x_t)^T (s_{p,t}(x_t) - grad log q(x_t|x0))] = 0 for theta-free u.
// corrupt_score shifts the analytic field mean; the estimate then sits many
// standard errors from zero.
CheckReport check_score_projection(const AffineGenerator& p, const ForwardProcess& proc,
                                   double t, ProbeField u, long n, std::uint64_t seed,
                                   bool corrupt_score = false);

struct GradCheckOptions {
    double fd_step = 1e-3;
    int grid_points = 64;
    double grid_lo = 0.05;
    double grid_hi = 20.0;
    double tolerance = 2e-2;
    bool exact_oracle = false;  // squared L2 + single-gaussian reference only
};

// Gradient identity between the tractable regularization loss (backward pass
// through the real loss op on a quadrature grid) and finite differences of the
// divergence with the sampling distribution frozen at the center point.
// Reports the max-norm relative gradient error.
CheckReport check_theorem1(const AffineGenerator& p, const GaussianMixture& q,
                           const ForwardProcess& proc, const DistanceFunction& dist,
                           const WeightingFunction& w, long n, std::uint64_t seed,
                           const GradCheckOptions& opt, bool corrupt_loss_side = false);

// Gradient identity between the cfg loss and finite differences of the
// negative implicit reward -E[w(t) log p(x_t|c)/p(x_t)] under common random
// numbers.
CheckReport check_theorem2(const AffineGenerator& gen, const GaussianMixture& two_class,
                           const ForwardProcess& proc, const WeightingFunction& w, long n,
                           std::uint64_t seed, const GradCheckOptions& opt,
                           bool corrupt_loss_side = false);

// directional analogue: moving the generator mean toward the class mode raises
// the implicit reward (analytic log densities, deterministic draws)
CheckReport check_theorem2_sign(const GaussianMixture& two_class,
                                const ForwardProcess& proc, int cls, long n,
                                std::uint64_t seed);

struct DsmRecoveryOptions {
    long steps = 2000;
    int batch = 2048;
    double lr = 1e-2;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double ema_decay = 0.997;  // evaluation uses the smoothed weights
    double sigma_data = 1.5;
    TimeDistribution time_dist = TimeDistribution::log_normal();
    std::vector<int> hidden{128, 128, 64};
    std::vector<double> eval_times{0.1, 0.5, 2.0};
    double tolerance = 0.10;
    int grid_per_axis = 20;
};

// Trains a score model by denoising score matching on an analytic mixture and
// reports the worst grid-relative score error over the eval times, measured on
// the central 95% mass region. untrained_control skips training.
CheckReport check_dsm_recovery(const GaussianMixture& data, const ForwardProcess& proc,
                               std::uint64_t seed, const DsmRecoveryOptions& opt,
                               bool untrained_control = false);

// relative score error of an arbitrary frozen score model on the region grid
double score_grid_rel_error(const ScoreModel& model, const GaussianMixture& data,
                            const ForwardProcess& proc, double t, int grid_per_axis,
                            std::uint64_t seed);

// The standard battery (all checks at their spec tolerances) or the negative
// controls (each must fail its check).
std::vector<CheckReport> run_battery(std::uint64_t seed, bool negative_controls,
                                     bool quick = false);
void write_reports_jsonl(const std::vector<CheckReport>& reports, const std::string& path);

}  // namespace distar
