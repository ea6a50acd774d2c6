// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>

#include "distar/array.hpp"
#include "distar/rng.hpp"

namespace distar {

// Linear scale-and-noise diffusion: x_t = alpha(t) x0 + beta(t) eps. The EDM
// member of the family has alpha = 1, beta(t) = t and horizon T = sigma_max.
// A VP-trained reference is handled exclusively through its EDM
// data-prediction view, so both kinds share the same dynamics and differ only
// in the noise range they truncate sampled times to.
struct ForwardProcess {
    enum class Kind { edm, vp_edm };
    Kind kind = Kind::edm;
    double sigma_min = 0.01;
    double sigma_max = 156.6155;
    // custom members of the linear family (tests only); null means EDM
    std::function<double(double)> alpha_fn, beta_fn;

    double alpha(double t) const { return alpha_fn ? alpha_fn(t) : 1.0; }
    double beta(double t) const { return beta_fn ? beta_fn(t) : t; }
    double horizon() const { return sigma_max; }
    void check_time(double t) const;  // t in (0, T]

    static ForwardProcess edm(double smin = 0.01, double smax = 156.6155);
    static ForwardProcess vp_as_edm();  // the VP-derived noise range
    static ForwardProcess linear(std::function<double(double)> alpha,
                                 std::function<double(double)> beta, double horizon);
};

struct TimeDistribution {
    enum class Kind { log_normal, uniform };
    Kind kind = Kind::log_normal;
    double p_mean = -2.0;
    double p_std = 2.0;

    static TimeDistribution log_normal(double p_mean = -2.0, double p_std = 2.0);
    static TimeDistribution uniform();  // over (0, T] of the process
};

// t = exp(p_mean + p_std * n), n ~ N(0,1); unclamped.
double sample_time(const TimeDistribution& dist, Rng& rng);
// clamped to the process noise range [sigma_min, sigma_max]; draws below
// sigma_min come out exactly sigma_min.
double sample_time(const TimeDistribution& dist, const ForwardProcess& process, Rng& rng);

struct WeightingFunction {
    enum class Kind { edm_lambda, constant, adaptive_gen };
    Kind kind = Kind::constant;
    double sigma_data = 0.5;   // edm_lambda
    double gap_floor = 1e-8;   // adaptive_gen division guard

    static WeightingFunction edm_lambda(double sigma_data = 0.5);
    static WeightingFunction constant();
    static WeightingFunction adaptive_gen(double gap_floor = 1e-8);
};

// edm_lambda: (t^2 + sigma_data^2) / (t * sigma_data)^2; constant: 1.
// adaptive_gen needs the per-sample denoiser gap and is handled by the
// overload below.
double weight(const WeightingFunction& wf, double t);
// adaptive_gen: 1 / max(||gap||_2, floor), gap = assistant vs reference
// denoiser outputs for one sample; always detached from gradients.
double weight(const WeightingFunction& wf, double t, std::span<const double> denoiser_gap);

// x_t = alpha(t) x0 + beta(t) eps, one t per row; gradient flows through x0
// only (eps and t enter as plain values).
Array diffuse(const ForwardProcess& p, const Array& x0, std::span<const double> t,
              const Array& eps);
Array diffuse(const ForwardProcess& p, const Array& x0, double t, const Array& eps);

// grad_{x_t} log q_t(x_t | x0) = -(x_t - alpha(t) x0) / beta(t)^2; always a
// detached value.
Array transition_score(const ForwardProcess& p, const Array& x_t, const Array& x0,
                       std::span<const double> t);
Array transition_score(const ForwardProcess& p, const Array& x_t, const Array& x0, double t);

// geometric grid over [lo, hi], used by the divergence quadrature
std::vector<double> geometric_time_grid(double lo, double hi, int points);

}  // namespace distar
