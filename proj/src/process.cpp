// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/process.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace distar {

void ForwardProcess::check_time(double t) const {
    if (!(t > 0.0) || t > horizon() * (1.0 + 1e-12))
        throw numeric_error("time " + std::to_string(t) + " outside (0, " +
                            std::to_string(horizon()) + "]");
}

ForwardProcess ForwardProcess::edm(double smin, double smax) {
    ForwardProcess p;
    p.kind = Kind::edm;
    p.sigma_min = smin;
    p.sigma_max = smax;
    return p;
}

ForwardProcess ForwardProcess::vp_as_edm() {
    ForwardProcess p;
    p.kind = Kind::vp_edm;
    p.sigma_min = 0.01;
    p.sigma_max = 156.6155;
    return p;
}

ForwardProcess ForwardProcess::linear(std::function<double(double)> alpha,
                                      std::function<double(double)> beta,
                                      double horizon) {
    ForwardProcess p;
    p.kind = Kind::edm;
    p.sigma_min = 0.0;
    p.sigma_max = horizon;
    p.alpha_fn = std::move(alpha);
    p.beta_fn = std::move(beta);
    return p;
}

TimeDistribution TimeDistribution::log_normal(double p_mean, double p_std) {
    TimeDistribution d;
    d.kind = Kind::log_normal;
    d.p_mean = p_mean;
    d.p_std = p_std;
    return d;
}

TimeDistribution TimeDistribution::uniform() {
    TimeDistribution d;
    d.kind = Kind::uniform;
    return d;
}

double sample_time(const TimeDistribution& dist, Rng& rng) {
    if (dist.kind == TimeDistribution::Kind::log_normal)
        return std::exp(dist.p_mean + dist.p_std * rng.normal());
    return rng.uniform();  // scaled by the caller's horizon in the clamped overload
}

double sample_time(const TimeDistribution& dist, const ForwardProcess& process, Rng& rng) {
    double t;
    if (dist.kind == TimeDistribution::Kind::uniform) {
        // uniform over (0, T], then truncated below like any other draw
        t = rng.uniform() * process.horizon();
    } else {
        t = sample_time(dist, rng);
    }
    return std::clamp(t, process.sigma_min, process.sigma_max);
}

WeightingFunction WeightingFunction::edm_lambda(double sigma_data) {
    WeightingFunction w;
    w.kind = Kind::edm_lambda;
    w.sigma_data = sigma_data;
    return w;
}

WeightingFunction WeightingFunction::constant() { return WeightingFunction{}; }

WeightingFunction WeightingFunction::adaptive_gen(double gap_floor) {
    WeightingFunction w;
    w.kind = Kind::adaptive_gen;
    w.gap_floor = gap_floor;
    return w;
}

double weight(const WeightingFunction& wf, double t) {
    switch (wf.kind) {
        case WeightingFunction::Kind::constant: return 1.0;
        case WeightingFunction::Kind::edm_lambda: {
            if (!(t > 0)) throw numeric_error("edm_lambda weight needs t > 0");
            const double ts = t * wf.sigma_data;
            return (t * t + wf.sigma_data * wf.sigma_data) / (ts * ts);
        }
        case WeightingFunction::Kind::adaptive_gen:
            throw config_error("adaptive_gen weight needs the denoiser gap");
    }
    return 1.0;
}

double weight(const WeightingFunction& wf, double t, std::span<const double> denoiser_gap) {
    if (wf.kind != WeightingFunction::Kind::adaptive_gen) return weight(wf, t);
    double s = 0;
    for (double v : denoiser_gap) s += v * v;
    return 1.0 / std::max(std::sqrt(s), wf.gap_floor);
}

Array diffuse(const ForwardProcess& p, const Array& x0, std::span<const double> t,
              const Array& eps) {
    if (eps.shape() != x0.shape())
        throw shape_error("diffuse: eps shape " + shape_str(eps.shape()) +
                          " vs x0 shape " + shape_str(x0.shape()));
    const int n = x0.rows();
    if (static_cast<int>(t.size()) != n)
        throw shape_error("diffuse: one time per row expected");
    std::vector<double> alphas(t.size()), noise(x0.size());
    const int m = x0.cols();
    for (int i = 0; i < n; ++i) {
        p.check_time(t[static_cast<std::size_t>(i)]);
        alphas[static_cast<std::size_t>(i)] = p.alpha(t[static_cast<std::size_t>(i)]);
        const double b = p.beta(t[static_cast<std::size_t>(i)]);
        for (int j = 0; j < m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * m + j;
            noise[k] = b * eps[k];
        }
    }
    Array scaled = row_scale(x0, alphas);
    return add(scaled, Array(x0.shape(), std::move(noise)));
}

Array diffuse(const ForwardProcess& p, const Array& x0, double t, const Array& eps) {
    std::vector<double> ts(static_cast<std::size_t>(x0.rows()), t);
    return diffuse(p, x0, ts, eps);
}

Array transition_score(const ForwardProcess& p, const Array& x_t, const Array& x0,
                       std::span<const double> t) {
    if (x_t.shape() != x0.shape())
        throw shape_error("transition_score: x_t shape " + shape_str(x_t.shape()) +
                          " vs x0 shape " + shape_str(x0.shape()));
    const int n = x0.rows(), m = x0.cols();
    if (static_cast<int>(t.size()) != n)
        throw shape_error("transition_score: one time per row expected");
    Array out(x0.shape());
    for (int i = 0; i < n; ++i) {
        const double ti = t[static_cast<std::size_t>(i)];
        p.check_time(ti);
        const double b = p.beta(ti);
        if (b <= 0.0)
            throw numeric_error("transition_score: beta(t) = 0 at t = " + std::to_string(ti));
        const double a = p.alpha(ti);
        const double inv_b2 = 1.0 / (b * b);
        for (int j = 0; j < m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * m + j;
            out[k] = -(x_t[k] - a * x0[k]) * inv_b2;
        }
    }
    return out;  // plain value, never recorded
}

Array transition_score(const ForwardProcess& p, const Array& x_t, const Array& x0, double t) {
    std::vector<double> ts(static_cast<std::size_t>(x0.rows()), t);
    return transition_score(p, x_t, x0, ts);
}

std::vector<double> geometric_time_grid(double lo, double hi, int points) {
    if (!(lo > 0) || !(hi > lo) || points < 2)
        throw config_error("geometric_time_grid needs 0 < lo < hi and >= 2 points");
    std::vector<double> grid(static_cast<std::size_t>(points));
    const double ratio = std::log(hi / lo) / (points - 1);
    for (int i = 0; i < points; ++i)
        grid[static_cast<std::size_t>(i)] = lo * std::exp(ratio * i);
    grid.back() = hi;
    return grid;
}

}  // namespace distar
