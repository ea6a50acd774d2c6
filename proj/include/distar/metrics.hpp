// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "distar/models.hpp"

namespace distar {

// Two-sample energy distance 2 E||x-y|| - E||x-x'|| - E||y-y'|| (V-statistic);
// zero iff the distributions match, used as the sample-quality oracle.
double energy_distance(const Array& x, const Array& y);

// fraction of samples whose nearest reference component mean (euclidean) is
// the target component
double target_mode_fraction(const Array& samples, const GaussianMixture& ref,
                            int target_component);

// Time-averaged E[log p(x_t|c) - log p(x_t)] under the generator's diffused
// samples, evaluated with the analytic reference densities on a fixed grid
// (trapezoid-normalized). Fresh noise comes from rng.
double implicit_reward_metric(const AnalyticReference& ref, const Array& x0,
                              std::span<const int> cls, const ForwardProcess& proc,
                              std::span<const double> time_grid, Rng& rng);

// Fixed-schema metrics CSV:
// iter,loss_dsm,loss_reg,loss_reward,loss_cfg,reward_mean,target_mode_fraction,
// energy_distance,grad_norm_gen,grad_norm_assistant
class MetricsWriter {
  public:
    static const std::vector<std::string>& columns();
    explicit MetricsWriter(const std::string& path, bool append = false);
    ~MetricsWriter();
    void write_row(long iter, const std::vector<double>& values);  // 9 values
    void flush();

  private:
    struct Impl;
    Impl* impl_;
};

struct MetricsRow {
    long iter = 0;
    std::vector<double> values;
};
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

std::string format_double(double v);  // shortest round-trip, used by all writers

}  // namespace distar
