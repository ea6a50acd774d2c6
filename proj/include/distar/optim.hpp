// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "distar/array.hpp"

namespace distar {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.0;  // the training recipe runs Adam with (0.0, 0.999)
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Moment shapes mirror parameter shapes;
// the step counter advances by exactly one per apply.
struct AdamState {
    AdamConfig cfg;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState create(const std::vector<Array*>& params, AdamConfig cfg);
    // grads[i] pairs with params[i]; NaN/Inf gradients abort with a diagnostic.
    void apply(const std::vector<Array*>& params,
               const std::vector<std::span<const double>>& grads);
};

// shadow <- decay * shadow + (1 - decay) * params
struct EmaState {
    double decay = 0.95;
    std::vector<std::vector<double>> shadow;

    static EmaState create(const std::vector<Array*>& params, double decay);
    void update(const std::vector<Array*>& params);
    void copy_to(const std::vector<Array*>& params) const;
};

}  // namespace distar
