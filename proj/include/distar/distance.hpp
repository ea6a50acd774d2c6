// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "distar/common.hpp"

namespace distar {

// The proper distance d(.) applied to score gaps. value(0) = 0, value >= 0.
// pseudo_huber: sqrt(||y||^2 + c^2) - c, with d'(y) = y / sqrt(||y||^2 + c^2),
// so the derivative norm stays below 1. Norms are taken per sample over the
// feature axis.
struct DistanceFunction {
    enum class Kind { squared_l2, pseudo_huber };
    Kind kind = Kind::squared_l2;
    double c = 0.1;

    static DistanceFunction squared_l2();
    static DistanceFunction pseudo_huber(double c = 0.1);

    double value(std::span<const double> y) const;
    void grad(std::span<const double> y, std::span<double> out) const;
};

}  // namespace distar
