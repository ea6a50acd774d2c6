// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "distar/array.hpp"
#include "distar/rng.hpp"

namespace distar {

// Fully connected net, softplus on hidden layers, identity output. The smooth
// activation keeps score fields differentiable everywhere.
class Mlp {
  public:
    Mlp() = default;
    static Mlp create(std::vector<int> widths, Rng& rng, double last_layer_scale = 1.0);

    // Forward through the tape. With frozen_params the weights enter as plain
    // values and gradient flows through x only (the sg[.] evaluation).
    Array forward(const Array& x, bool frozen_params = false) const;

    const std::vector<int>& widths() const { return widths_; }
    int in_dim() const { return widths_.front(); }
    int out_dim() const { return widths_.back(); }
    std::size_t param_count() const;

    std::vector<Array*> params();
    std::vector<const Array*> params() const;
    std::vector<std::pair<std::string, Array*>> named_params(const std::string& prefix);

  private:
    std::vector<int> widths_;
    std::vector<Array> weights_;  // [in_i, out_i]
    std::vector<Array> biases_;   // [out_i]
};

// FNV-1a over the raw parameter bytes; used to assert freeze discipline.
std::uint64_t param_hash(const std::vector<const Array*>& params);

}  // namespace distar
