// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/mlp.hpp"

#include <cmath>
#include <cstring>

namespace distar {

Mlp Mlp::create(std::vector<int> widths, Rng& rng, double last_layer_scale) {
    if (widths.size() < 2) throw shape_error("mlp needs at least [in, out] widths");
    for (int w : widths)
        if (w <= 0) throw shape_error("mlp widths must be positive");
    Mlp net;
    net.widths_ = std::move(widths);
    const std::size_t layers = net.widths_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const int in = net.widths_[l];
        const int out = net.widths_[l + 1];
        Array w(Shape{in, out});
        const double sd = 1.0 / std::sqrt(static_cast<double>(in));
        const double s = (l + 1 == layers) ? sd * last_layer_scale : sd;
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = s * rng.normal();
        net.weights_.push_back(std::move(w));
        net.biases_.emplace_back(Shape{out});
    }
    return net;
}

Array Mlp::forward(const Array& x, bool frozen_params) const {
    if (x.cols() != in_dim())
        throw shape_error("mlp forward: input cols " + std::to_string(x.cols()) +
                          " vs expected " + std::to_string(in_dim()));
    Array h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = frozen_params ? affine_frozen(h, weights_[l], biases_[l])
                          : affine(h, weights_[l], biases_[l]);
        if (l + 1 < weights_.size()) h = softplus(h);
    }
    return h;
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += weights_[l].size() + biases_[l].size();
    return n;
}

std::vector<Array*> Mlp::params() {
    std::vector<Array*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<const Array*> Mlp::params() const {
    std::vector<const Array*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<std::pair<std::string, Array*>> Mlp::named_params(const std::string& prefix) {
    std::vector<std::pair<std::string, Array*>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.emplace_back(prefix + ".w" + std::to_string(l), &weights_[l]);
        out.emplace_back(prefix + ".b" + std::to_string(l), &biases_[l]);
    }
    return out;
}

std::uint64_t param_hash(const std::vector<const Array*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Array* p : params) {
        for (double v : p->values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xffu;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

}  // namespace distar
