// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/optim.hpp"

#include <cmath>
#include <string>

namespace distar {

AdamState AdamState::create(const std::vector<Array*>& params, AdamConfig cfg) {
    if (cfg.lr <= 0) throw config_error("adam: lr must be > 0");
    AdamState st;
    st.cfg = cfg;
    for (const Array* p : params) {
        st.m.emplace_back(p->size(), 0.0);
        st.v.emplace_back(p->size(), 0.0);
    }
    return st;
}

void AdamState::apply(const std::vector<Array*>& params,
                      const std::vector<std::span<const double>>& grads) {
    if (params.size() != m.size() || grads.size() != m.size())
        throw shape_error("adam: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i]->size())
            throw shape_error("adam: gradient size mismatch on parameter " +
                              std::to_string(i));
        for (double g : grads[i])
            if (!std::isfinite(g))
                throw numeric_error("adam: non-finite gradient on parameter " +
                                    std::to_string(i) + " at step " +
                                    std::to_string(step + 1));
    }
    ++step;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i]->data();
        auto& mi = m[i];
        auto& vi = v[i];
        const auto g = grads[i];
        for (std::size_t k = 0; k < g.size(); ++k) {
            mi[k] = b1 * mi[k] + (1.0 - b1) * g[k];
            vi[k] = b2 * vi[k] + (1.0 - b2) * g[k] * g[k];
            const double mhat = mi[k] / c1;
            const double vhat = vi[k] / c2;
            p[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

EmaState EmaState::create(const std::vector<Array*>& params, double decay) {
    if (decay < 0.0 || decay >= 1.0) throw config_error("ema: decay must be in [0,1)");
    EmaState st;
    st.decay = decay;
    for (const Array* p : params)
        st.shadow.emplace_back(p->values().begin(), p->values().end());
    return st;
}

void EmaState::update(const std::vector<Array*>& params) {
    if (params.size() != shadow.size())
        throw shape_error("ema: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->size() != shadow[i].size())
            throw shape_error("ema: shadow shape mismatch on parameter " +
                              std::to_string(i));
        const double* p = params[i]->data();
        auto& s = shadow[i];
        for (std::size_t k = 0; k < s.size(); ++k)
            s[k] = decay * s[k] + (1.0 - decay) * p[k];
    }
}

void EmaState::copy_to(const std::vector<Array*>& params) const {
    if (params.size() != shadow.size())
        throw shape_error("ema: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i]->data();
        for (std::size_t k = 0; k < shadow[i].size(); ++k) p[k] = shadow[i][k];
    }
}

}  // namespace distar
