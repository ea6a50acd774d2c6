// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/losses.hpp"

#include <cmath>

namespace distar {

// ---- RewardFunction ----

RewardFunction RewardFunction::mode_affinity(std::vector<double> target, double bandwidth) {
    if (!(bandwidth > 0)) throw config_error("mode_affinity: bandwidth must be positive");
    RewardFunction r;
    r.kind = Kind::mode_affinity;
    r.target = std::move(target);
    r.bandwidth = bandwidth;
    return r;
}

RewardFunction RewardFunction::neg_squared_distance(std::vector<double> target) {
    RewardFunction r;
    r.kind = Kind::neg_squared_distance;
    r.target = std::move(target);
    return r;
}

RewardFunction RewardFunction::class_logit(Matrix w, std::vector<double> b) {
    if (w.n != static_cast<int>(b.size()))
        throw config_error("class_logit: one bias per class row expected");
    RewardFunction r;
    r.kind = Kind::class_logit;
    r.class_w = std::move(w);
    r.class_b = std::move(b);
    return r;
}

Array RewardFunction::reward(const Array& x0, std::span<const int> cls) const {
    const int n = x0.rows(), d = x0.cols();
    switch (kind) {
        case Kind::mode_affinity: {
            if (static_cast<int>(target.size()) != d)
                throw shape_error("mode_affinity: target dimension mismatch");
            Array mu(Shape{1, d}, target);
            Array diff = sub(x0, mu);
            const double s = -0.5 / (bandwidth * bandwidth);
            return exp_op(scale(rowsum(square(diff)), s));
        }
        case Kind::neg_squared_distance: {
            if (static_cast<int>(target.size()) != d)
                throw shape_error("neg_squared_distance: target dimension mismatch");
            Array mu(Shape{1, d}, target);
            return neg(rowsum(square(sub(x0, mu))));
        }
        case Kind::class_logit: {
            if (class_w.m != d) throw shape_error("class_logit: weight dimension mismatch");
            std::vector<int> rows(cls.size());
            std::vector<double> bias(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                const int c = cls[static_cast<std::size_t>(i)];
                if (c < 0 || c >= class_w.n)
                    throw config_error("class_logit: reward needs a real class, got " +
                                       std::to_string(c));
                rows[static_cast<std::size_t>(i)] = c;
                bias[static_cast<std::size_t>(i)] = class_b[static_cast<std::size_t>(c)];
            }
            Array wtab(Shape{class_w.n, d}, class_w.a);
            Array wrows = take_rows_frozen(wtab, rows);
            Array act = add(rowsum(mul(x0, wrows)), Array(Shape{n, 1}, std::move(bias)));
            return tanh_op(act);
        }
    }
    throw config_error("reward: unknown kind");
}

double RewardFunction::value(std::span<const double> x, int cls) const {
    switch (kind) {
        case Kind::mode_affinity: {
            double q = 0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double v = x[j] - target[j];
                q += v * v;
            }
            return std::exp(-0.5 * q / (bandwidth * bandwidth));
        }
        case Kind::neg_squared_distance: {
            double q = 0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double v = x[j] - target[j];
                q += v * v;
            }
            return -q;
        }
        case Kind::class_logit: {
            if (cls < 0 || cls >= class_w.n)
                throw config_error("class_logit: reward needs a real class");
            double s = class_b[static_cast<std::size_t>(cls)];
            for (int j = 0; j < class_w.m; ++j) s += class_w(cls, j) * x[static_cast<std::size_t>(j)];
            return std::tanh(s);
        }
    }
    throw config_error("reward: unknown kind");
}

// ---- shared helpers ----

Array distance_grad(const DistanceFunction& d, const Array& y) {
    const int n = y.rows(), m = y.cols();
    Array out(Shape{n, m});
    std::vector<double> row_out(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) {
        d.grad(y.row(i), row_out);
        for (int j = 0; j < m; ++j)
            out[static_cast<std::size_t>(i) * m + j] = row_out[static_cast<std::size_t>(j)];
    }
    return out;
}

namespace {

struct DrawnBatch {
    std::vector<double> t;
    Array eps;
};

// fixed draw order: n times, then the n x d noise matrix row-major
DrawnBatch draw_batch(int n, int d, const ForwardProcess& proc, const TimeDistribution& td,
                      SampleStreams& rng) {
    DrawnBatch b;
    b.t.resize(static_cast<std::size_t>(n));
    for (auto& v : b.t) v = sample_time(td, proc, rng.time);
    b.eps = Array(Shape{n, d});
    rng.noise.fill_normal(b.eps.data(), b.eps.size());
    return b;
}

std::vector<double> per_sample_weights(const WeightingFunction& w,
                                       std::span<const double> t,
                                       const Array* score_gap) {
    std::vector<double> out(t.size());
    if (w.kind == WeightingFunction::Kind::adaptive_gen) {
        if (score_gap == nullptr)
            throw config_error("adaptive weighting is only defined for the "
                               "score-regularization term");
        const int m = score_gap->cols();
        std::vector<double> dgap(static_cast<std::size_t>(m));
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto row = score_gap->row(static_cast<int>(i));
            // denoiser gap = t^2 * score gap
            for (int j = 0; j < m; ++j) dgap[static_cast<std::size_t>(j)] = t[i] * t[i] * row[j];
            out[i] = weight(w, t[i], dgap);
        }
    } else {
        for (std::size_t i = 0; i < t.size(); ++i) out[i] = weight(w, t[i]);
    }
    return out;
}

Array weighted_mean_col(const Array& col, std::span<const double> w) {
    return mean(row_scale(col, w));
}

}  // namespace

// ---- losses ----

Array dsm_loss(const ScoreModel& model, const Array& x0, std::span<const int> cls,
               const ForwardProcess& proc, const TimeDistribution& td,
               const WeightingFunction& lambda_w, SampleStreams rng) {
    const int n = x0.rows();
    if (n == 0) throw shape_error("dsm_loss: empty batch");
    Array x0d = x0.detached();
    auto batch = draw_batch(n, x0.cols(), proc, td, rng);
    Array x_t = diffuse(proc, x0d, batch.t, batch.eps);
    Array d_out = model.denoiser(x_t, batch.t, cls);
    Array resid2 = rowsum(square(sub(d_out, x0d)));
    const auto lam = per_sample_weights(lambda_w, batch.t, nullptr);
    return weighted_mean_col(resid2, lam);
}

Array di_star_reg_loss(const Generator& gen, const ScoreField& assistant,
                       const ReferenceScore& ref, const DistanceFunction& dist,
                       const ForwardProcess& proc, const TimeDistribution& td,
                       const WeightingFunction& w, const Array& z,
                       std::span<const int> cls, SampleStreams rng) {
    const int n = z.rows();
    Array x0 = gen.generate(z, cls);
    auto batch = draw_batch(n, gen.data_dim(), proc, td, rng);
    Array x_t = diffuse(proc, x0, batch.t, batch.eps);
    Array x_hat = x_t.detached();

    // frozen parameters: gradient reaches the generator through x_t only
    Array s_phi = assistant(x_t, batch.t, cls);
    Array s_ref = ref.score_batch(x_hat, batch.t, cls);
    Array y = sub(s_phi.detached(), s_ref);  // detached score gap at sg[x_t]
    Array u = distance_grad(dist, y);

    Array ts = transition_score(proc, x_hat, x0.detached(), batch.t);
    Array inner = rowsum(mul(sub(s_phi, ts), u));
    const auto wi = per_sample_weights(w, batch.t, &y);
    return neg(weighted_mean_col(inner, wi));
}

Array cfg_reward_loss(const Generator& gen, const ReferenceScore& ref,
                      const ForwardProcess& proc, const TimeDistribution& td,
                      const WeightingFunction& w, const Array& z,
                      std::span<const int> cls, SampleStreams rng) {
    const int n = z.rows();
    Array x0 = gen.generate(z, cls);
    auto batch = draw_batch(n, gen.data_dim(), proc, td, rng);
    Array x_t = diffuse(proc, x0, batch.t, batch.eps);
    Array x_hat = x_t.detached();

    std::vector<int> null_cls(static_cast<std::size_t>(n), -1);
    Array s_cond = ref.score_batch(x_hat, batch.t, cls);
    Array s_null = ref.score_batch(x_hat, batch.t, null_cls);
    // minimizing E w (s_null - s_cond)^T x_t pushes the conditional/
    // unconditional log-density ratio up (the negative implicit reward)
    Array diff = sub(s_null, s_cond);
    Array inner = rowsum(mul(x_t, diff));
    const auto wi = per_sample_weights(w, batch.t, nullptr);
    return weighted_mean_col(inner, wi);
}

Array explicit_reward_loss(const Generator& gen, const RewardFunction& r, const Array& z,
                           std::span<const int> cls) {
    Array x0 = gen.generate(z, cls);
    return neg(mean(r.reward(x0, cls)));
}

Array dipp_kl_loss(const Generator& gen, const ScoreField& assistant,
                   const ReferenceScore& ref, const ForwardProcess& proc,
                   const TimeDistribution& td, const WeightingFunction& w, const Array& z,
                   std::span<const int> cls, SampleStreams rng) {
    const int n = z.rows();
    Array x0 = gen.generate(z, cls);
    auto batch = draw_batch(n, gen.data_dim(), proc, td, rng);
    Array x_t = diffuse(proc, x0, batch.t, batch.eps);
    Array x_hat = x_t.detached();

    Array s_phi = assistant(x_hat, batch.t, cls);  // fully detached
    Array s_ref = ref.score_batch(x_hat, batch.t, cls);
    Array diff = sub(s_phi.detached(), s_ref);
    Array inner = rowsum(mul(x_t, diff));
    const auto wi = per_sample_weights(w, batch.t, nullptr);
    return weighted_mean_col(inner, wi);
}

}  // namespace distar
