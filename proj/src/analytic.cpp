// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace distar {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

// ---- DistanceFunction (declared in distance.hpp) ----

DistanceFunction DistanceFunction::squared_l2() { return DistanceFunction{Kind::squared_l2, 0.0}; }

DistanceFunction DistanceFunction::pseudo_huber(double c) {
    if (!(c > 0)) throw config_error("pseudo_huber needs c > 0");
    return DistanceFunction{Kind::pseudo_huber, c};
}

double DistanceFunction::value(std::span<const double> y) const {
    double n2 = 0;
    for (double v : y) n2 += v * v;
    if (kind == Kind::squared_l2) return n2;
    return std::sqrt(n2 + c * c) - c;
}

void DistanceFunction::grad(std::span<const double> y, std::span<double> out) const {
    if (kind == Kind::squared_l2) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = 2.0 * y[i];
        return;
    }
    double n2 = 0;
    for (double v : y) n2 += v * v;
    const double inv = 1.0 / std::sqrt(n2 + c * c);
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * inv;
}

// ---- GaussianMixture ----

void GaussianMixture::validate() const {
    const int k = components();
    if (k == 0) throw config_error("gmm: no components");
    if (static_cast<int>(means.size()) != k || static_cast<int>(covs.size()) != k)
        throw config_error("gmm: weights/means/covs counts differ");
    if (!labels.empty() && static_cast<int>(labels.size()) != k)
        throw config_error("gmm: labels must be absent or one per component");
    const int d = dim();
    double wsum = 0;
    for (int i = 0; i < k; ++i) {
        if (!(weights[static_cast<std::size_t>(i)] > 0))
            throw config_error("gmm: weights must be positive");
        wsum += weights[static_cast<std::size_t>(i)];
        if (static_cast<int>(means[static_cast<std::size_t>(i)].size()) != d)
            throw config_error("gmm: mean dimensions differ");
        const Matrix& c = covs[static_cast<std::size_t>(i)];
        if (c.n != d || c.m != d) throw config_error("gmm: covariance extents differ from dim");
        if (!c.symmetric(1e-9)) throw numeric_error("gmm: covariance not symmetric");
        cholesky(c);  // SPD or throw
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw config_error("gmm: weights sum to " + std::to_string(wsum) + ", expected 1");
}

GaussianMixture GaussianMixture::single(Gaussian g) {
    GaussianMixture out;
    out.weights = {1.0};
    out.means = {std::move(g.mean)};
    out.covs = {std::move(g.cov)};
    return out;
}

GaussianMixture GaussianMixture::conditioned_on(int label) const {
    if (labels.empty()) throw config_error("gmm: no labels to condition on");
    GaussianMixture out;
    double wsum = 0;
    for (int i = 0; i < components(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != label) continue;
        out.weights.push_back(weights[static_cast<std::size_t>(i)]);
        out.means.push_back(means[static_cast<std::size_t>(i)]);
        out.covs.push_back(covs[static_cast<std::size_t>(i)]);
        out.labels.push_back(label);
        wsum += weights[static_cast<std::size_t>(i)];
    }
    if (out.weights.empty())
        throw config_error("gmm: no component carries label " + std::to_string(label));
    for (double& w : out.weights) w /= wsum;
    return out;
}

std::vector<int> GaussianMixture::distinct_labels() const {
    std::vector<int> out;
    for (int l : labels)
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
    std::sort(out.begin(), out.end());
    return out;
}

PreparedMixture::PreparedMixture(const GaussianMixture& g) {
    g.validate();
    dim_ = g.dim();
    double cum = 0;
    for (int i = 0; i < g.components(); ++i) {
        Comp c;
        c.mean = g.means[static_cast<std::size_t>(i)];
        c.lower = cholesky(g.covs[static_cast<std::size_t>(i)]);
        c.inv = chol_inverse(c.lower);
        c.logw = std::log(g.weights[static_cast<std::size_t>(i)]);
        c.lognorm = -0.5 * dim_ * kLog2Pi - 0.5 * chol_logdet(c.lower);
        comps_.push_back(std::move(c));
        cum += g.weights[static_cast<std::size_t>(i)];
        cum_weights_.push_back(cum);
    }
    cum_weights_.back() = 1.0;
}

double PreparedMixture::log_density(std::span<const double> x) const {
    double best = -INFINITY;
    std::vector<double> logs(comps_.size());
    std::vector<double> diff(static_cast<std::size_t>(dim_));
    std::vector<double> tmp(static_cast<std::size_t>(dim_));
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        const Comp& c = comps_[k];
        for (int j = 0; j < dim_; ++j)
            diff[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - c.mean[static_cast<std::size_t>(j)];
        matvec(c.inv, diff, tmp);
        double quad = 0;
        for (int j = 0; j < dim_; ++j)
            quad += diff[static_cast<std::size_t>(j)] * tmp[static_cast<std::size_t>(j)];
        logs[k] = c.logw + c.lognorm - 0.5 * quad;
        best = std::max(best, logs[k]);
    }
    double s = 0;
    for (double lv : logs) s += std::exp(lv - best);
    return best + std::log(s);
}

void PreparedMixture::score(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> logs(comps_.size());
    std::vector<std::vector<double>> comp_scores(comps_.size());
    std::vector<double> diff(static_cast<std::size_t>(dim_));
    double best = -INFINITY;
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        const Comp& c = comps_[k];
        for (int j = 0; j < dim_; ++j)
            diff[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - c.mean[static_cast<std::size_t>(j)];
        comp_scores[k].resize(static_cast<std::size_t>(dim_));
        matvec(c.inv, diff, comp_scores[k]);
        double quad = 0;
        for (int j = 0; j < dim_; ++j)
            quad += diff[static_cast<std::size_t>(j)] * comp_scores[k][static_cast<std::size_t>(j)];
        for (double& v : comp_scores[k]) v = -v;
        logs[k] = c.logw + c.lognorm - 0.5 * quad;
        best = std::max(best, logs[k]);
    }
    double denom = 0;
    for (double lv : logs) denom += std::exp(lv - best);
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        const double r = std::exp(logs[k] - best) / denom;
        for (int j = 0; j < dim_; ++j)
            out[static_cast<std::size_t>(j)] += r * comp_scores[k][static_cast<std::size_t>(j)];
    }
}

void PreparedMixture::sample(Rng& rng, std::span<double> out) const {
    const double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < cum_weights_.size() && u > cum_weights_[k]) ++k;
    const Comp& c = comps_[k];
    std::vector<double> z(static_cast<std::size_t>(dim_));
    for (auto& v : z) v = rng.normal();
    lower_apply(c.lower, z, out);
    for (int j = 0; j < dim_; ++j) out[static_cast<std::size_t>(j)] += c.mean[static_cast<std::size_t>(j)];
}

void gaussian_score(std::span<const double> mean, const Matrix& cov,
                    std::span<const double> x, std::span<double> out) {
    const int d = cov.n;
    std::vector<double> diff(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        diff[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)];
    Matrix lower = cholesky(cov);
    chol_solve(lower, diff, out);
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = -out[static_cast<std::size_t>(j)];
}

double gaussian_log_density(std::span<const double> mean, const Matrix& cov,
                            std::span<const double> x) {
    const int d = cov.n;
    Matrix lower = cholesky(cov);
    std::vector<double> diff(static_cast<std::size_t>(d)), tmp(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        diff[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)];
    chol_solve(lower, diff, tmp);
    double quad = 0;
    for (int j = 0; j < d; ++j)
        quad += diff[static_cast<std::size_t>(j)] * tmp[static_cast<std::size_t>(j)];
    return -0.5 * d * kLog2Pi - 0.5 * chol_logdet(lower) - 0.5 * quad;
}

void gmm_score(const GaussianMixture& g, std::span<const double> x, std::span<double> out) {
    PreparedMixture(g).score(x, out);
}

double gmm_log_density(const GaussianMixture& g, std::span<const double> x) {
    return PreparedMixture(g).log_density(x);
}

GaussianMixture diffused_gmm(const GaussianMixture& g, const ForwardProcess& p, double t) {
    p.check_time(t);
    const double a = p.alpha(t);
    const double b = p.beta(t);
    GaussianMixture out = g;
    for (auto& m : out.means)
        for (double& v : m) v *= a;
    for (auto& c : out.covs) {
        c = scaled(c, a * a);
        for (int i = 0; i < c.n; ++i) c(i, i) += b * b;
    }
    return out;
}

// ---- AffineGenerator ----

void AffineGenerator::apply(std::span<const double> z, std::span<double> out) const {
    matvec(a, z, out);
    for (int i = 0; i < data_dim(); ++i) out[static_cast<std::size_t>(i)] += b[static_cast<std::size_t>(i)];
}

void AffineGenerator::sample(Rng& rng, std::span<double> out) const {
    std::vector<double> z(static_cast<std::size_t>(latent_dim()));
    for (auto& v : z) v = sigma_init * rng.normal();
    apply(z, out);
}

Gaussian AffineGenerator::pushforward() const {
    Gaussian g;
    g.mean = b;
    g.cov = scaled(matmul(a, a.transposed()), sigma_init * sigma_init);
    return g;
}

AffineGenerator AffineGenerator::isotropic(std::vector<double> b, double sigma_init,
                                           int latent_dim) {
    AffineGenerator g;
    const int d = static_cast<int>(b.size());
    const int k = latent_dim > 0 ? latent_dim : d;
    if (k < d) throw config_error("affine generator: latent dim below data dim");
    g.a = Matrix(d, k);
    for (int i = 0; i < d; ++i) g.a(i, i) = 1.0;
    g.b = std::move(b);
    g.sigma_init = sigma_init;
    return g;
}

Gaussian diffused_pushforward(const AffineGenerator& g, const ForwardProcess& p, double t) {
    p.check_time(t);
    const double a = p.alpha(t);
    const double bt = p.beta(t);
    Gaussian push = g.pushforward();
    for (double& v : push.mean) v *= a;
    push.cov = scaled(push.cov, a * a);
    for (int i = 0; i < push.cov.n; ++i) push.cov(i, i) += bt * bt;
    return push;
}

// ---- divergence ----

PushforwardDraws draw_pushforward(int n, int latent_dim, int data_dim, Rng& rng,
                                  bool antithetic) {
    if (antithetic && n % 2 != 0)
        throw config_error("antithetic draws need an even count");
    PushforwardDraws d;
    d.n = n;
    d.z = Matrix(n, latent_dim);
    d.eps = Matrix(n, data_dim);
    const int half = antithetic ? n / 2 : n;
    for (int i = 0; i < half; ++i) {
        for (int j = 0; j < latent_dim; ++j) d.z(i, j) = rng.normal();
        for (int j = 0; j < data_dim; ++j) d.eps(i, j) = rng.normal();
    }
    if (antithetic) {
        for (int i = half; i < n; ++i) {
            for (int j = 0; j < latent_dim; ++j) d.z(i, j) = -d.z(i - half, j);
            for (int j = 0; j < data_dim; ++j) d.eps(i, j) = -d.eps(i - half, j);
        }
    }
    return d;
}

std::vector<double> trapezoid_weights(std::span<const double> grid) {
    const std::size_t g = grid.size();
    if (g < 2) throw config_error("trapezoid quadrature needs >= 2 grid points");
    std::vector<double> w(g, 0.0);
    for (std::size_t i = 0; i + 1 < g; ++i) {
        const double h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

namespace {

struct LinearField {  // s(x) = -inv (x - mean)
    std::vector<double> mean;
    Matrix inv;
};

LinearField field_of(const Gaussian& g) {
    LinearField f;
    f.mean = g.mean;
    f.inv = chol_inverse(cholesky(g.cov));
    return f;
}

inline void eval_field(const LinearField& f, std::span<const double> x,
                       std::span<double> out) {
    const int d = f.inv.n;
    std::vector<double> diff(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        diff[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - f.mean[static_cast<std::size_t>(j)];
    matvec(f.inv, diff, out);
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = -out[static_cast<std::size_t>(j)];
}

}  // namespace

double divergence_mc_frozen(const AffineGenerator& p_eval, const AffineGenerator& p_sample,
                            const GaussianMixture& q, const ForwardProcess& proc,
                            const DistanceFunction& dist, const WeightingFunction& w,
                            std::span<const double> time_grid, const PushforwardDraws& draws) {
    const int d = p_sample.data_dim();
    const int k = p_sample.latent_dim();
    if (p_eval.data_dim() != d || p_eval.latent_dim() != k)
        throw shape_error("divergence: eval/sample generators have different extents");
    const auto tw = trapezoid_weights(time_grid);
    std::vector<double> x0(static_cast<std::size_t>(d)), xt(static_cast<std::size_t>(d));
    std::vector<double> se(static_cast<std::size_t>(d)), sq(static_cast<std::size_t>(d));
    std::vector<double> gap(static_cast<std::size_t>(d));
    std::vector<double> zi(static_cast<std::size_t>(k));
    double total = 0;
    for (std::size_t g = 0; g < time_grid.size(); ++g) {
        const double t = time_grid[g];
        const double at = proc.alpha(t), bt = proc.beta(t);
        const LinearField fe = field_of(diffused_pushforward(p_eval, proc, t));
        const PreparedMixture qm(diffused_gmm(q, proc, t));
        double acc = 0;
        for (int i = 0; i < draws.n; ++i) {
            for (int j = 0; j < k; ++j)
                zi[static_cast<std::size_t>(j)] = p_sample.sigma_init * draws.z(i, j);
            p_sample.apply(zi, x0);
            for (int j = 0; j < d; ++j)
                xt[static_cast<std::size_t>(j)] =
                    at * x0[static_cast<std::size_t>(j)] + bt * draws.eps(i, j);
            eval_field(fe, xt, se);
            qm.score(xt, sq);
            for (int j = 0; j < d; ++j)
                gap[static_cast<std::size_t>(j)] =
                    se[static_cast<std::size_t>(j)] - sq[static_cast<std::size_t>(j)];
            double wi;
            if (w.kind == WeightingFunction::Kind::adaptive_gen) {
                std::vector<double> dgap(gap);
                for (double& v : dgap) v *= t * t;  // denoiser gap = t^2 * score gap
                wi = weight(w, t, dgap);
            } else {
                wi = weight(w, t);
            }
            acc += wi * dist.value(gap);
        }
        total += tw[g] * acc / draws.n;
    }
    return total;
}

double divergence_exact_sql2(const AffineGenerator& p_eval, const AffineGenerator& p_sample,
                             const Gaussian& q, const ForwardProcess& proc,
                             const WeightingFunction& w, std::span<const double> time_grid) {
    if (w.kind == WeightingFunction::Kind::adaptive_gen)
        throw config_error("exact divergence path does not support the adaptive weighting");
    const int d = p_sample.data_dim();
    const auto tw = trapezoid_weights(time_grid);
    double total = 0;
    for (std::size_t g = 0; g < time_grid.size(); ++g) {
        const double t = time_grid[g];
        const double at = proc.alpha(t), bt = proc.beta(t);
        const Gaussian pe = diffused_pushforward(p_eval, proc, t);
        const Gaussian ps = diffused_pushforward(p_sample, proc, t);
        Gaussian qt;
        qt.mean = q.mean;
        for (double& v : qt.mean) v *= at;
        qt.cov = scaled(q.cov, at * at);
        for (int i = 0; i < d; ++i) qt.cov(i, i) += bt * bt;

        const Matrix inv_e = chol_inverse(cholesky(pe.cov));
        const Matrix inv_q = chol_inverse(cholesky(qt.cov));
        // s_e(x) - s_q(x) = M x + v
        Matrix M = add(inv_q, scaled(inv_e, -1.0));
        std::vector<double> v(static_cast<std::size_t>(d));
        std::vector<double> tmp(static_cast<std::size_t>(d));
        matvec(inv_e, pe.mean, v);
        matvec(inv_q, qt.mean, tmp);
        for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] -= tmp[static_cast<std::size_t>(j)];

        const Matrix msm = matmul(matmul(M, ps.cov), M.transposed());
        std::vector<double> mm(static_cast<std::size_t>(d));
        matvec(M, ps.mean, mm);
        double sq = 0;
        for (int j = 0; j < d; ++j) {
            const double e = mm[static_cast<std::size_t>(j)] + v[static_cast<std::size_t>(j)];
            sq += e * e;
        }
        total += tw[g] * weight(w, t) * (trace(msm) + sq);
    }
    return total;
}

DivergenceResult divergence_oracle(const AffineGenerator& p, const GaussianMixture& q,
                                   const ForwardProcess& proc, const DistanceFunction& dist,
                                   const WeightingFunction& w,
                                   std::span<const double> time_grid, int n_mc, Rng& rng,
                                   bool prefer_exact) {
    q.validate();
    DivergenceResult res;
    const bool exact_ok = dist.kind == DistanceFunction::Kind::squared_l2 &&
                          q.components() == 1 &&
                          w.kind != WeightingFunction::Kind::adaptive_gen;
    if (prefer_exact && exact_ok) {
        Gaussian qg{q.means[0], q.covs[0]};
        res.value = divergence_exact_sql2(p, p, qg, proc, w, time_grid);
        res.exact = true;
        return res;
    }
    if (n_mc < 1) throw config_error("divergence_oracle: n_mc must be >= 1");
    res.mc_fallback = prefer_exact && !exact_ok;
    const int n = n_mc + (n_mc % 2);  // antithetic pairs
    const auto draws = draw_pushforward(n, p.latent_dim(), p.data_dim(), rng, true);
    res.value = divergence_mc_frozen(p, p, q, proc, dist, w, time_grid, draws);
    return res;
}

// ---- GMM spec files ----

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
    std::istringstream is(s);
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    std::string rest;
    if (is.fail() && !is.eof() && is >> rest)
        throw config_error("gmm file: bad number in " + what + ": '" + s + "'");
    if (out.empty()) throw config_error("gmm file: empty value for " + what);
    return out;
}

}  // namespace

GaussianMixture parse_gmm(std::istream& is) {
    GaussianMixture g;
    int dim = -1, expected = -1;
    bool in_component = false;
    bool any_label = false;
    std::vector<double> cov_rows;
    std::string line;
    int lineno = 0;
    auto finish_component = [&]() {
        if (!in_component) return;
        if (static_cast<int>(cov_rows.size()) != dim * dim)
            throw config_error("gmm file: component " + std::to_string(g.components()) +
                               " has " + std::to_string(cov_rows.size() / dim) +
                               " cov_row lines, expected " + std::to_string(dim));
        g.covs.emplace_back(dim, dim, cov_rows);
        cov_rows.clear();
    };
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        if (line == "[component]") {
            finish_component();
            in_component = true;
            g.weights.push_back(0.0);
            g.means.emplace_back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("gmm file line " + std::to_string(lineno) +
                               ": expected 'key = value'");
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (!in_component) {
            if (key == "dim") {
                dim = static_cast<int>(parse_doubles(val, "dim")[0]);
            } else if (key == "components") {
                expected = static_cast<int>(parse_doubles(val, "components")[0]);
            } else {
                throw config_error("gmm file line " + std::to_string(lineno) +
                                   ": unknown header key '" + key + "'");
            }
            continue;
        }
        if (dim <= 0) throw config_error("gmm file: 'dim' must come before components");
        if (key == "weight") {
            g.weights.back() = parse_doubles(val, "weight")[0];
        } else if (key == "mean") {
            auto m = parse_doubles(val, "mean");
            if (static_cast<int>(m.size()) != dim)
                throw config_error("gmm file line " + std::to_string(lineno) +
                                   ": mean needs " + std::to_string(dim) + " values");
            g.means.back() = std::move(m);
        } else if (key == "cov_row") {
            auto r = parse_doubles(val, "cov_row");
            if (static_cast<int>(r.size()) != dim)
                throw config_error("gmm file line " + std::to_string(lineno) +
                                   ": cov_row needs " + std::to_string(dim) + " values");
            cov_rows.insert(cov_rows.end(), r.begin(), r.end());
        } else if (key == "label") {
            g.labels.resize(g.weights.size() - 1, 0);
            g.labels.push_back(static_cast<int>(parse_doubles(val, "label")[0]));
            any_label = true;
        } else {
            throw config_error("gmm file line " + std::to_string(lineno) +
                               ": unknown key '" + key + "'");
        }
    }
    finish_component();
    if (any_label && static_cast<int>(g.labels.size()) != g.components())
        throw config_error("gmm file: labels must appear on every component or none");
    if (!any_label) g.labels.clear();
    if (expected >= 0 && expected != g.components())
        throw config_error("gmm file: header says " + std::to_string(expected) +
                           " components, found " + std::to_string(g.components()));
    g.validate();
    return g;
}

GaussianMixture load_gmm(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("gmm file: cannot read '" + path + "'");
    return parse_gmm(is);
}

std::string format_gmm(const GaussianMixture& g) {
    std::ostringstream os;
    os.precision(17);
    os << "dim = " << g.dim() << "\n";
    os << "components = " << g.components() << "\n";
    for (int i = 0; i < g.components(); ++i) {
        os << "\n[component]\n";
        os << "weight = " << g.weights[static_cast<std::size_t>(i)] << "\n";
        os << "mean =";
        for (double v : g.means[static_cast<std::size_t>(i)]) os << " " << v;
        os << "\n";
        const Matrix& c = g.covs[static_cast<std::size_t>(i)];
        for (int r = 0; r < c.n; ++r) {
            os << "cov_row =";
            for (int j = 0; j < c.m; ++j) os << " " << c(r, j);
            os << "\n";
        }
        if (!g.labels.empty()) os << "label = " << g.labels[static_cast<std::size_t>(i)] << "\n";
    }
    return os.str();
}

}  // namespace distar
