// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/models.hpp"

#include <cmath>

namespace distar {

Array denoiser_from_score(const Array& x, std::span<const double> t, const Array& s) {
    std::vector<double> t2(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) t2[i] = t[i] * t[i];
    return add(x, row_scale(s, t2));
}

Array score_from_denoiser(const Array& x, std::span<const double> t, const Array& d) {
    std::vector<double> inv_t2(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > 0)) throw numeric_error("score_from_denoiser: t must be positive");
        inv_t2[i] = 1.0 / (t[i] * t[i]);
    }
    return row_scale(sub(d, x), inv_t2);
}

// ---- ScoreModel ----

ScoreModel ScoreModel::create(int data_dim, int n_classes, std::vector<int> hidden,
                              Parameterization par, double sigma_data, Rng& rng,
                              int embed_dim) {
    if (data_dim <= 0) throw config_error("score model: data_dim must be positive");
    if (n_classes < 0) throw config_error("score model: n_classes must be >= 0");
    ScoreModel m;
    m.par_ = par;
    m.sigma_data_ = sigma_data;
    m.data_dim_ = data_dim;
    m.n_classes_ = n_classes;
    m.embed_dim_ = embed_dim;
    std::vector<int> widths;
    widths.push_back(data_dim + 1 + embed_dim);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(data_dim);
    m.backbone = Mlp::create(widths, rng, 0.1);
    m.class_embed = Array(Shape{n_classes + 1, embed_dim});
    for (std::size_t i = 0; i < m.class_embed.size(); ++i)
        m.class_embed[i] = rng.normal();
    return m;
}

std::vector<int> ScoreModel::resolve_classes(std::span<const int> cls, int n) const {
    if (static_cast<int>(cls.size()) != n)
        throw shape_error("score model: one class per row expected");
    std::vector<int> rows(cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i) {
        const int c = cls[i];
        if (c < -1 || c >= n_classes_)
            throw config_error("score model: unknown class id " + std::to_string(c));
        rows[i] = c < 0 ? n_classes_ : c;  // null class = last row
    }
    return rows;
}

Array ScoreModel::score(const Array& x, std::span<const double> t,
                        std::span<const int> cls, bool frozen_params) const {
    const int n = x.rows();
    if (x.cols() != data_dim_)
        throw shape_error("score model: input cols " + std::to_string(x.cols()) +
                          " vs data dim " + std::to_string(data_dim_));
    if (static_cast<int>(t.size()) != n)
        throw shape_error("score model: one t per row expected");
    std::vector<double> logt(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > 0)) throw numeric_error("score model: t must be positive");
        logt[i] = std::log(t[i]);
    }
    const auto rows = resolve_classes(cls, n);
    Array emb = frozen_params ? take_rows_frozen(class_embed, rows)
                              : take_rows(class_embed, rows);
    Array xin = x;
    if (par_ == Parameterization::edm_denoiser) {
        std::vector<double> cin(t.size());
        for (std::size_t i = 0; i < t.size(); ++i)
            cin[i] = 1.0 / std::sqrt(sigma_data_ * sigma_data_ + t[i] * t[i]);
        xin = row_scale(x, cin);
    }
    Array features = concat_cols(concat_cols(xin, Array(Shape{n, 1}, std::move(logt))), emb);
    Array f = backbone.forward(features, frozen_params);
    if (par_ == Parameterization::direct_score) return f;
    // preconditioned denoiser d = c_skip x + c_out F with
    //   c_skip = s^2/(s^2+t^2), c_out = t s/sqrt(s^2+t^2), s = sigma_data,
    // so the edm lambda weighting gives each sample unit effective weight and
    // a zero network reproduces the N(0, s^2 I) prior score. In score form:
    //   score = (d - x)/t^2 = -x/(s^2+t^2) + F s/(t sqrt(s^2+t^2)).
    const double s2 = sigma_data_ * sigma_data_;
    std::vector<double> fx(t.size()), ff(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        fx[i] = -1.0 / (s2 + t[i] * t[i]);
        ff[i] = sigma_data_ / (t[i] * std::sqrt(s2 + t[i] * t[i]));
    }
    return add(row_scale(x, fx), row_scale(f, ff));
}

Array ScoreModel::denoiser(const Array& x, std::span<const double> t,
                           std::span<const int> cls, bool frozen_params) const {
    return denoiser_from_score(x, t, score(x, t, cls, frozen_params));
}

std::vector<Array*> ScoreModel::params() {
    auto out = backbone.params();
    out.push_back(&class_embed);
    return out;
}

std::vector<const Array*> ScoreModel::params() const {
    std::vector<const Array*> out = backbone.params();
    out.push_back(&class_embed);
    return out;
}

std::vector<std::pair<std::string, Array*>> ScoreModel::named_params(
    const std::string& prefix) {
    auto out = backbone.named_params(prefix);
    out.emplace_back(prefix + ".class_embed", &class_embed);
    return out;
}

std::uint64_t ScoreModel::hash() const { return param_hash(params()); }

Array cfg_score(const ScoreModel& model, const Array& x, std::span<const double> t,
                std::span<const int> cls, const CfgConfig& cfg) {
    Array xd = x.detached();
    std::vector<int> null_cls(cls.size(), -1);
    Array s_null = model.score(xd, t, null_cls, true);
    Array s_cond = model.score(xd, t, cls, true);
    Array diff = sub(s_cond, s_null);
    return add(s_null, scale(diff, cfg.omega)).detached();
}

// ---- Generator ----

Generator Generator::mlp_backbone(int data_dim, int latent_dim, int n_classes,
                                  std::vector<int> hidden, double sigma_init, Rng& rng,
                                  int embed_dim) {
    if (sigma_init <= 0) throw config_error("generator: sigma_init must be positive");
    Generator g;
    g.kind_ = Backbone::mlp;
    g.sigma_init_ = sigma_init;
    g.data_dim_ = data_dim;
    g.latent_dim_ = latent_dim;
    g.n_classes_ = n_classes;
    g.embed_dim_ = embed_dim;
    std::vector<int> widths;
    widths.push_back(latent_dim + embed_dim);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(data_dim);
    g.backbone = Mlp::create(widths, rng, 0.1);
    g.class_embed = Array(Shape{n_classes + 1, embed_dim});
    for (std::size_t i = 0; i < g.class_embed.size(); ++i)
        g.class_embed[i] = rng.normal();
    return g;
}

Generator Generator::affine_backbone(const AffineGenerator& aff) {
    Generator g;
    g.kind_ = Backbone::affine;
    g.sigma_init_ = aff.sigma_init;
    g.data_dim_ = aff.data_dim();
    g.latent_dim_ = aff.latent_dim();
    g.n_classes_ = 0;
    // stored as A^T so generate() is one affine op over row batches
    g.aff_w = Array(Shape{aff.latent_dim(), aff.data_dim()});
    for (int i = 0; i < aff.data_dim(); ++i)
        for (int j = 0; j < aff.latent_dim(); ++j)
            g.aff_w[static_cast<std::size_t>(j) * aff.data_dim() + i] = aff.a(i, j);
    g.aff_b = Array(Shape{aff.data_dim()}, aff.b);
    return g;
}

Array Generator::generate(const Array& z, std::span<const int> cls,
                          bool frozen_params) const {
    const int n = z.rows();
    if (z.cols() != latent_dim_)
        throw shape_error("generator: latent cols " + std::to_string(z.cols()) +
                          " vs latent dim " + std::to_string(latent_dim_));
    if (static_cast<int>(cls.size()) != n)
        throw shape_error("generator: one class per row expected");
    // the affine backbone is unconditional; labels pass through to the losses
    if (kind_ == Backbone::affine)
        return frozen_params ? affine_frozen(z, aff_w, aff_b) : affine(z, aff_w, aff_b);
    for (int c : cls)
        if (c < -1 || c >= n_classes_)
            throw config_error("generator: unknown class id " + std::to_string(c));
    std::vector<int> rows(cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i)
        rows[i] = cls[i] < 0 ? n_classes_ : cls[i];
    Array emb = frozen_params ? take_rows_frozen(class_embed, rows)
                              : take_rows(class_embed, rows);
    return backbone.forward(concat_cols(z, emb), frozen_params);
}

Array Generator::sample_latents(int n, Rng& rng) const {
    Array z(Shape{n, latent_dim_});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sigma_init_ * rng.normal();
    return z;
}

AffineGenerator Generator::affine_view() const {
    if (kind_ != Backbone::affine)
        throw config_error("generator: affine_view needs the affine backbone");
    AffineGenerator aff;
    aff.sigma_init = sigma_init_;
    aff.a = Matrix(data_dim_, latent_dim_);
    for (int i = 0; i < data_dim_; ++i)
        for (int j = 0; j < latent_dim_; ++j)
            aff.a(i, j) = aff_w[static_cast<std::size_t>(j) * data_dim_ + i];
    aff.b.assign(aff_b.values().begin(), aff_b.values().end());
    return aff;
}

std::vector<Array*> Generator::params() {
    if (kind_ == Backbone::affine) return {&aff_w, &aff_b};
    auto out = backbone.params();
    out.push_back(&class_embed);
    return out;
}

std::vector<const Array*> Generator::params() const {
    if (kind_ == Backbone::affine) return {&aff_w, &aff_b};
    std::vector<const Array*> out = backbone.params();
    out.push_back(&class_embed);
    return out;
}

std::vector<std::pair<std::string, Array*>> Generator::named_params(
    const std::string& prefix) {
    if (kind_ == Backbone::affine)
        return {{prefix + ".aff_w", &aff_w}, {prefix + ".aff_b", &aff_b}};
    auto out = backbone.named_params(prefix);
    out.emplace_back(prefix + ".class_embed", &class_embed);
    return out;
}

std::uint64_t Generator::hash() const { return param_hash(params()); }

// ---- references ----

double ReferenceScore::log_density(std::span<const double>, double, int) const {
    throw config_error("this reference does not expose log densities");
}

Array ReferenceScore::score_batch(const Array& x, std::span<const double> t,
                                  std::span<const int> cls) const {
    const int n = x.rows(), d = x.cols();
    if (d != data_dim()) throw shape_error("reference: dimension mismatch");
    Array out(Shape{n, d});
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        score_at(x.row(i), t[static_cast<std::size_t>(i)],
                 cls[static_cast<std::size_t>(i)], row);
        for (int j = 0; j < d; ++j)
            out[static_cast<std::size_t>(i) * d + j] = row[static_cast<std::size_t>(j)];
    }
    return out;
}

AnalyticReference::AnalyticReference(GaussianMixture joint, ForwardProcess proc)
    : joint_(std::move(joint)), proc_(proc) {
    joint_.validate();
    base_ = PreparedMixture(joint_);
    for (int label : joint_.distinct_labels()) {
        class_gmms_.push_back(joint_.conditioned_on(label));
        label_of_class_.push_back(label);
    }
}

const GaussianMixture& AnalyticReference::class_mixture(int cls) const {
    if (cls < 0 || cls >= n_classes())
        throw config_error("analytic reference: unknown class id " + std::to_string(cls));
    return class_gmms_[static_cast<std::size_t>(cls)];
}

const PreparedMixture& AnalyticReference::prepared(double t, int cls) const {
    const auto key = std::make_pair(t, cls);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 512) cache_.clear();
    const GaussianMixture& base = cls < 0 ? joint_ : class_mixture(cls);
    auto ins = cache_.emplace(key, PreparedMixture(diffused_gmm(base, proc_, t)));
    return ins.first->second;
}

void AnalyticReference::score_at(std::span<const double> x, double t, int cls,
                                 std::span<double> out) const {
    prepared(t, cls).score(x, out);
}

double AnalyticReference::log_density(std::span<const double> x, double t, int cls) const {
    return prepared(t, cls).log_density(x);
}

void AnalyticReference::sample(Rng& rng, std::span<double> out, int cls) const {
    if (cls < 0) {
        base_.sample(rng, out);
    } else {
        PreparedMixture(class_mixture(cls)).sample(rng, out);
    }
}

void ModelReference::score_at(std::span<const double> x, double t, int cls,
                              std::span<double> out) const {
    Array xr(Shape{1, model_->data_dim()}, std::vector<double>(x.begin(), x.end()));
    Array s = model_->score(xr, std::span<const double>(&t, 1),
                            std::span<const int>(&cls, 1), true);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = s[j];
}

}  // namespace distar
