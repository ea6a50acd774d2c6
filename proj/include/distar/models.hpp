// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "distar/analytic.hpp"
#include "distar/mlp.hpp"
#include "distar/process.hpp"

namespace distar {

struct CfgConfig {
    double omega = 1.0;  // omega = 1 recovers the conditional score
};

// d = x + t^2 s and its inverse; the exact denoiser/score conversion
Array denoiser_from_score(const Array& x, std::span<const double> t, const Array& s);
Array score_from_denoiser(const Array& x, std::span<const double> t, const Array& d);

// A score field evaluated with frozen parameters but differentiable in x — the
// sg[.] role the assistant plays inside the generator losses. Implemented by
// ScoreModel and by the analytic fields the theorem checks substitute.
class ScoreField {
  public:
    virtual ~ScoreField() = default;
    virtual Array operator()(const Array& x, std::span<const double> t,
                             std::span<const int> cls) const = 0;
};

// Score network with a class embedding table (one row per class plus a null
// row) and the time fed as a log(t) input feature.
//
// direct_score: the backbone output is the score.
// edm_denoiser: d(x,t) = x - t * F([x / sqrt(sigma_data^2 + t^2), log t, emb]),
// score = (d - x) / t^2 = -F / t. The input normalization keeps activations
// O(1) across the noise range.
class ScoreModel : public ScoreField {
  public:
    enum class Parameterization { direct_score, edm_denoiser };

    ScoreModel() = default;
    static ScoreModel create(int data_dim, int n_classes, std::vector<int> hidden,
                             Parameterization par, double sigma_data, Rng& rng,
                             int embed_dim = 4);

    // one t per row; cls entries in [0, n_classes) or -1 for the null class
    Array score(const Array& x, std::span<const double> t, std::span<const int> cls,
                bool frozen_params = false) const;
    Array denoiser(const Array& x, std::span<const double> t, std::span<const int> cls,
                   bool frozen_params = false) const;
    Array operator()(const Array& x, std::span<const double> t,
                     std::span<const int> cls) const override {
        return score(x, t, cls, true);
    }

    int data_dim() const { return data_dim_; }
    int n_classes() const { return n_classes_; }
    Parameterization parameterization() const { return par_; }
    double sigma_data() const { return sigma_data_; }

    std::vector<Array*> params();
    std::vector<const Array*> params() const;
    std::vector<std::pair<std::string, Array*>> named_params(const std::string& prefix);
    std::uint64_t hash() const;

    Mlp backbone;
    Array class_embed;  // [n_classes + 1, embed_dim]

  private:
    std::vector<int> resolve_classes(std::span<const int> cls, int n) const;
    Parameterization par_ = Parameterization::edm_denoiser;
    double sigma_data_ = 0.5;
    int data_dim_ = 0;
    int n_classes_ = 0;
    int embed_dim_ = 0;
};

// s(null) + omega * (s(c) - s(null)); evaluated fully detached.
Array cfg_score(const ScoreModel& model, const Array& x, std::span<const double> t,
                std::span<const int> cls, const CfgConfig& cfg);

// One-step generator x0 = g(z | c) with z ~ N(0, sigma_init^2 I). Backbone is
// either an mlp (trained) or a plain affine map (closed-form pushforward, used
// by every theorem check).
class Generator {
  public:
    enum class Backbone { mlp, affine };

    Generator() = default;
    static Generator mlp_backbone(int data_dim, int latent_dim, int n_classes,
                                  std::vector<int> hidden, double sigma_init, Rng& rng,
                                  int embed_dim = 4);
    static Generator affine_backbone(const AffineGenerator& aff);

    Array generate(const Array& z, std::span<const int> cls,
                   bool frozen_params = false) const;
    Array sample_latents(int n, Rng& rng) const;  // [n, latent_dim]

    Backbone backbone_kind() const { return kind_; }
    int data_dim() const { return data_dim_; }
    int latent_dim() const { return latent_dim_; }
    int n_classes() const { return n_classes_; }
    double sigma_init() const { return sigma_init_; }

    // affine backbone as the analytic generator (for oracle calls)
    AffineGenerator affine_view() const;

    std::vector<Array*> params();
    std::vector<const Array*> params() const;
    std::vector<std::pair<std::string, Array*>> named_params(const std::string& prefix);
    std::uint64_t hash() const;

    Mlp backbone;
    Array class_embed;  // mlp backbone only
    Array aff_w;        // [latent, data]; affine backbone only
    Array aff_b;        // [data]

  private:
    Backbone kind_ = Backbone::mlp;
    double sigma_init_ = 2.5;
    int data_dim_ = 0;
    int latent_dim_ = 0;
    int n_classes_ = 0;
    int embed_dim_ = 0;
};

// Detached reference score field. The analytic adapter serves closed-form
// diffused-mixture scores so reference error never contaminates a theorem
// check; the model adapter wraps a trained ScoreModel.
class ReferenceScore {
  public:
    virtual ~ReferenceScore() = default;
    virtual int data_dim() const = 0;
    virtual int n_classes() const = 0;
    bool conditional() const { return n_classes() > 0; }
    // cls in [0, n_classes) or -1 for the unconditional/null branch
    virtual void score_at(std::span<const double> x, double t, int cls,
                          std::span<double> out) const = 0;
    // log density of the diffused reference marginal (analytic only)
    virtual double log_density(std::span<const double> x, double t, int cls) const;

    Array score_batch(const Array& x, std::span<const double> t,
                      std::span<const int> cls) const;
};

class AnalyticReference final : public ReferenceScore {
  public:
    AnalyticReference(GaussianMixture joint, ForwardProcess proc);

    int data_dim() const override { return joint_.dim(); }
    int n_classes() const override { return static_cast<int>(class_gmms_.size()); }
    void score_at(std::span<const double> x, double t, int cls,
                  std::span<double> out) const override;
    double log_density(std::span<const double> x, double t, int cls) const override;

    const GaussianMixture& joint() const { return joint_; }
    const GaussianMixture& class_mixture(int cls) const;
    // draw from the (undiffused) reference, optionally conditioned
    void sample(Rng& rng, std::span<double> out, int cls = -1) const;

  private:
    const PreparedMixture& prepared(double t, int cls) const;
    GaussianMixture joint_;
    std::vector<GaussianMixture> class_gmms_;  // indexed by label order
    std::vector<int> label_of_class_;
    ForwardProcess proc_;
    mutable std::map<std::pair<double, int>, PreparedMixture> cache_;
    mutable PreparedMixture base_;  // undiffused joint, for sampling
};

class ModelReference final : public ReferenceScore {
  public:
    explicit ModelReference(std::shared_ptr<const ScoreModel> model)
        : model_(std::move(model)) {}
    int data_dim() const override { return model_->data_dim(); }
    int n_classes() const override { return model_->n_classes(); }
    void score_at(std::span<const double> x, double t, int cls,
                  std::span<double> out) const override;
    const ScoreModel& model() const { return *model_; }

  private:
    std::shared_ptr<const ScoreModel> model_;
};

}  // namespace distar
